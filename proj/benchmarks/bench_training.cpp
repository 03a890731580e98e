#include <benchmark/benchmark.h>

#include "adagauss/continual_runner.hpp"
#include "adagauss/losses.hpp"

using namespace adagauss;

namespace {

NetworkConfig bench_net() {
  NetworkConfig cfg;
  cfg.input_dim = 16;
  cfg.hidden_dims = {64};
  cfg.latent_dim = 8;
  cfg.projector_hidden_factor = 8;
  return cfg;
}

}  // namespace

// One full training step of the combined objective (forward, backward, SGD).
static void BM_TrainingStep(benchmark::State& state) {
  SeededRng rng(11);
  NetworkConfig cfg = bench_net();
  Mlp extractor = make_feature_extractor(cfg, rng);
  Mlp projector = make_projector(cfg, rng);
  Mlp head = make_task_head(cfg.latent_dim, 4, rng);
  const Mlp prev = make_feature_extractor(cfg, rng);

  const int batch = static_cast<int>(state.range(0));
  Matrix xb(batch, cfg.input_dim);
  for (size_t i = 0; i < xb.size(); ++i) xb.data()[i] = rng.normal();
  std::vector<int> labels(batch);
  for (int i = 0; i < batch; ++i) labels[i] = rng.uniform_int(4);
  const Matrix prev_feats = prev.forward_nograd(xb);

  std::vector<Parameter*> params = extractor.parameters();
  for (Parameter* p : projector.parameters()) params.push_back(p);
  for (Parameter* p : head.parameters()) params.push_back(p);
  SgdOptimizer opt(params);
  Tape tape;

  for (auto _ : state) {
    tape.reset();
    opt.zero_grad();
    Value feats = extractor.forward(tape, tape.input(xb));
    Value ce = loss_ce(tape, head.forward(tape, feats), labels);
    Value ac = loss_ac(tape, feats, 1.0, 1e-8);
    Value kd = loss_pkd(tape, feats, projector, prev_feats, Reduction::kMean);
    tape.backward(loss_total(tape, ce, ac, kd, 10.0));
    opt.clip_grad_norm(10.0);
    opt.step(1e-4, 0.0005, 0.9);
  }
}
BENCHMARK(BM_TrainingStep)->Arg(32)->Arg(64)->Arg(128);

// Transporting one memorized Gaussian through the adapter.
static void BM_AdaptClass(benchmark::State& state) {
  SeededRng rng(13);
  NetworkConfig cfg = bench_net();
  const int dim = cfg.latent_dim;
  Mlp adapter = make_adapter(cfg, rng);

  Matrix m(dim, dim);
  for (size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  Matrix cov = matmul_tn(m, m);
  cov *= 1.0 / dim;
  for (int i = 0; i < dim; ++i) cov(i, i) += 0.5;

  for (auto _ : state) {
    GaussianMemory memory(dim);
    ClassGaussian g;
    g.class_id = 0;
    g.task_id = 1;
    g.mean = Vector(dim, 1.0);
    g.cov = symmetrize(cov);
    memory.insert(std::move(g));
    memory.adapt_all(adapter, static_cast<int>(state.range(0)), 2, SeededRng(3));
    benchmark::DoNotOptimize(memory.entry(0).mean);
  }
}
BENCHMARK(BM_AdaptClass)->Arg(1000)->Arg(10000);
