#include <benchmark/benchmark.h>

#include "adagauss/classifier.hpp"
#include "adagauss/linalg.hpp"

using namespace adagauss;

namespace {

Matrix random_spd(int n, SeededRng& rng) {
  Matrix m(n, n);
  for (size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  Matrix spd = matmul_tn(m, m);
  spd *= 1.0 / n;
  for (int i = 0; i < n; ++i) spd(i, i) += 0.5;
  return symmetrize(spd);
}

}  // namespace

static void BM_Cholesky(benchmark::State& state) {
  SeededRng rng(1);
  const Matrix a = random_spd(static_cast<int>(state.range(0)), rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(cholesky(a));
  }
}
BENCHMARK(BM_Cholesky)->Arg(8)->Arg(16)->Arg(32)->Arg(64);

static void BM_CholeskyBackward(benchmark::State& state) {
  SeededRng rng(2);
  const int n = static_cast<int>(state.range(0));
  const CholeskyFactor f = cholesky(random_spd(n, rng));
  Matrix grad(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) grad(i, j) = rng.normal();
  for (auto _ : state) {
    benchmark::DoNotOptimize(cholesky_backward(f, grad));
  }
}
BENCHMARK(BM_CholeskyBackward)->Arg(8)->Arg(16)->Arg(32)->Arg(64);

static void BM_EstimateGaussian(benchmark::State& state) {
  SeededRng rng(3);
  const int n = static_cast<int>(state.range(0));
  Matrix samples(n, 16);
  for (size_t i = 0; i < samples.size(); ++i) samples.data()[i] = rng.normal();
  for (auto _ : state) {
    benchmark::DoNotOptimize(estimate_gaussian(samples));
  }
}
BENCHMARK(BM_EstimateGaussian)->Arg(256)->Arg(2048)->Arg(10000);

static void BM_SampleGaussian(benchmark::State& state) {
  SeededRng rng(4);
  const Matrix cov = random_spd(16, rng);
  const Vector mean(16, 1.0);
  for (auto _ : state) {
    SeededRng draw(5);
    benchmark::DoNotOptimize(sample_gaussian(mean, cov, static_cast<int>(state.range(0)), draw));
  }
}
BENCHMARK(BM_SampleGaussian)->Arg(1000)->Arg(10000);

static void BM_EigSym(benchmark::State& state) {
  SeededRng rng(6);
  const Matrix a = random_spd(static_cast<int>(state.range(0)), rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(eig_sym(a));
  }
}
BENCHMARK(BM_EigSym)->Arg(8)->Arg(16)->Arg(32);

static void BM_BayesClassify(benchmark::State& state) {
  SeededRng rng(7);
  const int dim = 16;
  GaussianMemory memory(dim);
  for (int c = 0; c < static_cast<int>(state.range(0)); ++c) {
    ClassGaussian g;
    g.class_id = c;
    g.task_id = 1;
    g.mean = Vector(dim);
    for (int i = 0; i < dim; ++i) g.mean[i] = rng.normal() * 3.0;
    g.cov = random_spd(dim, rng);
    memory.insert(std::move(g));
  }
  const Classifier classifier(memory, {ClassifierKind::kBayesFull, true});
  Vector x(dim);
  for (int i = 0; i < dim; ++i) x[i] = rng.normal();
  for (auto _ : state) {
    benchmark::DoNotOptimize(classifier.classify(x));
  }
}
BENCHMARK(BM_BayesClassify)->Arg(10)->Arg(50)->Arg(200);
