// Acceptance suite: one pass/fail line per criterion, nonzero exit if any
// criterion fails. Run with a list of criterion numbers to execute a subset,
// e.g. `acceptance_tests 1 2 3`.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "adagauss/cli.hpp"
#include "adagauss/continual_runner.hpp"
#include "adagauss/diagnostics.hpp"

using namespace adagauss;
namespace fs = std::filesystem;

namespace {

struct CheckFailure {
  std::string message;
};

void require(bool ok, const std::string& message) {
  if (!ok) throw CheckFailure{message};
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Shared gradient-check machinery (central differences, fresh forward pass
// per evaluation, relative error with a floor of 1 in the denominator).

double rel_err(double analytic, double numeric) {
  return std::fabs(analytic - numeric) /
         std::max({std::fabs(analytic), std::fabs(numeric), 1.0});
}

// Central differences with a kink filter: a parameter whose perturbation
// crosses a relu boundary has no two-sided derivative there, which shows up
// as a second difference proportional to the slope jump instead of h^2 times
// the curvature. Those (measure-zero) entries are excluded; their fraction is
// verified to stay negligible.
struct GradCheckStats {
  double worst = 0.0;
  size_t checked = 0;
  size_t skipped = 0;
};

GradCheckStats grad_check(std::vector<Parameter*> params,
                          const std::function<Value(Tape&)>& forward, double h = 1e-5) {
  Tape tape;
  Value loss = forward(tape);
  const double mid = tape.value_of(loss)(0, 0);
  for (Parameter* p : params) p->zero_grad();
  tape.backward(loss);

  GradCheckStats stats;
  for (Parameter* p : params) {
    for (size_t k = 0; k < p->value.size(); ++k) {
      const double saved = p->value.data()[k];
      const double analytic = p->grad.data()[k];
      p->value.data()[k] = saved + h;
      tape.reset();
      const double up = tape.value_of(forward(tape))(0, 0);
      p->value.data()[k] = saved - h;
      tape.reset();
      const double down = tape.value_of(forward(tape))(0, 0);
      p->value.data()[k] = saved;
      tape.reset();
      ++stats.checked;
      const double kink_score = std::fabs(up + down - 2.0 * mid) / h;
      if (kink_score > 1e-2) {
        ++stats.skipped;
        continue;
      }
      stats.worst = std::max(stats.worst, rel_err(analytic, (up - down) / (2.0 * h)));
    }
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Criterion 1: analytic gradients of every loss match finite differences.

std::string criterion_1() {
  SeededRng rng(1001);
  GradCheckStats totals;
  auto absorb = [&totals](const GradCheckStats& s) {
    totals.worst = std::max(totals.worst, s.worst);
    totals.checked += s.checked;
    totals.skipped += s.skipped;
  };
  const int batch = 8;

  for (int latent : {4, 8}) {
    NetworkConfig cfg;
    cfg.input_dim = 6;
    cfg.hidden_dims = {10};
    cfg.latent_dim = latent;
    cfg.projector_hidden_factor = 2;
    cfg.bottleneck_init_scale = 1.0;
    cfg.identity_init_projector = false;
    cfg.identity_init_adapter = false;
    // A batch of 8 in an 8-wide latent space has a structurally singular
    // covariance; the trainer's jitter keeps the factorization defined, and
    // the check differentiates the jittered function.
    const double jitter = batch <= latent ? 1e-8 : 0.0;

    for (int trial = 0; trial < 20; ++trial) {
      Mlp extractor = make_feature_extractor(cfg, rng);
      Mlp projector = make_projector(cfg, rng);
      Mlp head = make_task_head(latent, 3, rng);
      Mlp adapter = make_adapter(cfg, rng);
      const Mlp prev = make_feature_extractor(cfg, rng);

      Matrix xb(batch, cfg.input_dim);
      for (size_t i = 0; i < xb.size(); ++i) xb.data()[i] = rng.normal();
      std::vector<int> labels(batch);
      for (int i = 0; i < batch; ++i) labels[i] = rng.uniform_int(3);
      const Matrix prev_feats = prev.forward_nograd(xb);

      std::vector<Parameter*> extractor_params = extractor.parameters();
      std::vector<Parameter*> everything = extractor.parameters();
      for (Parameter* p : projector.parameters()) everything.push_back(p);
      for (Parameter* p : head.parameters()) everything.push_back(p);

      absorb(grad_check(everything, [&](Tape& t) {
        return loss_ce(t, head.forward(t, extractor.forward(t, t.input(xb))), labels);
      }));
      absorb(grad_check(everything, [&](Tape& t) {
        return loss_pkd(t, extractor.forward(t, t.input(xb)), projector, prev_feats,
                        Reduction::kMean);
      }));
      for (double beta : {0.5, 1.0, 10.0}) {
        absorb(grad_check(extractor_params, [&](Tape& t) {
          return loss_ac(t, extractor.forward(t, t.input(xb)), beta, jitter);
        }));
      }
      const Matrix curr_feats = extractor.forward_nograd(xb);
      absorb(grad_check(adapter.parameters(), [&](Tape& t) {
        return loss_adapter(t, adapter, prev_feats, curr_feats, 1.0, Reduction::kMean, jitter);
      }));
      absorb(grad_check(everything, [&](Tape& t) {
        Value feats = extractor.forward(t, t.input(xb));
        Value ce = loss_ce(t, head.forward(t, feats), labels);
        Value ac = loss_ac(t, feats, 1.0, jitter);
        Value kd = loss_pkd(t, feats, projector, prev_feats, Reduction::kMean);
        return loss_total(t, ce, ac, kd, 10.0);
      }));
    }
  }
  require(totals.worst < 1e-4, "worst relative gradient error " + fmt(totals.worst));
  const double skip_rate = static_cast<double>(totals.skipped) / totals.checked;
  require(skip_rate < 0.01, "kink skip rate " + fmt(skip_rate));
  return "worst relative error " + fmt(totals.worst) + ", kink skips " +
         std::to_string(totals.skipped) + "/" + std::to_string(totals.checked);
}

// ---------------------------------------------------------------------------
// Criterion 2: the Cholesky backward pass against finite differences.

double chol_loss(const Matrix& a, const Matrix& w) {
  const CholeskyFactor f = cholesky(a);
  double s = 0.0;
  for (int i = 0; i < f.dim(); ++i)
    for (int j = 0; j <= i; ++j) s += w(i, j) * f.lower(i, j);
  return s;
}

std::string criterion_2() {
  SeededRng rng(2002);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int dim = 2 + trial % 7;
    Matrix m(dim, dim);
    for (size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    Matrix a = matmul_tn(m, m);
    a *= 1.0 / dim;
    for (int i = 0; i < dim; ++i) a(i, i) += 0.5;
    a = symmetrize(a);

    Matrix w(dim, dim);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j <= i; ++j) w(i, j) = rng.normal();

    const Matrix analytic = cholesky_backward(cholesky(a), w);
    const double h = 1e-5;
    for (int i = 0; i < dim; ++i) {
      for (int j = 0; j <= i; ++j) {
        Matrix up = a, down = a;
        up(i, j) += h;
        down(i, j) -= h;
        if (i != j) {
          up(j, i) += h;
          down(j, i) -= h;
        }
        double numeric = (chol_loss(up, w) - chol_loss(down, w)) / (2.0 * h);
        if (i != j) numeric *= 0.5;
        worst = std::max(worst, rel_err(analytic(i, j), numeric));
      }
    }
  }
  require(worst < 1e-5, "worst relative error " + fmt(worst));
  return "worst relative error " + fmt(worst);
}

// ---------------------------------------------------------------------------
// Criterion 3: sampling transport through an exact affine adapter matches the
// closed-form Gaussian image.

std::string criterion_3() {
  SeededRng rng(3003);
  const int dim = 4;
  double worst_mean = 0.0, worst_cov = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    Matrix a(dim, dim);
    for (size_t i = 0; i < a.size(); ++i) a.data()[i] = 0.4 * rng.normal();
    Vector b(dim);
    for (int i = 0; i < dim; ++i) b[i] = rng.normal();
    Matrix m(dim, dim);
    for (size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    Matrix cov = matmul_tn(m, m);
    cov *= 0.4 / dim;
    for (int i = 0; i < dim; ++i) cov(i, i) += 0.2;
    cov = symmetrize(cov);
    Vector mean(dim);
    for (int i = 0; i < dim; ++i) mean[i] = 1.5 * rng.normal();

    GaussianMemory memory(dim);
    ClassGaussian g;
    g.class_id = 0;
    g.task_id = 1;
    g.mean = mean;
    g.cov = cov;
    memory.insert(std::move(g));
    memory.adapt_all(make_exact_affine_map(a, b), 10000, 2, SeededRng(7000 + trial));

    Vector want_mean = b;
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) want_mean[i] += a(i, j) * mean[j];
    const Matrix want_cov = matmul_nt(matmul(a, cov), a);

    worst_mean = std::max(worst_mean, norm(memory.entry(0).mean - want_mean));
    worst_cov = std::max(worst_cov, frobenius_norm(memory.entry(0).cov - want_cov));
  }
  require(worst_mean <= 0.1 && worst_cov <= 0.1,
          "worst mean error " + fmt(worst_mean) + ", worst cov error " + fmt(worst_cov));
  return "worst mean error " + fmt(worst_mean) + ", worst cov error " + fmt(worst_cov);
}

// ---------------------------------------------------------------------------
// Shared desk-scale stream and protocol for criteria 4-8.

SyntheticSpec ordering_stream_spec() {
  SyntheticSpec spec;
  spec.input_dim = 16;
  spec.classes_per_task = 4;
  spec.num_tasks = 5;
  spec.samples_per_class = 300;
  spec.cluster_spread = 1.0;
  spec.cluster_separation = 0.5;
  spec.anisotropy = 4.0;
  spec.seed = 13;
  return spec;
}

HyperParams ordering_hp(uint64_t seed) {
  HyperParams hp;
  hp.latent_dim = 8;
  hp.projector_hidden_factor = 8;
  hp.hidden_dims = {64};
  hp.epochs = 200;
  hp.batch_size = 64;
  hp.lr = {0.01, {100, 150}, 0.1};
  hp.adapter_epochs = 200;
  hp.adapter_lr = {0.01, {100, 150}, 0.1};
  hp.adapt_samples = 10000;
  hp.weight_decay = 0.005;
  hp.adapter_weight_decay = 0.002;
  hp.clip_grad_norm = 10.0;
  hp.bottleneck_init_scale = 2.0;
  hp.seed = seed;
  return hp;
}

constexpr uint64_t kSeeds[] = {1, 2, 3, 4, 5};

struct OrderingCell {
  std::vector<RunReport> reports;
  std::vector<int> audit_violations;

  std::vector<double> a_lasts() const {
    std::vector<double> v;
    for (const RunReport& r : reports) v.push_back(r.a_last);
    return v;
  }
  std::vector<double> final_sym_kl() const {
    std::vector<double> v;
    for (const RunReport& r : reports) {
      double kl = 0.0;
      int n = 0;
      const int last = r.acc_matrix.rows();
      for (const FidelityRow& f : r.fidelity) {
        if (f.after_task == last && f.origin_task < last) {
          kl += f.sym_kl;
          ++n;
        }
      }
      v.push_back(n ? kl / n : 0.0);
    }
    return v;
  }
};

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double var_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

// The compared cells run the same stream with the same seed set, so the gap
// is a matched-pairs statistic: pool the per-seed gap variance.
double pooled_se(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> gaps(a.size());
  for (size_t i = 0; i < a.size(); ++i) gaps[i] = a[i] - b[i];
  return std::sqrt(var_of(gaps) / gaps.size());
}

OrderingCell run_ordering_cell(ClassifierKind classifier, AdaptMode adapt) {
  OrderingCell cell;
  const SyntheticSpec spec = ordering_stream_spec();
  cell.reports.resize(std::size(kSeeds));
  cell.audit_violations.resize(std::size(kSeeds));
  run_jobs(std::size(kSeeds), [&](size_t i) {
    TaskStream stream = generate_synthetic(spec);
    EfcilAudit audit(stream);
    AblationConfig ab;
    ab.classifier = classifier;
    ab.adapt = adapt;
    RunOptions options;
    options.oracle_diagnostics = true;
    cell.reports[i] = run(stream, ordering_hp(kSeeds[i]), ab, options);
    cell.audit_violations[i] = audit.violations();
  });
  return cell;
}

// Criteria 5-7 and 10 share these runs; they execute at most once.
struct OrderingRuns {
  OrderingCell full_bayes;
  OrderingCell mean_bayes;
  OrderingCell none_bayes;
  OrderingCell full_diag;
  OrderingCell full_nmc;
  bool ready = false;
};
OrderingRuns g_ordering;

void ensure_ordering_runs() {
  if (g_ordering.ready) return;
  g_ordering.full_bayes = run_ordering_cell(ClassifierKind::kBayesFull, AdaptMode::kFull);
  g_ordering.mean_bayes = run_ordering_cell(ClassifierKind::kBayesFull, AdaptMode::kMeanOnly);
  g_ordering.none_bayes = run_ordering_cell(ClassifierKind::kBayesFull, AdaptMode::kNone);
  g_ordering.full_diag = run_ordering_cell(ClassifierKind::kBayesDiag, AdaptMode::kFull);
  g_ordering.full_nmc = run_ordering_cell(ClassifierKind::kNmc, AdaptMode::kFull);
  g_ordering.ready = true;
}

std::string ordered_gap(const char* label, const std::vector<double>& hi,
                        const std::vector<double>& lo) {
  const double gap = mean_of(hi) - mean_of(lo);
  const double se = pooled_se(hi, lo);
  std::ostringstream out;
  out << label << " gap " << fmt(gap) << " (se " << fmt(se) << ")";
  require(gap > se, out.str() + " not significant");
  return out.str();
}

// ---------------------------------------------------------------------------
// Criterion 4: the anti-collapse loss keeps memorized covariances full-rank
// with zero shrink; without it, collapse appears on near-degenerate data.

std::string criterion_4() {
  SyntheticSpec spec = ordering_stream_spec();
  HyperParams hp = ordering_hp(11);
  hp.epochs = 60;
  hp.lr = {0.01, {30, 45}, 0.1};
  hp.adapter_epochs = 60;
  hp.adapter_lr = {0.01, {30, 45}, 0.1};
  hp.adapt_samples = 2000;

  TaskStream stream = generate_synthetic(spec);
  AblationConfig ab;
  RunOptions options;
  options.checkpoint_dir = "acceptance_artifacts/criterion4";
  fs::create_directories(options.checkpoint_dir);
  const RunReport report = run(stream, hp, ab, options);

  int jitter_events = 0;
  for (const TaskTrainStats& stats : report.task_stats) jitter_events += stats.jitter_events;

  const GaussianMemory memory =
      GaussianMemory::load("acceptance_artifacts/criterion4/memory_task5.agmem");
  int min_rank = 1 << 30;
  for (const auto& [cls, g] : memory.entries()) {
    min_rank = std::min(min_rank, numeric_rank(g.cov));
    cholesky(g.cov);  // throws if any entry is not positive-definite
  }
  require(min_rank == 8, "minimum memorized covariance rank " + std::to_string(min_rank));
  require(jitter_events == 0, std::to_string(jitter_events) + " jitter events observed");

  // L_AC off, wide hidden layers, near-degenerate data: at least one task
  // collapses (rank below the latent dim) or cannot be factored without
  // shrink.
  SyntheticSpec degenerate = spec;
  degenerate.anisotropy = 10000.0;  // inputs effectively span very few axes
  degenerate.seed = 17;
  HyperParams hp_off = hp;
  hp_off.hidden_dims = {64, 64};
  AblationConfig ab_off;
  ab_off.anticollapse = false;
  TaskStream stream_off = generate_synthetic(degenerate);
  bool collapsed = false;
  try {
    const std::string dir = "acceptance_artifacts/criterion4_off";
    fs::create_directories(dir);
    RunOptions off_options;
    off_options.checkpoint_dir = dir;
    run(stream_off, hp_off, ab_off, off_options);
    const GaussianMemory mem_off = GaussianMemory::load(dir + "/memory_task5.agmem");
    for (const auto& [cls, g] : mem_off.entries()) {
      if (numeric_rank(g.cov) < 8) collapsed = true;
      try {
        cholesky(g.cov);
      } catch (const Error&) {
        collapsed = true;  // unusable without shrink
      }
    }
  } catch (const Error&) {
    collapsed = true;  // the run itself aborted on a singular covariance
  }
  require(collapsed, "no collapse observed without the anti-collapse loss");
  return "ranks full with zero shrink/jitter; collapse reproduced without the regularizer";
}

// ---------------------------------------------------------------------------
// Criterion 5: ablation orderings on the drifting stream.

std::string criterion_5() {
  ensure_ordering_runs();
  std::string detail;
  detail += ordered_gap("full>mean", g_ordering.full_bayes.a_lasts(),
                        g_ordering.mean_bayes.a_lasts());
  detail += "; " + ordered_gap("mean>none", g_ordering.mean_bayes.a_lasts(),
                               g_ordering.none_bayes.a_lasts());
  detail += "; " + ordered_gap("bayes>diag", g_ordering.full_bayes.a_lasts(),
                               g_ordering.full_diag.a_lasts());
  detail += "; " + ordered_gap("diag>nmc", g_ordering.full_diag.a_lasts(),
                               g_ordering.full_nmc.a_lasts());
  return detail;
}

// Criterion 6: adaptation fidelity ordering in symmetric KL.

std::string criterion_6() {
  ensure_ordering_runs();
  std::string detail;
  detail += ordered_gap("none>mean", g_ordering.none_bayes.final_sym_kl(),
                        g_ordering.mean_bayes.final_sym_kl());
  detail += "; " + ordered_gap("mean>full", g_ordering.mean_bayes.final_sym_kl(),
                               g_ordering.full_bayes.final_sym_kl());
  return detail;
}

// Criterion 7: the anti-collapse loss saturates at its floor late in
// training (mean over tasks of the final-epoch running mean, averaged over
// seeds).

std::string criterion_7() {
  ensure_ordering_runs();
  std::vector<double> run_means;
  for (const RunReport& r : g_ordering.full_bayes.reports) {
    double s = 0.0;
    for (const TaskTrainStats& stats : r.task_stats) s += stats.final_epoch_ac;
    run_means.push_back(s / static_cast<double>(r.task_stats.size()));
  }
  const double m = mean_of(run_means);
  require(m >= -1.0 && m <= -0.95, "final-epoch L_AC mean " + fmt(m));
  return "final-epoch L_AC mean " + fmt(m);
}

// ---------------------------------------------------------------------------
// Criterion 8: shrink sweep with and without the anti-collapse loss.

std::string criterion_8() {
  const SyntheticSpec spec = ordering_stream_spec();
  HyperParams base = ordering_hp(1);
  base.epochs = 60;
  base.lr = {0.01, {30, 45}, 0.1};
  base.adapter_epochs = 60;
  base.adapter_lr = {0.01, {30, 45}, 0.1};
  base.adapt_samples = 2000;

  const double gammas[] = {0.0, 0.5, 1.0, 2.0};
  std::vector<std::vector<double>> a_incs(4);
  std::vector<std::pair<size_t, size_t>> jobs;
  for (size_t gi = 0; gi < 4; ++gi)
    for (size_t si = 0; si < std::size(kSeeds); ++si) jobs.emplace_back(gi, si);
  std::vector<double> results(jobs.size());
  run_jobs(jobs.size(), [&](size_t j) {
    const auto [gi, si] = jobs[j];
    TaskStream stream = generate_synthetic(spec);
    HyperParams hp = base;
    hp.seed = kSeeds[si];
    AblationConfig ab;
    ab.shrink_gamma = gammas[gi];
    results[j] = run(stream, hp, ab).a_inc;
  });
  for (size_t j = 0; j < jobs.size(); ++j) a_incs[jobs[j].first].push_back(results[j]);

  std::string detail = "a_inc by shrink:";
  for (size_t gi = 0; gi < 4; ++gi) detail += " " + fmt(mean_of(a_incs[gi]));
  for (size_t gi = 1; gi < 4; ++gi) {
    const double slack = pooled_se(a_incs[0], a_incs[gi]);
    require(mean_of(a_incs[0]) >= mean_of(a_incs[gi]) - slack,
            detail + " (shrink " + fmt(gammas[gi]) + " beats zero shrink)");
  }

  // Without the anti-collapse loss and zero shrink the run must abort with a
  // NotPositiveDefinite failure: rank-limited features make memorized
  // covariances singular and Bayes inversion impossible.
  HyperParams crash_hp = base;
  crash_hp.hidden_dims = {64, 4};  // final hidden width below the latent dim
  AblationConfig ab_off;
  ab_off.anticollapse = false;
  bool aborted = false;
  std::string abort_detail = "did not abort";
  try {
    TaskStream stream = generate_synthetic(spec);
    run(stream, crash_hp, ab_off);
  } catch (const Error& e) {
    aborted = e.code() == ErrorCode::kNotPositiveDefinite;
    abort_detail = error_code_name(e.code());
  }
  require(aborted, detail + "; L_AC-off shrink-0 run ended with " + abort_detail);
  return detail + "; L_AC-off shrink-0 aborted with NotPositiveDefinite";
}

// ---------------------------------------------------------------------------
// Criterion 9: byte-identical reruns and a clean data-access audit.

std::string criterion_9() {
  const std::string config_text =
      "[dataset]\n"
      "kind = synthetic\n"
      "input_dim = 8\n"
      "classes_per_task = 3\n"
      "num_tasks = 3\n"
      "samples_per_class = 60\n"
      "cluster_spread = 1.0\n"
      "cluster_separation = 1.0\n"
      "anisotropy = 2.0\n"
      "stream_seed = 5\n"
      "[hyperparams]\n"
      "latent_dim = 4\n"
      "projector_hidden_factor = 4\n"
      "hidden_dims = 32\n"
      "epochs = 10\n"
      "batch_size = 36\n"
      "lr = 0.01\n"
      "lr_decay_epochs = 5,8\n"
      "adapter_epochs = 10\n"
      "adapter_lr = 0.01\n"
      "adapter_lr_decay_epochs = 5,8\n"
      "adapt_samples = 200\n"
      "[ablation]\n"
      "include_logdet = true\n"
      "[run]\n"
      "seeds = 1,2\n";

  fs::remove_all("acceptance_artifacts/criterion9");
  fs::create_directories("acceptance_artifacts/criterion9");
  std::ofstream("acceptance_artifacts/criterion9/config.ini")
      << config_text << "out_dir = acceptance_artifacts/criterion9/a\n";
  std::ofstream("acceptance_artifacts/criterion9/config_b.ini")
      << config_text << "out_dir = acceptance_artifacts/criterion9/b\n";
  require(cmd_run("acceptance_artifacts/criterion9/config.ini") == 0, "first run failed");
  require(cmd_run("acceptance_artifacts/criterion9/config_b.ini") == 0, "second run failed");

  auto slurp = [](const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const std::string a = slurp("acceptance_artifacts/criterion9/a/metrics.csv");
  const std::string b = slurp("acceptance_artifacts/criterion9/b/metrics.csv");
  require(!a.empty() && a == b, "metrics.csv differs between identical runs");

  // Access audit on a direct run: training reads never return to a finished
  // task (the ordering-cell runs are audited the same way in criterion 10).
  TaskStream stream = generate_synthetic(ordering_stream_spec());
  EfcilAudit audit(stream);
  HyperParams hp = ordering_hp(1);
  hp.epochs = 5;
  hp.lr = {0.01, {3}, 0.1};
  hp.adapter_epochs = 5;
  hp.adapter_lr = {0.01, {3}, 0.1};
  hp.adapt_samples = 500;
  run(stream, hp, AblationConfig{});
  require(audit.violations() == 0,
          std::to_string(audit.violations()) + " train reads of finished tasks");
  int last = -1;
  for (int task : audit.train_access_sequence()) {
    require(task >= last, "train access sequence is not monotone");
    last = task;
  }
  return "reruns byte-identical; zero stale train reads";
}

// ---------------------------------------------------------------------------
// Criterion 10: reported A_last and A_inc match an independent recomputation.

std::string criterion_10() {
  ensure_ordering_runs();
  for (const RunReport& r : g_ordering.full_bayes.reports) {
    const int t = r.acc_matrix.rows();
    double last_sum = 0.0;
    for (int s = 0; s < t; ++s) last_sum += r.acc_matrix(t - 1, s);
    const double a_last = last_sum / t;

    double inc_total = 0.0;
    for (int row = 0; row < t; ++row) {
      double row_sum = 0.0;
      for (int s = 0; s <= row; ++s) row_sum += r.acc_matrix(row, s);
      inc_total += row_sum / (row + 1);
    }
    const double a_inc = inc_total / t;
    require(a_last == r.a_last, "a_last mismatch");
    require(a_inc == r.a_inc, "a_inc mismatch");
  }
  for (int v : g_ordering.full_bayes.audit_violations) {
    require(v == 0, "EFCIL violation in an ordering run");
  }
  return "exact match on every report";
}

}  // namespace

int main(int argc, char** argv) {
  setvbuf(stdout, nullptr, _IONBF, 0);
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  struct Criterion {
    int id;
    const char* name;
    std::function<std::string()> fn;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient fidelity of all training losses", criterion_1},
      {2, "cholesky backward matches finite differences", criterion_2},
      {3, "sampling transport matches affine closed form", criterion_3},
      {4, "anti-collapse keeps memorized covariances full-rank", criterion_4},
      {5, "ablation accuracy orderings", criterion_5},
      {6, "adaptation fidelity ordering (symmetric KL)", criterion_6},
      {7, "anti-collapse loss saturates at its floor", criterion_7},
      {8, "shrink sweep shape and L_AC-off abort", criterion_8},
      {9, "byte-identical reruns and clean data-access audit", criterion_9},
      {10, "A_last / A_inc arithmetic recomputation", criterion_10},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    std::string detail;
    bool passed = false;
    try {
      detail = c.fn();
      passed = true;
    } catch (const CheckFailure& f) {
      detail = f.message;
    } catch (const Error& e) {
      detail = e.what();
    } catch (const std::exception& e) {
      detail = e.what();
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %2d [%s] %s (%.1fs)%s%s\n", c.id, passed ? "PASS" : "FAIL", c.name,
                seconds, detail.empty() ? "" : ": ", detail.c_str());
    if (!passed) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
