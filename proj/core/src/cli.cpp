#include "adagauss/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "adagauss/diagnostics.hpp"

namespace adagauss {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string pad2(int v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%02d", v);
  return buf;
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIoError, "cannot write '" + path.string() + "'");
  out << text;
}

int exit_code_for(const Error& e) {
  return e.code() == ErrorCode::kInvalidConfig ? 2 : 1;
}

struct SeedResult {
  RunReport report;
  int efcil_violations = 0;
};

SeedResult run_one_seed(const RunConfig& config, const AblationConfig& ab, uint64_t seed,
                        const std::string& checkpoint_dir) {
  // Each worker owns a private stream copy so audits never share state.
  TaskStream stream = build_stream(config.dataset);
  EfcilAudit audit(stream);

  HyperParams hp = config.hyperparams;
  hp.seed = seed;

  RunOptions options;
  options.oracle_diagnostics = config.oracle_diagnostics;
  options.checkpoint_dir = checkpoint_dir;

  SeedResult result;
  result.report = run(stream, hp, ab, options);
  result.efcil_violations = audit.violations();
  result.report.efcil_train_access_violations = audit.violations();
  return result;
}

double mean_of(const std::vector<double>& values) {
  double s = 0.0;
  for (double v : values) s += v;
  return values.empty() ? 0.0 : s / static_cast<double>(values.size());
}

double sample_stddev(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  const double m = mean_of(values);
  double s = 0.0;
  for (double v : values) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(values.size() - 1));
}

ordered_json report_to_json(uint64_t seed, const SeedResult& result) {
  const RunReport& r = result.report;
  ordered_json j;
  j["seed"] = seed;
  j["a_last"] = r.a_last;
  j["a_inc"] = r.a_inc;
  j["jitter_events"] = r.jitter_events;
  j["efcil_train_access_violations"] = result.efcil_violations;
  ordered_json matrix = ordered_json::array();
  for (int t = 0; t < r.acc_matrix.rows(); ++t) {
    ordered_json row = ordered_json::array();
    for (int s = 0; s <= t; ++s) row.push_back(r.acc_matrix(t, s));
    matrix.push_back(row);
  }
  j["acc_matrix"] = matrix;
  ordered_json times = ordered_json::array();
  for (const PhaseTimes& p : r.times) {
    times.push_back(ordered_json{{"train_s", p.train_s},
                                 {"adapter_s", p.adapter_s},
                                 {"adaptation_s", p.adaptation_s},
                                 {"eval_s", p.eval_s}});
  }
  j["wall_time_per_task"] = times;
  ordered_json losses = ordered_json::array();
  for (const TaskTrainStats& s : r.task_stats) losses.push_back(s.epoch_total_loss);
  j["epoch_total_loss_per_task"] = losses;
  return j;
}

void require_writable(const fs::path& file, bool overwrite) {
  if (fs::exists(file) && !overwrite) {
    fail(ErrorCode::kIoError,
         "'" + file.string() + "' already exists; pass --overwrite to replace it");
  }
}

}  // namespace

EfcilAudit::EfcilAudit(TaskStream& stream) {
  stream.set_access_hook([this](int task, bool is_train) {
    if (!is_train) return;
    sequence_.push_back(task);
    if (task < max_train_task_) ++violations_;
    max_train_task_ = std::max(max_train_task_, task);
  });
}

std::vector<MetricRow> metric_rows(uint64_t seed, const RunReport& report) {
  std::vector<MetricRow> rows;
  const int num_tasks = report.acc_matrix.rows();

  for (int t = 1; t <= num_tasks; ++t) {
    for (int s = 1; s <= t; ++s) {
      rows.push_back({seed, t, "eval", "acc_task_" + pad2(s), report.acc_matrix(t - 1, s - 1)});
    }
    double seen = 0.0;
    for (int s = 1; s <= t; ++s) seen += report.acc_matrix(t - 1, s - 1);
    rows.push_back({seed, t, "eval", "acc_seen_mean", seen / t});

    const TaskTrainStats& stats = report.task_stats[static_cast<size_t>(t - 1)];
    rows.push_back({seed, t, "train", "loss_ce_final_epoch_mean", stats.final_epoch_ce});
    rows.push_back({seed, t, "train", "loss_ac_final_epoch_mean", stats.final_epoch_ac});
    rows.push_back({seed, t, "train", "loss_kd_final_epoch_mean", stats.final_epoch_kd});
    rows.push_back({seed, t, "train", "loss_total_final_epoch_mean", stats.final_epoch_total});
    rows.push_back(
        {seed, t, "train", "jitter_events", static_cast<double>(stats.jitter_events)});
    if (t >= 2) {
      rows.push_back({seed, t, "adapter", "adapter_final_mse", stats.adapter_final_mse});
    }
  }

  for (size_t i = 0; i < report.representation_strength.size(); ++i) {
    rows.push_back({seed, static_cast<int>(i) + 1, "diagnostics", "representation_strength",
                    static_cast<double>(report.representation_strength[i])});
  }
  for (const RankRow& r : report.ranks) {
    rows.push_back({seed, r.after_task, "diagnostics", "cov_rank_origin_" + pad2(r.origin_task),
                    r.mean_rank});
    rows.push_back({seed, r.after_task, "diagnostics", "inv_norm_origin_" + pad2(r.origin_task),
                    r.mean_inverse_norm});
  }
  for (const FidelityRow& f : report.fidelity) {
    rows.push_back({seed, f.after_task, "diagnostics",
                    "fidelity_mean_l2_origin_" + pad2(f.origin_task), f.mean_l2});
    rows.push_back({seed, f.after_task, "diagnostics",
                    "fidelity_cov_l2_origin_" + pad2(f.origin_task), f.cov_l2});
    rows.push_back({seed, f.after_task, "diagnostics",
                    "fidelity_sym_kl_origin_" + pad2(f.origin_task), f.sym_kl});
  }

  rows.push_back({seed, num_tasks, "summary", "a_last", report.a_last});
  rows.push_back({seed, num_tasks, "summary", "a_inc", report.a_inc});
  rows.push_back({seed, num_tasks, "summary", "total_jitter_events",
                  static_cast<double>(report.jitter_events)});
  rows.push_back({seed, num_tasks, "summary", "efcil_train_access_violations",
                  static_cast<double>(report.efcil_train_access_violations)});
  return rows;
}

std::string metrics_csv_text(std::vector<MetricRow> rows) {
  std::sort(rows.begin(), rows.end(), [](const MetricRow& a, const MetricRow& b) {
    if (a.seed != b.seed) return a.seed < b.seed;
    if (a.task != b.task) return a.task < b.task;
    if (a.metric != b.metric) return a.metric < b.metric;
    return a.phase < b.phase;
  });
  std::string out = "seed,task,phase,metric,value\n";
  for (const MetricRow& r : rows) {
    out += std::to_string(r.seed) + "," + std::to_string(r.task) + "," + r.phase + "," +
           r.metric + "," + format_value(r.value) + "\n";
  }
  return out;
}

void run_jobs(size_t job_count, const std::function<void(size_t)>& job) {
  size_t workers = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("ADAGAUSS_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) workers = static_cast<size_t>(cap);
  }
  workers = std::min(workers, job_count);
  if (workers <= 1) {
    for (size_t i = 0; i < job_count; ++i) job(i);
    return;
  }

  std::atomic<size_t> next{0};
  std::vector<std::exception_ptr> errors(job_count);
  std::vector<std::thread> pool;
  for (size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const size_t i = next.fetch_add(1);
        if (i >= job_count) return;
        try {
          job(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

namespace {

RunConfig load_config_with_overrides(const std::string& config_path,
                                     const CommandOptions& options) {
  RunConfig config = parse_run_config(config_path);
  if (!options.out_dir_override.empty()) config.out_dir = options.out_dir_override;
  if (options.oracle_diagnostics) config.oracle_diagnostics = true;
  return config;
}

}  // namespace

int cmd_run(const std::string& config_path, const CommandOptions& options) {
  try {
    const RunConfig config = load_config_with_overrides(config_path, options);
    if (config.grid_size() != 1) {
      fail(ErrorCode::kInvalidConfig,
           "run requires singleton ablation axes; use `ablate` for grids");
    }
    const AblationConfig ab = config.ablation_cell(0);

    const fs::path out_dir(config.out_dir);
    fs::create_directories(out_dir);
    require_writable(out_dir / "metrics.csv", options.overwrite);
    require_writable(out_dir / "report.json", options.overwrite);
    require_writable(out_dir / "resolved_config.ini", options.overwrite);

    std::vector<SeedResult> results(config.seeds.size());
    run_jobs(config.seeds.size(), [&](size_t i) {
      std::string ckpt_dir;
      if (config.checkpoints) {
        const fs::path dir = out_dir / ("seed_" + std::to_string(config.seeds[i]));
        fs::create_directories(dir);
        ckpt_dir = dir.string();
      }
      results[i] = run_one_seed(config, ab, config.seeds[i], ckpt_dir);
    });

    std::vector<MetricRow> rows;
    for (size_t i = 0; i < config.seeds.size(); ++i) {
      const auto seed_rows = metric_rows(config.seeds[i], results[i].report);
      rows.insert(rows.end(), seed_rows.begin(), seed_rows.end());
    }
    write_text_file(out_dir / "metrics.csv", metrics_csv_text(std::move(rows)));
    write_text_file(out_dir / "resolved_config.ini", resolved_config_text(config));

    ordered_json report;
    report["command"] = "run";
    report["ablation"] = ordered_json{{"classifier", classifier_kind_name(ab.classifier)},
                                      {"adapt", adapt_mode_name(ab.adapt)},
                                      {"anticollapse", ab.anticollapse},
                                      {"shrink_gamma", ab.shrink_gamma},
                                      {"distillation", distillation_mode_name(ab.distillation)}};
    ordered_json per_seed = ordered_json::array();
    std::vector<double> a_lasts, a_incs;
    for (size_t i = 0; i < config.seeds.size(); ++i) {
      per_seed.push_back(report_to_json(config.seeds[i], results[i]));
      a_lasts.push_back(results[i].report.a_last);
      a_incs.push_back(results[i].report.a_inc);
    }
    report["per_seed"] = per_seed;
    report["aggregate"] =
        ordered_json{{"a_last", {{"mean", mean_of(a_lasts)}, {"stddev", sample_stddev(a_lasts)}}},
                     {"a_inc", {{"mean", mean_of(a_incs)}, {"stddev", sample_stddev(a_incs)}}}};
    write_text_file(out_dir / "report.json", report.dump(2) + "\n");
    return 0;
  } catch (const Error& e) {
    std::cerr << "adagauss run: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "adagauss run: " << e.what() << "\n";
    return 1;
  }
}

int cmd_ablate(const std::string& config_path, const CommandOptions& options) {
  try {
    const RunConfig config = load_config_with_overrides(config_path, options);
    const size_t cells = config.grid_size();
    if (cells == 0) fail(ErrorCode::kInvalidConfig, "ablation grid is empty");

    const fs::path out_dir(config.out_dir);
    fs::create_directories(out_dir);
    require_writable(out_dir / "ablation.csv", options.overwrite);

    const size_t seeds = config.seeds.size();
    std::vector<SeedResult> results(cells * seeds);
    run_jobs(cells * seeds, [&](size_t i) {
      const size_t cell = i / seeds;
      const size_t seed_idx = i % seeds;
      results[i] = run_one_seed(config, config.ablation_cell(cell), config.seeds[seed_idx], "");
    });

    std::string csv =
        "cell,classifier,adapt,anticollapse,shrink_gamma,distillation,"
        "a_last_mean,a_last_std,a_inc_mean,a_inc_std\n";
    for (size_t cell = 0; cell < cells; ++cell) {
      std::vector<double> a_lasts, a_incs;
      for (size_t s = 0; s < seeds; ++s) {
        a_lasts.push_back(results[cell * seeds + s].report.a_last);
        a_incs.push_back(results[cell * seeds + s].report.a_inc);
      }
      const AblationConfig ab = config.ablation_cell(cell);
      csv += std::to_string(cell) + "," + classifier_kind_name(ab.classifier) + "," +
             adapt_mode_name(ab.adapt) + "," + (ab.anticollapse ? "on" : "off") + "," +
             format_value(ab.shrink_gamma) + "," + distillation_mode_name(ab.distillation) + "," +
             format_value(mean_of(a_lasts)) + "," + format_value(sample_stddev(a_lasts)) + "," +
             format_value(mean_of(a_incs)) + "," + format_value(sample_stddev(a_incs)) + "\n";
    }
    write_text_file(out_dir / "ablation.csv", csv);
    write_text_file(out_dir / "resolved_config.ini", resolved_config_text(config));
    return 0;
  } catch (const Error& e) {
    std::cerr << "adagauss ablate: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "adagauss ablate: " << e.what() << "\n";
    return 1;
  }
}

int cmd_diagnose(const std::string& artifact_dir) {
  try {
    const fs::path dir(artifact_dir);
    const fs::path config_path = dir / "resolved_config.ini";
    if (!fs::exists(config_path)) {
      fail(ErrorCode::kMissingCheckpoint,
           "no resolved_config.ini under '" + artifact_dir + "'");
    }
    const RunConfig config = parse_run_config(config_path.string());
    if (!config.checkpoints) {
      fail(ErrorCode::kMissingCheckpoint,
           "the run was executed without checkpoints; re-run with checkpoints = true");
    }
    const TaskStream stream = build_stream(config.dataset);
    const int num_tasks = stream.num_tasks();
    const AblationConfig ab = config.ablation_cell(0);

    std::string repr_csv = "seed,after_task,value\n";
    std::string rank_csv = "seed,after_task,origin_task,mean_rank,mean_inverse_norm\n";
    std::string fidelity_csv = "seed,after_task,origin_task,mean_l2,cov_l2,sym_kl\n";
    std::string probe_csv =
        "seed,task,mean_mahalanobis_sq,mean_winning_logit,mean_own_task_logit\n";
    std::string spectrum_csv = "seed,class,origin_task,index,eigenvalue\n";
    std::string shift_csv = "seed,after_task,class,shift\n";

    for (uint64_t seed : config.seeds) {
      const fs::path seed_dir = dir / ("seed_" + std::to_string(seed));
      GaussianMemory previous_memory(config.hyperparams.latent_dim);

      for (int t = 1; t <= num_tasks; ++t) {
        const fs::path net_path = seed_dir / ("ckpt_task" + std::to_string(t) + ".agnet");
        const fs::path mem_path = seed_dir / ("memory_task" + std::to_string(t) + ".agmem");
        const Mlp extractor = load_network(net_path.string());
        const GaussianMemory memory = GaussianMemory::load(mem_path.string());

        int rows = 0;
        for (int s = 0; s < t; ++s) rows += stream.test_of(s).size();
        Matrix joined(rows, stream.input_dim());
        int cursor = 0;
        std::map<int, Matrix> truth;
        for (int s = 0; s < t; ++s) {
          const SampleSet& test = stream.test_of(s);
          std::memcpy(joined.row(cursor), test.inputs.data(),
                      sizeof(double) * test.inputs.size());
          cursor += test.size();
          const SampleSet feats{extractor.forward_nograd(test.inputs), test.labels};
          for (int cls : stream.classes_of(s)) truth[cls] = feats.rows_with_label(cls);
        }

        repr_csv += std::to_string(seed) + "," + std::to_string(t) + "," +
                    format_value(representation_strength(extractor, joined)) + "\n";
        for (const CovRankStats& r : cov_rank_and_inverse_norm(memory, ab.shrink_gamma)) {
          rank_csv += std::to_string(seed) + "," + std::to_string(t) + "," +
                      std::to_string(r.origin_task) + "," + format_value(r.mean_rank) + "," +
                      format_value(r.mean_inverse_norm) + "\n";
        }
        for (const FidelityStats& f : memory_fidelity(memory, truth)) {
          fidelity_csv += std::to_string(seed) + "," + std::to_string(t) + "," +
                          std::to_string(f.origin_task) + "," + format_value(f.mean_l2) + "," +
                          format_value(f.cov_l2) + "," + format_value(f.sym_kl) + "\n";
        }

        if (t >= 2) {
          for (const auto& [class_id, g] : previous_memory.entries()) {
            const double shift = norm(memory.entry(class_id).mean - g.mean);
            shift_csv += std::to_string(seed) + "," + std::to_string(t) + "," +
                         std::to_string(class_id) + "," + format_value(shift) + "\n";
          }
        }
        previous_memory = memory;

        if (t == num_tasks) {
          std::vector<std::pair<int, Matrix>> eval_features;
          for (int s = 0; s < num_tasks; ++s) {
            eval_features.emplace_back(s + 1,
                                       extractor.forward_nograd(stream.test_of(s).inputs));
          }
          SeededRng probe_rng(seed ^ 0xd1a6d1a6ull);
          const RecencyProbe probe =
              recency_bias_probe(memory, eval_features, config.head_samples_per_class,
                                 config.head_epochs, probe_rng);
          for (size_t i = 0; i < probe.task_ids.size(); ++i) {
            probe_csv += std::to_string(seed) + "," + std::to_string(probe.task_ids[i]) + "," +
                         format_value(probe.mean_mahalanobis_sq[i]) + "," +
                         format_value(probe.mean_winning_logit[i]) + "," +
                         format_value(probe.mean_own_task_logit[i]) + "\n";
          }
          for (const auto& [class_id, g] : memory.entries()) {
            const Vector eig = eig_sym(g.cov);
            for (int i = 0; i < eig.dim(); ++i) {
              spectrum_csv += std::to_string(seed) + "," + std::to_string(class_id) + "," +
                              std::to_string(g.task_id) + "," + std::to_string(i) + "," +
                              format_value(eig[i]) + "\n";
            }
          }
        }
      }
    }

    const fs::path diag_dir = dir / "diagnostics";
    fs::create_directories(diag_dir);
    write_text_file(diag_dir / "representation_strength.csv", repr_csv);
    write_text_file(diag_dir / "cov_rank.csv", rank_csv);
    write_text_file(diag_dir / "memory_fidelity.csv", fidelity_csv);
    write_text_file(diag_dir / "recency_probe.csv", probe_csv);
    write_text_file(diag_dir / "eigen_spectrum.csv", spectrum_csv);
    write_text_file(diag_dir / "class_shift.csv", shift_csv);
    return 0;
  } catch (const Error& e) {
    std::cerr << "adagauss diagnose: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "adagauss diagnose: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace adagauss
