#include "adagauss/continual_runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>

#include "adagauss/autodiff.hpp"
#include "adagauss/diagnostics.hpp"

namespace adagauss {

namespace {

constexpr double kBatchJitter = 1e-8;
constexpr int kCollapseFatalStreak = 10;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Shuffled minibatch index slices; a trailing single sample is merged into
// the previous batch because a batch covariance needs at least two rows.
std::vector<std::vector<int>> make_batches(int count, int batch_size, SeededRng& rng) {
  std::vector<int> order(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) order[static_cast<size_t>(i)] = i;
  rng.shuffle(order);
  std::vector<std::vector<int>> batches;
  for (int start = 0; start < count; start += batch_size) {
    const int size = std::min(batch_size, count - start);
    batches.emplace_back(order.begin() + start, order.begin() + start + size);
  }
  if (batches.size() > 1 && batches.back().size() < 2) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  if (batches.size() == 1 && batches.front().size() < 2) {
    fail(ErrorCode::kTooFewSamples, "cannot form a batch of at least 2 samples");
  }
  return batches;
}

Matrix gather_rows(const Matrix& source, const std::vector<int>& rows) {
  Matrix out(static_cast<int>(rows.size()), source.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    std::memcpy(out.row(static_cast<int>(i)), source.row(rows[i]),
                sizeof(double) * static_cast<size_t>(source.cols()));
  }
  return out;
}

int local_label(const std::vector<int>& task_classes, int global) {
  auto it = std::lower_bound(task_classes.begin(), task_classes.end(), global);
  if (it == task_classes.end() || *it != global) {
    fail(ErrorCode::kLabelOutOfRange,
         "label " + std::to_string(global) + " not in the current task");
  }
  return static_cast<int>(it - task_classes.begin());
}

}  // namespace

double LrSchedule::rate_at(int epoch) const {
  double rate = initial;
  for (int d : decay_epochs) {
    if (epoch >= d) rate *= decay_factor;
  }
  return rate;
}

double recompute_a_last(const Matrix& acc_matrix) {
  const int t = acc_matrix.rows();
  double sum = 0.0;
  for (int s = 0; s < t; ++s) sum += acc_matrix(t - 1, s);
  return sum / t;
}

double recompute_a_inc(const Matrix& acc_matrix) {
  const int t = acc_matrix.rows();
  double total = 0.0;
  for (int row = 0; row < t; ++row) {
    double sum = 0.0;
    for (int s = 0; s <= row; ++s) sum += acc_matrix(row, s);
    total += sum / (row + 1);
  }
  return total / t;
}

TaskTrainStats train_task(Mlp& extractor, const Mlp* prev_frozen, Mlp* projector, Mlp& head,
                          const std::vector<Mlp>& old_heads, const SampleSet& train,
                          const std::vector<int>& task_classes, int task_number,
                          const HyperParams& hp, const AblationConfig& ab, SeededRng& rng) {
  const bool distill = task_number >= 2 && ab.distillation != DistillationMode::kNone;
  if (distill && prev_frozen == nullptr) {
    fail(ErrorCode::kInvalidConfig, "distillation requested without a frozen previous extractor");
  }
  if (distill && ab.distillation == DistillationMode::kProjected && projector == nullptr) {
    fail(ErrorCode::kInvalidConfig, "projected distillation requested without a projector");
  }
  if (distill && ab.distillation == DistillationMode::kLogit && old_heads.empty()) {
    fail(ErrorCode::kNoPreviousHeads, "logit distillation requires previous task heads");
  }

  std::vector<int> local_labels(train.labels.size());
  for (size_t i = 0; i < train.labels.size(); ++i) {
    local_labels[i] = local_label(task_classes, train.labels[i]);
  }

  std::vector<Parameter*> params = extractor.parameters();
  for (Parameter* p : head.parameters()) params.push_back(p);
  if (distill && ab.distillation == DistillationMode::kProjected) {
    for (Parameter* p : projector->parameters()) params.push_back(p);
  }
  SgdOptimizer opt(params);

  TaskTrainStats stats;
  Tape tape;
  int collapse_streak = 0;

  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    const double lr = hp.lr.rate_at(epoch);
    const auto batches = make_batches(train.size(), hp.batch_size, rng);
    double ce_sum = 0.0, ac_sum = 0.0, kd_sum = 0.0, total_sum = 0.0;

    for (const auto& batch : batches) {
      Matrix xb = gather_rows(train.inputs, batch);
      std::vector<int> yb(batch.size());
      for (size_t i = 0; i < batch.size(); ++i) yb[i] = local_labels[static_cast<size_t>(batch[i])];

      Matrix prev_feats;
      if (distill) prev_feats = prev_frozen->forward_nograd(xb);

      auto build = [&](double jitter) {
        tape.reset();
        opt.zero_grad();
        Value feats = extractor.forward(tape, tape.input(xb));
        Value logits = head.forward(tape, feats);
        Value ce = loss_ce(tape, logits, yb);
        Value total = ce;
        Value ac{};
        if (ab.anticollapse) {
          ac = loss_ac(tape, feats, hp.beta, jitter);
        }
        Value kd{};
        bool has_kd = false;
        if (distill) {
          has_kd = true;
          switch (ab.distillation) {
            case DistillationMode::kProjected:
              kd = loss_pkd(tape, feats, *projector, prev_feats, hp.reduction);
              break;
            case DistillationMode::kFeature:
              kd = loss_feature_kd(tape, feats, prev_feats, hp.reduction);
              break;
            case DistillationMode::kLogit: {
              std::vector<Value> curr_logits;
              std::vector<Matrix> prev_logits;
              for (const Mlp& old_head : old_heads) {
                curr_logits.push_back(old_head.forward_frozen(tape, feats));
                prev_logits.push_back(old_head.forward_nograd(prev_feats));
              }
              kd = loss_logit_kd(tape, curr_logits, prev_logits, hp.logit_temperature);
              break;
            }
            case DistillationMode::kNone:
              has_kd = false;
              break;
          }
        }
        if (ab.anticollapse && has_kd) {
          total = loss_total(tape, ce, ac, kd, hp.lambda);
        } else if (ab.anticollapse) {
          total = tape.add(ce, ac);
        } else if (has_kd) {
          total = tape.add_scaled(ce, kd, hp.lambda);
        }
        struct StepValues {
          Value total;
          double ce, ac, kd;
        };
        return StepValues{total, tape.value_of(ce)(0, 0),
                          ab.anticollapse ? tape.value_of(ac)(0, 0) : 0.0,
                          has_kd ? tape.value_of(kd)(0, 0) : 0.0};
      };

      bool jittered = false;
      auto step = [&] {
        try {
          return build(0.0);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kCollapsedBatch) throw;
          ++collapse_streak;
          if (epoch == 0 && ab.anticollapse && collapse_streak >= kCollapseFatalStreak) {
            fail(ErrorCode::kCollapsedBatch,
                 "batch covariance stayed singular for " + std::to_string(collapse_streak) +
                     " consecutive steps in the first epoch");
          }
          jittered = true;
          return build(kBatchJitter);
        }
      }();
      if (jittered) {
        ++stats.jitter_events;
      } else {
        collapse_streak = 0;
      }

      const double total_value = tape.value_of(step.total)(0, 0);
      if (!std::isfinite(total_value)) {
        fail(ErrorCode::kNaNGradient,
             "training loss went non-finite at epoch " + std::to_string(epoch));
      }
      tape.backward(step.total);
      opt.clip_grad_norm(hp.clip_grad_norm);
      opt.step(lr, hp.weight_decay, hp.momentum);

      ce_sum += step.ce;
      ac_sum += step.ac;
      kd_sum += step.kd;
      total_sum += total_value;
    }

    const double inv = 1.0 / static_cast<double>(batches.size());
    stats.epoch_total_loss.push_back(total_sum * inv);
    if (epoch == hp.epochs - 1) {
      stats.final_epoch_ce = ce_sum * inv;
      stats.final_epoch_ac = ac_sum * inv;
      stats.final_epoch_kd = kd_sum * inv;
      stats.final_epoch_total = total_sum * inv;
    }
  }
  return stats;
}

double train_adapter(Mlp& adapter, const Mlp& prev_frozen, const Mlp& curr_frozen,
                     const SampleSet& train, const HyperParams& hp, const AblationConfig& ab,
                     SeededRng& rng, TaskTrainStats* stats) {
  if (hp.adapter_epochs == 0) {
    if (stats) stats->adapter_at_init = true;
    return std::numeric_limits<double>::quiet_NaN();
  }

  SgdOptimizer opt(adapter.parameters());
  Tape tape;
  double final_mse = 0.0;
  int collapse_streak = 0;

  for (int epoch = 0; epoch < hp.adapter_epochs; ++epoch) {
    const double lr = hp.adapter_lr.rate_at(epoch);
    const auto batches = make_batches(train.size(), hp.batch_size, rng);
    double mse_sum = 0.0;

    for (const auto& batch : batches) {
      const Matrix xb = gather_rows(train.inputs, batch);
      const Matrix prev_feats = prev_frozen.forward_nograd(xb);
      const Matrix curr_feats = curr_frozen.forward_nograd(xb);

      auto build = [&](double jitter) {
        tape.reset();
        opt.zero_grad();
        Value mapped = adapter.forward(tape, tape.input(prev_feats));
        Value mse = tape.mse_rows(mapped, curr_feats, hp.reduction);
        Value total = ab.anticollapse
                          ? tape.add(mse, loss_ac(tape, mapped, hp.beta, jitter))
                          : mse;
        return std::pair<Value, double>(total, tape.value_of(mse)(0, 0));
      };

      bool jittered = false;
      auto [total, mse_value] = [&] {
        try {
          return build(0.0);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kCollapsedBatch) throw;
          ++collapse_streak;
          if (epoch == 0 && ab.anticollapse && collapse_streak >= kCollapseFatalStreak) {
            fail(ErrorCode::kCollapsedBatch,
                 "adapter output covariance stayed singular for " +
                     std::to_string(collapse_streak) + " consecutive steps in the first epoch");
          }
          jittered = true;
          return build(kBatchJitter);
        }
      }();
      if (jittered) {
        if (stats) ++stats->jitter_events;
      } else {
        collapse_streak = 0;
      }

      tape.backward(total);
      opt.clip_grad_norm(hp.clip_grad_norm);
      opt.step(lr, hp.adapter_weight_decay, hp.momentum);
      mse_sum += mse_value;
    }
    final_mse = mse_sum / static_cast<double>(batches.size());
  }
  if (stats) stats->adapter_final_mse = final_mse;
  return final_mse;
}

std::vector<double> evaluate(const Mlp& extractor, const GaussianMemory& memory,
                             const TaskStream& stream, int upto_task, const AblationConfig& ab,
                             SeededRng& rng) {
  if (memory.empty()) fail(ErrorCode::kEmptyMemory, "evaluation requires a populated memory");

  ClassifierConfig cfg;
  cfg.kind = ab.classifier;
  cfg.include_logdet = ab.include_logdet;
  Classifier classifier(memory, cfg);
  if (ab.classifier == ClassifierKind::kLinearHead) {
    classifier.train_linear_head(ab.head_samples_per_class, ab.head_epochs, rng);
  }

  std::vector<double> accs;
  for (int s = 0; s <= upto_task; ++s) {
    const SampleSet& test = stream.test_of(s);
    const Matrix feats = extractor.forward_nograd(test.inputs);
    int correct = 0;
    for (int r = 0; r < feats.rows(); ++r) {
      if (classifier.classify(feats.row_vector(r)) == test.labels[static_cast<size_t>(r)]) {
        ++correct;
      }
    }
    accs.push_back(static_cast<double>(correct) / std::max(1, feats.rows()));
  }
  return accs;
}

namespace {

// Tags module errors with the task and phase where they surfaced.
template <typename Fn>
auto annotated(int task_number, const char* phase, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), std::string("task ") + std::to_string(task_number) + ", phase " +
                              phase + ": " + e.what());
  }
}

}  // namespace

RunReport run(const TaskStream& stream, const HyperParams& hp, const AblationConfig& ab,
              const RunOptions& options) {
  const int num_tasks = stream.num_tasks();
  if (num_tasks < 1) fail(ErrorCode::kEmptyInput, "stream has no tasks");
  if (hp.batch_size < 2) fail(ErrorCode::kInvalidConfig, "batch_size must be at least 2");

  NetworkConfig net_cfg;
  net_cfg.input_dim = stream.input_dim();
  net_cfg.hidden_dims = hp.hidden_dims;
  net_cfg.latent_dim = hp.latent_dim;
  net_cfg.projector_hidden_factor = hp.projector_hidden_factor;
  net_cfg.bottleneck_init_scale = hp.bottleneck_init_scale;
  net_cfg.identity_init_projector = hp.identity_init_projector;
  net_cfg.identity_init_adapter = hp.identity_init_adapter;
  net_cfg.projector_init_scale = hp.projector_init_scale;
  validate(net_cfg);

  SeededRng root(hp.seed);
  SeededRng init_rng = root.derive(0x5eed0001);
  SeededRng train_rng = root.derive(0x5eed0002);
  SeededRng eval_rng = root.derive(0x5eed0003);

  RunReport report;
  report.acc_matrix = Matrix(num_tasks, num_tasks);

  Mlp extractor = make_feature_extractor(net_cfg, init_rng);
  GaussianMemory memory(hp.latent_dim);
  std::vector<Mlp> old_heads;

  for (int t = 1; t <= num_tasks; ++t) {
    const SampleSet& train = stream.train_of(t - 1);
    const std::vector<int>& classes = stream.classes_of(t - 1);
    PhaseTimes times;
    TaskTrainStats stats;

    Mlp prev;
    Mlp projector;
    Mlp adapter;
    const bool incremental = t >= 2;
    if (incremental) {
      prev = extractor.clone_frozen();
      projector = make_projector(net_cfg, init_rng);
      adapter = make_adapter(net_cfg, init_rng);
    }
    Mlp head = make_task_head(hp.latent_dim, static_cast<int>(classes.size()), init_rng);

    auto train_start = Clock::now();
    annotated(t, "train", [&] {
      stats = train_task(extractor, incremental ? &prev : nullptr,
                         incremental ? &projector : nullptr, head, old_heads, train, classes, t,
                         hp, ab, train_rng);
      return 0;
    });
    times.train_s = seconds_since(train_start);

    annotated(t, "memorize", [&] {
      const Matrix feats = extractor.forward_nograd(train.inputs);
      memory.memorize_task(feats, train.labels, t, ab.shrink_gamma);
      return 0;
    });

    if (incremental) {
      auto adapter_start = Clock::now();
      annotated(t, "adapter", [&] {
        train_adapter(adapter, prev, extractor, train, hp, ab, train_rng, &stats);
        return 0;
      });
      times.adapter_s = seconds_since(adapter_start);

      auto adaptation_start = Clock::now();
      annotated(t, "adaptation", [&] {
        if (ab.adapt != AdaptMode::kNone) {
          const GaussianMemory before = memory;
          memory.adapt_all(adapter, hp.adapt_samples, t, root.derive(0xada0000 + t), ab.adapt,
                           ab.shrink_gamma);
          for (const auto& [class_id, shift] : class_shift(before, memory)) {
            if (before.entry(class_id).task_id < t) {
              report.class_shifts.emplace_back(class_id, shift);
            }
          }
        }
        return 0;
      });
      times.adaptation_s = seconds_since(adaptation_start);
    }

    auto eval_start = Clock::now();
    annotated(t, "eval", [&] {
      const std::vector<double> accs = evaluate(extractor, memory, stream, t - 1, ab, eval_rng);
      for (int s = 0; s < static_cast<int>(accs.size()); ++s) {
        report.acc_matrix(t - 1, s) = accs[static_cast<size_t>(s)];
      }
      return 0;
    });
    times.eval_s = seconds_since(eval_start);

    if (options.oracle_diagnostics) {
      annotated(t, "diagnostics", [&] {
        // Representation strength over all seen held-out data.
        int rows = 0;
        for (int s = 0; s < t; ++s) rows += stream.test_of(s).size();
        Matrix joined(rows, stream.input_dim());
        int cursor = 0;
        for (int s = 0; s < t; ++s) {
          const SampleSet& test = stream.test_of(s);
          std::memcpy(joined.row(cursor), test.inputs.data(),
                      sizeof(double) * test.inputs.size());
          cursor += test.size();
        }
        report.representation_strength.push_back(representation_strength(extractor, joined));

        for (const CovRankStats& row : cov_rank_and_inverse_norm(memory, ab.shrink_gamma)) {
          report.ranks.push_back(RankRow{t, row.origin_task, row.mean_rank,
                                         row.mean_inverse_norm});
        }

        std::map<int, Matrix> truth;
        for (int s = 0; s < t; ++s) {
          const SampleSet& test = stream.test_of(s);
          const SampleSet feats{extractor.forward_nograd(test.inputs), test.labels};
          for (int cls : stream.classes_of(s)) truth[cls] = feats.rows_with_label(cls);
        }
        for (const FidelityStats& row : memory_fidelity(memory, truth)) {
          report.fidelity.push_back(
              FidelityRow{t, row.origin_task, row.mean_l2, row.cov_l2, row.sym_kl});
        }
        return 0;
      });
    }

    if (!options.checkpoint_dir.empty()) {
      const std::string base = options.checkpoint_dir + "/";
      save_network(extractor, base + "ckpt_task" + std::to_string(t) + ".agnet");
      memory.save(base + "memory_task" + std::to_string(t) + ".agmem");
    }

    report.jitter_events += stats.jitter_events;
    report.times.push_back(times);
    report.task_stats.push_back(std::move(stats));
    old_heads.push_back(head.clone_frozen());
  }

  report.a_last = recompute_a_last(report.acc_matrix);
  report.a_inc = recompute_a_inc(report.acc_matrix);
  return report;
}

}  // namespace adagauss
