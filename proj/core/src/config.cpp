#include "adagauss/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace adagauss {

namespace {

std::string trim(const std::string& s) {
  const size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

[[noreturn]] void bad_key(const std::string& section, const std::string& key) {
  fail(ErrorCode::kInvalidConfig, "unknown key '" + key + "' in section [" + section + "]");
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  fail(ErrorCode::kInvalidConfig, "key '" + key + "' has invalid value '" + value + "'");
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) bad_value(key, value);
    return v;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    bad_value(key, value);
  }
}

long long parse_int(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) bad_value(key, value);
    return v;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    bad_value(key, value);
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "on" || value == "1") return true;
  if (value == "false" || value == "off" || value == "0") return false;
  bad_value(key, value);
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  for (const std::string& item : split_list(value)) {
    out.push_back(static_cast<int>(parse_int(key, item)));
  }
  if (out.empty()) fail(ErrorCode::kInvalidConfig, "key '" + key + "' has an empty list");
  return out;
}

std::string real_to_text(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string join_ints(const std::vector<int>& values) {
  std::string out;
  for (size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(values[i]);
  }
  return out;
}

}  // namespace

size_t RunConfig::grid_size() const {
  return classifiers.size() * adapt_modes.size() * anticollapse.size() * shrink_gammas.size() *
         distillations.size();
}

AblationConfig RunConfig::ablation_cell(size_t index) const {
  AblationConfig ab;
  size_t rest = index;
  const size_t n_dist = distillations.size();
  const size_t n_shrink = shrink_gammas.size();
  const size_t n_ac = anticollapse.size();
  const size_t n_adapt = adapt_modes.size();
  ab.distillation = distillations[rest % n_dist];
  rest /= n_dist;
  ab.shrink_gamma = shrink_gammas[rest % n_shrink];
  rest /= n_shrink;
  ab.anticollapse = anticollapse[rest % n_ac];
  rest /= n_ac;
  ab.adapt = adapt_modes[rest % n_adapt];
  rest /= n_adapt;
  ab.classifier = classifiers[rest];
  ab.include_logdet = include_logdet;
  ab.head_samples_per_class = head_samples_per_class;
  ab.head_epochs = head_epochs;
  return ab;
}

RunConfig parse_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kInvalidConfig, "cannot open config '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config_text(buffer.str(), path);
}

RunConfig parse_run_config_text(const std::string& text, const std::string& origin) {
  RunConfig config;
  bool dataset_kind_seen = false;

  std::stringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  std::set<std::string> seen_keys;

  while (std::getline(in, line)) {
    ++line_no;
    const size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') {
        fail(ErrorCode::kInvalidConfig,
             origin + ":" + std::to_string(line_no) + ": malformed section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section != "dataset" && section != "hyperparams" && section != "ablation" &&
          section != "run") {
        fail(ErrorCode::kInvalidConfig, "unknown section [" + section + "]");
      }
      continue;
    }

    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorCode::kInvalidConfig,
           origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) {
      fail(ErrorCode::kInvalidConfig, "key '" + key + "' appears before any section");
    }
    if (!seen_keys.insert(section + "." + key).second) {
      fail(ErrorCode::kInvalidConfig, "duplicate key '" + key + "' in [" + section + "]");
    }

    if (section == "dataset") {
      SyntheticSpec& syn = config.dataset.synthetic;
      CsvDatasetConfig& csv = config.dataset.csv;
      if (key == "kind") {
        dataset_kind_seen = true;
        if (value == "synthetic") {
          config.dataset.kind = DatasetKind::kSynthetic;
        } else if (value == "csv") {
          config.dataset.kind = DatasetKind::kCsv;
        } else {
          bad_value(key, value);
        }
      } else if (key == "input_dim") {
        syn.input_dim = static_cast<int>(parse_int(key, value));
      } else if (key == "classes_per_task") {
        syn.classes_per_task = static_cast<int>(parse_int(key, value));
      } else if (key == "num_tasks") {
        syn.num_tasks = static_cast<int>(parse_int(key, value));
        csv.num_tasks = syn.num_tasks;
      } else if (key == "samples_per_class") {
        syn.samples_per_class = static_cast<int>(parse_int(key, value));
      } else if (key == "cluster_spread") {
        syn.cluster_spread = parse_real(key, value);
      } else if (key == "cluster_separation") {
        syn.cluster_separation = parse_real(key, value);
      } else if (key == "anisotropy") {
        syn.anisotropy = parse_real(key, value);
      } else if (key == "stream_seed") {
        syn.seed = static_cast<uint64_t>(parse_int(key, value));
        csv.split_seed = syn.seed;
      } else if (key == "path") {
        csv.path = value;
      } else if (key == "label_column") {
        csv.label_column = value;
      } else if (key == "first_task_fraction") {
        if (value == "equal") {
          csv.first_task_fraction = FirstTaskFraction::kEqual;
        } else if (value == "half") {
          csv.first_task_fraction = FirstTaskFraction::kHalf;
        } else {
          bad_value(key, value);
        }
      } else {
        bad_key(section, key);
      }
    } else if (section == "hyperparams") {
      HyperParams& hp = config.hyperparams;
      if (key == "lambda") {
        hp.lambda = parse_real(key, value);
      } else if (key == "beta") {
        hp.beta = parse_real(key, value);
      } else if (key == "adapt_samples") {
        hp.adapt_samples = static_cast<int>(parse_int(key, value));
      } else if (key == "latent_dim") {
        hp.latent_dim = static_cast<int>(parse_int(key, value));
      } else if (key == "projector_hidden_factor") {
        hp.projector_hidden_factor = static_cast<int>(parse_int(key, value));
      } else if (key == "hidden_dims") {
        hp.hidden_dims = parse_int_list(key, value);
      } else if (key == "epochs") {
        hp.epochs = static_cast<int>(parse_int(key, value));
      } else if (key == "batch_size") {
        hp.batch_size = static_cast<int>(parse_int(key, value));
      } else if (key == "lr") {
        hp.lr.initial = parse_real(key, value);
      } else if (key == "lr_decay_epochs") {
        hp.lr.decay_epochs = parse_int_list(key, value);
      } else if (key == "lr_decay_factor") {
        hp.lr.decay_factor = parse_real(key, value);
      } else if (key == "adapter_epochs") {
        hp.adapter_epochs = static_cast<int>(parse_int(key, value));
      } else if (key == "adapter_lr") {
        hp.adapter_lr.initial = parse_real(key, value);
      } else if (key == "adapter_lr_decay_epochs") {
        hp.adapter_lr.decay_epochs = parse_int_list(key, value);
      } else if (key == "adapter_lr_decay_factor") {
        hp.adapter_lr.decay_factor = parse_real(key, value);
      } else if (key == "weight_decay") {
        hp.weight_decay = parse_real(key, value);
      } else if (key == "adapter_weight_decay") {
        hp.adapter_weight_decay = parse_real(key, value);
      } else if (key == "momentum") {
        hp.momentum = parse_real(key, value);
      } else if (key == "clip_grad_norm") {
        hp.clip_grad_norm = parse_real(key, value);
      } else if (key == "bottleneck_init_scale") {
        hp.bottleneck_init_scale = parse_real(key, value);
      } else if (key == "identity_init_projector") {
        hp.identity_init_projector = parse_bool(key, value);
      } else if (key == "identity_init_adapter") {
        hp.identity_init_adapter = parse_bool(key, value);
      } else if (key == "projector_init_scale") {
        hp.projector_init_scale = parse_real(key, value);
      } else if (key == "reduction") {
        if (value == "mean") {
          hp.reduction = Reduction::kMean;
        } else if (value == "sum") {
          hp.reduction = Reduction::kSum;
        } else {
          bad_value(key, value);
        }
      } else if (key == "logit_temperature") {
        hp.logit_temperature = parse_real(key, value);
      } else {
        bad_key(section, key);
      }
    } else if (section == "ablation") {
      if (key == "classifier") {
        config.classifiers.clear();
        for (const std::string& item : split_list(value)) {
          config.classifiers.push_back(parse_classifier_kind(item));
        }
      } else if (key == "adapt") {
        config.adapt_modes.clear();
        for (const std::string& item : split_list(value)) {
          config.adapt_modes.push_back(parse_adapt_mode(item));
        }
      } else if (key == "anticollapse") {
        config.anticollapse.clear();
        for (const std::string& item : split_list(value)) {
          config.anticollapse.push_back(parse_bool(key, item));
        }
      } else if (key == "shrink_gamma") {
        config.shrink_gammas.clear();
        for (const std::string& item : split_list(value)) {
          const double g = parse_real(key, item);
          if (g < 0.0) bad_value(key, item);
          config.shrink_gammas.push_back(g);
        }
      } else if (key == "distillation") {
        config.distillations.clear();
        for (const std::string& item : split_list(value)) {
          config.distillations.push_back(parse_distillation_mode(item));
        }
      } else if (key == "include_logdet") {
        config.include_logdet = parse_bool(key, value);
      } else if (key == "head_samples_per_class") {
        config.head_samples_per_class = static_cast<int>(parse_int(key, value));
      } else if (key == "head_epochs") {
        config.head_epochs = static_cast<int>(parse_int(key, value));
      } else {
        bad_key(section, key);
      }
      if (config.classifiers.empty() || config.adapt_modes.empty() ||
          config.anticollapse.empty() || config.shrink_gammas.empty() ||
          config.distillations.empty()) {
        fail(ErrorCode::kInvalidConfig, "ablation axis '" + key + "' resolved to an empty list");
      }
    } else if (section == "run") {
      if (key == "seeds") {
        config.seeds.clear();
        for (const std::string& item : split_list(value)) {
          config.seeds.push_back(static_cast<uint64_t>(parse_int(key, item)));
        }
        if (config.seeds.empty()) fail(ErrorCode::kInvalidConfig, "seeds list is empty");
      } else if (key == "out_dir") {
        config.out_dir = value;
      } else if (key == "oracle_diagnostics") {
        config.oracle_diagnostics = parse_bool(key, value);
      } else if (key == "checkpoints") {
        config.checkpoints = parse_bool(key, value);
      } else {
        bad_key(section, key);
      }
    }
  }

  if (config.dataset.kind == DatasetKind::kCsv && config.dataset.csv.path.empty()) {
    fail(ErrorCode::kInvalidConfig, "csv dataset requires 'path'");
  }
  if (!dataset_kind_seen) {
    fail(ErrorCode::kInvalidConfig, "section [dataset] must set 'kind'");
  }
  if (config.hyperparams.latent_dim < 2) {
    fail(ErrorCode::kInvalidConfig, "latent_dim must be at least 2");
  }
  return config;
}

std::string resolved_config_text(const RunConfig& config) {
  std::ostringstream out;
  out << "[dataset]\n";
  out << "kind = " << (config.dataset.kind == DatasetKind::kSynthetic ? "synthetic" : "csv")
      << "\n";
  if (config.dataset.kind == DatasetKind::kSynthetic) {
    const SyntheticSpec& s = config.dataset.synthetic;
    out << "input_dim = " << s.input_dim << "\n";
    out << "classes_per_task = " << s.classes_per_task << "\n";
    out << "num_tasks = " << s.num_tasks << "\n";
    out << "samples_per_class = " << s.samples_per_class << "\n";
    out << "cluster_spread = " << real_to_text(s.cluster_spread) << "\n";
    out << "cluster_separation = " << real_to_text(s.cluster_separation) << "\n";
    out << "anisotropy = " << real_to_text(s.anisotropy) << "\n";
    out << "stream_seed = " << s.seed << "\n";
  } else {
    const CsvDatasetConfig& c = config.dataset.csv;
    out << "path = " << c.path << "\n";
    out << "label_column = " << c.label_column << "\n";
    out << "num_tasks = " << c.num_tasks << "\n";
    out << "first_task_fraction = "
        << (c.first_task_fraction == FirstTaskFraction::kEqual ? "equal" : "half") << "\n";
    out << "stream_seed = " << c.split_seed << "\n";
  }

  const HyperParams& hp = config.hyperparams;
  out << "\n[hyperparams]\n";
  out << "lambda = " << real_to_text(hp.lambda) << "\n";
  out << "beta = " << real_to_text(hp.beta) << "\n";
  out << "adapt_samples = " << hp.adapt_samples << "\n";
  out << "latent_dim = " << hp.latent_dim << "\n";
  out << "projector_hidden_factor = " << hp.projector_hidden_factor << "\n";
  out << "hidden_dims = " << join_ints(hp.hidden_dims) << "\n";
  out << "epochs = " << hp.epochs << "\n";
  out << "batch_size = " << hp.batch_size << "\n";
  out << "lr = " << real_to_text(hp.lr.initial) << "\n";
  out << "lr_decay_epochs = " << join_ints(hp.lr.decay_epochs) << "\n";
  out << "lr_decay_factor = " << real_to_text(hp.lr.decay_factor) << "\n";
  out << "adapter_epochs = " << hp.adapter_epochs << "\n";
  out << "adapter_lr = " << real_to_text(hp.adapter_lr.initial) << "\n";
  out << "adapter_lr_decay_epochs = " << join_ints(hp.adapter_lr.decay_epochs) << "\n";
  out << "adapter_lr_decay_factor = " << real_to_text(hp.adapter_lr.decay_factor) << "\n";
  out << "weight_decay = " << real_to_text(hp.weight_decay) << "\n";
  out << "adapter_weight_decay = " << real_to_text(hp.adapter_weight_decay) << "\n";
  out << "momentum = " << real_to_text(hp.momentum) << "\n";
  out << "clip_grad_norm = " << real_to_text(hp.clip_grad_norm) << "\n";
  out << "bottleneck_init_scale = " << real_to_text(hp.bottleneck_init_scale) << "\n";
  out << "identity_init_projector = " << (hp.identity_init_projector ? "true" : "false") << "\n";
  out << "identity_init_adapter = " << (hp.identity_init_adapter ? "true" : "false") << "\n";
  out << "projector_init_scale = " << real_to_text(hp.projector_init_scale) << "\n";
  out << "reduction = " << (hp.reduction == Reduction::kMean ? "mean" : "sum") << "\n";
  out << "logit_temperature = " << real_to_text(hp.logit_temperature) << "\n";

  out << "\n[ablation]\n";
  out << "classifier = ";
  for (size_t i = 0; i < config.classifiers.size(); ++i) {
    out << (i ? "," : "") << classifier_kind_name(config.classifiers[i]);
  }
  out << "\n";
  out << "adapt = ";
  for (size_t i = 0; i < config.adapt_modes.size(); ++i) {
    out << (i ? "," : "") << adapt_mode_name(config.adapt_modes[i]);
  }
  out << "\n";
  out << "anticollapse = ";
  for (size_t i = 0; i < config.anticollapse.size(); ++i) {
    out << (i ? "," : "") << (config.anticollapse[i] ? "on" : "off");
  }
  out << "\n";
  out << "shrink_gamma = ";
  for (size_t i = 0; i < config.shrink_gammas.size(); ++i) {
    out << (i ? "," : "") << real_to_text(config.shrink_gammas[i]);
  }
  out << "\n";
  out << "distillation = ";
  for (size_t i = 0; i < config.distillations.size(); ++i) {
    out << (i ? "," : "") << distillation_mode_name(config.distillations[i]);
  }
  out << "\n";
  out << "include_logdet = " << (config.include_logdet ? "true" : "false") << "\n";
  out << "head_samples_per_class = " << config.head_samples_per_class << "\n";
  out << "head_epochs = " << config.head_epochs << "\n";

  out << "\n[run]\n";
  out << "seeds = ";
  for (size_t i = 0; i < config.seeds.size(); ++i) {
    out << (i ? "," : "") << config.seeds[i];
  }
  out << "\n";
  out << "out_dir = " << config.out_dir << "\n";
  out << "oracle_diagnostics = " << (config.oracle_diagnostics ? "true" : "false") << "\n";
  out << "checkpoints = " << (config.checkpoints ? "true" : "false") << "\n";
  return out.str();
}

TaskStream build_stream(const DatasetConfig& dataset) {
  if (dataset.kind == DatasetKind::kSynthetic) {
    return generate_synthetic(dataset.synthetic);
  }
  const CsvDatasetConfig& csv = dataset.csv;
  const SampleSet samples = load_csv_dataset(csv.path, csv.label_column);
  return split_incremental(samples, csv.num_tasks, csv.first_task_fraction, csv.split_seed);
}

}  // namespace adagauss
