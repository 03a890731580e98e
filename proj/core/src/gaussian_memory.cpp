#include "adagauss/gaussian_memory.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>

namespace adagauss {

namespace {

constexpr char kMemMagic[6] = {'A', 'G', 'M', 'E', 'M', '1'};

void write_u64(std::ofstream& out, uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), 8);
}

uint64_t read_u64(std::ifstream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}

void write_f64(std::ofstream& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_u64(out, bits);
}

double read_f64(std::ifstream& in) {
  const uint64_t bits = read_u64(in);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

const char* adapt_mode_name(AdaptMode mode) {
  switch (mode) {
    case AdaptMode::kNone: return "none";
    case AdaptMode::kMeanOnly: return "mean_only";
    case AdaptMode::kCovOnly: return "cov_only";
    case AdaptMode::kFull: return "full";
  }
  return "unknown";
}

AdaptMode parse_adapt_mode(const std::string& text) {
  if (text == "none") return AdaptMode::kNone;
  if (text == "mean_only") return AdaptMode::kMeanOnly;
  if (text == "cov_only") return AdaptMode::kCovOnly;
  if (text == "full") return AdaptMode::kFull;
  fail(ErrorCode::kInvalidConfig, "unknown adapt mode '" + text + "'");
}

const ClassGaussian& GaussianMemory::entry(int class_id) const {
  auto it = entries_.find(class_id);
  if (it == entries_.end()) {
    fail(ErrorCode::kClassMismatch, "class " + std::to_string(class_id) + " not in memory");
  }
  return it->second;
}

std::vector<int> GaussianMemory::class_ids() const {
  std::vector<int> ids;
  ids.reserve(entries_.size());
  for (const auto& [id, g] : entries_) ids.push_back(id);
  return ids;
}

void GaussianMemory::insert(ClassGaussian g) {
  if (g.mean.dim() != latent_dim_ || g.cov.rows() != latent_dim_ || g.cov.cols() != latent_dim_) {
    fail(ErrorCode::kShapeMismatch, "entry dims differ from memory latent_dim");
  }
  if (entries_.count(g.class_id)) {
    fail(ErrorCode::kDuplicateClass, "class " + std::to_string(g.class_id) + " already stored");
  }
  entries_.emplace(g.class_id, std::move(g));
  ++version_;
}

void GaussianMemory::replace(ClassGaussian g) {
  auto it = entries_.find(g.class_id);
  if (it == entries_.end()) {
    fail(ErrorCode::kClassMismatch, "class " + std::to_string(g.class_id) + " not in memory");
  }
  it->second = std::move(g);
  ++version_;
}

void GaussianMemory::memorize_task(const Matrix& features, const std::vector<int>& labels,
                                   int task_id, double shrink_gamma) {
  if (features.rows() != static_cast<int>(labels.size())) {
    fail(ErrorCode::kShapeMismatch, "one label per feature row required");
  }
  if (features.cols() != latent_dim_) {
    fail(ErrorCode::kShapeMismatch, "feature dim differs from memory latent_dim");
  }
  std::map<int, std::vector<int>> by_class;
  for (int r = 0; r < features.rows(); ++r) by_class[labels[static_cast<size_t>(r)]].push_back(r);

  for (const auto& [class_id, rows] : by_class) {
    if (static_cast<int>(rows.size()) < latent_dim_ + 1) {
      fail(ErrorCode::kTooFewSamplesForClass,
           "class " + std::to_string(class_id) + " has " + std::to_string(rows.size()) +
               " samples; needs at least " + std::to_string(latent_dim_ + 1));
    }
    if (entries_.count(class_id)) {
      fail(ErrorCode::kDuplicateClass, "class " + std::to_string(class_id) + " already stored");
    }
  }
  for (const auto& [class_id, rows] : by_class) {
    Matrix class_feats(static_cast<int>(rows.size()), latent_dim_);
    for (size_t i = 0; i < rows.size(); ++i) {
      std::memcpy(class_feats.row(static_cast<int>(i)), features.row(rows[i]),
                  sizeof(double) * static_cast<size_t>(latent_dim_));
    }
    auto [mean, cov] = estimate_gaussian(class_feats);
    if (shrink_gamma > 0.0) cov = shrink_cov(cov, shrink_gamma);
    ClassGaussian g;
    g.class_id = class_id;
    g.task_id = task_id;
    g.mean = std::move(mean);
    g.cov = std::move(cov);
    entries_.emplace(class_id, std::move(g));
  }
  ++version_;
}

void GaussianMemory::adapt_all(const Mlp& adapter, int n_samples, int current_task,
                               const SeededRng& rng, AdaptMode mode, double shrink_gamma) {
  if (mode == AdaptMode::kNone) return;
  if (adapter.input_dim() != latent_dim_ || adapter.output_dim() != latent_dim_) {
    fail(ErrorCode::kAdapterDimMismatch, "adapter dims differ from memory latent_dim");
  }
  if (mode != AdaptMode::kMeanOnly && n_samples < latent_dim_ + 1) {
    fail(ErrorCode::kTooFewSamples,
         "n_samples " + std::to_string(n_samples) + " below latent_dim+1");
  }

  for (auto& [class_id, g] : entries_) {
    if (g.task_id >= current_task) continue;
    if (mode == AdaptMode::kMeanOnly) {
      Matrix one(1, latent_dim_);
      one.set_row(0, g.mean);
      g.mean = adapter.forward_nograd(one).row_vector(0);
      continue;
    }
    SeededRng class_rng = rng.derive(static_cast<uint64_t>(class_id));
    const Matrix drawn = sample_gaussian(g.mean, g.cov, n_samples, class_rng);
    const Matrix mapped = adapter.forward_nograd(drawn);
    auto [mean, cov] = estimate_gaussian(mapped);
    if (shrink_gamma > 0.0) cov = shrink_cov(cov, shrink_gamma);
    if (mode == AdaptMode::kFull) g.mean = std::move(mean);
    g.cov = std::move(cov);
  }
  ++version_;
}

int GaussianMemory::stored_reals_per_class() const {
  return latent_dim_ + latent_dim_ * (latent_dim_ + 1) / 2;
}

void GaussianMemory::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIoError, "cannot open '" + path + "' for writing");
  out.write(kMemMagic, sizeof(kMemMagic));
  write_u64(out, static_cast<uint64_t>(latent_dim_));
  write_u64(out, static_cast<uint64_t>(entries_.size()));
  for (const auto& [class_id, g] : entries_) {
    write_u64(out, static_cast<uint64_t>(static_cast<int64_t>(class_id)));
    write_u64(out, static_cast<uint64_t>(static_cast<int64_t>(g.task_id)));
    for (int i = 0; i < latent_dim_; ++i) write_f64(out, g.mean[i]);
    for (int i = 0; i < latent_dim_; ++i)
      for (int j = i; j < latent_dim_; ++j) write_f64(out, g.cov(i, j));
  }
  if (!out) fail(ErrorCode::kIoError, "short write to '" + path + "'");
}

GaussianMemory GaussianMemory::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kMissingCheckpoint, "cannot open memory snapshot '" + path + "'");
  char magic[6];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMemMagic, sizeof(kMemMagic)) != 0) {
    fail(ErrorCode::kMissingCheckpoint, "'" + path + "' is not a memory snapshot");
  }
  const int dim = static_cast<int>(read_u64(in));
  const uint64_t count = read_u64(in);
  if (!in || dim < 1 || count > 1u << 20) {
    fail(ErrorCode::kMissingCheckpoint, "corrupt memory snapshot header in '" + path + "'");
  }
  GaussianMemory memory(dim);
  for (uint64_t k = 0; k < count; ++k) {
    ClassGaussian g;
    g.class_id = static_cast<int>(static_cast<int64_t>(read_u64(in)));
    g.task_id = static_cast<int>(static_cast<int64_t>(read_u64(in)));
    g.mean = Vector(dim);
    for (int i = 0; i < dim; ++i) g.mean[i] = read_f64(in);
    g.cov = Matrix(dim, dim);
    for (int i = 0; i < dim; ++i)
      for (int j = i; j < dim; ++j) {
        const double v = read_f64(in);
        g.cov(i, j) = v;
        g.cov(j, i) = v;
      }
    memory.insert(std::move(g));
  }
  if (!in) fail(ErrorCode::kMissingCheckpoint, "truncated memory snapshot '" + path + "'");
  return memory;
}

Matrix shrink_cov(const Matrix& cov, double gamma) {
  if (gamma < 0.0) fail(ErrorCode::kInvalidConfig, "shrink gamma must be non-negative");
  Matrix out = cov;
  for (int i = 0; i < out.rows(); ++i) out(i, i) += gamma;
  return out;
}

}  // namespace adagauss
