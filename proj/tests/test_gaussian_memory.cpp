#include <doctest.h>

#include <cstdio>

#include "adagauss/gaussian_memory.hpp"
#include "test_support.hpp"

using namespace adagauss;
using namespace adagauss::testing;

namespace {

// Labeled feature block with n rows per class drawn from given Gaussians.
std::pair<Matrix, std::vector<int>> features_for_classes(
    const std::vector<std::pair<Vector, Matrix>>& gaussians, int per_class, SeededRng& rng) {
  const int dim = gaussians.front().first.dim();
  Matrix feats(per_class * static_cast<int>(gaussians.size()), dim);
  std::vector<int> labels;
  for (size_t k = 0; k < gaussians.size(); ++k) {
    const Matrix draws = sample_gaussian(gaussians[k].first, gaussians[k].second, per_class, rng);
    for (int i = 0; i < per_class; ++i) {
      feats.set_row(static_cast<int>(k) * per_class + i, draws.row_vector(i));
      labels.push_back(static_cast<int>(k));
    }
  }
  return {std::move(feats), std::move(labels)};
}

}  // namespace

TEST_CASE("memorize_task stores one entry per class with the right task id") {
  SeededRng rng(5);
  const int dim = 4;
  GaussianMemory memory(dim);
  auto [feats, labels] = features_for_classes(
      {{Vector(dim, 0.0), Matrix::identity(dim)}, {Vector(dim, 3.0), Matrix::identity(dim)}}, 30,
      rng);
  memory.memorize_task(feats, labels, 1);
  CHECK(memory.size() == 2);
  CHECK(memory.entry(0).task_id == 1);
  CHECK(memory.entry(1).task_id == 1);
  CHECK(memory.entry(1).mean.dim() == dim);
  CHECK(max_asymmetry(memory.entry(0).cov) == 0.0);
}

TEST_CASE("memorize_task with latent_dim+1 clean samples yields an SPD covariance") {
  SeededRng rng(7);
  const int dim = 4;
  GaussianMemory memory(dim);
  auto [feats, labels] =
      features_for_classes({{Vector(dim, 1.0), 0.5 * Matrix::identity(dim)}}, dim + 1, rng);
  memory.memorize_task(feats, labels, 1);
  CHECK_NOTHROW(cholesky(memory.entry(0).cov));
}

TEST_CASE("memorize_task rejects classes with latent_dim samples or fewer") {
  SeededRng rng(9);
  const int dim = 4;
  GaussianMemory memory(dim);
  auto [feats, labels] =
      features_for_classes({{Vector(dim, 0.0), Matrix::identity(dim)}}, dim, rng);
  try {
    memory.memorize_task(feats, labels, 1);
    FAIL("expected TooFewSamplesForClass");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kTooFewSamplesForClass);
    CHECK(std::string(e.what()).find("class 0") != std::string::npos);
  }
  CHECK(memory.empty());  // nothing partially stored
}

TEST_CASE("memorize_task rejects duplicate classes") {
  SeededRng rng(11);
  const int dim = 3;
  GaussianMemory memory(dim);
  auto [feats, labels] =
      features_for_classes({{Vector(dim, 0.0), Matrix::identity(dim)}}, 10, rng);
  memory.memorize_task(feats, labels, 1);
  try {
    memory.memorize_task(feats, labels, 2);
    FAIL("expected DuplicateClass");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDuplicateClass);
  }
}

TEST_CASE("adapt_all through an exact identity map reproduces each Gaussian") {
  SeededRng rng(13);
  const int dim = 4;
  GaussianMemory memory(dim);
  const Matrix cov = 0.5 * random_spd(dim, rng);
  const Vector mean = random_vector(dim, rng, 2.0);
  ClassGaussian g;
  g.class_id = 0;
  g.task_id = 1;
  g.mean = mean;
  g.cov = cov;
  memory.insert(std::move(g));

  const Mlp identity = make_exact_affine_map(Matrix::identity(dim), Vector(dim));
  memory.adapt_all(identity, 10000, 2, SeededRng(99));
  CHECK(norm(memory.entry(0).mean - mean) < 0.1);
  CHECK(frobenius_norm(memory.entry(0).cov - cov) < 0.1);
}

TEST_CASE("adapt_all matches the closed-form affine transport oracle") {
  SeededRng rng(17);
  const int dim = 4;
  for (int trial = 0; trial < 3; ++trial) {
    const Matrix a = random_matrix(dim, dim, rng, 0.4);
    const Vector b = random_vector(dim, rng);
    const Matrix cov = 0.4 * random_spd(dim, rng);
    const Vector mean = random_vector(dim, rng, 1.5);

    GaussianMemory memory(dim);
    ClassGaussian g;
    g.class_id = trial;
    g.task_id = 1;
    g.mean = mean;
    g.cov = cov;
    memory.insert(std::move(g));

    memory.adapt_all(make_exact_affine_map(a, b), 10000, 2, SeededRng(1234 + trial));

    // Closed form: x ~ N(mu, S) implies Ax+b ~ N(A mu + b, A S A^T).
    Vector want_mean = b;
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) want_mean[i] += a(i, j) * mean[j];
    const Matrix want_cov = matmul_nt(matmul(a, cov), a);

    CHECK(norm(memory.entry(trial).mean - want_mean) < 0.1);
    CHECK(frobenius_norm(memory.entry(trial).cov - want_cov) < 0.1);
  }
}

TEST_CASE("adapt_all transport error shrinks as the sample count grows") {
  SeededRng rng(19);
  const int dim = 4;
  const Matrix a = random_matrix(dim, dim, rng, 0.4);
  const Vector b = random_vector(dim, rng);
  const Matrix cov = 0.4 * random_spd(dim, rng);
  const Vector mean = random_vector(dim, rng, 1.5);
  Vector want_mean = b;
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) want_mean[i] += a(i, j) * mean[j];
  const Matrix want_cov = matmul_nt(matmul(a, cov), a);

  auto error_at = [&](int n) {
    GaussianMemory memory(dim);
    ClassGaussian g;
    g.class_id = 0;
    g.task_id = 1;
    g.mean = mean;
    g.cov = cov;
    memory.insert(std::move(g));
    memory.adapt_all(make_exact_affine_map(a, b), n, 2, SeededRng(4321));
    return norm(memory.entry(0).mean - want_mean) +
           frobenius_norm(memory.entry(0).cov - want_cov);
  };
  CHECK(error_at(10000) < error_at(1000));
}

TEST_CASE("adapt_all leaves current-task entries bit-identical") {
  SeededRng rng(23);
  const int dim = 3;
  GaussianMemory memory(dim);
  for (int c = 0; c < 3; ++c) {
    ClassGaussian g;
    g.class_id = c;
    g.task_id = c < 2 ? 1 : 2;  // class 2 belongs to the current task
    g.mean = random_vector(dim, rng);
    g.cov = random_spd(dim, rng);
    memory.insert(std::move(g));
  }
  const Vector current_mean = memory.entry(2).mean;
  const Matrix current_cov = memory.entry(2).cov;
  SeededRng map_rng(4);
  memory.adapt_all(make_adapter(NetworkConfig{3, {4}, 3, 2}, map_rng), 100, 2, SeededRng(8));
  CHECK(norm(memory.entry(2).mean - current_mean) == 0.0);
  CHECK(frobenius_norm(memory.entry(2).cov - current_cov) == 0.0);
  // Old entries did move.
  CHECK(norm(memory.entry(0).mean - current_mean) != 0.0);
}

TEST_CASE("adapt_all rejects sample counts at or below the latent dimension") {
  const int dim = 16;
  GaussianMemory memory(dim);
  ClassGaussian g;
  g.class_id = 0;
  g.task_id = 1;
  g.mean = Vector(dim);
  g.cov = Matrix::identity(dim);
  memory.insert(std::move(g));
  try {
    memory.adapt_all(make_exact_affine_map(Matrix::identity(dim), Vector(dim)), 10, 2,
                     SeededRng(1));
    FAIL("expected TooFewSamples");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kTooFewSamples);
  }
}

TEST_CASE("mean-only adaptation maps the mean directly and keeps the covariance") {
  SeededRng rng(29);
  const int dim = 3;
  const Vector mean{1.0, 2.0, 3.0};
  GaussianMemory memory(dim);
  ClassGaussian g;
  g.class_id = 0;
  g.task_id = 1;
  g.mean = mean;
  g.cov = random_spd(dim, rng);
  const Matrix original_cov = g.cov;
  memory.insert(std::move(g));

  const Matrix a = random_matrix(dim, dim, rng);
  const Vector b = random_vector(dim, rng);
  memory.adapt_all(make_exact_affine_map(a, b), 1000, 2, SeededRng(3), AdaptMode::kMeanOnly);

  Vector want = b;
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) want[i] += a(i, j) * mean[j];
  CHECK(norm(memory.entry(0).mean - want) < 1e-12);  // exact map, no sampling
  CHECK(frobenius_norm(memory.entry(0).cov - original_cov) == 0.0);
}

TEST_CASE("cov-only adaptation keeps the stored mean but replaces the covariance") {
  SeededRng rng(43);
  const int dim = 3;
  const Vector mean{-1.0, 0.5, 2.0};
  GaussianMemory memory(dim);
  ClassGaussian g;
  g.class_id = 0;
  g.task_id = 1;
  g.mean = mean;
  g.cov = 0.5 * random_spd(dim, rng);
  const Matrix original_cov = g.cov;
  memory.insert(std::move(g));

  const Matrix a = 2.0 * Matrix::identity(dim);
  memory.adapt_all(make_exact_affine_map(a, Vector(dim)), 5000, 2, SeededRng(5),
                   AdaptMode::kCovOnly);
  CHECK(norm(memory.entry(0).mean - mean) == 0.0);
  CHECK(frobenius_norm(memory.entry(0).cov - 4.0 * original_cov) < 0.2);
}

TEST_CASE("shrink_cov adds gamma to the diagonal and shifts eigenvalues") {
  SeededRng rng(31);
  const Matrix cov = random_spd(4, rng);
  CHECK(frobenius_norm(shrink_cov(cov, 0.0) - cov) == 0.0);

  const Matrix forced = shrink_cov(Matrix(3, 3), 0.5);
  CHECK(frobenius_norm(forced - 0.5 * Matrix::identity(3)) == 0.0);
  CHECK_NOTHROW(cholesky(forced));

  const Vector before = eig_sym(cov);
  const Vector after = eig_sym(shrink_cov(cov, 0.7));
  for (int i = 0; i < 4; ++i) CHECK(after[i] == doctest::Approx(before[i] + 0.7));
}

TEST_CASE("memory stores latent_dim + latent_dim(latent_dim+1)/2 reals per class") {
  GaussianMemory memory(8);
  CHECK(memory.stored_reals_per_class() == 8 + 8 * 9 / 2);
}

TEST_CASE("memory snapshots roundtrip bit-exactly") {
  SeededRng rng(37);
  const int dim = 5;
  GaussianMemory memory(dim);
  for (int c = 0; c < 4; ++c) {
    ClassGaussian g;
    g.class_id = c * 3;
    g.task_id = 1 + c / 2;
    g.mean = random_vector(dim, rng);
    g.cov = random_spd(dim, rng);
    memory.insert(std::move(g));
  }
  const std::string path = "test_memory.agmem";
  memory.save(path);
  const GaussianMemory loaded = GaussianMemory::load(path);
  CHECK(loaded.size() == memory.size());
  CHECK(loaded.latent_dim() == dim);
  for (int c : memory.class_ids()) {
    CHECK(norm(loaded.entry(c).mean - memory.entry(c).mean) == 0.0);
    CHECK(frobenius_norm(loaded.entry(c).cov - memory.entry(c).cov) == 0.0);
    CHECK(loaded.entry(c).task_id == memory.entry(c).task_id);
  }
  std::remove(path.c_str());
}
