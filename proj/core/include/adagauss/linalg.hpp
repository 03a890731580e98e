#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "adagauss/error.hpp"

namespace adagauss {

// Dense row-major double-precision kernels. Everything here is sized for
// latent spaces up to a few hundred dimensions; no attempt is made to be
// competitive with a tuned BLAS.

class Vector {
 public:
  Vector() = default;
  explicit Vector(int dim, double fill = 0.0) : data_(static_cast<size_t>(dim), fill) {}
  Vector(std::initializer_list<double> values) : data_(values) {}

  int dim() const { return static_cast<int>(data_.size()); }
  double& operator[](int i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int i) const { return data_[static_cast<size_t>(i)]; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  const std::vector<double>& values() const { return data_; }

  Vector& operator+=(const Vector& o);
  Vector& operator-=(const Vector& o);
  Vector& operator*=(double s);

 private:
  std::vector<double> data_;
};

Vector operator+(Vector a, const Vector& b);
Vector operator-(Vector a, const Vector& b);
Vector operator*(double s, Vector v);
double dot(const Vector& a, const Vector& b);
double norm(const Vector& v);

class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, fill) {}

  static Matrix identity(int n);
  static Matrix diag(const Vector& d);
  // Row-major construction from nested lists, for tests and fixtures.
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }
  double* row(int r) { return data_.data() + static_cast<size_t>(r) * cols_; }
  const double* row(int r) const { return data_.data() + static_cast<size_t>(r) * cols_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  size_t size() const { return data_.size(); }

  Vector row_vector(int r) const;
  void set_row(int r, const Vector& v);
  Vector diagonal() const;

  Matrix& operator+=(const Matrix& o);
  Matrix& operator-=(const Matrix& o);
  Matrix& operator*=(double s);

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix m);
Matrix operator*(const Matrix& a, const Matrix& b);  // plain GEMM

Matrix transpose(const Matrix& m);
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // aᵀ·b
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // a·bᵀ
Matrix symmetrize(const Matrix& m);                  // (m + mᵀ)/2
double frobenius_norm(const Matrix& m);
double trace(const Matrix& m);
bool all_finite(const Matrix& m);
bool all_finite(const Vector& v);
// Largest |a(i,j) - a(j,i)|; 0 for empty matrices.
double max_asymmetry(const Matrix& m);

// Lower-triangular factor L with L·Lᵀ equal to the factored matrix.
// Strictly-upper entries are zero and the diagonal is strictly positive.
struct CholeskyFactor {
  Matrix lower;
  int dim() const { return lower.rows(); }
  double log_det() const;  // log det of the factored matrix, 2·Σ log L_ii
};

// Deterministic stream of uniforms/normals. The generator is pinned to
// std::mt19937_64 with 53-bit uniform conversion and Marsaglia polar normals,
// so a seed reproduces the exact same stream on every platform.
class SeededRng {
 public:
  explicit SeededRng(uint64_t seed) : seed_(seed), engine_(seed) {}

  uint64_t seed() const { return seed_; }
  uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Standard normal via the polar method; pairs are cached.
  double normal();
  // Uniform integer in [0, n).
  int uniform_int(int n);
  // Independent stream keyed by (seed, salt); used for per-class streams.
  SeededRng derive(uint64_t salt) const { return SeededRng(seed_ ^ salt); }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (int i = static_cast<int>(items.size()) - 1; i > 0; --i) {
      std::swap(items[static_cast<size_t>(i)], items[static_cast<size_t>(uniform_int(i + 1))]);
    }
  }

 private:
  uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Factors a symmetric positive-definite matrix. Throws NotSymmetric if any
// |a_ij - a_ji| exceeds 1e-9 and NotPositiveDefinite if a pivot falls to
// 1e-12 or below. Never regularizes on its own: a failed factorization is the
// signal that a covariance collapsed.
CholeskyFactor cholesky(const Matrix& a);

// Reverse-mode gradient of the factorization: given dLoss/dL, returns the
// symmetric dLoss/dA for A = L·Lᵀ (unblocked back-substitution of
// Smith, 1995, followed by symmetrization).
Matrix cholesky_backward(const CholeskyFactor& factor, const Matrix& grad_wrt_factor);

// Sample mean and unbiased covariance (divisor n-1) of the rows of `samples`.
// The covariance is exactly symmetric by construction.
std::pair<Vector, Matrix> estimate_gaussian(const Matrix& samples);

// n draws from N(mean, cov) as rows, via mean + L·z with L = cholesky(cov).
Matrix sample_gaussian(const Vector& mean, const Matrix& cov, int n, SeededRng& rng);

// (x-μ)ᵀ Σ⁻¹ (x-μ) through one triangular solve; never materializes Σ⁻¹.
double mahalanobis_sq(const Vector& x, const Vector& mean, const CholeskyFactor& cov_factor);

// Log density of N(mean, Σ) at x with Σ given by its Cholesky factor.
double log_gaussian_pdf(const Vector& x, const Vector& mean, const CholeskyFactor& cov_factor);

// KL(g1‖g2) + KL(g2‖g1) for two Gaussians, closed form.
double sym_kl(const Vector& mean1, const Matrix& cov1, const Vector& mean2, const Matrix& cov2);

// Eigenvalues of a symmetric matrix in descending order, by cyclic Jacobi
// rotations. Converges when the off-diagonal Frobenius norm drops below
// 1e-10 (absolute); throws NoConvergence after 100 sweeps.
Vector eig_sym(const Matrix& a);

// Smallest k such that the top-k eigenvalues reach `fraction` of the total.
int effective_dim(const Vector& eigenvalues_desc, double fraction);

// Count of eigenvalues above rel_tol times the largest one.
int numeric_rank(const Matrix& a, double rel_tol = 1e-6);

// Solve L·y = b (forward) and Lᵀ·x = y (backward); together they apply Σ⁻¹.
Vector solve_lower(const Matrix& lower, const Vector& b);
Vector solve_lower_transposed(const Matrix& lower, const Vector& b);
Vector chol_solve(const CholeskyFactor& factor, const Vector& b);
// Materialized Σ⁻¹ from its factor; used only by diagnostics that report
// inverse norms.
Matrix chol_inverse(const CholeskyFactor& factor);

// Random orthogonal matrix (modified Gram-Schmidt on a Gaussian matrix).
Matrix random_orthogonal(int n, SeededRng& rng);

}  // namespace adagauss
