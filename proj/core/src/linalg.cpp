#include "adagauss/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <string>

namespace adagauss {

namespace {

constexpr double kSymmetryTol = 1e-9;
constexpr double kPivotFloor = 1e-12;
constexpr double kJacobiOffTol = 1e-10;
constexpr int kJacobiMaxSweeps = 100;

void require(bool ok, ErrorCode code, const std::string& message) {
  if (!ok) fail(code, message);
}

}  // namespace

Vector& Vector::operator+=(const Vector& o) {
  require(dim() == o.dim(), ErrorCode::kShapeMismatch, "vector add dims differ");
  for (int i = 0; i < dim(); ++i) data_[i] += o[i];
  return *this;
}

Vector& Vector::operator-=(const Vector& o) {
  require(dim() == o.dim(), ErrorCode::kShapeMismatch, "vector sub dims differ");
  for (int i = 0; i < dim(); ++i) data_[i] -= o[i];
  return *this;
}

Vector& Vector::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

Vector operator+(Vector a, const Vector& b) { return a += b; }
Vector operator-(Vector a, const Vector& b) { return a -= b; }
Vector operator*(double s, Vector v) { return v *= s; }

double dot(const Vector& a, const Vector& b) {
  require(a.dim() == b.dim(), ErrorCode::kShapeMismatch, "dot dims differ");
  double s = 0.0;
  for (int i = 0; i < a.dim(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const Vector& v) { return std::sqrt(dot(v, v)); }

Matrix Matrix::identity(int n) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diag(const Vector& d) {
  Matrix m(d.dim(), d.dim());
  for (int i = 0; i < d.dim(); ++i) m(i, i) = d[i];
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const int r = static_cast<int>(rows.size());
  const int c = r > 0 ? static_cast<int>(rows.begin()->size()) : 0;
  Matrix m(r, c);
  int i = 0;
  for (const auto& row : rows) {
    require(static_cast<int>(row.size()) == c, ErrorCode::kShapeMismatch, "ragged row list");
    int j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

Vector Matrix::row_vector(int r) const {
  Vector v(cols_);
  std::memcpy(v.data(), row(r), sizeof(double) * static_cast<size_t>(cols_));
  return v;
}

void Matrix::set_row(int r, const Vector& v) {
  require(v.dim() == cols_, ErrorCode::kShapeMismatch, "set_row dim mismatch");
  std::memcpy(row(r), v.data(), sizeof(double) * static_cast<size_t>(cols_));
}

Vector Matrix::diagonal() const {
  const int n = std::min(rows_, cols_);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = (*this)(i, i);
  return v;
}

Matrix& Matrix::operator+=(const Matrix& o) {
  require(rows_ == o.rows_ && cols_ == o.cols_, ErrorCode::kShapeMismatch, "matrix add shape");
  for (size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& o) {
  require(rows_ == o.rows_ && cols_ == o.cols_, ErrorCode::kShapeMismatch, "matrix sub shape");
  for (size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix m) { return m *= s; }
Matrix operator*(const Matrix& a, const Matrix& b) { return matmul(a, b); }

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), ErrorCode::kShapeMismatch, "matmul inner dims differ");
  Matrix c(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i) {
    double* ci = c.row(i);
    const double* ai = a.row(i);
    for (int k = 0; k < a.cols(); ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      const double* bk = b.row(k);
      for (int j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), ErrorCode::kShapeMismatch, "matmul_tn outer dims differ");
  Matrix c(a.cols(), b.cols());
  for (int k = 0; k < a.rows(); ++k) {
    const double* ak = a.row(k);
    const double* bk = b.row(k);
    for (int i = 0; i < a.cols(); ++i) {
      const double aki = ak[i];
      if (aki == 0.0) continue;
      double* ci = c.row(i);
      for (int j = 0; j < b.cols(); ++j) ci[j] += aki * bk[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), ErrorCode::kShapeMismatch, "matmul_nt inner dims differ");
  Matrix c(a.rows(), b.rows());
  for (int i = 0; i < a.rows(); ++i) {
    const double* ai = a.row(i);
    double* ci = c.row(i);
    for (int j = 0; j < b.rows(); ++j) {
      const double* bj = b.row(j);
      double s = 0.0;
      for (int k = 0; k < a.cols(); ++k) s += ai[k] * bj[k];
      ci[j] = s;
    }
  }
  return c;
}

Matrix symmetrize(const Matrix& m) {
  require(m.rows() == m.cols(), ErrorCode::kShapeMismatch, "symmetrize needs square input");
  Matrix s(m.rows(), m.cols());
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) s(i, j) = 0.5 * (m(i, j) + m(j, i));
  return s;
}

double frobenius_norm(const Matrix& m) {
  double s = 0.0;
  for (size_t i = 0; i < m.size(); ++i) s += m.data()[i] * m.data()[i];
  return std::sqrt(s);
}

double trace(const Matrix& m) {
  double s = 0.0;
  for (int i = 0; i < std::min(m.rows(), m.cols()); ++i) s += m(i, i);
  return s;
}

bool all_finite(const Matrix& m) {
  for (size_t i = 0; i < m.size(); ++i)
    if (!std::isfinite(m.data()[i])) return false;
  return true;
}

bool all_finite(const Vector& v) {
  for (int i = 0; i < v.dim(); ++i)
    if (!std::isfinite(v[i])) return false;
  return true;
}

double max_asymmetry(const Matrix& m) {
  double worst = 0.0;
  for (int i = 0; i < m.rows(); ++i)
    for (int j = i + 1; j < m.cols(); ++j) worst = std::max(worst, std::fabs(m(i, j) - m(j, i)));
  return worst;
}

double CholeskyFactor::log_det() const {
  double s = 0.0;
  for (int i = 0; i < dim(); ++i) s += std::log(lower(i, i));
  return 2.0 * s;
}

double SeededRng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double SeededRng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double SeededRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

int SeededRng::uniform_int(int n) {
  // Rejection keeps the distribution exact for any n.
  const uint64_t span = static_cast<uint64_t>(n);
  const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<int>(x % span);
}

CholeskyFactor cholesky(const Matrix& a) {
  require(a.rows() == a.cols(), ErrorCode::kShapeMismatch, "cholesky needs a square matrix");
  const int n = a.rows();
  require(n > 0, ErrorCode::kEmptyInput, "cholesky of empty matrix");
  const double asym = max_asymmetry(a);
  require(asym <= kSymmetryTol, ErrorCode::kNotSymmetric,
          "cholesky input asymmetric by " + std::to_string(asym));

  Matrix l(n, n);
  for (int j = 0; j < n; ++j) {
    double d = a(j, j);
    for (int k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > kPivotFloor)) {
      fail(ErrorCode::kNotPositiveDefinite,
           "pivot " + std::to_string(d) + " at column " + std::to_string(j));
    }
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (int i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return CholeskyFactor{std::move(l)};
}

Matrix cholesky_backward(const CholeskyFactor& factor, const Matrix& grad_wrt_factor) {
  const Matrix& l = factor.lower;
  const int n = l.rows();
  require(grad_wrt_factor.rows() == n && grad_wrt_factor.cols() == n,
          ErrorCode::kShapeMismatch, "gradient shape differs from factor shape");

  // Unblocked chol_rev: propagate dLoss/dL back to tril(dLoss/dA).
  Matrix g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) g(i, j) = grad_wrt_factor(i, j);

  for (int k = n - 1; k >= 0; --k) {
    double acc = 0.0;
    for (int i = k + 1; i < n; ++i) acc += l(i, k) * g(i, k);
    g(k, k) -= acc / l(k, k);
    for (int i = k; i < n; ++i) g(i, k) /= l(k, k);
    for (int j = 0; j < k; ++j) {
      double s = 0.0;
      for (int i = k; i < n; ++i) s += g(i, k) * l(i, j);
      g(k, j) -= s;
    }
    for (int j = 0; j < k; ++j) {
      for (int i = k + 1; i < n; ++i) g(i, j) -= g(i, k) * l(k, j);
    }
    g(k, k) *= 0.5;
  }

  // tril → symmetric: off-diagonal mass split evenly between (i,j) and (j,i).
  Matrix out(n, n);
  for (int i = 0; i < n; ++i) {
    out(i, i) = g(i, i);
    for (int j = 0; j < i; ++j) {
      const double half = 0.5 * g(i, j);
      out(i, j) = half;
      out(j, i) = half;
    }
  }
  return out;
}

std::pair<Vector, Matrix> estimate_gaussian(const Matrix& samples) {
  const int n = samples.rows();
  const int d = samples.cols();
  require(n >= 2, ErrorCode::kTooFewSamples,
          "need at least 2 samples, got " + std::to_string(n));

  Vector mean(d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) mean[j] += samples(i, j);
  for (int j = 0; j < d; ++j) mean[j] /= n;

  Matrix cov(d, d);
  std::vector<double> centered(static_cast<size_t>(d));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) centered[j] = samples(i, j) - mean[j];
    for (int j = 0; j < d; ++j) {
      const double cj = centered[j];
      for (int k = j; k < d; ++k) cov(j, k) += cj * centered[k];
    }
  }
  const double inv = 1.0 / (n - 1);
  for (int j = 0; j < d; ++j)
    for (int k = j; k < d; ++k) {
      const double v = cov(j, k) * inv;
      cov(j, k) = v;
      cov(k, j) = v;
    }
  return {std::move(mean), std::move(cov)};
}

Matrix sample_gaussian(const Vector& mean, const Matrix& cov, int n, SeededRng& rng) {
  require(mean.dim() == cov.rows(), ErrorCode::kShapeMismatch, "mean/cov dims differ");
  const CholeskyFactor f = cholesky(cov);
  const int d = mean.dim();
  Matrix out(n, d);
  std::vector<double> z(static_cast<size_t>(d));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) z[j] = rng.normal();
    double* row = out.row(i);
    for (int j = 0; j < d; ++j) {
      double s = mean[j];
      const double* lj = f.lower.row(j);
      for (int k = 0; k <= j; ++k) s += lj[k] * z[k];
      row[j] = s;
    }
  }
  return out;
}

Vector solve_lower(const Matrix& lower, const Vector& b) {
  const int n = lower.rows();
  require(b.dim() == n, ErrorCode::kShapeMismatch, "solve_lower dim mismatch");
  Vector x(n);
  for (int i = 0; i < n; ++i) {
    double s = b[i];
    const double* li = lower.row(i);
    for (int k = 0; k < i; ++k) s -= li[k] * x[k];
    x[i] = s / li[i];
  }
  return x;
}

Vector solve_lower_transposed(const Matrix& lower, const Vector& b) {
  const int n = lower.rows();
  require(b.dim() == n, ErrorCode::kShapeMismatch, "solve_lower_transposed dim mismatch");
  Vector x(n);
  for (int i = n - 1; i >= 0; --i) {
    double s = b[i];
    for (int k = i + 1; k < n; ++k) s -= lower(k, i) * x[k];
    x[i] = s / lower(i, i);
  }
  return x;
}

Vector chol_solve(const CholeskyFactor& factor, const Vector& b) {
  return solve_lower_transposed(factor.lower, solve_lower(factor.lower, b));
}

Matrix chol_inverse(const CholeskyFactor& factor) {
  const int n = factor.dim();
  Matrix inv(n, n);
  Vector e(n);
  for (int j = 0; j < n; ++j) {
    e[j] = 1.0;
    const Vector col = chol_solve(factor, e);
    for (int i = 0; i < n; ++i) inv(i, j) = col[i];
    e[j] = 0.0;
  }
  return symmetrize(inv);
}

double mahalanobis_sq(const Vector& x, const Vector& mean, const CholeskyFactor& cov_factor) {
  require(x.dim() == mean.dim() && x.dim() == cov_factor.dim(), ErrorCode::kShapeMismatch,
          "mahalanobis dims differ");
  const Vector y = solve_lower(cov_factor.lower, x - mean);
  return dot(y, y);
}

double log_gaussian_pdf(const Vector& x, const Vector& mean, const CholeskyFactor& cov_factor) {
  constexpr double kLogTwoPi = 1.8378770664093454836;
  const double m = mahalanobis_sq(x, mean, cov_factor);
  return -0.5 * m - 0.5 * cov_factor.log_det() - 0.5 * cov_factor.dim() * kLogTwoPi;
}

double sym_kl(const Vector& mean1, const Matrix& cov1, const Vector& mean2, const Matrix& cov2) {
  require(mean1.dim() == mean2.dim() && cov1.rows() == cov2.rows(), ErrorCode::kShapeMismatch,
          "sym_kl dims differ");
  const int d = mean1.dim();
  const CholeskyFactor f1 = cholesky(cov1);
  const CholeskyFactor f2 = cholesky(cov2);

  // KL(a‖b) = ½(tr(Σb⁻¹Σa) + Δᵀ Σb⁻¹ Δ − d + logdet Σb − logdet Σa)
  auto directed = [d](const Vector& ma, const Matrix& ca, const CholeskyFactor& fa,
                      const Vector& mb, const CholeskyFactor& fb) {
    double tr = 0.0;
    Vector col(d);
    for (int j = 0; j < d; ++j) {
      for (int i = 0; i < d; ++i) col[i] = ca(i, j);
      tr += chol_solve(fb, col)[j];
    }
    const double quad = mahalanobis_sq(ma, mb, fb);
    return 0.5 * (tr + quad - d + fb.log_det() - fa.log_det());
  };

  return directed(mean1, cov1, f1, mean2, f2) + directed(mean2, cov2, f2, mean1, f1);
}

Vector eig_sym(const Matrix& a) {
  require(a.rows() == a.cols(), ErrorCode::kShapeMismatch, "eig_sym needs a square matrix");
  require(max_asymmetry(a) <= kSymmetryTol, ErrorCode::kNotSymmetric, "eig_sym input asymmetric");
  const int n = a.rows();
  Matrix m = symmetrize(a);

  auto off_norm = [&]() {
    double s = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) s += 2.0 * m(i, j) * m(i, j);
    return std::sqrt(s);
  };

  int sweeps = 0;
  while (off_norm() >= kJacobiOffTol) {
    if (++sweeps > kJacobiMaxSweeps) {
      fail(ErrorCode::kNoConvergence, "Jacobi did not converge in 100 sweeps");
    }
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = m(p, q);
        if (apq == 0.0) continue;
        const double app = m(p, p);
        const double aqq = m(q, q);
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double mkp = m(k, p);
          const double mkq = m(k, q);
          m(k, p) = c * mkp - s * mkq;
          m(k, q) = s * mkp + c * mkq;
        }
        for (int k = 0; k < n; ++k) {
          const double mpk = m(p, k);
          const double mqk = m(q, k);
          m(p, k) = c * mpk - s * mqk;
          m(q, k) = s * mpk + c * mqk;
        }
      }
    }
  }

  Vector eig = m.diagonal();
  std::sort(eig.data(), eig.data() + n, std::greater<double>());
  return eig;
}

int effective_dim(const Vector& eigenvalues_desc, double fraction) {
  require(eigenvalues_desc.dim() > 0, ErrorCode::kEmptyInput, "empty spectrum");
  require(fraction > 0.0 && fraction <= 1.0, ErrorCode::kInvalidConfig,
          "fraction must be in (0, 1]");
  double total = 0.0;
  for (int i = 0; i < eigenvalues_desc.dim(); ++i) total += eigenvalues_desc[i];
  require(total > 0.0, ErrorCode::kAllZero, "all eigenvalues are zero");
  const double target = fraction * total;
  double acc = 0.0;
  for (int k = 0; k < eigenvalues_desc.dim(); ++k) {
    acc += eigenvalues_desc[k];
    if (acc >= target) return k + 1;
  }
  return eigenvalues_desc.dim();
}

int numeric_rank(const Matrix& a, double rel_tol) {
  const Vector eig = eig_sym(a);
  const double largest = eig[0];
  int count = 0;
  for (int i = 0; i < eig.dim(); ++i)
    if (eig[i] > rel_tol * largest) ++count;
  return count;
}

Matrix random_orthogonal(int n, SeededRng& rng) {
  Matrix q(n, n);
  for (int col = 0; col < n; ++col) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = rng.normal();
    for (int prev = 0; prev < col; ++prev) {
      double proj = 0.0;
      for (int i = 0; i < n; ++i) proj += q(i, prev) * v[i];
      for (int i = 0; i < n; ++i) v[i] -= proj * q(i, prev);
    }
    const double len = norm(v);
    for (int i = 0; i < n; ++i) q(i, col) = v[i] / len;
  }
  return q;
}

}  // namespace adagauss
