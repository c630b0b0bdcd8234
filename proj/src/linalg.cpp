#include "rrrann/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "rrrann/error.hpp"

namespace rrrann::linalg {
namespace {

// Row-major f64 work matrix; every factorization runs in double and rounds to
// f32 only at the public boundary.
struct MatD {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  MatD() = default;
  MatD(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

MatD to_double(const DenseMatrix& m) {
  MatD out(m.rows(), m.cols());
  auto src = m.values();
  std::copy(src.begin(), src.end(), out.data.begin());
  return out;
}

DenseMatrix to_float(const MatD& m) {
  std::vector<float> data(m.data.size());
  std::transform(m.data.begin(), m.data.end(), data.begin(),
                 [](double v) { return static_cast<float>(v); });
  return DenseMatrix(m.rows, m.cols, std::move(data));
}

MatD multiply(const MatD& a, const MatD& b) {
  MatD out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    double* dst = &out.data[i * out.cols];
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* src = &b.data[k * b.cols];
      for (std::size_t j = 0; j < b.cols; ++j) dst[j] += aik * src[j];
    }
  }
  return out;
}

// a^T * b
MatD multiply_tn(const MatD& a, const MatD& b) {
  MatD out(a.cols, b.cols);
  for (std::size_t k = 0; k < a.rows; ++k) {
    const double* brow = &b.data[k * b.cols];
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      double* dst = &out.data[i * out.cols];
      for (std::size_t j = 0; j < b.cols; ++j) dst[j] += aki * brow[j];
    }
  }
  return out;
}

MatD transpose(const MatD& m) {
  MatD out(m.cols, m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.cols; ++j) out(j, i) = m(i, j);
  }
  return out;
}

MatD gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  MatD out(rows, cols);
  for (double& v : out.data) v = normal(rng);
  return out;
}

struct QrResult {
  MatD q;                      // rows x cols, orthonormal columns
  std::vector<double> r_diag;  // diagonal of R
};

// Householder QR of a tall matrix (rows >= cols). Columns that are already
// zero below the diagonal get an identity reflector, so Q stays orthonormal
// even for rank-deficient input.
QrResult householder_qr(MatD a) {
  const std::size_t n = a.rows;
  const std::size_t k = a.cols;
  std::vector<std::vector<double>> reflectors(k);
  std::vector<double> r_diag(k, 0.0);

  for (std::size_t j = 0; j < k; ++j) {
    double norm_sq = 0.0;
    for (std::size_t i = j; i < n; ++i) norm_sq += a(i, j) * a(i, j);
    const double norm = std::sqrt(norm_sq);
    if (norm == 0.0) continue;

    const double alpha = a(j, j) > 0.0 ? -norm : norm;
    std::vector<double> v(n - j);
    for (std::size_t i = j; i < n; ++i) v[i - j] = a(i, j);
    v[0] -= alpha;
    double v_norm_sq = 0.0;
    for (double x : v) v_norm_sq += x * x;
    if (v_norm_sq == 0.0) {
      r_diag[j] = a(j, j);
      continue;
    }
    const double inv = 1.0 / std::sqrt(v_norm_sq);
    for (double& x : v) x *= inv;

    for (std::size_t c = j; c < k; ++c) {
      double proj = 0.0;
      for (std::size_t i = j; i < n; ++i) proj += v[i - j] * a(i, c);
      proj *= 2.0;
      for (std::size_t i = j; i < n; ++i) a(i, c) -= proj * v[i - j];
    }
    r_diag[j] = a(j, j);
    reflectors[j] = std::move(v);
  }

  MatD q(n, k);
  for (std::size_t j = 0; j < k; ++j) q(j, j) = 1.0;
  for (std::size_t jj = k; jj-- > 0;) {
    const auto& v = reflectors[jj];
    if (v.empty()) continue;
    for (std::size_t c = 0; c < k; ++c) {
      double proj = 0.0;
      for (std::size_t i = jj; i < n; ++i) proj += v[i - jj] * q(i, c);
      proj *= 2.0;
      for (std::size_t i = jj; i < n; ++i) q(i, c) -= proj * v[i - jj];
    }
  }
  return {std::move(q), std::move(r_diag)};
}

struct SvdD {
  MatD u;  // rows x p
  std::vector<double> s;
  MatD v;  // cols x p
};

// Replaces columns of `u` flagged in `deficient` with unit vectors orthogonal
// to every other column.
void complete_basis(MatD& u, const std::vector<bool>& deficient) {
  const std::size_t n = u.rows;
  std::vector<std::size_t> good;
  for (std::size_t j = 0; j < u.cols; ++j) {
    if (!deficient[j]) good.push_back(j);
  }
  std::size_t candidate = 0;
  for (std::size_t j = 0; j < u.cols; ++j) {
    if (!deficient[j]) continue;
    while (candidate < n) {
      std::vector<double> e(n, 0.0);
      e[candidate++] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t g : good) {
          double proj = 0.0;
          for (std::size_t i = 0; i < n; ++i) proj += u(i, g) * e[i];
          for (std::size_t i = 0; i < n; ++i) e[i] -= proj * u(i, g);
        }
      }
      double norm = 0.0;
      for (double x : e) norm += x * x;
      norm = std::sqrt(norm);
      if (norm > 0.5) {
        for (std::size_t i = 0; i < n; ++i) u(i, j) = e[i] / norm;
        good.push_back(j);
        break;
      }
    }
  }
}

// One-sided Jacobi on the columns of a tall matrix.
SvdD jacobi_tall(const MatD& a) {
  const std::size_t n = a.rows;
  const std::size_t p = a.cols;
  // Column-contiguous copies make the rotations cache friendly.
  std::vector<std::vector<double>> cols(p, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) cols[j][i] = a(i, j);
  }
  std::vector<std::vector<double>> vcols(p, std::vector<double>(p, 0.0));
  for (std::size_t j = 0; j < p; ++j) vcols[j][j] = 1.0;

  constexpr int kMaxSweeps = 80;
  constexpr double kTol = 1e-15;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t pi = 0; pi + 1 < p; ++pi) {
      for (std::size_t qi = pi + 1; qi < p; ++qi) {
        auto& cp = cols[pi];
        auto& cq = cols[qi];
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          alpha += cp[i] * cp[i];
          beta += cq[i] * cq[i];
          gamma += cp[i] * cq[i];
        }
        if (gamma == 0.0 || std::abs(gamma) <= kTol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < n; ++i) {
          const double x = cp[i];
          const double y = cq[i];
          cp[i] = c * x - s * y;
          cq[i] = s * x + c * y;
        }
        auto& vp = vcols[pi];
        auto& vq = vcols[qi];
        for (std::size_t i = 0; i < p; ++i) {
          const double x = vp[i];
          const double y = vq[i];
          vp[i] = c * x - s * y;
          vq[i] = s * x + c * y;
        }
      }
    }
    if (!rotated) break;
  }

  std::vector<double> norms(p);
  for (std::size_t j = 0; j < p; ++j) {
    double sq = 0.0;
    for (double x : cols[j]) sq += x * x;
    norms[j] = std::sqrt(sq);
  }
  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

  SvdD out{MatD(n, p), std::vector<double>(p), MatD(p, p)};
  const double sigma_max = p == 0 ? 0.0 : norms[order[0]];
  std::vector<bool> deficient(p, false);
  for (std::size_t k = 0; k < p; ++k) {
    const std::size_t j = order[k];
    out.s[k] = norms[j];
    for (std::size_t i = 0; i < p; ++i) out.v(i, k) = vcols[j][i];
    if (norms[j] == 0.0 || norms[j] <= 1e-12 * sigma_max) {
      deficient[k] = true;
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) out.u(i, k) = cols[j][i] / norms[j];
  }
  if (std::find(deficient.begin(), deficient.end(), true) != deficient.end()) {
    complete_basis(out.u, deficient);
  }
  return out;
}

SvdD jacobi(const MatD& a) {
  if (a.rows >= a.cols) return jacobi_tall(a);
  SvdD t = jacobi_tall(transpose(a));
  return {std::move(t.v), std::move(t.s), std::move(t.u)};
}

// Flips singular pairs so that the largest-magnitude entry of each right
// singular vector is positive.
void canonicalize_signs(SvdD& f) {
  for (std::size_t k = 0; k < f.s.size(); ++k) {
    std::size_t best = 0;
    double best_abs = -1.0;
    for (std::size_t i = 0; i < f.v.rows; ++i) {
      if (std::abs(f.v(i, k)) > best_abs) {
        best_abs = std::abs(f.v(i, k));
        best = i;
      }
    }
    if (f.v.rows == 0 || f.v(best, k) >= 0.0) continue;
    for (std::size_t i = 0; i < f.v.rows; ++i) f.v(i, k) = -f.v(i, k);
    for (std::size_t i = 0; i < f.u.rows; ++i) f.u(i, k) = -f.u(i, k);
  }
}

SvdD truncate(SvdD f, std::size_t rank) {
  auto keep = [rank](const MatD& m) {
    MatD out(m.rows, rank);
    for (std::size_t i = 0; i < m.rows; ++i) {
      for (std::size_t j = 0; j < rank; ++j) out(i, j) = m(i, j);
    }
    return out;
  };
  f.s.resize(rank);
  return {keep(f.u), std::move(f.s), keep(f.v)};
}

SvdD randomized(const MatD& m, std::size_t rank, std::size_t oversample, std::size_t power_iters,
                std::uint64_t seed) {
  const std::size_t min_dim = std::min(m.rows, m.cols);
  if (rank == 0 || rank > min_dim) {
    fail(ErrorKind::parameter, "svd rank " + std::to_string(rank) + " must be in [1, " +
                                   std::to_string(min_dim) + "]");
  }
  const std::size_t width = std::min(rank + oversample, min_dim);

  MatD omega = gaussian(m.cols, width, seed);
  MatD q = householder_qr(multiply(m, omega)).q;
  for (std::size_t it = 0; it < power_iters; ++it) {
    MatD z = householder_qr(multiply_tn(m, q)).q;
    q = householder_qr(multiply(m, z)).q;
  }
  // Small block b = q^T m (width x cols); its SVD lifts back through q.
  MatD b = multiply_tn(q, m);
  SvdD small = jacobi(b);
  SvdD out{multiply(q, small.u), std::move(small.s), std::move(small.v)};
  canonicalize_signs(out);
  return truncate(std::move(out), rank);
}

SvdFactors to_factors(const SvdD& f) {
  std::vector<float> s(f.s.size());
  std::transform(f.s.begin(), f.s.end(), s.begin(), [](double v) { return static_cast<float>(v); });
  return {to_float(f.u), std::move(s), to_float(f.v)};
}

}  // namespace

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    fail(ErrorKind::shape, "matmul " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                               " by " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  DenseMatrix out(a.rows(), b.cols());
  std::vector<double> acc(b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      auto brow = b.row(k);
      for (std::size_t j = 0; j < brow.size(); ++j) acc[j] += aik * brow[j];
    }
    auto dst = out.row(i);
    for (std::size_t j = 0; j < acc.size(); ++j) dst[j] = static_cast<float>(acc[j]);
  }
  return out;
}

DenseMatrix matmul_transposed(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.cols()) {
    fail(ErrorKind::shape, "matmul_transposed inner dimensions " + std::to_string(a.cols()) +
                               " and " + std::to_string(b.cols()));
  }
  DenseMatrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto arow = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto brow = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < arow.size(); ++k) acc += static_cast<double>(arow[k]) * brow[k];
      out(i, j) = static_cast<float>(acc);
    }
  }
  return out;
}

std::vector<float> vecmat(std::span<const float> x, const DenseMatrix& m) {
  if (x.size() != m.rows()) {
    fail(ErrorKind::shape, "vecmat vector length " + std::to_string(x.size()) + " vs " +
                               std::to_string(m.rows()) + " rows");
  }
  std::vector<float> out(m.cols(), 0.0f);
  for (std::size_t k = 0; k < x.size(); ++k) {
    const float xk = x[k];
    auto mrow = m.row(k);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += xk * mrow[j];
  }
  return out;
}

double frobenius_norm(const DenseMatrix& m) {
  double sq = 0.0;
  for (float v : m.values()) sq += static_cast<double>(v) * v;
  return std::sqrt(sq);
}

DenseMatrix gaussian_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  return to_float(gaussian(rows, cols, seed));
}

SvdFactors randomized_svd(const DenseMatrix& m, std::size_t rank, std::size_t oversample,
                          std::size_t power_iters, std::uint64_t seed) {
  return to_factors(randomized(to_double(m), rank, oversample, power_iters, seed));
}

SvdFactors jacobi_svd(const DenseMatrix& m) {
  SvdD f = jacobi(to_double(m));
  canonicalize_signs(f);
  return to_factors(f);
}

DenseMatrix pseudoinverse(const DenseMatrix& m, float rcond) {
  DenseMatrix out(m.cols(), m.rows());
  if (m.empty()) return out;
  const SvdD f = jacobi(to_double(m));
  const double cutoff = static_cast<double>(rcond) * (f.s.empty() ? 0.0 : f.s[0]);
  MatD acc(m.cols(), m.rows());
  for (std::size_t k = 0; k < f.s.size(); ++k) {
    if (f.s[k] <= cutoff || f.s[k] == 0.0) continue;
    const double inv = 1.0 / f.s[k];
    for (std::size_t i = 0; i < m.cols(); ++i) {
      const double vik = f.v(i, k) * inv;
      if (vik == 0.0) continue;
      for (std::size_t j = 0; j < m.rows(); ++j) acc(i, j) += vik * f.u(j, k);
    }
  }
  return to_float(acc);
}

DenseMatrix random_rotation(std::size_t dim, std::uint64_t seed) {
  if (dim == 0) fail(ErrorKind::parameter, "rotation dimension must be at least 1");
  QrResult qr = householder_qr(gaussian(dim, dim, seed));
  for (std::size_t j = 0; j < dim; ++j) {
    if (qr.r_diag[j] >= 0.0) continue;
    for (std::size_t i = 0; i < dim; ++i) qr.q(i, j) = -qr.q(i, j);
  }
  return to_float(qr.q);
}

DenseMatrix top_eigenvectors(const DenseMatrix& gram_source, std::size_t s, std::uint64_t seed) {
  if (s == 0 || s > gram_source.cols()) {
    fail(ErrorKind::parameter, "requested " + std::to_string(s) + " eigenvectors of a " +
                                   std::to_string(gram_source.cols()) + "-dimensional space");
  }
  const MatD x = to_double(gram_source);
  const MatD gram = multiply_tn(x, x);
  return to_float(randomized(gram, s, kDefaultOversample, kDefaultPowerIters, seed).v);
}

}  // namespace rrrann::linalg
