#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "rrrann/matrix.hpp"

namespace rrrann::linalg {

/// Thin SVD m = u * diag(singular_values) * v^T, singular values nonincreasing.
struct SvdFactors {
  DenseMatrix u;  // rows x rank
  std::vector<float> singular_values;
  DenseMatrix v;  // cols x rank
};

inline constexpr std::size_t kDefaultOversample = 10;
inline constexpr std::size_t kDefaultPowerIters = 2;
inline constexpr float kDefaultRcond = 1e-5f;

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
/// a * b^T without materializing the transpose.
DenseMatrix matmul_transposed(const DenseMatrix& a, const DenseMatrix& b);
/// x^T * m.
std::vector<float> vecmat(std::span<const float> x, const DenseMatrix& m);

double frobenius_norm(const DenseMatrix& m);

/// Matrix of i.i.d. standard normal entries drawn from a seeded generator.
DenseMatrix gaussian_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed);

/// Randomized range finder followed by an exact SVD of the projected block.
/// The sketch width is rank + oversample, capped at min(rows, cols).
SvdFactors randomized_svd(const DenseMatrix& m, std::size_t rank,
                          std::size_t oversample = kDefaultOversample,
                          std::size_t power_iters = kDefaultPowerIters, std::uint64_t seed = 0);

/// Exact thin SVD by one-sided Jacobi rotations (f64 internally). Intended for
/// matrices with at most a few hundred columns.
SvdFactors jacobi_svd(const DenseMatrix& m);

/// Moore-Penrose pseudoinverse; singular values below rcond * sigma_max are
/// treated as zero.
DenseMatrix pseudoinverse(const DenseMatrix& m, float rcond = kDefaultRcond);

/// Haar-distributed orthogonal matrix: QR of a seeded Gaussian matrix with the
/// signs fixed so that R has a positive diagonal.
DenseMatrix random_rotation(std::size_t dim, std::uint64_t seed);

/// Top-s right singular vectors of `gram_source` (eigenvectors of its Gram
/// matrix) as the columns of a cols x s matrix.
DenseMatrix top_eigenvectors(const DenseMatrix& gram_source, std::size_t s, std::uint64_t seed);

}  // namespace rrrann::linalg
