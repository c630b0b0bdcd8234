#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rrrann/matrix.hpp"

namespace rrrann::quant {

/// Largest row count a single int8_gemv call accepts; 127 * 127 * 2^15 < 2^31
/// so the i32 accumulators cannot overflow.
inline constexpr std::size_t kMaxGemvRows = std::size_t{1} << 15;

/// Absmax-quantized vector. With mixed precision the first component is kept
/// in f32 as `head` and `values` holds the remaining components.
struct QuantizedVector {
  std::vector<std::int8_t> values;
  float scale = 1.0f;
  std::optional<float> head;

  bool mixed_precision() const noexcept { return head.has_value(); }
};

/// Column-wise absmax-quantized matrix. With mixed precision the first source
/// row is kept in f32 (`head_row`) and `values` stores rows 1..rows-1.
/// `values` is row-major over the stored rows.
struct QuantizedMatrix {
  std::size_t rows = 0;  // logical rows, head row included
  std::size_t cols = 0;
  bool mixed_precision = false;
  std::vector<std::int8_t> values;
  std::vector<float> col_scales;
  std::vector<float> head_row;  // empty unless mixed_precision

  std::size_t stored_rows() const noexcept { return mixed_precision && rows > 0 ? rows - 1 : rows; }
  std::int8_t value(std::size_t stored_row, std::size_t col) const {
    return values[stored_row * cols + col];
  }
  /// f32 reconstruction, head row included.
  DenseMatrix dequantize() const;

  friend bool operator==(const QuantizedMatrix&, const QuantizedMatrix&) = default;
};

/// Round half away from zero, clamped to [-127, 127].
std::int8_t quantize_scalar(float x, float scale);

QuantizedVector quantize_vector(std::span<const float> x, bool mixed_precision);
QuantizedMatrix quantize_matrix_columns(const DenseMatrix& m, bool mixed_precision);

/// Exact i32 products x_i8^T m_i8 over the quantized tails.
std::vector<std::int32_t> int8_gemv(const QuantizedVector& x, const QuantizedMatrix& m);

/// Same products through the unsigned-offset identity used by u8 x s8
/// dot-product instructions: x^T (m + 128) - 128 * sum(x). Bit-exact with
/// int8_gemv.
std::vector<std::int32_t> int8_gemv_unsigned_offset(const QuantizedVector& x,
                                                     const QuantizedMatrix& m);

/// out_j = raw_j / (x_scale * col_scales_j) + head_contrib_j. An empty
/// head_contrib means no head term.
std::vector<float> dequantize_product(std::span<const std::int32_t> raw, float x_scale,
                                      std::span<const float> col_scales,
                                      std::span<const float> head_contrib);

/// Full quantized x^T m: quantize x, integer product, head term in f32,
/// dequantize.
std::vector<float> quantized_vecmat(std::span<const float> x, const QuantizedMatrix& m);

}  // namespace rrrann::quant
