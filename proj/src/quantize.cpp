#include "rrrann/quantize.hpp"

#include <algorithm>
#include <cmath>

#include "rrrann/error.hpp"

namespace rrrann::quant {
namespace {

float absmax_scale(float absmax) { return absmax > 0.0f ? 127.0f / absmax : 1.0f; }

void check_gemv_shapes(const QuantizedVector& x, const QuantizedMatrix& m) {
  if (x.mixed_precision() != m.mixed_precision) {
    fail(ErrorKind::shape, "mixed-precision layout differs between vector and matrix");
  }
  if (x.values.size() != m.stored_rows()) {
    fail(ErrorKind::shape, "int8_gemv vector length " + std::to_string(x.values.size()) +
                               " vs " + std::to_string(m.stored_rows()) + " quantized rows");
  }
  if (m.stored_rows() > kMaxGemvRows) {
    fail(ErrorKind::shape, "int8_gemv supports at most " + std::to_string(kMaxGemvRows) + " rows");
  }
}

}  // namespace

std::int8_t quantize_scalar(float x, float scale) {
  const float q = std::round(x * scale);  // std::round ties away from zero
  return static_cast<std::int8_t>(std::clamp(q, -127.0f, 127.0f));
}

QuantizedVector quantize_vector(std::span<const float> x, bool mixed_precision) {
  QuantizedVector out;
  std::span<const float> tail = x;
  if (mixed_precision && !x.empty()) {
    out.head = x[0];
    tail = x.subspan(1);
  } else if (mixed_precision) {
    out.head = 0.0f;
  }
  float absmax = 0.0f;
  for (float v : tail) absmax = std::max(absmax, std::abs(v));
  out.scale = absmax_scale(absmax);
  out.values.resize(tail.size());
  if (absmax > 0.0f) {
    for (std::size_t i = 0; i < tail.size(); ++i) out.values[i] = quantize_scalar(tail[i], out.scale);
  }
  return out;
}

QuantizedMatrix quantize_matrix_columns(const DenseMatrix& m, bool mixed_precision) {
  QuantizedMatrix out;
  out.rows = m.rows();
  out.cols = m.cols();
  out.mixed_precision = mixed_precision;
  const std::size_t first = mixed_precision && m.rows() > 0 ? 1 : 0;
  if (mixed_precision) {
    out.head_row.assign(m.cols(), 0.0f);
    if (m.rows() > 0) {
      auto head = m.row(0);
      std::copy(head.begin(), head.end(), out.head_row.begin());
    }
  }

  std::vector<float> absmax(m.cols(), 0.0f);
  for (std::size_t i = first; i < m.rows(); ++i) {
    auto row = m.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) absmax[j] = std::max(absmax[j], std::abs(row[j]));
  }
  out.col_scales.resize(m.cols());
  std::transform(absmax.begin(), absmax.end(), out.col_scales.begin(), absmax_scale);

  out.values.resize(out.stored_rows() * m.cols());
  for (std::size_t i = first; i < m.rows(); ++i) {
    auto row = m.row(i);
    std::int8_t* dst = out.values.data() + (i - first) * m.cols();
    for (std::size_t j = 0; j < row.size(); ++j) dst[j] = quantize_scalar(row[j], out.col_scales[j]);
  }
  return out;
}

DenseMatrix QuantizedMatrix::dequantize() const {
  DenseMatrix out(rows, cols);
  const std::size_t first = mixed_precision && rows > 0 ? 1 : 0;
  if (first == 1) std::copy(head_row.begin(), head_row.end(), out.row(0).begin());
  for (std::size_t i = 0; i < stored_rows(); ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      out(i + first, j) = static_cast<float>(value(i, j)) / col_scales[j];
    }
  }
  return out;
}

// Row-broadcast form: every output lane accumulates independently, so the
// inner loop vectorizes without reassociating anything.
std::vector<std::int32_t> int8_gemv(const QuantizedVector& x, const QuantizedMatrix& m) {
  check_gemv_shapes(x, m);
  std::vector<std::int32_t> out(m.cols, 0);
  std::int32_t* acc = out.data();
  for (std::size_t i = 0; i < x.values.size(); ++i) {
    const std::int32_t xi = x.values[i];
    if (xi == 0) continue;
    const std::int8_t* row = m.values.data() + i * m.cols;
    for (std::size_t j = 0; j < m.cols; ++j) acc[j] += xi * static_cast<std::int32_t>(row[j]);
  }
  return out;
}

std::vector<std::int32_t> int8_gemv_unsigned_offset(const QuantizedVector& x,
                                                    const QuantizedMatrix& m) {
  check_gemv_shapes(x, m);
  std::vector<std::int32_t> out(m.cols, 0);
  std::int32_t x_sum = 0;
  for (std::size_t i = 0; i < x.values.size(); ++i) {
    const std::int32_t xi = x.values[i];
    x_sum += xi;
    const std::int8_t* row = m.values.data() + i * m.cols;
    for (std::size_t j = 0; j < m.cols; ++j) {
      const auto shifted = static_cast<std::uint8_t>(static_cast<std::int32_t>(row[j]) + 128);
      out[j] += xi * static_cast<std::int32_t>(shifted);
    }
  }
  for (auto& v : out) v -= 128 * x_sum;
  return out;
}

std::vector<float> dequantize_product(std::span<const std::int32_t> raw, float x_scale,
                                      std::span<const float> col_scales,
                                      std::span<const float> head_contrib) {
  if (raw.size() != col_scales.size() || (!head_contrib.empty() && head_contrib.size() != raw.size())) {
    fail(ErrorKind::shape, "dequantize_product length mismatch");
  }
  std::vector<float> out(raw.size());
  for (std::size_t j = 0; j < raw.size(); ++j) {
    out[j] = static_cast<float>(raw[j]) / (x_scale * col_scales[j]);
  }
  if (!head_contrib.empty()) {
    for (std::size_t j = 0; j < raw.size(); ++j) out[j] += head_contrib[j];
  }
  return out;
}

std::vector<float> quantized_vecmat(std::span<const float> x, const QuantizedMatrix& m) {
  if (x.size() != m.rows) {
    fail(ErrorKind::shape, "quantized product vector length " + std::to_string(x.size()) +
                               " vs " + std::to_string(m.rows) + " rows");
  }
  const QuantizedVector q = quantize_vector(x, m.mixed_precision);
  const std::vector<std::int32_t> raw = int8_gemv(q, m);
  std::vector<float> head;
  if (q.head) {
    head.resize(m.cols);
    for (std::size_t j = 0; j < m.cols; ++j) head[j] = *q.head * m.head_row[j];
  }
  return dequantize_product(raw, q.scale, m.col_scales, head);
}

}  // namespace rrrann::quant
