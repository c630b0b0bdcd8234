#include "rrrann/metric.hpp"

#include <cmath>

#include "rrrann/error.hpp"

namespace rrrann {

Metric parse_metric(std::string_view name) {
  if (name == "euclidean" || name == "l2") return Metric::euclidean;
  if (name == "ip" || name == "dot" || name == "mips") return Metric::ip;
  if (name == "cosine" || name == "angular") return Metric::cosine;
  fail(ErrorKind::parameter, "unknown metric '" + std::string(name) + "'");
}

std::string_view to_string(Metric metric) {
  switch (metric) {
    case Metric::euclidean: return "euclidean";
    case Metric::ip: return "ip";
    case Metric::cosine: return "cosine";
  }
  return "euclidean";
}

// Eight independent partial sums in a fixed order: deterministic, and lets the
// compiler keep the lanes in vector registers.
float dot(std::span<const float> a, std::span<const float> b) {
  const std::size_t n = a.size();
  float acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
  }
  for (std::size_t l = 0; i < n; ++i, ++l) acc[l] += a[i] * b[i];
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
}

float squared_l2(std::span<const float> a, std::span<const float> b) {
  const std::size_t n = a.size();
  float acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t l = 0; l < 8; ++l) {
      const float diff = a[i + l] - b[i + l];
      acc[l] += diff * diff;
    }
  }
  for (std::size_t l = 0; i < n; ++i, ++l) {
    const float diff = a[i] - b[i];
    acc[l] += diff * diff;
  }
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
}

float dissimilarity(Metric metric, std::span<const float> a, std::span<const float> b) {
  switch (metric) {
    case Metric::euclidean: return squared_l2(a, b);
    case Metric::ip: return -dot(a, b);
    case Metric::cosine: return 1.0f - dot(a, b);
  }
  return 0.0f;
}

void normalize(std::span<float> x) {
  double sq = 0.0;
  for (float v : x) sq += static_cast<double>(v) * v;
  if (sq == 0.0) return;
  const float inv = static_cast<float>(1.0 / std::sqrt(sq));
  for (float& v : x) v *= inv;
}

}  // namespace rrrann
