#pragma once

#include <span>
#include <string>
#include <string_view>

namespace rrrann {

enum class Metric : unsigned char { euclidean = 0, ip = 1, cosine = 2 };

Metric parse_metric(std::string_view name);
std::string_view to_string(Metric metric);

float dot(std::span<const float> a, std::span<const float> b);
float squared_l2(std::span<const float> a, std::span<const float> b);

/// Exact dissimilarity used for re-ranking and ground truth: squared L2 for
/// euclidean, negative inner product for ip, 1 - <a, b> for cosine (inputs
/// are expected to be unit-normalized). Lower is better.
float dissimilarity(Metric metric, std::span<const float> a, std::span<const float> b);

/// Scales `x` to unit norm in place; zero vectors are left untouched.
void normalize(std::span<float> x);

}  // namespace rrrann
