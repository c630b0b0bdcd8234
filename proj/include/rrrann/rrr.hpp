#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "rrrann/cluster.hpp"
#include "rrrann/linalg.hpp"
#include "rrrann/matrix.hpp"
#include "rrrann/metric.hpp"
#include "rrrann/quantize.hpp"

namespace rrrann::rrr {

enum class TrainSource { corpus, query_sample };
enum class LocalTraining { routed, cluster_only };

struct RrrConfig {
  std::size_t rank = 32;
  std::optional<std::size_t> reduced_dim;  // s; nullopt disables reduction
  TrainSource train_source = TrainSource::corpus;
  LocalTraining local_train = LocalTraining::routed;
  std::size_t train_w = 2;
  bool quantize = true;
  bool mixed_precision = true;
  std::size_t svd_oversample = linalg::kDefaultOversample;
  std::size_t svd_power_iters = linalg::kDefaultPowerIters;
  /// Blocks whose smaller side is at most this use the exact SVD.
  std::size_t exact_svd_limit = 64;
  std::uint64_t seed = 0;

  /// Throws a parameter error unless 1 <= rank <= (s or d) and train_w >= 1.
  void validate(std::size_t dim) const;
};

/// Either an f32 factor or its column-quantized form.
using Factor = std::variant<DenseMatrix, quant::QuantizedMatrix>;

std::size_t factor_rows(const Factor& f);
std::size_t factor_cols(const Factor& f);
/// f32 view of a factor (dequantized when quantized).
DenseMatrix factor_dense(const Factor& f);
/// x^T f, through the integer kernel when quantized.
std::vector<float> factor_vecmat(std::span<const float> x, const Factor& f);

/// One cluster's regression model: scores for its points are (x~^T a) b.
struct ClusterModel {
  std::vector<std::uint64_t> point_ids;
  Factor a;  // s x r
  Factor b;  // r x m_l
  std::vector<float> norm_terms;  // ||c_j||^2, euclidean only
  bool exact_fallback = false;    // m_l <= r: exact factors, zero-padded to rank r

  std::size_t size() const noexcept { return point_ids.size(); }
  std::size_t rank() const { return factor_cols(a); }
};

/// Training inputs for one cluster. Points are in the original space; the
/// projection maps them to the scoring space (identity when null).
struct TrainingBlock {
  const DenseMatrix& cluster_points;  // C, m_l x d
  const DenseMatrix& train_points;    // X, n_l x d
  const DenseMatrix* projection = nullptr;  // d x s
  bool reduced = false;  // projection is a dimensionality reduction, not an isometry
};

/// Fits the rank-r regression from projected inputs to the original-space
/// inner products Y = X C^T and returns its factors. `rotation_v` (r x r,
/// may be empty) is applied to V_r before factor extraction.
ClusterModel train_cluster(const TrainingBlock& block, std::span<const std::uint64_t> point_ids,
                           const RrrConfig& cfg, Metric metric, const DenseMatrix& rotation_v);

/// Per-point scores for a projected query. Euclidean returns
/// -2 * y_hat + ||c||^2 (lower is better); ip and cosine return y_hat
/// (higher is better).
std::vector<float> score_cluster(std::span<const float> query_projected, const ClusterModel& model,
                                 Metric metric);

/// Inner-product estimates y_hat = (x^T a) b.
std::vector<float> predict(std::span<const float> query_projected, const ClusterModel& model);

/// Training rows routed to cluster `l`: those with l among their train_w
/// closest centroids.
std::vector<std::size_t> select_training_rows(const DenseMatrix& global_train,
                                              const DenseMatrix& centroids, std::size_t l,
                                              std::size_t train_w, cluster::ClusterMetric metric);

/// select_training_rows for every cluster at once (one routing pass).
std::vector<std::vector<std::size_t>> routed_training_sets(const DenseMatrix& global_train,
                                                           const DenseMatrix& centroids,
                                                           std::size_t train_w,
                                                           cluster::ClusterMetric metric,
                                                           std::size_t threads = 1);

/// ||Y - X beta||_F^2 with Y = X C^T.
double training_loss(const DenseMatrix& train_points, const DenseMatrix& cluster_points,
                     const DenseMatrix& beta);

}  // namespace rrrann::rrr
