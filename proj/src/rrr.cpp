#include "rrrann/rrr.hpp"

#include <algorithm>

#include "rrrann/error.hpp"
#include "rrrann/parallel.hpp"

namespace rrrann::rrr {
namespace {

DenseMatrix project(const DenseMatrix& points, const DenseMatrix* projection) {
  return projection == nullptr ? points : linalg::matmul(points, *projection);
}

DenseMatrix stack_rows(const DenseMatrix& top, const DenseMatrix& bottom) {
  std::vector<float> data(top.values().begin(), top.values().end());
  data.insert(data.end(), bottom.values().begin(), bottom.values().end());
  return DenseMatrix(top.rows() + bottom.rows(), bottom.cols(), std::move(data));
}

Factor finish(DenseMatrix m, const RrrConfig& cfg) {
  if (!cfg.quantize) return m;
  return quant::quantize_matrix_columns(m, cfg.mixed_precision);
}

}  // namespace

void RrrConfig::validate(std::size_t dim) const {
  const std::size_t limit = reduced_dim ? *reduced_dim : dim;
  if (reduced_dim && (*reduced_dim == 0 || *reduced_dim > dim)) {
    fail(ErrorKind::parameter, "reduced dimension " + std::to_string(*reduced_dim) +
                                   " must be in [1, " + std::to_string(dim) + "]");
  }
  if (rank == 0 || rank > limit) {
    fail(ErrorKind::parameter, "rank " + std::to_string(rank) + " must be in [1, " +
                                   std::to_string(limit) + "]");
  }
  if (train_w == 0) fail(ErrorKind::parameter, "train_w must be at least 1");
}

std::size_t factor_rows(const Factor& f) {
  return std::visit(
      [](const auto& m) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, DenseMatrix>) {
          return m.rows();
        } else {
          return m.rows;
        }
      },
      f);
}

std::size_t factor_cols(const Factor& f) {
  return std::visit(
      [](const auto& m) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, DenseMatrix>) {
          return m.cols();
        } else {
          return m.cols;
        }
      },
      f);
}

DenseMatrix factor_dense(const Factor& f) {
  if (const auto* dense = std::get_if<DenseMatrix>(&f)) return *dense;
  return std::get<quant::QuantizedMatrix>(f).dequantize();
}

std::vector<float> factor_vecmat(std::span<const float> x, const Factor& f) {
  if (const auto* dense = std::get_if<DenseMatrix>(&f)) return linalg::vecmat(x, *dense);
  return quant::quantized_vecmat(x, std::get<quant::QuantizedMatrix>(f));
}

ClusterModel train_cluster(const TrainingBlock& block, std::span<const std::uint64_t> point_ids,
                           const RrrConfig& cfg, Metric metric, const DenseMatrix& rotation_v) {
  const DenseMatrix& corpus = block.cluster_points;
  const std::size_t m_l = corpus.rows();
  if (m_l == 0) fail(ErrorKind::data, "cannot train a model for an empty cluster");
  if (point_ids.size() != m_l) fail(ErrorKind::shape, "point id count does not match cluster size");
  if (block.train_points.rows() > 0 && block.train_points.cols() != corpus.cols()) {
    fail(ErrorKind::shape, "training and cluster points differ in dimension");
  }
  const std::size_t rank = cfg.rank;

  ClusterModel model;
  model.point_ids.assign(point_ids.begin(), point_ids.end());
  if (metric == Metric::euclidean) {
    model.norm_terms.resize(m_l);
    for (std::size_t j = 0; j < m_l; ++j) model.norm_terms[j] = dot(corpus.row(j), corpus.row(j));
  }

  const DenseMatrix corpus_proj = project(corpus, block.projection);
  const std::size_t s = corpus_proj.cols();

  if (m_l <= rank) {
    // Exact storage: a = C~^T, b = I, both zero-padded to the common rank.
    DenseMatrix a(s, rank);
    DenseMatrix b(rank, m_l);
    for (std::size_t j = 0; j < m_l; ++j) {
      for (std::size_t k = 0; k < s; ++k) a(k, j) = corpus_proj(j, k);
      b(j, j) = 1.0f;
    }
    model.a = finish(std::move(a), cfg);
    model.b = finish(std::move(b), cfg);
    model.exact_fallback = true;
    return model;
  }

  // Too few routed rows to determine a rank-r fit: add the cluster itself.
  const DenseMatrix train = block.train_points.rows() >= rank
                                ? block.train_points
                                : stack_rows(block.train_points, corpus);
  const DenseMatrix outputs = linalg::matmul_transposed(train, corpus);  // Y = X C^T
  DenseMatrix v = std::min(outputs.rows(), outputs.cols()) <= cfg.exact_svd_limit
                      ? linalg::jacobi_svd(outputs).v.left_columns(rank)
                      : linalg::randomized_svd(outputs, rank, cfg.svd_oversample,
                                               cfg.svd_power_iters, cfg.seed)
                            .v;
  if (!rotation_v.empty()) v = linalg::matmul(v, rotation_v);

  DenseMatrix a;
  if (block.reduced) {
    const DenseMatrix train_proj = project(train, block.projection);
    a = linalg::matmul(linalg::pseudoinverse(train_proj), linalg::matmul(outputs, v));
  } else {
    a = linalg::matmul(corpus_proj.transposed(), v);
  }
  model.a = finish(std::move(a), cfg);
  model.b = finish(v.transposed(), cfg);
  return model;
}

std::vector<float> predict(std::span<const float> query_projected, const ClusterModel& model) {
  if (query_projected.size() != factor_rows(model.a)) {
    fail(ErrorKind::shape, "projected query length " + std::to_string(query_projected.size()) +
                               " vs model input dimension " + std::to_string(factor_rows(model.a)));
  }
  const std::vector<float> r = factor_vecmat(query_projected, model.a);
  return factor_vecmat(r, model.b);
}

std::vector<float> score_cluster(std::span<const float> query_projected, const ClusterModel& model,
                                 Metric metric) {
  std::vector<float> y = predict(query_projected, model);
  if (metric == Metric::euclidean) {
    for (std::size_t j = 0; j < y.size(); ++j) y[j] = -2.0f * y[j] + model.norm_terms[j];
  }
  return y;
}

std::vector<std::size_t> select_training_rows(const DenseMatrix& global_train,
                                              const DenseMatrix& centroids, std::size_t l,
                                              std::size_t train_w, cluster::ClusterMetric metric) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < global_train.rows(); ++i) {
    const auto routes = cluster::route(global_train.row(i), centroids, train_w, metric);
    if (std::find(routes.begin(), routes.end(), l) != routes.end()) rows.push_back(i);
  }
  return rows;
}

std::vector<std::vector<std::size_t>> routed_training_sets(const DenseMatrix& global_train,
                                                           const DenseMatrix& centroids,
                                                           std::size_t train_w,
                                                           cluster::ClusterMetric metric,
                                                           std::size_t threads) {
  std::vector<std::vector<std::uint32_t>> routes(global_train.rows());
  parallel_for(global_train.rows(), threads, [&](std::size_t i) {
    routes[i] = cluster::route(global_train.row(i), centroids, train_w, metric);
  });
  std::vector<std::vector<std::size_t>> sets(centroids.rows());
  for (std::size_t i = 0; i < routes.size(); ++i) {
    for (auto l : routes[i]) sets[l].push_back(i);
  }
  return sets;
}

double training_loss(const DenseMatrix& train_points, const DenseMatrix& cluster_points,
                     const DenseMatrix& beta) {
  const DenseMatrix outputs = linalg::matmul_transposed(train_points, cluster_points);
  const DenseMatrix fitted = linalg::matmul(train_points, beta);
  double loss = 0.0;
  auto y = outputs.values();
  auto f = fitted.values();
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double diff = static_cast<double>(y[i]) - f[i];
    loss += diff * diff;
  }
  return loss;
}

}  // namespace rrrann::rrr
