#include "rrrann/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "rrrann/error.hpp"
#include "rrrann/metric.hpp"
#include "rrrann/parallel.hpp"

namespace rrrann::cluster {
namespace {

void validate(const DenseMatrix& points, std::size_t num_clusters) {
  if (num_clusters == 0) fail(ErrorKind::parameter, "number of clusters must be at least 1");
  if (num_clusters > points.rows()) {
    fail(ErrorKind::parameter, "cannot form " + std::to_string(num_clusters) + " clusters from " +
                                   std::to_string(points.rows()) + " points");
  }
  if (!points.all_finite()) fail(ErrorKind::data, "clustering input contains non-finite values");
}

// Centroids laid out for the broadcast kernel: cost row for one point is
// computed as a sequence of axpy updates over the transposed table.
class CostTable {
 public:
  CostTable(const DenseMatrix& centroids, ClusterMetric metric)
      : metric_(metric), transposed_(centroids.transposed()), sq_norms_(centroids.rows()) {
    for (std::size_t l = 0; l < centroids.rows(); ++l) {
      auto c = centroids.row(l);
      sq_norms_[l] = dot(c, c);
    }
  }

  // Relative cost of each centroid for `x`: squared distance minus ||x||^2
  // (euclidean) or negative inner product (spherical). Lower is better.
  void costs(std::span<const float> x, std::span<float> out) const {
    std::fill(out.begin(), out.end(), 0.0f);
    for (std::size_t k = 0; k < x.size(); ++k) {
      const float xk = x[k];
      auto row = transposed_.row(k);
      for (std::size_t l = 0; l < out.size(); ++l) out[l] += xk * row[l];
    }
    if (metric_ == ClusterMetric::euclidean) {
      for (std::size_t l = 0; l < out.size(); ++l) out[l] = sq_norms_[l] - 2.0f * out[l];
    } else {
      for (float& v : out) v = -v;
    }
  }

 private:
  ClusterMetric metric_;
  DenseMatrix transposed_;
  std::vector<float> sq_norms_;
};

float point_cost(std::span<const float> x, std::span<const float> centroid, ClusterMetric metric) {
  return metric == ClusterMetric::euclidean ? squared_l2(x, centroid) : 1.0f - dot(x, centroid);
}

std::size_t argmin(std::span<const float> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] < values[best]) best = i;
  }
  return best;
}

DenseMatrix kmeanspp_init(const DenseMatrix& points, std::size_t num_clusters, ClusterMetric metric,
                          std::uint64_t seed) {
  const std::size_t n = points.rows();
  std::mt19937_64 rng(seed);
  DenseMatrix centroids(num_clusters, points.cols());
  std::vector<bool> chosen(n, false);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());

  auto take = [&](std::size_t l, std::size_t idx) {
    chosen[idx] = true;
    auto src = points.row(idx);
    std::copy(src.begin(), src.end(), centroids.row(l).begin());
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], static_cast<double>(squared_l2(points.row(i), src)));
    }
  };

  // D^2 sampling of one candidate; n when only duplicates of chosen points remain.
  auto sample = [&](double total) {
    if (total <= 0.0) return n;
    const double target = std::uniform_real_distribution<double>(0.0, total)(rng);
    double running = 0.0;
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (chosen[i] || nearest[i] == 0.0) continue;
      running += nearest[i];
      pick = i;
      if (running > target) break;
    }
    return pick;
  };

  // Greedy variant: several candidates per step, keep the one that lowers
  // the potential most.
  const std::size_t trials = 2 + static_cast<std::size_t>(std::log(static_cast<double>(num_clusters)));
  take(0, std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
  for (std::size_t l = 1; l < num_clusters; ++l) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!chosen[i]) total += nearest[i];
    }
    std::size_t pick = n;
    double best_potential = std::numeric_limits<double>::infinity();
    for (std::size_t trial = 0; trial < trials; ++trial) {
      const std::size_t cand = sample(total);
      if (cand == n) break;
      double potential = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        potential += std::min(nearest[i], static_cast<double>(squared_l2(points.row(i), points.row(cand))));
      }
      if (potential < best_potential) {
        best_potential = potential;
        pick = cand;
      }
    }
    if (pick == n) {
      // Only duplicates remain: keep centroids distinct by index.
      pick = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), false) - chosen.begin());
    }
    take(l, pick);
  }
  if (metric == ClusterMetric::spherical) {
    for (std::size_t l = 0; l < num_clusters; ++l) normalize(centroids.row(l));
  }
  return centroids;
}

std::vector<std::uint32_t> assign_nearest(const DenseMatrix& points, const DenseMatrix& centroids,
                                          ClusterMetric metric, std::size_t threads) {
  const CostTable table(centroids, metric);
  std::vector<std::uint32_t> out(points.rows());
  constexpr std::size_t kBlock = 256;
  const std::size_t blocks = (points.rows() + kBlock - 1) / kBlock;
  parallel_for(blocks, threads, [&](std::size_t b) {
    std::vector<float> costs(centroids.rows());
    const std::size_t end = std::min(points.rows(), (b + 1) * kBlock);
    for (std::size_t i = b * kBlock; i < end; ++i) {
      table.costs(points.row(i), costs);
      out[i] = static_cast<std::uint32_t>(argmin(costs));
    }
  });
  return out;
}

std::vector<std::size_t> count_sizes(const std::vector<std::uint32_t>& assignments,
                                     std::size_t num_clusters) {
  std::vector<std::size_t> sizes(num_clusters, 0);
  for (auto a : assignments) ++sizes[a];
  return sizes;
}

// Recomputes centroids as (normalized) means of their members. Empty
// clusters take the farthest point of the currently largest cluster.
void update_centroids(const DenseMatrix& points, Clustering& c, ClusterMetric metric) {
  const std::size_t num_clusters = c.centroids.rows();
  const std::size_t dim = points.cols();
  c.sizes = count_sizes(c.assignments, num_clusters);

  std::vector<double> sums(num_clusters * dim, 0.0);
  for (std::size_t i = 0; i < points.rows(); ++i) {
    double* dst = &sums[c.assignments[i] * dim];
    auto x = points.row(i);
    for (std::size_t k = 0; k < dim; ++k) dst[k] += x[k];
  }
  for (std::size_t l = 0; l < num_clusters; ++l) {
    if (c.sizes[l] == 0) continue;
    auto dst = c.centroids.row(l);
    if (metric == ClusterMetric::euclidean) {
      const double inv = 1.0 / static_cast<double>(c.sizes[l]);
      for (std::size_t k = 0; k < dim; ++k) dst[k] = static_cast<float>(sums[l * dim + k] * inv);
    } else {
      double norm = 0.0;
      for (std::size_t k = 0; k < dim; ++k) norm += sums[l * dim + k] * sums[l * dim + k];
      if (norm == 0.0) continue;  // keep the previous unit centroid
      const double inv = 1.0 / std::sqrt(norm);
      for (std::size_t k = 0; k < dim; ++k) dst[k] = static_cast<float>(sums[l * dim + k] * inv);
    }
  }

  for (std::size_t l = 0; l < num_clusters; ++l) {
    if (c.sizes[l] != 0) continue;
    const auto largest = static_cast<std::size_t>(
        std::max_element(c.sizes.begin(), c.sizes.end()) - c.sizes.begin());
    std::size_t farthest = points.rows();
    float worst = -std::numeric_limits<float>::infinity();
    for (std::size_t i = 0; i < points.rows(); ++i) {
      if (c.assignments[i] != largest) continue;
      const float cost = point_cost(points.row(i), c.centroids.row(largest), metric);
      if (cost > worst) {
        worst = cost;
        farthest = i;
      }
    }
    c.assignments[farthest] = static_cast<std::uint32_t>(l);
    --c.sizes[largest];
    ++c.sizes[l];
    auto src = points.row(farthest);
    auto dst = c.centroids.row(l);
    std::copy(src.begin(), src.end(), dst.begin());
    if (metric == ClusterMetric::spherical) normalize(dst);
  }
}

// Capacity-constrained assignment: sizes end up in [lower, upper].
std::vector<std::uint32_t> assign_balanced(const DenseMatrix& points, const DenseMatrix& centroids,
                                           ClusterMetric metric, std::size_t lower,
                                           std::size_t upper, std::size_t threads) {
  const std::size_t n = points.rows();
  const std::size_t num_clusters = centroids.rows();
  const CostTable table(centroids, metric);
  std::vector<float> costs(n * num_clusters);
  parallel_for(n, threads, [&](std::size_t i) {
    table.costs(points.row(i), std::span<float>(costs.data() + i * num_clusters, num_clusters));
  });
  auto cost = [&](std::size_t i, std::size_t l) { return costs[i * num_clusters + l]; };

  std::vector<std::uint32_t> assignment(n);
  std::vector<std::vector<std::size_t>> members(num_clusters);
  for (std::size_t i = 0; i < n; ++i) {
    assignment[i] = static_cast<std::uint32_t>(
        argmin(std::span<const float>(costs.data() + i * num_clusters, num_clusters)));
    members[assignment[i]].push_back(i);
  }

  // Overflow: each over-full cluster keeps its `upper` closest points.
  std::vector<std::size_t> sizes(num_clusters);
  std::vector<std::size_t> overflow;
  for (std::size_t l = 0; l < num_clusters; ++l) {
    auto& mem = members[l];
    if (mem.size() > upper) {
      std::stable_sort(mem.begin(), mem.end(),
                       [&](std::size_t a, std::size_t b) { return cost(a, l) < cost(b, l); });
      overflow.insert(overflow.end(), mem.begin() + static_cast<std::ptrdiff_t>(upper), mem.end());
      mem.resize(upper);
    }
    sizes[l] = mem.size();
  }
  std::stable_sort(overflow.begin(), overflow.end(), [&](std::size_t a, std::size_t b) {
    return cost(a, assignment[a]) < cost(b, assignment[b]);
  });
  for (std::size_t i : overflow) {
    std::size_t best = num_clusters;
    for (std::size_t l = 0; l < num_clusters; ++l) {
      if (sizes[l] >= upper) continue;
      if (best == num_clusters || cost(i, l) < cost(i, best)) best = l;
    }
    assignment[i] = static_cast<std::uint32_t>(best);
    ++sizes[best];
  }

  // Underflow: pull the cheapest-to-move points from clusters above `lower`.
  for (std::size_t l = 0; l < num_clusters; ++l) {
    while (sizes[l] < lower) {
      std::size_t pick = n;
      float best_delta = std::numeric_limits<float>::infinity();
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t from = assignment[i];
        if (from == l || sizes[from] <= lower) continue;
        const float delta = cost(i, l) - cost(i, from);
        if (delta < best_delta) {
          best_delta = delta;
          pick = i;
        }
      }
      --sizes[assignment[pick]];
      assignment[pick] = static_cast<std::uint32_t>(l);
      ++sizes[l];
    }
  }
  return assignment;
}

Clustering run(const DenseMatrix& points, std::size_t num_clusters, ClusterMetric metric,
               const KMeansParams& params, const std::function<std::vector<std::uint32_t>(const DenseMatrix&)>& assign) {
  Clustering c;
  c.centroids = kmeanspp_init(points, num_clusters, metric, params.seed);
  c.assignments = assign(c.centroids);
  const std::size_t iters = std::max<std::size_t>(1, params.max_iters);
  for (std::size_t it = 0; it < iters; ++it) {
    update_centroids(points, c, metric);
    if (params.observer) params.observer(it, c);
    if (it + 1 == iters) break;
    auto next = assign(c.centroids);
    if (next == c.assignments) break;
    c.assignments = std::move(next);
  }
  c.sizes = count_sizes(c.assignments, num_clusters);
  return c;
}

}  // namespace

std::vector<std::vector<std::size_t>> Clustering::members() const {
  std::vector<std::vector<std::size_t>> out(num_clusters());
  for (std::size_t i = 0; i < assignments.size(); ++i) out[assignments[i]].push_back(i);
  return out;
}

Clustering kmeans(const DenseMatrix& points, std::size_t num_clusters, ClusterMetric metric,
                  const KMeansParams& params) {
  validate(points, num_clusters);
  return run(points, num_clusters, metric, params, [&](const DenseMatrix& centroids) {
    return assign_nearest(points, centroids, metric, params.threads);
  });
}

Clustering balanced_kmeans(const DenseMatrix& points, std::size_t num_clusters,
                           ClusterMetric metric, std::size_t delta, const KMeansParams& params) {
  validate(points, num_clusters);
  if (delta == 0) fail(ErrorKind::parameter, "balance delta must be at least 1");
  const std::size_t n = points.rows();
  const std::size_t ceil_share = (n + num_clusters - 1) / num_clusters;
  const std::size_t upper = ceil_share + (delta - 1) / 2;
  const std::size_t lower = upper > delta ? std::max<std::size_t>(1, upper - delta) : 1;

  // The centroid update cannot reassign points when no cluster is empty,
  // so the balance established by the assignment step survives the update.
  Clustering c = run(points, num_clusters, metric, params, [&](const DenseMatrix& centroids) {
    return assign_balanced(points, centroids, metric, lower, upper, params.threads);
  });
  return c;
}

std::vector<std::uint32_t> route(std::span<const float> query, const DenseMatrix& centroids,
                                 std::size_t w, ClusterMetric metric) {
  if (w == 0 || w > centroids.rows()) {
    fail(ErrorKind::parameter, "w = " + std::to_string(w) + " must be in [1, " +
                                   std::to_string(centroids.rows()) + "]");
  }
  if (query.size() != centroids.cols()) {
    fail(ErrorKind::shape, "query dimension " + std::to_string(query.size()) + " vs centroid dimension " +
                               std::to_string(centroids.cols()));
  }
  std::vector<float> cost(centroids.rows());
  for (std::size_t l = 0; l < centroids.rows(); ++l) {
    cost[l] = metric == ClusterMetric::euclidean ? squared_l2(query, centroids.row(l))
                                                 : -dot(query, centroids.row(l));
  }
  std::vector<std::uint32_t> ids(centroids.rows());
  std::iota(ids.begin(), ids.end(), 0u);
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(w), ids.end(),
                    [&](std::uint32_t a, std::uint32_t b) {
                      return cost[a] < cost[b] || (cost[a] == cost[b] && a < b);
                    });
  ids.resize(w);
  return ids;
}

double distortion(const DenseMatrix& points, const Clustering& clustering, ClusterMetric metric) {
  double total = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    total += point_cost(points.row(i), clustering.centroids.row(clustering.assignments[i]), metric);
  }
  return total;
}

}  // namespace rrrann::cluster
