#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "rrrann/matrix.hpp"

namespace rrrann::cluster {

enum class ClusterMetric {
  euclidean,  // squared L2 assignment, mean centroids
  spherical,  // max inner product assignment, unit-norm centroids
};

struct Clustering {
  DenseMatrix centroids;               // L x dim
  std::vector<std::uint32_t> assignments;  // one cluster id per point
  std::vector<std::size_t> sizes;          // points per cluster

  std::size_t num_clusters() const noexcept { return centroids.rows(); }
  /// Point ids grouped by cluster, ascending within each cluster.
  std::vector<std::vector<std::size_t>> members() const;
};

struct KMeansParams {
  std::size_t max_iters = 25;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  /// Called after every centroid update with the iteration number.
  std::function<void(std::size_t, const Clustering&)> observer;
};

/// Lloyd iterations from a k-means++ seeding. Empty clusters are repaired by
/// moving the farthest point of the largest cluster into them.
Clustering kmeans(const DenseMatrix& points, std::size_t num_clusters, ClusterMetric metric,
                  const KMeansParams& params = {});

/// k-means whose assignment step is capacity constrained so that
/// max(sizes) - min(sizes) <= delta after every iteration.
Clustering balanced_kmeans(const DenseMatrix& points, std::size_t num_clusters,
                           ClusterMetric metric, std::size_t delta,
                           const KMeansParams& params = {});

/// Ids of the w closest centroids, best first; ties go to the lower id.
std::vector<std::uint32_t> route(std::span<const float> query, const DenseMatrix& centroids,
                                 std::size_t w, ClusterMetric metric);

/// Sum of squared distances (euclidean) or of 1 - <x, mu> (spherical).
double distortion(const DenseMatrix& points, const Clustering& clustering, ClusterMetric metric);

}  // namespace rrrann::cluster
