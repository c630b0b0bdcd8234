#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "rrrann/cluster.hpp"
#include "rrrann/matrix.hpp"
#include "rrrann/metric.hpp"
#include "rrrann/rrr.hpp"

namespace rrrann {

enum class ScoringMode { rrr, exact_ivf };

struct IndexConfig {
  Metric metric = Metric::euclidean;
  std::size_t num_clusters = 0;  // 0 picks a default from the corpus size
  rrr::RrrConfig rrr;
  ScoringMode scoring = ScoringMode::rrr;
  bool balanced = false;
  std::size_t balance_delta = 16;
  bool rerank = true;  // keep the corpus so queries can re-rank exactly
  std::size_t kmeans_iters = 25;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

/// Largest grid value (1024, 2048, 4096) not exceeding m / 39, or round(sqrt(m))
/// when even 1024 is too many for the corpus.
std::size_t default_num_clusters(std::size_t corpus_size);

struct QueryParams {
  std::size_t k = 100;
  std::size_t w = 8;    // clusters to search
  std::size_t t = 100;  // candidates kept after scoring
  bool rerank = true;
};

struct QueryResult {
  std::vector<std::uint64_t> ids;
  std::vector<float> scores;  // best first, in the metric's own units
  bool truncated = false;     // fewer than k candidates were available
};

/// Byte counts of the serialized model, split by role.
struct IndexFootprint {
  std::size_t code_bytes = 0;    // int8 factor codes (or f32 factors when unquantized)
  std::size_t aux_bytes = 0;     // scales, f32 head rows, norm terms, ids
  std::size_t corpus_bytes = 0;  // re-ranking corpus block
  std::size_t total_bytes = 0;   // whole file
};

class RrrIndex {
 public:
  /// `train` is the global training set; nullopt trains on the corpus.
  static RrrIndex build(const DenseMatrix& corpus, const std::optional<DenseMatrix>& train,
                        const IndexConfig& cfg);

  QueryResult query(std::span<const float> x, const QueryParams& p) const;
  std::vector<QueryResult> query_batch(const DenseMatrix& queries, const QueryParams& p,
                                       std::size_t threads = 1) const;

  /// Candidate point ids scored for `x` (all members of the routed clusters).
  std::vector<std::uint64_t> candidates(std::span<const float> x, std::size_t w) const;

  std::vector<std::uint8_t> serialize() const;
  static RrrIndex deserialize(std::span<const std::uint8_t> bytes);
  void save(const std::filesystem::path& path) const;
  static RrrIndex load(const std::filesystem::path& path);

  IndexFootprint footprint() const;

  const IndexConfig& config() const noexcept { return cfg_; }
  Metric metric() const noexcept { return cfg_.metric; }
  std::size_t dim() const noexcept { return projection_.rows(); }
  std::size_t projected_dim() const noexcept { return projection_.cols(); }
  std::size_t num_clusters() const noexcept { return centroids_.rows(); }
  std::size_t size() const noexcept { return corpus_size_; }
  bool has_corpus() const noexcept { return !corpus_.empty(); }
  const DenseMatrix& projection() const noexcept { return projection_; }
  const DenseMatrix& centroids() const noexcept { return centroids_; }
  const std::vector<rrr::ClusterModel>& clusters() const noexcept { return clusters_; }
  const DenseMatrix& corpus() const noexcept { return corpus_; }

 private:
  cluster::ClusterMetric cluster_metric() const noexcept;
  std::vector<float> prepare_query(std::span<const float> x) const;

  IndexConfig cfg_;
  DenseMatrix projection_;  // d x s, rotation folded in
  DenseMatrix centroids_;   // L x s
  std::vector<rrr::ClusterModel> clusters_;
  DenseMatrix corpus_;      // m x d, present when re-ranking is enabled
  std::size_t corpus_size_ = 0;
};

}  // namespace rrrann
