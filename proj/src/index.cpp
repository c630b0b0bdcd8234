#include "rrrann/index.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rrrann/error.hpp"
#include "rrrann/linalg.hpp"
#include "rrrann/parallel.hpp"

namespace rrrann {
namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

enum SeedStream : std::uint64_t {
  kProjectionStream = 1,
  kInputRotationStream = 2,
  kClusteringStream = 3,
  kOutputRotationStream = 4,
  kClusterSvdStream = 1000,
};

// Orthogonal dim x dim matrix; with mixed precision the first coordinate is
// left in place so the f32 head keeps the leading component.
DenseMatrix quantization_rotation(std::size_t dim, bool mixed_precision, std::uint64_t seed) {
  if (!mixed_precision) return linalg::random_rotation(dim, seed);
  DenseMatrix out(dim, dim);
  out(0, 0) = 1.0f;
  if (dim == 1) return out;
  const DenseMatrix tail = linalg::random_rotation(dim - 1, seed);
  for (std::size_t i = 0; i + 1 < dim; ++i) {
    for (std::size_t j = 0; j + 1 < dim; ++j) out(i + 1, j + 1) = tail(i, j);
  }
  return out;
}

void normalize_rows(DenseMatrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) normalize(m.row(i));
}

struct Candidate {
  float key;  // larger is better
  std::uint64_t id;
};

bool better(const Candidate& a, const Candidate& b) {
  return a.key > b.key || (a.key == b.key && a.id < b.id);
}

void keep_best(std::vector<Candidate>& c, std::size_t count) {
  if (c.size() > count) {
    std::nth_element(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(count), c.end(), better);
    c.resize(count);
  }
  std::sort(c.begin(), c.end(), better);
}

}  // namespace

std::size_t default_num_clusters(std::size_t corpus_size) {
  const std::size_t budget = corpus_size / 39;
  for (std::size_t grid : {4096u, 2048u, 1024u}) {
    if (grid <= budget) return grid;
  }
  const auto root = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(corpus_size))));
  return std::clamp<std::size_t>(root, 1, std::max<std::size_t>(corpus_size, 1));
}

cluster::ClusterMetric RrrIndex::cluster_metric() const noexcept {
  return cfg_.metric == Metric::euclidean ? cluster::ClusterMetric::euclidean
                                          : cluster::ClusterMetric::spherical;
}

RrrIndex RrrIndex::build(const DenseMatrix& corpus_in, const std::optional<DenseMatrix>& train_in,
                         const IndexConfig& cfg_in) {
  if (corpus_in.rows() == 0 || corpus_in.cols() == 0) fail(ErrorKind::parameter, "corpus is empty");
  if (!corpus_in.all_finite()) fail(ErrorKind::data, "corpus contains non-finite values");
  if (train_in) {
    if (train_in->cols() != corpus_in.cols()) {
      fail(ErrorKind::shape, "training set dimension " + std::to_string(train_in->cols()) +
                                 " vs corpus dimension " + std::to_string(corpus_in.cols()));
    }
    if (train_in->rows() == 0) fail(ErrorKind::parameter, "training set is empty");
    if (!train_in->all_finite()) fail(ErrorKind::data, "training set contains non-finite values");
  }

  IndexConfig cfg = cfg_in;
  const std::size_t m = corpus_in.rows();
  const std::size_t d = corpus_in.cols();
  if (cfg.num_clusters == 0) cfg.num_clusters = default_num_clusters(m);
  if (cfg.num_clusters > m) {
    fail(ErrorKind::parameter, "L = " + std::to_string(cfg.num_clusters) + " exceeds corpus size " +
                                   std::to_string(m));
  }
  if (cfg.scoring == ScoringMode::rrr) cfg.rrr.validate(d);
  if (cfg.rrr.train_source == rrr::TrainSource::query_sample && !train_in) {
    fail(ErrorKind::parameter, "query-sample training requested without a training set");
  }
  cfg.rrr.train_source = train_in ? rrr::TrainSource::query_sample : rrr::TrainSource::corpus;
  if (cfg.scoring == ScoringMode::exact_ivf) cfg.rerank = true;

  RrrIndex index;
  index.cfg_ = cfg;
  index.corpus_size_ = m;

  DenseMatrix corpus = corpus_in;
  if (cfg.metric == Metric::cosine) normalize_rows(corpus);
  std::optional<DenseMatrix> train_copy;
  if (train_in) {
    train_copy = *train_in;
    if (cfg.metric == Metric::cosine) normalize_rows(*train_copy);
  }
  const DenseMatrix& train = train_copy ? *train_copy : corpus;

  const bool reduced = cfg.scoring == ScoringMode::rrr && cfg.rrr.reduced_dim.has_value();
  const bool quantized = cfg.scoring == ScoringMode::rrr && cfg.rrr.quantize;
  const bool mixed = quantized && cfg.rrr.mixed_precision;
  if (reduced) {
    index.projection_ =
        linalg::top_eigenvectors(train, *cfg.rrr.reduced_dim, mix_seed(cfg.seed, kProjectionStream));
    if (quantized) {
      index.projection_ = linalg::matmul(
          index.projection_, quantization_rotation(index.projection_.cols(), mixed,
                                                   mix_seed(cfg.seed, kInputRotationStream)));
    }
  } else if (quantized) {
    index.projection_ = quantization_rotation(d, mixed, mix_seed(cfg.seed, kInputRotationStream));
  } else {
    index.projection_ = DenseMatrix::identity(d);
  }

  const DenseMatrix corpus_proj = linalg::matmul(corpus, index.projection_);
  cluster::KMeansParams kparams;
  kparams.max_iters = cfg.kmeans_iters;
  kparams.seed = mix_seed(cfg.seed, kClusteringStream);
  kparams.threads = cfg.threads;
  const cluster::Clustering clustering =
      cfg.balanced ? cluster::balanced_kmeans(corpus_proj, cfg.num_clusters, index.cluster_metric(),
                                              cfg.balance_delta, kparams)
                   : cluster::kmeans(corpus_proj, cfg.num_clusters, index.cluster_metric(), kparams);
  index.centroids_ = clustering.centroids;
  const auto members = clustering.members();

  std::vector<std::vector<std::size_t>> train_sets;
  if (cfg.scoring == ScoringMode::rrr) {
    if (cfg.rrr.local_train == rrr::LocalTraining::cluster_only) {
      train_sets = members;
    } else {
      const DenseMatrix train_proj =
          train_copy ? linalg::matmul(train, index.projection_) : corpus_proj;
      train_sets = rrr::routed_training_sets(train_proj, index.centroids_,
                                             std::min(cfg.rrr.train_w, cfg.num_clusters),
                                             index.cluster_metric(), cfg.threads);
    }
  }
  // cluster_only always trains on the cluster's own corpus points.
  const DenseMatrix& local_source =
      cfg.rrr.local_train == rrr::LocalTraining::cluster_only ? corpus : train;

  DenseMatrix rotation_v;
  if (quantized) {
    rotation_v = quantization_rotation(cfg.rrr.rank, mixed, mix_seed(cfg.seed, kOutputRotationStream));
  }

  index.clusters_.resize(cfg.num_clusters);
  parallel_for(cfg.num_clusters, cfg.threads, [&](std::size_t l) {
    std::vector<std::uint64_t> ids(members[l].begin(), members[l].end());
    if (cfg.scoring == ScoringMode::exact_ivf) {
      rrr::ClusterModel model;
      model.point_ids = std::move(ids);
      if (cfg.metric == Metric::euclidean) {
        for (auto id : model.point_ids) model.norm_terms.push_back(dot(corpus.row(id), corpus.row(id)));
      }
      index.clusters_[l] = std::move(model);
      return;
    }
    const DenseMatrix cluster_points = corpus.select_rows(members[l]);
    const DenseMatrix train_points = local_source.select_rows(train_sets[l]);
    rrr::RrrConfig local = cfg.rrr;
    local.seed = mix_seed(cfg.seed, kClusterSvdStream + l);
    const rrr::TrainingBlock block{cluster_points, train_points, &index.projection_, reduced};
    index.clusters_[l] = rrr::train_cluster(block, ids, local, cfg.metric, rotation_v);
  });

  if (cfg.rerank) index.corpus_ = std::move(corpus);
  return index;
}

std::vector<float> RrrIndex::prepare_query(std::span<const float> x) const {
  if (x.size() != dim()) {
    fail(ErrorKind::shape, "query dimension " + std::to_string(x.size()) + " vs index dimension " +
                               std::to_string(dim()));
  }
  std::vector<float> q(x.begin(), x.end());
  if (cfg_.metric == Metric::cosine) normalize(q);
  return q;
}

std::vector<std::uint64_t> RrrIndex::candidates(std::span<const float> x, std::size_t w) const {
  const std::vector<float> q = prepare_query(x);
  const std::vector<float> projected = linalg::vecmat(q, projection_);
  std::vector<std::uint64_t> ids;
  for (auto l : cluster::route(projected, centroids_, w, cluster_metric())) {
    ids.insert(ids.end(), clusters_[l].point_ids.begin(), clusters_[l].point_ids.end());
  }
  return ids;
}

QueryResult RrrIndex::query(std::span<const float> x, const QueryParams& p) const {
  if (p.k == 0 || p.t == 0) fail(ErrorKind::parameter, "k and t must be at least 1");
  if (p.rerank && p.k > p.t) {
    fail(ErrorKind::parameter, "k = " + std::to_string(p.k) + " exceeds t = " + std::to_string(p.t));
  }
  if (p.rerank && !has_corpus()) {
    fail(ErrorKind::parameter, "index was built without the corpus; re-ranking is unavailable");
  }
  const std::vector<float> q = prepare_query(x);
  const std::vector<float> projected = linalg::vecmat(q, projection_);
  const auto routes = cluster::route(projected, centroids_, p.w, cluster_metric());

  std::vector<Candidate> pool;
  for (auto l : routes) {
    const rrr::ClusterModel& model = clusters_[l];
    if (cfg_.scoring == ScoringMode::exact_ivf) {
      for (auto id : model.point_ids) pool.push_back({-dissimilarity(cfg_.metric, q, corpus_.row(id)), id});
      continue;
    }
    const std::vector<float> scores = rrr::score_cluster(projected, model, cfg_.metric);
    const bool lower_is_better = cfg_.metric == Metric::euclidean;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      pool.push_back({lower_is_better ? -scores[j] : scores[j], model.point_ids[j]});
    }
  }
  keep_best(pool, p.t);

  QueryResult result;
  if (p.rerank) {
    for (auto& c : pool) c.key = -dissimilarity(cfg_.metric, q, corpus_.row(c.id));
    keep_best(pool, p.k);
    for (const auto& c : pool) {
      result.ids.push_back(c.id);
      result.scores.push_back(-c.key);
    }
  } else {
    if (pool.size() > p.k) pool.resize(p.k);
    const float query_sq = dot(q, q);
    for (const auto& c : pool) {
      result.ids.push_back(c.id);
      switch (cfg_.metric) {
        case Metric::euclidean: result.scores.push_back(query_sq - c.key); break;
        case Metric::ip: result.scores.push_back(-c.key); break;
        case Metric::cosine: result.scores.push_back(1.0f - c.key); break;
      }
    }
  }
  result.truncated = result.ids.size() < p.k;
  return result;
}

std::vector<QueryResult> RrrIndex::query_batch(const DenseMatrix& queries, const QueryParams& p,
                                               std::size_t threads) const {
  std::vector<QueryResult> out(queries.rows());
  parallel_for(queries.rows(), threads, [&](std::size_t i) { out[i] = query(queries.row(i), p); });
  return out;
}

}  // namespace rrrann
