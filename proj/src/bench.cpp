#include "rrrann/bench.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "rrrann/error.hpp"
#include "rrrann/linalg.hpp"
#include "rrrann/parallel.hpp"

namespace rrrann::bench {
namespace {

template <typename T>
std::vector<std::vector<T>> read_vecs(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::data, "cannot open '" + path.string() + "'");
  std::vector<std::vector<T>> records;
  std::size_t expected_dim = 0;
  for (std::size_t record = 0;; ++record) {
    std::int32_t dim = 0;
    in.read(reinterpret_cast<char*>(&dim), sizeof(dim));
    if (in.gcount() == 0 && in.eof()) break;
    if (in.gcount() != sizeof(dim)) {
      fail(ErrorKind::format, path.string() + ": truncated dimension field in record " + std::to_string(record));
    }
    if (dim < 0) fail(ErrorKind::format, path.string() + ": negative dimension in record " + std::to_string(record));
    if (record == 0) {
      expected_dim = static_cast<std::size_t>(dim);
    } else if (static_cast<std::size_t>(dim) != expected_dim) {
      fail(ErrorKind::format, path.string() + ": record " + std::to_string(record) + " has dimension " +
                                  std::to_string(dim) + ", expected " + std::to_string(expected_dim));
    }
    std::vector<T> values(static_cast<std::size_t>(dim));
    const auto bytes = static_cast<std::streamsize>(values.size() * sizeof(T));
    in.read(reinterpret_cast<char*>(values.data()), bytes);
    if (in.gcount() != bytes) {
      fail(ErrorKind::format, path.string() + ": truncated payload in record " + std::to_string(record));
    }
    records.push_back(std::move(values));
  }
  return records;
}

template <typename T>
void write_vecs(const std::filesystem::path& path, std::size_t rows, std::size_t dim,
                const auto& row_of) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::data, "cannot open '" + path.string() + "' for writing");
  const auto d = static_cast<std::int32_t>(dim);
  for (std::size_t i = 0; i < rows; ++i) {
    std::span<const T> row = row_of(i);
    out.write(reinterpret_cast<const char*>(&d), sizeof(d));
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size_bytes()));
  }
  if (!out) fail(ErrorKind::data, "failed writing '" + path.string() + "'");
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

DenseMatrix blob_points(const DenseMatrix& centres, std::size_t count, std::size_t offset,
                        std::uint64_t seed) {
  DenseMatrix pts = linalg::gaussian_matrix(count, centres.cols(), seed);
  for (std::size_t i = 0; i < count; ++i) {
    auto c = centres.row((i + offset) % centres.rows());
    auto p = pts.row(i);
    for (std::size_t k = 0; k < p.size(); ++k) p[k] += c[k];
  }
  return pts;
}

// Samples of x = R (D z) + mu: a few high-variance directions, rotated and
// shifted away from the origin.
DenseMatrix shifted_points(std::size_t count, std::size_t d, std::uint64_t dist_seed,
                           std::uint64_t sample_seed) {
  const DenseMatrix rotation = linalg::random_rotation(d, stream_seed(dist_seed, 1));
  const DenseMatrix shift = linalg::gaussian_matrix(1, d, stream_seed(dist_seed, 2));
  DenseMatrix z = linalg::gaussian_matrix(count, d, sample_seed);
  const std::size_t strong = std::max<std::size_t>(1, d / 8);
  for (std::size_t i = 0; i < count; ++i) {
    auto row = z.row(i);
    for (std::size_t k = 0; k < d; ++k) row[k] *= k < strong ? 3.0f : 0.3f;
  }
  DenseMatrix out = linalg::matmul(z, rotation.transposed());
  for (std::size_t i = 0; i < count; ++i) {
    auto row = out.row(i);
    for (std::size_t k = 0; k < d; ++k) row[k] += shift(0, k);
  }
  return out;
}

std::vector<std::size_t> read_size_list(const toml::table& table, std::string_view key,
                                        std::vector<std::size_t> fallback) {
  const toml::node* node = table.get(key);
  if (node == nullptr) return fallback;
  std::vector<std::size_t> out;
  if (const auto* arr = node->as_array()) {
    for (const auto& item : *arr) {
      const auto v = item.value<std::int64_t>();
      if (!v || *v < 0) fail(ErrorKind::parameter, "grid key '" + std::string(key) + "' must hold non-negative integers");
      out.push_back(static_cast<std::size_t>(*v));
    }
  } else if (const auto v = node->value<std::int64_t>(); v && *v >= 0) {
    out.push_back(static_cast<std::size_t>(*v));
  } else {
    fail(ErrorKind::parameter, "grid key '" + std::string(key) + "' must be an integer or array");
  }
  if (out.empty()) fail(ErrorKind::parameter, "grid key '" + std::string(key) + "' is empty");
  return out;
}

}  // namespace

DenseMatrix load_fvecs(const std::filesystem::path& path) {
  auto records = read_vecs<float>(path);
  if (records.empty()) return {};
  const std::size_t d = records.front().size();
  std::vector<float> data;
  data.reserve(records.size() * d);
  for (const auto& r : records) data.insert(data.end(), r.begin(), r.end());
  return DenseMatrix(records.size(), d, std::move(data));
}

IdLists load_ivecs(const std::filesystem::path& path) { return read_vecs<std::int32_t>(path); }

void write_fvecs(const std::filesystem::path& path, const DenseMatrix& m) {
  write_vecs<float>(path, m.rows(), m.cols(), [&](std::size_t i) { return m.row(i); });
}

void write_ivecs(const std::filesystem::path& path, const IdLists& ids) {
  const std::size_t dim = ids.empty() ? 0 : ids.front().size();
  for (const auto& r : ids) {
    if (r.size() != dim) fail(ErrorKind::shape, "ivecs rows must share one length");
  }
  write_vecs<std::int32_t>(path, ids.size(), dim,
                           [&](std::size_t i) { return std::span<const std::int32_t>(ids[i]); });
}

IdLists brute_force_knn(const DenseMatrix& corpus_in, const DenseMatrix& queries_in, std::size_t k,
                        Metric metric, std::size_t threads) {
  if (k == 0 || k > corpus_in.rows()) {
    fail(ErrorKind::parameter, "k = " + std::to_string(k) + " must be in [1, " +
                                   std::to_string(corpus_in.rows()) + "]");
  }
  if (queries_in.rows() > 0 && queries_in.cols() != corpus_in.cols()) {
    fail(ErrorKind::shape, "query and corpus dimensions differ");
  }
  DenseMatrix corpus = corpus_in;
  DenseMatrix queries = queries_in;
  if (metric == Metric::cosine) {
    for (std::size_t i = 0; i < corpus.rows(); ++i) normalize(corpus.row(i));
    for (std::size_t i = 0; i < queries.rows(); ++i) normalize(queries.row(i));
  }
  IdLists out(queries.rows());
  parallel_for(queries.rows(), threads, [&](std::size_t q) {
    std::vector<float> dist(corpus.rows());
    for (std::size_t j = 0; j < corpus.rows(); ++j) dist[j] = dissimilarity(metric, queries.row(q), corpus.row(j));
    std::vector<std::int32_t> ids(corpus.rows());
    std::iota(ids.begin(), ids.end(), 0);
    auto closer = [&](std::int32_t a, std::int32_t b) {
      return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
    };
    std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(), closer);
    ids.resize(k);
    out[q] = std::move(ids);
  });
  return out;
}

float recall_at_k(std::span<const std::int32_t> result, std::span<const std::int32_t> truth,
                  std::size_t k) {
  if (k == 0) return 0.0f;
  if (truth.size() < k) fail(ErrorKind::parameter, "ground truth holds fewer than k ids");
  std::vector<std::int32_t> expected(truth.begin(), truth.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(expected.begin(), expected.end());
  std::vector<std::int32_t> got(result.begin(), result.begin() + static_cast<std::ptrdiff_t>(std::min(k, result.size())));
  std::sort(got.begin(), got.end());
  got.erase(std::unique(got.begin(), got.end()), got.end());
  std::size_t hits = 0;
  for (auto id : got) hits += std::binary_search(expected.begin(), expected.end(), id) ? 1 : 0;
  return static_cast<float>(hits) / static_cast<float>(k);
}

float recall_at_k(std::span<const std::uint64_t> result, std::span<const std::int32_t> truth,
                  std::size_t k) {
  std::vector<std::int32_t> ids(result.size());
  std::transform(result.begin(), result.end(), ids.begin(),
                 [](std::uint64_t v) { return static_cast<std::int32_t>(v); });
  return recall_at_k(std::span<const std::int32_t>(ids), truth, k);
}

double mean_recall(const std::vector<QueryResult>& results, const IdLists& truth, std::size_t k) {
  if (results.size() > truth.size()) fail(ErrorKind::shape, "more results than ground-truth rows");
  if (results.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    total += recall_at_k(std::span<const std::uint64_t>(results[i].ids), truth[i], k);
  }
  return total / static_cast<double>(results.size());
}

SynthKind parse_synth_kind(const std::string& name) {
  if (name == "gaussian") return SynthKind::gaussian;
  if (name == "clustered" || name == "blobs") return SynthKind::clustered;
  if (name == "shifted" || name == "ood") return SynthKind::shifted;
  fail(ErrorKind::parameter, "unknown dataset kind '" + name + "'");
}

Dataset synth_dataset(const SynthSpec& spec) {
  if (spec.d == 0) fail(ErrorKind::parameter, "dimension must be at least 1");
  Dataset ds;
  const auto corpus_seed = stream_seed(spec.seed, 1);
  const auto query_seed = stream_seed(spec.seed, 2);
  const auto train_seed = stream_seed(spec.seed, 3);
  switch (spec.kind) {
    case SynthKind::gaussian:
      ds.corpus = linalg::gaussian_matrix(spec.m, spec.d, corpus_seed);
      ds.queries = linalg::gaussian_matrix(spec.n_queries, spec.d, query_seed);
      if (spec.n_train > 0) ds.train = linalg::gaussian_matrix(spec.n_train, spec.d, train_seed);
      break;
    case SynthKind::clustered: {
      if (spec.blobs == 0) fail(ErrorKind::parameter, "clustered data needs at least one blob");
      DenseMatrix centres = linalg::gaussian_matrix(spec.blobs, spec.d, stream_seed(spec.seed, 4));
      for (float& v : centres.values()) v *= 4.0f;
      ds.corpus = blob_points(centres, spec.m, 0, corpus_seed);
      ds.queries = blob_points(centres, spec.n_queries, 0, query_seed);
      if (spec.n_train > 0) ds.train = blob_points(centres, spec.n_train, 0, train_seed);
      break;
    }
    case SynthKind::shifted: {
      const auto dist_seed = stream_seed(spec.seed, 5);
      ds.corpus = linalg::gaussian_matrix(spec.m, spec.d, corpus_seed);
      ds.queries = shifted_points(spec.n_queries, spec.d, dist_seed, query_seed);
      if (spec.n_train > 0) ds.train = shifted_points(spec.n_train, spec.d, dist_seed, train_seed);
      break;
    }
  }
  return ds;
}

std::vector<std::uint32_t> synth_blob_labels(const SynthSpec& spec) {
  if (spec.kind != SynthKind::clustered) return {};
  std::vector<std::uint32_t> labels(spec.m);
  for (std::size_t i = 0; i < spec.m; ++i) labels[i] = static_cast<std::uint32_t>(i % spec.blobs);
  return labels;
}

SweepGrid parse_sweep_grid_string(const std::string& text) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    fail(ErrorKind::parameter, std::string("grid file: ") + std::string(e.description()));
  }
  SweepGrid grid;
  const toml::table empty;
  const toml::table& build = root["build"].as_table() ? *root["build"].as_table() : empty;
  const toml::table& query = root["query"].as_table() ? *root["query"].as_table() : empty;
  grid.build.clusters = read_size_list(build, "clusters", {0});
  grid.build.reduced_dim = read_size_list(build, "reduced_dim", {0});
  grid.build.rank = read_size_list(build, "rank", {32});
  grid.build.quantize = build["quantize"].value_or(true);
  grid.build.rerank = build["rerank"].value_or(true);
  const auto delta = build["balanced"].value_or<std::int64_t>(0);
  grid.build.balanced = delta > 0;
  grid.build.balance_delta = delta > 0 ? static_cast<std::size_t>(delta) : 16;
  grid.build.seed = static_cast<std::uint64_t>(build["seed"].value_or<std::int64_t>(0));
  grid.query.k = static_cast<std::size_t>(query["k"].value_or<std::int64_t>(100));
  grid.query.w = read_size_list(query, "w", {8});
  grid.query.t = read_size_list(query, "t", {100});
  return grid;
}

SweepGrid parse_sweep_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::data, "cannot open grid file '" + path.string() + "'");
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_sweep_grid_string(text);
}

std::vector<double> time_queries(const RrrIndex& index, const DenseMatrix& queries,
                                 const QueryParams& p, std::size_t repeats,
                                 std::vector<QueryResult>* results) {
  std::vector<double> seconds;
  for (std::size_t run = 0; run < std::max<std::size_t>(1, repeats); ++run) {
    std::vector<QueryResult> out(queries.rows());
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < queries.rows(); ++i) out[i] = index.query(queries.row(i), p);
    const auto stop = std::chrono::steady_clock::now();
    seconds.push_back(std::chrono::duration<double>(stop - start).count());
    if (run == 0 && results != nullptr) *results = std::move(out);
  }
  return seconds;
}

SweepReport sweep(const Dataset& dataset, const SweepGrid& grid, std::size_t repeats) {
  const auto& bg = grid.build;
  const auto& qg = grid.query;
  if (bg.clusters.empty() || bg.reduced_dim.empty() || bg.rank.empty() || qg.w.empty() || qg.t.empty()) {
    fail(ErrorKind::parameter, "sweep grids must be nonempty");
  }
  const IdLists truth = dataset.ground_truth
                            ? *dataset.ground_truth
                            : brute_force_knn(dataset.corpus, dataset.queries, qg.k, dataset.metric);
  const double nq = static_cast<double>(std::max<std::size_t>(1, dataset.queries.rows()));

  SweepReport report;
  for (auto clusters : bg.clusters) {
    for (auto s : bg.reduced_dim) {
      for (auto r : bg.rank) {
        IndexConfig cfg;
        cfg.metric = dataset.metric;
        cfg.num_clusters = clusters;
        cfg.rrr.rank = r;
        if (s > 0) cfg.rrr.reduced_dim = s;
        cfg.rrr.quantize = bg.quantize;
        cfg.rrr.train_source = dataset.train ? rrr::TrainSource::query_sample : rrr::TrainSource::corpus;
        cfg.rerank = bg.rerank;
        cfg.balanced = bg.balanced;
        cfg.balance_delta = bg.balance_delta;
        cfg.seed = bg.seed;

        std::optional<RrrIndex> index;
        std::string build_error;
        std::size_t bytes = 0;
        try {
          index = RrrIndex::build(dataset.corpus, dataset.train, cfg);
          bytes = index->footprint().total_bytes;
        } catch (const std::exception& e) {
          build_error = e.what();
        }
        for (auto w : qg.w) {
          for (auto t : qg.t) {
            SweepRow row;
            row.clusters = index ? index->num_clusters() : clusters;
            row.reduced_dim = s;
            row.rank = r;
            row.w = w;
            row.t = t;
            row.k = qg.k;
            row.index_bytes = bytes;
            std::vector<double> latencies;
            if (!index) {
              row.status = "build failed: " + build_error;
            } else {
              try {
                const QueryParams p{qg.k, w, t, bg.rerank};
                std::vector<QueryResult> results;
                const auto seconds = time_queries(*index, dataset.queries, p, repeats, &results);
                const double best = *std::min_element(seconds.begin(), seconds.end());
                for (double sec : seconds) latencies.push_back(sec / nq * 1e6);
                row.recall = mean_recall(results, truth, qg.k);
                row.latency_us = best / nq * 1e6;
                row.qps = best > 0.0 ? nq / best : 0.0;
              } catch (const std::exception& e) {
                row.status = std::string("query failed: ") + e.what();
              }
            }
            report.rows.push_back(row);
            report.run_latencies_us.push_back(std::move(latencies));
          }
        }
      }
    }
  }
  return report;
}

void write_csv(std::ostream& out, const SweepReport& report) {
  out << kSweepCsvHeader << '\n';
  for (const auto& row : report.rows) {
    std::string status = row.status;
    std::replace(status.begin(), status.end(), ',', ';');
    std::replace(status.begin(), status.end(), '\n', ' ');
    out << row.clusters << ',' << row.reduced_dim << ',' << row.rank << ',' << row.w << ',' << row.t << ','
        << row.k << ',' << std::fixed << std::setprecision(6) << row.recall << ',' << std::setprecision(3)
        << row.latency_us << ',' << std::setprecision(1) << row.qps << ',' << row.index_bytes << ','
        << status << '\n';
    out.unsetf(std::ios::floatfield);
  }
}

void write_gnuplot(std::ostream& out, const std::string& csv_path) {
  out << "set datafile separator ','\n"
      << "set key autotitle columnhead\n"
      << "set logscale y\n"
      << "set xlabel 'recall'\n"
      << "set ylabel 'QPS'\n"
      << "set grid\n"
      << "plot '" << csv_path << "' using 7:9 with points pointtype 7 title 'sweep'\n";
}

}  // namespace rrrann::bench
