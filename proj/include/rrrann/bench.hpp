#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rrrann/index.hpp"
#include "rrrann/matrix.hpp"
#include "rrrann/metric.hpp"

namespace rrrann::bench {

using IdLists = std::vector<std::vector<std::int32_t>>;

struct Dataset {
  DenseMatrix corpus;
  DenseMatrix queries;
  std::optional<DenseMatrix> train;  // sample of the query distribution, if any
  Metric metric = Metric::euclidean;
  std::optional<IdLists> ground_truth;
};

// .fvecs / .ivecs: each record is a little-endian i32 dimension followed by
// that many f32 (or i32) values.
DenseMatrix load_fvecs(const std::filesystem::path& path);
IdLists load_ivecs(const std::filesystem::path& path);
void write_fvecs(const std::filesystem::path& path, const DenseMatrix& m);
void write_ivecs(const std::filesystem::path& path, const IdLists& ids);

/// Exact k nearest neighbours, ties to the lower id. For cosine both sides
/// are normalized first.
IdLists brute_force_knn(const DenseMatrix& corpus, const DenseMatrix& queries, std::size_t k,
                        Metric metric, std::size_t threads = 1);

/// |result[:k] intersect truth[:k]| / k.
float recall_at_k(std::span<const std::int32_t> result, std::span<const std::int32_t> truth,
                  std::size_t k);
float recall_at_k(std::span<const std::uint64_t> result, std::span<const std::int32_t> truth,
                  std::size_t k);
/// Mean recall over a batch of results.
double mean_recall(const std::vector<QueryResult>& results, const IdLists& truth, std::size_t k);

enum class SynthKind {
  gaussian,   // i.i.d. N(0, 1)
  clustered,  // isotropic blobs around random centres
  shifted,    // corpus N(0, 1); queries from a rotated, shifted, anisotropic Gaussian
};

SynthKind parse_synth_kind(const std::string& name);

struct SynthSpec {
  std::size_t m = 10000;
  std::size_t n_queries = 1000;
  std::size_t n_train = 0;  // extra sample of the query distribution
  std::size_t d = 128;
  SynthKind kind = SynthKind::gaussian;
  std::size_t blobs = 10;
  std::uint64_t seed = 0;
};

Dataset synth_dataset(const SynthSpec& spec);
/// Blob label of each corpus point for clustered data (empty otherwise).
std::vector<std::uint32_t> synth_blob_labels(const SynthSpec& spec);

struct BuildGrid {
  std::vector<std::size_t> clusters;
  std::vector<std::size_t> reduced_dim;  // 0 disables reduction
  std::vector<std::size_t> rank;
  bool quantize = true;
  bool rerank = true;
  bool balanced = false;
  std::size_t balance_delta = 16;
  std::uint64_t seed = 0;
};

struct QueryGrid {
  std::size_t k = 100;
  std::vector<std::size_t> w;
  std::vector<std::size_t> t;
};

struct SweepGrid {
  BuildGrid build;
  QueryGrid query;
};

/// Reads a TOML sweep description (see README for the schema).
SweepGrid parse_sweep_grid(const std::filesystem::path& path);
SweepGrid parse_sweep_grid_string(const std::string& text);

struct SweepRow {
  std::size_t clusters = 0;
  std::size_t reduced_dim = 0;
  std::size_t rank = 0;
  std::size_t w = 0;
  std::size_t t = 0;
  std::size_t k = 0;
  double recall = 0.0;
  double latency_us = 0.0;  // best-of-repeats mean per-query latency
  double qps = 0.0;
  std::size_t index_bytes = 0;
  std::string status = "ok";
};

struct SweepReport {
  std::vector<SweepRow> rows;
  /// Every individual run's per-query latency, row-major by sweep row.
  std::vector<std::vector<double>> run_latencies_us;
};

SweepReport sweep(const Dataset& dataset, const SweepGrid& grid, std::size_t repeats);

inline constexpr const char* kSweepCsvHeader =
    "L,s,r,w,t,k,recall,latency_us,qps,index_bytes,status";
void write_csv(std::ostream& out, const SweepReport& report);
void write_gnuplot(std::ostream& out, const std::string& csv_path);

/// Times `p` over all queries, `repeats` times; returns per-run wall seconds.
std::vector<double> time_queries(const RrrIndex& index, const DenseMatrix& queries,
                                 const QueryParams& p, std::size_t repeats,
                                 std::vector<QueryResult>* results = nullptr);

}  // namespace rrrann::bench
