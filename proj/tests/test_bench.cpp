#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "rrrann/bench.hpp"
#include "rrrann/cluster.hpp"
#include "rrrann/error.hpp"

using namespace rrrann;
using namespace rrrann::bench;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("rrrann_test_" + name);
}

void write_raw(const std::filesystem::path& p, const std::vector<std::int32_t>& words) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(words.data()), static_cast<std::streamsize>(words.size() * 4));
}

Error error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e;
  }
  FAIL("expected an error");
  return Error(ErrorKind::internal, "");
}

}  // namespace

TEST_CASE("fvecs: empty file, single record, round trip") {
  const auto empty = temp_file("empty.fvecs");
  write_raw(empty, {});
  const auto m0 = load_fvecs(empty);
  CHECK(m0.rows() == 0);
  CHECK(m0.cols() == 0);

  const auto one = temp_file("one.fvecs");
  std::vector<std::int32_t> words{4};
  for (float v : {1.0f, 2.0f, 3.0f, 4.0f}) {
    std::int32_t w;
    std::memcpy(&w, &v, 4);
    words.push_back(w);
  }
  write_raw(one, words);
  CHECK(load_fvecs(one) == DenseMatrix{{1, 2, 3, 4}});

  std::mt19937 rng(1);
  const DenseMatrix m = oracle::normal_matrix(100, 7, rng);
  const auto path = temp_file("rt.fvecs");
  write_fvecs(path, m);
  CHECK(load_fvecs(path) == m);

  IdLists ids{{1, 2, 3}, {4, 5, 6}};
  const auto ipath = temp_file("rt.ivecs");
  write_ivecs(ipath, ids);
  CHECK(load_ivecs(ipath) == ids);
  for (const auto& p : {empty, one, path, ipath}) std::filesystem::remove(p);
}

TEST_CASE("fvecs: inconsistent dims and truncation name the record") {
  const auto p = temp_file("bad.fvecs");
  write_raw(p, {2, 0, 0, 3, 0, 0, 0});
  auto e = error_of([&] { load_fvecs(p); });
  CHECK(e.kind() == ErrorKind::format);
  CHECK(std::string(e.what()).find("record 1") != std::string::npos);

  write_raw(p, {2, 0, 0, 2, 0});
  e = error_of([&] { load_fvecs(p); });
  CHECK(e.kind() == ErrorKind::format);
  CHECK(std::string(e.what()).find("record 1") != std::string::npos);

  std::ofstream(p, std::ios::binary | std::ios::trunc).write("\x02\x00", 2);
  e = error_of([&] { load_ivecs(p); });
  CHECK(e.kind() == ErrorKind::format);
  CHECK(std::string(e.what()).find("record 0") != std::string::npos);
  std::filesystem::remove(p);

  CHECK(error_of([&] { load_fvecs("/nonexistent/x.fvecs"); }).kind() == ErrorKind::data);
}

TEST_CASE("brute_force_knn: self, two points, independent oracle, k bounds") {
  std::mt19937 rng(2);
  const DenseMatrix corpus = oracle::normal_matrix(50, 6, rng);
  const auto self = brute_force_knn(corpus, corpus, 1, Metric::euclidean);
  for (std::size_t i = 0; i < 50; ++i) CHECK(self[i][0] == static_cast<std::int32_t>(i));

  const DenseMatrix two{{0, 0}, {1, 1}};
  const DenseMatrix q{{0.9f, 0.8f}};
  CHECK(brute_force_knn(two, q, 2, Metric::euclidean)[0] == std::vector<std::int32_t>{1, 0});

  const DenseMatrix big = oracle::normal_matrix(500, 32, rng);
  const DenseMatrix queries = oracle::normal_matrix(40, 32, rng);
  for (bool ip : {false, true}) {
    const auto got = brute_force_knn(big, queries, 10, ip ? Metric::ip : Metric::euclidean, 2);
    for (std::size_t i = 0; i < queries.rows(); ++i) {
      const auto expected = oracle::knn(big, queries.row(i), 10, ip);
      CHECK(std::vector<int>(got[i].begin(), got[i].end()) == expected);
    }
  }

  const auto all = brute_force_knn(corpus, queries.left_columns(6), 50, Metric::euclidean);
  for (const auto& row : all) {
    std::set<std::int32_t> s(row.begin(), row.end());
    CHECK(s.size() == 50);
    CHECK(*s.begin() == 0);
    CHECK(*s.rbegin() == 49);
  }
  CHECK(error_of([&] { brute_force_knn(corpus, corpus, 51, Metric::euclidean); }).kind() == ErrorKind::parameter);
}

TEST_CASE("recall_at_k: definition and permutation invariance") {
  const std::vector<std::int32_t> truth{1, 2, 3, 4};
  CHECK(recall_at_k(std::span<const std::int32_t>(truth), truth, 4) == 1.0f);
  CHECK(recall_at_k(std::span<const std::int32_t>(std::vector<std::int32_t>{5, 6, 7, 8}), truth, 4) == 0.0f);
  CHECK(recall_at_k(std::span<const std::int32_t>(std::vector<std::int32_t>{4, 9, 2, 1}), truth, 4) == 0.75f);
  std::mt19937 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::int32_t> a(10), b(10);
    std::uniform_int_distribution<int> id(0, 20);
    for (auto& v : a) v = id(rng);
    std::iota(b.begin(), b.end(), id(rng));
    const float base = recall_at_k(std::span<const std::int32_t>(a), b, 10);
    std::shuffle(a.begin(), a.end(), rng);
    std::shuffle(b.begin(), b.end(), rng);
    CHECK(recall_at_k(std::span<const std::int32_t>(a), b, 10) == base);
  }
}

TEST_CASE("synth_dataset: determinism, gaussian mean, shifted training set") {
  SynthSpec spec;
  spec.m = 10000;
  spec.n_queries = 10;
  spec.d = 128;
  spec.seed = 5;
  const auto a = synth_dataset(spec);
  const auto b = synth_dataset(spec);
  CHECK(a.corpus == b.corpus);
  CHECK(a.queries == b.queries);
  for (std::size_t k = 0; k < 128; ++k) {
    double mean = 0.0;
    for (std::size_t i = 0; i < spec.m; ++i) mean += a.corpus(i, k);
    CHECK(std::abs(mean / spec.m) <= 0.05);
  }
  spec.kind = SynthKind::shifted;
  spec.m = 100;
  spec.n_train = 30;
  const auto s = synth_dataset(spec);
  REQUIRE(s.train.has_value());
  CHECK(s.train->rows() == 30);
  CHECK(error_of([] { parse_synth_kind("nope"); }).kind() == ErrorKind::parameter);
}

TEST_CASE("synth_dataset: clustered blobs are recoverable by kmeans") {
  SynthSpec spec;
  spec.m = 2000;
  spec.n_queries = 10;
  spec.d = 32;
  spec.kind = SynthKind::clustered;
  spec.blobs = 10;
  spec.seed = 6;
  const auto ds = synth_dataset(spec);
  const auto labels = synth_blob_labels(spec);
  const auto c = cluster::kmeans(ds.corpus, 10, cluster::ClusterMetric::euclidean, {50, 1});
  std::map<std::uint32_t, std::map<std::uint32_t, std::size_t>> votes;
  for (std::size_t i = 0; i < spec.m; ++i) ++votes[c.assignments[i]][labels[i]];
  std::size_t agree = 0;
  for (const auto& [cl, counts] : votes) {
    std::size_t best = 0;
    for (const auto& [l, n] : counts) best = std::max(best, n);
    agree += best;
  }
  CHECK(static_cast<double>(agree) / spec.m >= 0.99);
}

TEST_CASE("sweep grid parsing") {
  const auto g = parse_sweep_grid_string(R"(
[build]
clusters = [20, 40]
reduced_dim = 0
rank = [4]
quantize = false
balanced = 8
[query]
k = 10
w = [2, 4]
t = [20, 40, 80]
)");
  CHECK(g.build.clusters == std::vector<std::size_t>{20, 40});
  CHECK(g.build.reduced_dim == std::vector<std::size_t>{0});
  CHECK_FALSE(g.build.quantize);
  CHECK(g.build.balanced);
  CHECK(g.build.balance_delta == 8);
  CHECK(g.query.k == 10);
  CHECK(g.query.t.size() == 3);
  CHECK(error_of([] { parse_sweep_grid_string("[build\nclusters="); }).kind() == ErrorKind::parameter);
  CHECK(error_of([] { parse_sweep_grid_string("[query]\nw = []"); }).kind() == ErrorKind::parameter);
}

TEST_CASE("sweep: single row, monotone recall, min latency, failures recorded") {
  std::mt19937 rng(7);
  Dataset ds;
  ds.corpus = oracle::normal_matrix(1500, 16, rng);
  ds.queries = oracle::normal_matrix(40, 16, rng);
  SweepGrid one;
  one.build.clusters = {15};
  one.build.reduced_dim = {0};
  one.build.rank = {8};
  one.query.k = 10;
  one.query.w = {3};
  one.query.t = {30};
  const auto single = sweep(ds, one, 1);
  CHECK(single.rows.size() == 1);
  CHECK(single.rows[0].status == "ok");
  CHECK(single.rows[0].recall >= 0.0);
  CHECK(single.rows[0].recall <= 1.0);

  SweepGrid grid = one;
  grid.query.t = {10, 20, 40, 80, 160};
  const auto rep = sweep(ds, grid, 5);
  REQUIRE(rep.rows.size() == 5);
  for (std::size_t i = 1; i < rep.rows.size(); ++i) CHECK(rep.rows[i].recall >= rep.rows[i - 1].recall);
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    REQUIRE(rep.run_latencies_us[i].size() == 5);
    for (double run : rep.run_latencies_us[i]) CHECK(rep.rows[i].latency_us <= run);
    CHECK(rep.rows[i].qps == doctest::Approx(1e6 / rep.rows[i].latency_us));
  }

  SweepGrid bad = one;
  bad.build.rank = {8, 99};
  const auto mixed = sweep(ds, bad, 1);
  REQUIRE(mixed.rows.size() == 2);
  CHECK(mixed.rows[0].status == "ok");
  CHECK(mixed.rows[1].status.find("build failed") != std::string::npos);

  std::ostringstream csv;
  write_csv(csv, mixed);
  std::istringstream lines(csv.str());
  std::string header;
  std::getline(lines, header);
  CHECK(header == kSweepCsvHeader);
  std::size_t count = 0;
  for (std::string line; std::getline(lines, line);) {
    ++count;
    CHECK(std::count(line.begin(), line.end(), ',') == 10);
  }
  CHECK(count == 2);

  const auto again = sweep(ds, one, 1);
  CHECK(again.rows[0].recall == single.rows[0].recall);
  CHECK(again.rows[0].index_bytes == single.rows[0].index_bytes);
}
