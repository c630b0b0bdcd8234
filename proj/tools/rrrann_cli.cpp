// rrrann command-line front end: build, query, ground truth, sweeps and
// synthetic data.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "rrrann/bench.hpp"
#include "rrrann/error.hpp"
#include "rrrann/index.hpp"

namespace {

using namespace rrrann;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitInternal = 4;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parameter:
    case ErrorKind::shape:
      return kExitUsage;
    case ErrorKind::data:
    case ErrorKind::format:
    case ErrorKind::version:
      return kExitData;
    case ErrorKind::internal:
      break;
  }
  return kExitInternal;
}

struct BuildArgs {
  std::string data;
  std::string metric = "euclidean";
  std::size_t clusters = 0;
  std::size_t rank = 32;
  std::size_t reduced_dim = 0;
  bool no_rerank = false;
  bool no_quantize = false;
  std::size_t balanced = 0;
  std::string train = "corpus";
  std::string train_local = "routed";
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::string out;
};

struct GtArgs {
  std::string data;
  std::string queries;
  std::size_t k = 100;
  std::string metric = "euclidean";
  std::string out;
};

struct QueryArgs {
  std::string index;
  std::string queries;
  std::size_t k = 100;
  std::size_t w = 8;
  std::size_t t = 100;
  bool no_rerank = false;
  std::string gt;
  std::string csv;
  std::string out;
  std::size_t repeats = 1;
};

struct SweepArgs {
  std::string data;
  std::string queries;
  std::string train;
  std::string gt;
  std::string grid;
  std::string metric = "euclidean";
  std::size_t repeats = 3;
  std::string csv;
  std::string gnuplot;
};

struct SynthArgs {
  std::size_t m = 10000;
  std::size_t q = 1000;
  std::size_t n_train = 0;
  std::size_t d = 64;
  std::string kind = "gaussian";
  std::size_t blobs = 10;
  std::uint64_t seed = 0;
  std::string out;
};

int run_build(const BuildArgs& a) {
  const DenseMatrix corpus = bench::load_fvecs(a.data);
  IndexConfig cfg;
  cfg.metric = parse_metric(a.metric);
  cfg.num_clusters = a.clusters;
  cfg.rrr.rank = a.rank;
  if (a.reduced_dim > 0) cfg.rrr.reduced_dim = a.reduced_dim;
  cfg.rrr.quantize = !a.no_quantize;
  cfg.rerank = !a.no_rerank;
  cfg.balanced = a.balanced > 0;
  if (cfg.balanced) cfg.balance_delta = a.balanced;
  cfg.seed = a.seed;
  cfg.rrr.seed = a.seed;
  cfg.threads = a.threads;
  if (a.train_local == "cluster") {
    cfg.rrr.local_train = rrr::LocalTraining::cluster_only;
  } else if (a.train_local != "routed") {
    fail(ErrorKind::parameter, "--train-local must be 'routed' or 'cluster'");
  }
  std::optional<DenseMatrix> train;
  if (a.train != "corpus") {
    train = bench::load_fvecs(a.train);
    cfg.rrr.train_source = rrr::TrainSource::query_sample;
  }
  const RrrIndex index = RrrIndex::build(corpus, train, cfg);
  index.save(a.out);
  const auto fp = index.footprint();
  std::cout << "built index: m=" << index.size() << " d=" << index.dim() << " s=" << index.projected_dim()
            << " L=" << index.num_clusters() << " bytes=" << fp.total_bytes << '\n';
  return 0;
}

int run_gt(const GtArgs& a) {
  const DenseMatrix corpus = bench::load_fvecs(a.data);
  const DenseMatrix queries = bench::load_fvecs(a.queries);
  bench::write_ivecs(a.out, bench::brute_force_knn(corpus, queries, a.k, parse_metric(a.metric)));
  return 0;
}

int run_query(const QueryArgs& a) {
  const RrrIndex index = RrrIndex::load(a.index);
  const DenseMatrix queries = bench::load_fvecs(a.queries);
  const QueryParams p{a.k, a.w, a.t, !a.no_rerank};
  std::vector<QueryResult> results;
  const auto seconds = bench::time_queries(index, queries, p, a.repeats, &results);
  const double best = *std::min_element(seconds.begin(), seconds.end());
  const double nq = static_cast<double>(std::max<std::size_t>(1, queries.rows()));
  std::cout << "queries=" << queries.rows() << " latency_us=" << best / nq * 1e6
            << " qps=" << (best > 0 ? nq / best : 0.0);
  if (!a.gt.empty()) {
    std::cout << " recall=" << bench::mean_recall(results, bench::load_ivecs(a.gt), a.k);
  }
  std::cout << '\n';
  if (!a.csv.empty()) {
    bench::SweepRow row;
    row.clusters = index.num_clusters();
    row.reduced_dim = index.projected_dim() == index.dim() ? 0 : index.projected_dim();
    row.rank = index.clusters().empty() ? 0 : index.clusters().front().rank();
    row.w = a.w;
    row.t = a.t;
    row.k = a.k;
    row.recall = a.gt.empty() ? 0.0 : bench::mean_recall(results, bench::load_ivecs(a.gt), a.k);
    row.latency_us = best / nq * 1e6;
    row.qps = best > 0 ? nq / best : 0.0;
    row.index_bytes = index.footprint().total_bytes;
    if (a.gt.empty()) row.status = "no ground truth";
    bench::SweepReport report;
    report.rows.push_back(row);
    std::ofstream out(a.csv);
    if (!out) fail(ErrorKind::data, "cannot open '" + a.csv + "' for writing");
    bench::write_csv(out, report);
  }
  if (!a.out.empty()) {
    bench::IdLists ids;
    for (const auto& r : results) {
      std::vector<std::int32_t> row(a.k, -1);
      for (std::size_t i = 0; i < r.ids.size() && i < a.k; ++i) row[i] = static_cast<std::int32_t>(r.ids[i]);
      ids.push_back(std::move(row));
    }
    bench::write_ivecs(a.out, ids);
  }
  return 0;
}

int run_sweep(const SweepArgs& a) {
  bench::Dataset ds;
  ds.corpus = bench::load_fvecs(a.data);
  ds.queries = bench::load_fvecs(a.queries);
  ds.metric = parse_metric(a.metric);
  if (!a.train.empty()) ds.train = bench::load_fvecs(a.train);
  const auto grid = bench::parse_sweep_grid(a.grid);
  if (!a.gt.empty()) {
    if (std::filesystem::exists(a.gt)) {
      ds.ground_truth = bench::load_ivecs(a.gt);
    } else {
      ds.ground_truth = bench::brute_force_knn(ds.corpus, ds.queries, grid.query.k, ds.metric);
      bench::write_ivecs(a.gt, *ds.ground_truth);
    }
  }
  const auto report = bench::sweep(ds, grid, a.repeats);
  if (a.csv.empty() || a.csv == "-") {
    bench::write_csv(std::cout, report);
  } else {
    std::ofstream out(a.csv);
    if (!out) fail(ErrorKind::data, "cannot open '" + a.csv + "' for writing");
    bench::write_csv(out, report);
  }
  if (!a.gnuplot.empty()) {
    std::ofstream out(a.gnuplot);
    if (!out) fail(ErrorKind::data, "cannot open '" + a.gnuplot + "' for writing");
    bench::write_gnuplot(out, a.csv.empty() ? "sweep.csv" : a.csv);
  }
  return 0;
}

int run_synth(const SynthArgs& a) {
  bench::SynthSpec spec;
  spec.m = a.m;
  spec.n_queries = a.q;
  spec.n_train = a.n_train;
  spec.d = a.d;
  spec.kind = bench::parse_synth_kind(a.kind);
  spec.blobs = a.blobs;
  spec.seed = a.seed;
  const auto ds = bench::synth_dataset(spec);
  bench::write_fvecs(a.out + "_base.fvecs", ds.corpus);
  bench::write_fvecs(a.out + "_query.fvecs", ds.queries);
  if (ds.train) bench::write_fvecs(a.out + "_learn.fvecs", *ds.train);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rrrann: clustered ANN search with reduced-rank regression scoring"};
  app.require_subcommand(1);

  BuildArgs build;
  auto* b = app.add_subcommand("build", "build an index from an fvecs corpus");
  b->add_option("--data", build.data, "corpus .fvecs")->required();
  b->add_option("--metric", build.metric, "euclidean, ip or cosine");
  b->add_option("--clusters", build.clusters, "number of clusters (0 = auto)");
  b->add_option("--rank", build.rank, "regression rank r");
  b->add_option("--reduced-dim", build.reduced_dim, "reduced dimension s (0 = off)");
  b->add_flag("--no-rerank", build.no_rerank, "drop the corpus; no exact re-ranking");
  b->add_flag("--no-quantize", build.no_quantize, "keep f32 factors");
  b->add_option("--balanced", build.balanced, "balanced clustering with slack DELTA (0 = off)");
  b->add_option("--train", build.train, "training queries .fvecs, or 'corpus'");
  b->add_option("--train-local", build.train_local, "routed or cluster");
  b->add_option("--seed", build.seed);
  b->add_option("--threads", build.threads);
  b->add_option("--out", build.out, "index file")->required();

  GtArgs gt;
  auto* g = app.add_subcommand("gt", "exact k-NN ground truth");
  g->add_option("--data", gt.data)->required();
  g->add_option("--queries", gt.queries)->required();
  g->add_option("--k", gt.k);
  g->add_option("--metric", gt.metric);
  g->add_option("--out", gt.out, "output .ivecs")->required();

  QueryArgs query;
  auto* q = app.add_subcommand("query", "query an index");
  q->add_option("--index", query.index)->required();
  q->add_option("--queries", query.queries)->required();
  q->add_option("--k", query.k);
  q->add_option("--w", query.w, "clusters searched");
  q->add_option("--t", query.t, "candidates kept before re-ranking");
  q->add_flag("--no-rerank", query.no_rerank);
  q->add_option("--gt", query.gt, "ground truth .ivecs; prints recall");
  q->add_option("--csv", query.csv, "write a one-row CSV summary");
  q->add_option("--out", query.out, "result ids .ivecs");
  q->add_option("--repeats", query.repeats);

  SweepArgs sw;
  auto* s = app.add_subcommand("sweep", "parameter sweep to CSV");
  s->add_option("--data", sw.data)->required();
  s->add_option("--queries", sw.queries)->required();
  s->add_option("--train", sw.train, "training queries .fvecs");
  s->add_option("--gt", sw.gt, "ground truth .ivecs; computed and cached when missing");
  s->add_option("--grid", sw.grid, "grid .toml")->required();
  s->add_option("--metric", sw.metric);
  s->add_option("--repeats", sw.repeats);
  s->add_option("--csv", sw.csv, "output CSV (default stdout)");
  s->add_option("--gnuplot", sw.gnuplot, "write a gnuplot script");

  SynthArgs sy;
  auto* y = app.add_subcommand("synth", "generate a synthetic dataset");
  y->add_option("--m", sy.m);
  y->add_option("--q", sy.q);
  y->add_option("--train", sy.n_train, "training query count");
  y->add_option("--d", sy.d);
  y->add_option("--kind", sy.kind, "gaussian, clustered or shifted");
  y->add_option("--blobs", sy.blobs);
  y->add_option("--seed", sy.seed);
  y->add_option("--out", sy.out, "output prefix")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*b) return run_build(build);
    if (*g) return run_gt(gt);
    if (*q) return run_query(query);
    if (*s) return run_sweep(sw);
    if (*y) return run_synth(sy);
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitUsage;
}
