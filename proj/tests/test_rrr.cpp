#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "rrrann/error.hpp"
#include "rrrann/linalg.hpp"
#include "rrrann/rrr.hpp"

using namespace rrrann;
using namespace rrrann::rrr;

namespace {

RrrConfig plain_config(std::size_t rank) {
  RrrConfig cfg;
  cfg.rank = rank;
  cfg.quantize = false;
  return cfg;
}

ClusterModel fit(const DenseMatrix& c, const DenseMatrix& x, const RrrConfig& cfg, Metric metric = Metric::ip) {
  std::vector<std::uint64_t> ids(c.rows());
  std::iota(ids.begin(), ids.end(), 0);
  return train_cluster(TrainingBlock{c, x, nullptr, false}, ids, cfg, metric, DenseMatrix{});
}

DenseMatrix beta_of(const ClusterModel& m) { return linalg::matmul(factor_dense(m.a), factor_dense(m.b)); }

double max_abs(const std::vector<double>& v) {
  double a = 0.0;
  for (double x : v) a = std::max(a, std::abs(x));
  return a;
}

std::vector<double> ranks_of(const std::vector<float>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size(); ++i) r[order[i]] = static_cast<double>(i);
  return r;
}

double spearman(const std::vector<float>& a, const std::vector<float>& b) {
  const auto ra = ranks_of(a), rb = ranks_of(b);
  const double n = static_cast<double>(a.size());
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
  return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

}  // namespace

TEST_CASE("config validation") {
  RrrConfig cfg;
  cfg.rank = 0;
  CHECK_THROWS_AS(cfg.validate(8), Error);
  cfg.rank = 9;
  CHECK_THROWS_AS(cfg.validate(8), Error);
  cfg.rank = 4;
  cfg.reduced_dim = 3;
  CHECK_THROWS_AS(cfg.validate(8), Error);
  cfg.reduced_dim = 4;
  CHECK_NOTHROW(cfg.validate(8));
  cfg.train_w = 0;
  CHECK_THROWS_AS(cfg.validate(8), Error);
}

TEST_CASE("full rank, X = C: scores equal exact inner products") {
  std::mt19937 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 4 + trial % 12, m = 5 + trial * 3;
    const DenseMatrix c = oracle::normal_matrix(m, d, rng);
    const auto model = fit(c, c, plain_config(std::min(d, m)));
    const DenseMatrix x = oracle::normal_matrix(1, d, rng);
    const auto got = score_cluster(x.row(0), model, Metric::ip);
    const auto exact = oracle::matmul(oracle::to_mat(x), oracle::transpose(oracle::to_mat(c)))[0];
    const double scale = max_abs(exact);
    for (std::size_t j = 0; j < m; ++j) CHECK(std::abs(got[j] - exact[j]) <= 1e-3 * scale);
  }
}

TEST_CASE("X = C: predictions equal top-r eigenprojection inner products") {
  std::mt19937 rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    std::uniform_int_distribution<std::size_t> dd(4, 32), mm(10, 64), rr(1, 8);
    const std::size_t d = dd(rng), m = mm(rng), r = std::min(rr(rng), d);
    const DenseMatrix c = oracle::normal_matrix(m, d, rng);
    const auto model = fit(c, c, plain_config(r));
    const auto w = oracle::top_right_singular_vectors(c, r);  // d x r
    const auto proj = oracle::matmul(w, oracle::transpose(w));
    const DenseMatrix x = oracle::normal_matrix(1, d, rng);
    const auto expected = oracle::matmul(oracle::matmul(oracle::to_mat(x), proj), oracle::transpose(oracle::to_mat(c)))[0];
    const auto got = predict(x.row(0), model);
    const double scale = max_abs(expected);
    for (std::size_t j = 0; j < m; ++j) CHECK(std::abs(got[j] - expected[j]) <= 1e-3 * scale);
  }
}

TEST_CASE("training loss: RRR beats truncated SVD of C and random rank-r factors") {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    std::uniform_int_distribution<std::size_t> dd(6, 24), mm(20, 60), nn(30, 90);
    const std::size_t d = dd(rng), m = mm(rng), n = nn(rng), r = 1 + trial % 5;
    const DenseMatrix c = oracle::normal_matrix(m, d, rng);
    DenseMatrix x = oracle::normal_matrix(n, d, rng);
    for (std::size_t i = 0; i < n; ++i) x(i, 0) *= 4.0f;  // anisotropic queries
    const auto model = fit(c, x, plain_config(r));
    const double rrr_loss = training_loss(x, c, beta_of(model));

    const auto w = oracle::top_right_singular_vectors(c, r);
    const DenseMatrix alt = oracle::to_dense(
        oracle::matmul(oracle::matmul(w, oracle::transpose(w)), oracle::transpose(oracle::to_mat(c))));
    const double alt_loss = training_loss(x, c, alt);
    CHECK(rrr_loss <= alt_loss * (1.0 + 1e-6) + 1e-6);

    const DenseMatrix p = oracle::normal_matrix(d, r, rng), q = oracle::normal_matrix(r, m, rng);
    CHECK(rrr_loss <= training_loss(x, c, linalg::matmul(p, q)));
  }
}

TEST_CASE("training loss nonincreasing in r; rank bound on A B") {
  std::mt19937 rng(4);
  const DenseMatrix c = oracle::normal_matrix(40, 16, rng);
  const DenseMatrix x = oracle::normal_matrix(80, 16, rng);
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t r = 1; r <= 16; ++r) {
    const auto model = fit(c, x, plain_config(r));
    const DenseMatrix beta = beta_of(model);
    const double loss = training_loss(x, c, beta);
    CHECK(loss <= previous * (1.0 + 1e-5));
    previous = loss;
    const auto sv = oracle::singular_values(beta);
    for (std::size_t i = r; i < sv.size(); ++i) CHECK(sv[i] <= 1e-4 * sv[0]);
  }
}

TEST_CASE("tiny clusters fall back to exact factors padded to rank r") {
  std::mt19937 rng(5);
  const DenseMatrix c = oracle::normal_matrix(3, 10, rng);
  const DenseMatrix x = oracle::normal_matrix(20, 10, rng);
  for (bool quantize : {false, true}) {
    RrrConfig cfg = plain_config(8);
    cfg.quantize = quantize;
    const auto model = fit(c, x, cfg, Metric::euclidean);
    CHECK(model.exact_fallback);
    CHECK(model.rank() == 8);
    CHECK(factor_rows(model.b) == 8);
    CHECK(factor_cols(model.b) == 3);
    if (!quantize) {
      const auto got = predict(x.row(0), model);
      for (std::size_t j = 0; j < 3; ++j) CHECK(got[j] == doctest::Approx(dot(x.row(0), c.row(j))).epsilon(1e-5));
    }
  }
}

TEST_CASE("few training rows are augmented, not fatal") {
  std::mt19937 rng(6);
  const DenseMatrix c = oracle::normal_matrix(30, 12, rng);
  const DenseMatrix x = oracle::normal_matrix(2, 12, rng);
  const auto model = fit(c, x, plain_config(6));
  CHECK_FALSE(model.exact_fallback);
  CHECK(model.rank() == 6);
  CHECK(factor_dense(model.a).all_finite());
}

TEST_CASE("empty cluster is an error") {
  const DenseMatrix c(0, 4), x(5, 4);
  CHECK_THROWS_AS(fit(c, x, plain_config(2)), Error);
}

TEST_CASE("score_cluster: zero query, euclidean norms, exact argmin at full rank") {
  std::mt19937 rng(7);
  const DenseMatrix c = oracle::normal_matrix(25, 8, rng);
  const auto model = fit(c, c, plain_config(8), Metric::euclidean);
  const std::vector<float> zero(8, 0.0f);
  const auto s0 = score_cluster(zero, model, Metric::euclidean);
  for (std::size_t j = 0; j < 25; ++j) CHECK(s0[j] == doctest::Approx(dot(c.row(j), c.row(j))));

  for (int trial = 0; trial < 20; ++trial) {
    const DenseMatrix x = oracle::normal_matrix(1, 8, rng);
    const auto s = score_cluster(x.row(0), model, Metric::euclidean);
    const auto best = std::min_element(s.begin(), s.end()) - s.begin();
    CHECK(best == oracle::knn(c, x.row(0), 1, false)[0]);
  }
  CHECK_THROWS_AS(score_cluster(std::vector<float>(7, 0.0f), model, Metric::euclidean), Error);
}

TEST_CASE("quantized scores keep the f32 ranking") {
  std::mt19937 rng(8);
  const DenseMatrix c = oracle::normal_matrix(100, 64, rng);
  const DenseMatrix x = oracle::normal_matrix(300, 64, rng);
  RrrConfig f32 = plain_config(32);
  RrrConfig q8 = f32;
  q8.quantize = true;
  const auto mf = fit(c, x, f32);
  const auto mq = fit(c, x, q8);
  for (int trial = 0; trial < 20; ++trial) {
    const DenseMatrix query = oracle::normal_matrix(1, 64, rng);
    CHECK(spearman(predict(query.row(0), mf), predict(query.row(0), mq)) >= 0.95);
  }
}

TEST_CASE("reduced training: full-dimensional identity projection matches unreduced fit") {
  std::mt19937 rng(9);
  const DenseMatrix c = oracle::normal_matrix(40, 10, rng);
  const DenseMatrix x = oracle::normal_matrix(100, 10, rng);
  const DenseMatrix eye = DenseMatrix::identity(10);
  std::vector<std::uint64_t> ids(40);
  std::iota(ids.begin(), ids.end(), 0);
  const auto reduced = train_cluster(TrainingBlock{c, x, &eye, true}, ids, plain_config(5), Metric::ip, {});
  const auto plain = fit(c, x, plain_config(5));
  // OLS on full-rank X recovers C^T, so both estimators coincide.
  const auto query = oracle::normal_matrix(1, 10, rng);
  const auto a = predict(query.row(0), reduced), b = predict(query.row(0), plain);
  for (std::size_t j = 0; j < 40; ++j) CHECK(a[j] == doctest::Approx(b[j]).epsilon(1e-3).scale(1.0));
}

TEST_CASE("select_training_rows: train_w = L, train_w = 1 partition, boundary points") {
  std::mt19937 rng(10);
  const DenseMatrix centroids{{-5, 0}, {5, 0}, {0, 8}};
  const DenseMatrix train = oracle::random_matrix(60, 2, rng, -10.0f, 10.0f);
  for (std::size_t l = 0; l < 3; ++l) {
    CHECK(select_training_rows(train, centroids, l, 3, cluster::ClusterMetric::euclidean).size() == 60);
  }
  std::vector<int> hits(60, 0);
  for (std::size_t l = 0; l < 3; ++l)
    for (auto i : select_training_rows(train, centroids, l, 1, cluster::ClusterMetric::euclidean)) ++hits[i];
  for (int h : hits) CHECK(h == 1);

  const DenseMatrix two{{-1, 0}, {1, 0}};
  const DenseMatrix near_boundary{{0.05f, 0.3f}, {-0.05f, -0.2f}, {-9.0f, 0.0f}};
  const auto j0 = select_training_rows(near_boundary, two, 0, 2, cluster::ClusterMetric::euclidean);
  const auto j1 = select_training_rows(near_boundary, two, 1, 2, cluster::ClusterMetric::euclidean);
  CHECK(std::find(j0.begin(), j0.end(), 0u) != j0.end());
  CHECK(std::find(j1.begin(), j1.end(), 0u) != j1.end());
  CHECK(std::find(j0.begin(), j0.end(), 1u) != j0.end());
  CHECK(std::find(j1.begin(), j1.end(), 1u) != j1.end());
  const auto only0 = select_training_rows(near_boundary, two, 0, 1, cluster::ClusterMetric::euclidean);
  CHECK(std::find(only0.begin(), only0.end(), 2u) != only0.end());

  const auto sets = routed_training_sets(train, centroids, 2, cluster::ClusterMetric::euclidean, 2);
  for (std::size_t l = 0; l < 3; ++l) {
    const auto direct = select_training_rows(train, centroids, l, 2, cluster::ClusterMetric::euclidean);
    CHECK(sets[l] == direct);
  }
}

TEST_CASE("randomized and exact factorizations reach similar training loss") {
  std::mt19937 rng(11);
  const DenseMatrix c = oracle::normal_matrix(150, 32, rng);
  const DenseMatrix x = oracle::normal_matrix(200, 32, rng);
  RrrConfig exact = plain_config(8);
  exact.exact_svd_limit = 1000;
  RrrConfig randomized = plain_config(8);
  randomized.exact_svd_limit = 0;
  const double exact_loss = training_loss(x, c, beta_of(fit(c, x, exact)));
  const double rand_loss = training_loss(x, c, beta_of(fit(c, x, randomized)));
  CHECK(exact_loss <= rand_loss * (1.0 + 1e-6));
  CHECK(rand_loss <= exact_loss * 1.02);
}
