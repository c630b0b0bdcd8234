#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <zlib.h>

#include <cstring>
#include <filesystem>

#include "oracles.hpp"
#include "rrrann/error.hpp"
#include "rrrann/index.hpp"

using namespace rrrann;

namespace {

RrrIndex make_index(Metric metric, bool quantize, bool rerank, ScoringMode mode = ScoringMode::rrr) {
  std::mt19937 rng(42);
  const DenseMatrix corpus = oracle::normal_matrix(900, 16, rng);
  IndexConfig cfg;
  cfg.metric = metric;
  cfg.num_clusters = 12;
  cfg.rrr.rank = 6;
  cfg.rrr.reduced_dim = 12;
  cfg.rrr.quantize = quantize;
  cfg.rerank = rerank;
  cfg.scoring = mode;
  cfg.seed = 9;
  return RrrIndex::build(corpus, std::nullopt, cfg);
}

std::vector<std::uint8_t> with_crc(std::vector<std::uint8_t> body) {
  const auto crc = static_cast<std::uint32_t>(crc32(0L, body.data(), static_cast<uInt>(body.size())));
  const auto* p = reinterpret_cast<const std::uint8_t*>(&crc);
  body.insert(body.end(), p, p + 4);
  return body;
}

Error error_of(std::span<const std::uint8_t> bytes) {
  try {
    RrrIndex::deserialize(bytes);
  } catch (const Error& e) {
    return e;
  }
  FAIL("expected an error");
  return Error(ErrorKind::internal, "");
}

}  // namespace

TEST_CASE("round trip preserves query results bit for bit") {
  std::mt19937 rng(1);
  const DenseMatrix queries = oracle::normal_matrix(100, 16, rng);
  for (Metric metric : {Metric::euclidean, Metric::ip, Metric::cosine}) {
    for (bool quantize : {false, true}) {
      for (bool rerank : {false, true}) {
        const auto index = make_index(metric, quantize, rerank);
        const auto bytes = index.serialize();
        const auto loaded = RrrIndex::deserialize(bytes);
        CHECK(loaded.serialize() == bytes);
        CHECK(loaded.has_corpus() == rerank);
        const QueryParams p{10, 4, 60, rerank};
        for (std::size_t q = 0; q < queries.rows(); ++q) {
          const auto a = index.query(queries.row(q), p);
          const auto b = loaded.query(queries.row(q), p);
          CHECK(a.ids == b.ids);
          CHECK(a.scores == b.scores);
        }
      }
    }
  }
}

TEST_CASE("round trip for exact-IVF mode and through files") {
  const auto index = make_index(Metric::euclidean, true, true, ScoringMode::exact_ivf);
  const auto path = std::filesystem::temp_directory_path() / "rrrann_test_roundtrip.idx";
  index.save(path);
  const auto loaded = RrrIndex::load(path);
  std::filesystem::remove(path);
  CHECK(loaded.config().scoring == ScoringMode::exact_ivf);
  const std::vector<float> q(16, 0.25f);
  CHECK(loaded.query(q, {5, 3, 20, true}).ids == index.query(q, {5, 3, 20, true}).ids);
}

TEST_CASE("truncation names the section and offset") {
  const auto bytes = make_index(Metric::euclidean, true, true).serialize();
  for (std::size_t cut : {std::size_t{4}, std::size_t{12}, std::size_t{20}, bytes.size() / 3, bytes.size() / 2,
                          bytes.size() - 5}) {
    const std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    const auto e = error_of(part);
    CHECK(e.kind() == ErrorKind::format);
    const std::string msg = e.what();
    CHECK(msg.find("offset") != std::string::npos);
  }
  const std::vector<std::uint8_t> mid(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(bytes.size() / 2));
  const std::string msg = error_of(mid).what();
  CHECK(msg.find("section") != std::string::npos);
}

TEST_CASE("bad magic, version and checksum") {
  auto bytes = make_index(Metric::ip, true, false).serialize();
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK(error_of(bad_magic).kind() == ErrorKind::format);

  auto bad_version = bytes;
  bad_version[7] = '9';
  CHECK(error_of(bad_version).kind() == ErrorKind::version);

  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x5a;
  CHECK(error_of(flipped).kind() == ErrorKind::format);
}

TEST_CASE("unknown trailing section is a version error") {
  auto bytes = make_index(Metric::euclidean, true, true).serialize();
  std::vector<std::uint8_t> body(bytes.begin(), bytes.end() - 4);
  for (char b : std::string("EXT1\0\0\0\0", 8)) body.push_back(static_cast<std::uint8_t>(b));
  CHECK(error_of(with_crc(body)).kind() == ErrorKind::version);
}

TEST_CASE("unknown header flag bits are a version error") {
  auto bytes = make_index(Metric::euclidean, false, false).serialize();
  std::vector<std::uint8_t> body(bytes.begin(), bytes.end() - 4);
  // flags sit after magic(8) metric(1) d s r L (4 each) m (8)
  const std::size_t at = 8 + 1 + 16 + 8;
  std::uint32_t flags = 0;
  std::memcpy(&flags, body.data() + at, 4);
  flags |= 1u << 20;
  std::memcpy(body.data() + at, &flags, 4);
  CHECK(error_of(with_crc(body)).kind() == ErrorKind::version);
}

TEST_CASE("missing file is a data error") {
  try {
    RrrIndex::load("/nonexistent/dir/file.idx");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::data);
  }
}
