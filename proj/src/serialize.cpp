// Binary index format (little-endian):
//   magic "RRRANN01"
//   header  metric u8, d u32, s u32, r u32, L u32, m u64, flags u32
//   W_s     f32 d x s
//   centroids f32 L x s
//   L cluster records:
//     m_l u32, ids u64 x m_l,
//     A payload (s x r), B payload (r x m_l)   -- absent in exact-IVF mode
//     norms f32 x m_l                           -- euclidean only
//   corpus  f32 m x d                           -- when flag bit1 is set
//   crc32 of every preceding byte
// Quantized payload: head_row f32 x cols (mixed precision only),
// col_scales f32 x cols, values i8 row-major over the stored rows.
// Unquantized payload: f32 row-major.

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string_view>

#include "rrrann/error.hpp"
#include "rrrann/index.hpp"

namespace rrrann {
namespace {

static_assert(std::endian::native == std::endian::little, "index files are little-endian");

constexpr std::string_view kMagicPrefix = "RRRANN";
constexpr std::string_view kVersion = "01";

enum Flags : std::uint32_t {
  kQuantized = 1u << 0,
  kCorpusPresent = 1u << 1,
  kBalanced = 1u << 2,
  kExactIvf = 1u << 3,
  kMixedPrecision = 1u << 4,
};
constexpr std::uint32_t kKnownFlags = kQuantized | kCorpusPresent | kBalanced | kExactIvf | kMixedPrecision;

class Writer {
 public:
  template <typename T>
  void put(T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  template <typename T>
  void put_array(std::span<const T> values) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
    buf_.insert(buf_.end(), p, p + values.size_bytes());
  }
  void put_bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

  std::vector<std::uint8_t> finish() && {
    const auto crc = static_cast<std::uint32_t>(
        crc32(0L, buf_.data(), static_cast<uInt>(buf_.size())));
    put(crc);
    return std::move(buf_);
  }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void section(std::string name) { section_ = std::move(name); }
  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  template <typename T>
  T get() {
    T value;
    std::memcpy(&value, take(sizeof(T)), sizeof(T));
    return value;
  }
  template <typename T>
  std::vector<T> get_array(std::size_t count) {
    if (count > remaining() / sizeof(T)) truncated(count * sizeof(T));
    std::vector<T> out(count);
    std::memcpy(out.data(), take(count * sizeof(T)), count * sizeof(T));
    return out;
  }

 private:
  const std::uint8_t* take(std::size_t n) {
    if (n > remaining()) truncated(n);
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  [[noreturn]] void truncated(std::size_t need) const {
    fail(ErrorKind::format, "truncated in section '" + section_ + "' at offset " +
                                std::to_string(pos_) + " (need " + std::to_string(need) +
                                " bytes, " + std::to_string(remaining()) + " available)");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::string section_ = "header";
};

void write_factor(Writer& w, const rrr::Factor& f) {
  if (const auto* dense = std::get_if<DenseMatrix>(&f)) {
    w.put_array(dense->values());
    return;
  }
  const auto& q = std::get<quant::QuantizedMatrix>(f);
  if (q.mixed_precision) w.put_array(std::span<const float>(q.head_row));
  w.put_array(std::span<const float>(q.col_scales));
  w.put_array(std::span<const std::int8_t>(q.values));
}

rrr::Factor read_factor(Reader& r, std::size_t rows, std::size_t cols, bool quantized, bool mixed) {
  if (!quantized) return DenseMatrix(rows, cols, r.get_array<float>(rows * cols));
  quant::QuantizedMatrix q;
  q.rows = rows;
  q.cols = cols;
  q.mixed_precision = mixed;
  if (mixed) q.head_row = r.get_array<float>(cols);
  q.col_scales = r.get_array<float>(cols);
  q.values = r.get_array<std::int8_t>(q.stored_rows() * cols);
  return q;
}

}  // namespace

std::vector<std::uint8_t> RrrIndex::serialize() const {
  const bool exact = cfg_.scoring == ScoringMode::exact_ivf;
  const bool quantized = !exact && cfg_.rrr.quantize;
  std::uint32_t flags = 0;
  if (quantized) flags |= kQuantized;
  if (has_corpus()) flags |= kCorpusPresent;
  if (cfg_.balanced) flags |= kBalanced;
  if (exact) flags |= kExactIvf;
  if (quantized && cfg_.rrr.mixed_precision) flags |= kMixedPrecision;

  Writer w;
  w.put_bytes(kMagicPrefix);
  w.put_bytes(kVersion);
  w.put(static_cast<std::uint8_t>(cfg_.metric));
  w.put(static_cast<std::uint32_t>(dim()));
  w.put(static_cast<std::uint32_t>(projected_dim()));
  w.put(static_cast<std::uint32_t>(exact ? 0 : cfg_.rrr.rank));
  w.put(static_cast<std::uint32_t>(num_clusters()));
  w.put(static_cast<std::uint64_t>(corpus_size_));
  w.put(flags);
  w.put_array(projection_.values());
  w.put_array(centroids_.values());
  for (const auto& model : clusters_) {
    w.put(static_cast<std::uint32_t>(model.size()));
    w.put_array(std::span<const std::uint64_t>(model.point_ids));
    if (!exact) {
      write_factor(w, model.a);
      write_factor(w, model.b);
    }
    if (cfg_.metric == Metric::euclidean) w.put_array(std::span<const float>(model.norm_terms));
  }
  if (has_corpus()) w.put_array(corpus_.values());
  return std::move(w).finish();
}

RrrIndex RrrIndex::deserialize(std::span<const std::uint8_t> bytes) {
  const std::size_t magic_len = kMagicPrefix.size() + kVersion.size();
  if (bytes.size() < magic_len) {
    fail(ErrorKind::format, "truncated in section 'magic' at offset " + std::to_string(bytes.size()));
  }
  if (std::string_view(reinterpret_cast<const char*>(bytes.data()), kMagicPrefix.size()) != kMagicPrefix) {
    fail(ErrorKind::format, "bad magic: not an RRRANN index file");
  }
  const std::string_view version(reinterpret_cast<const char*>(bytes.data()) + kMagicPrefix.size(),
                                 kVersion.size());
  if (version != kVersion) {
    fail(ErrorKind::version, "unsupported index version '" + std::string(version) + "', expected '" +
                                 std::string(kVersion) + "'");
  }
  if (bytes.size() < magic_len + sizeof(std::uint32_t)) {
    fail(ErrorKind::format, "truncated in section 'header' at offset " + std::to_string(magic_len));
  }

  Reader r(bytes.first(bytes.size() - sizeof(std::uint32_t)));
  r.get_array<char>(magic_len);
  r.section("header");
  const auto metric_code = r.get<std::uint8_t>();
  const auto d = r.get<std::uint32_t>();
  const auto s = r.get<std::uint32_t>();
  const auto rank = r.get<std::uint32_t>();
  const auto num_clusters = r.get<std::uint32_t>();
  const auto m = r.get<std::uint64_t>();
  const auto flags = r.get<std::uint32_t>();
  if (metric_code > static_cast<std::uint8_t>(Metric::cosine)) {
    fail(ErrorKind::format, "unknown metric code " + std::to_string(metric_code));
  }
  if (m > bytes.size()) {
    fail(ErrorKind::format, "header claims " + std::to_string(m) + " points, more than the file can hold");
  }
  if ((flags & ~kKnownFlags) != 0) {
    fail(ErrorKind::version, "unknown header flags 0x" + std::to_string(flags & ~kKnownFlags));
  }

  RrrIndex index;
  IndexConfig& cfg = index.cfg_;
  cfg.metric = static_cast<Metric>(metric_code);
  cfg.num_clusters = num_clusters;
  cfg.scoring = (flags & kExactIvf) ? ScoringMode::exact_ivf : ScoringMode::rrr;
  cfg.balanced = (flags & kBalanced) != 0;
  cfg.rerank = (flags & kCorpusPresent) != 0;
  cfg.rrr.quantize = (flags & kQuantized) != 0;
  cfg.rrr.mixed_precision = (flags & kMixedPrecision) != 0;
  cfg.rrr.rank = rank;
  if (s != d) cfg.rrr.reduced_dim = s;
  index.corpus_size_ = m;
  const bool exact = cfg.scoring == ScoringMode::exact_ivf;

  r.section("projection");
  index.projection_ = DenseMatrix(d, s, r.get_array<float>(std::size_t{d} * s));
  r.section("centroids");
  index.centroids_ = DenseMatrix(num_clusters, s, r.get_array<float>(std::size_t{num_clusters} * s));

  std::vector<bool> seen(m, false);
  std::uint64_t total = 0;
  index.clusters_.resize(num_clusters);
  for (std::size_t l = 0; l < num_clusters; ++l) {
    const std::string prefix = "cluster " + std::to_string(l) + " ";
    auto& model = index.clusters_[l];
    r.section(prefix + "size");
    const auto m_l = r.get<std::uint32_t>();
    r.section(prefix + "ids");
    model.point_ids = r.get_array<std::uint64_t>(m_l);
    for (auto id : model.point_ids) {
      if (id >= m || seen[id]) {
        fail(ErrorKind::format, "cluster " + std::to_string(l) + " has invalid or duplicate id " +
                                    std::to_string(id) + " near offset " + std::to_string(r.offset()));
      }
      seen[id] = true;
    }
    total += m_l;
    if (!exact) {
      r.section(prefix + "A payload");
      model.a = read_factor(r, s, rank, cfg.rrr.quantize, cfg.rrr.mixed_precision);
      r.section(prefix + "B payload");
      model.b = read_factor(r, rank, m_l, cfg.rrr.quantize, cfg.rrr.mixed_precision);
      model.exact_fallback = m_l <= rank;
    }
    if (cfg.metric == Metric::euclidean) {
      r.section(prefix + "norms");
      model.norm_terms = r.get_array<float>(m_l);
    }
  }
  if (total != m) {
    fail(ErrorKind::format, "cluster sizes sum to " + std::to_string(total) + ", header says " +
                                std::to_string(m));
  }
  if (cfg.rerank) {
    r.section("corpus");
    index.corpus_ = DenseMatrix(m, d, r.get_array<float>(m * d));
  }
  if (r.remaining() != 0) {
    fail(ErrorKind::version, std::to_string(r.remaining()) + " bytes of unknown trailing data at offset " +
                                 std::to_string(r.offset()) + "; not a version-01 layout");
  }

  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + bytes.size() - sizeof(stored_crc), sizeof(stored_crc));
  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, bytes.data(), static_cast<uInt>(bytes.size() - sizeof(stored_crc))));
  if (crc != stored_crc) {
    fail(ErrorKind::format, "checksum mismatch at offset " + std::to_string(bytes.size() - sizeof(stored_crc)));
  }
  return index;
}

void RrrIndex::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::data, "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::data, "failed writing '" + path.string() + "'");
}

RrrIndex RrrIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::data, "cannot open '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

IndexFootprint RrrIndex::footprint() const {
  IndexFootprint f;
  auto account = [&](const rrr::Factor& factor) {
    if (const auto* dense = std::get_if<DenseMatrix>(&factor)) {
      f.code_bytes += dense->size() * sizeof(float);
      return;
    }
    const auto& q = std::get<quant::QuantizedMatrix>(factor);
    f.code_bytes += q.values.size();
    f.aux_bytes += (q.col_scales.size() + q.head_row.size()) * sizeof(float);
  };
  for (const auto& model : clusters_) {
    f.aux_bytes += sizeof(std::uint32_t) + model.point_ids.size() * sizeof(std::uint64_t) +
                   model.norm_terms.size() * sizeof(float);
    if (cfg_.scoring == ScoringMode::rrr) {
      account(model.a);
      account(model.b);
    }
  }
  f.corpus_bytes = corpus_.size() * sizeof(float);
  f.total_bytes = serialize().size();
  return f;
}

}  // namespace rrrann
