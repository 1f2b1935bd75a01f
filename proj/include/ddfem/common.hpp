#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace ddfem {

inline constexpr const char* kToolVersion = "0.1.0";

// Deterministic float formatting used by CSVs and config echoes: 17
// significant digits round-trip any double exactly.
inline std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Errors. One exception type with a kind tag; the CLI maps kinds to exit
// codes (config -> 1, numeric -> 2, io -> 3).
// ---------------------------------------------------------------------------

enum class ErrorKind {
  InvalidResolution,
  LayoutIncomplete,
  InvalidConfig,
  UnknownEdge,
  DegenerateData,
  DimensionMismatch,
  SolverFailure,
  Stability,
  Divergence,
  CondensationFailure,
  InfeasibleCoupling,
  UndefinedMetric,
  CorruptArchive,
  UnsupportedVersion,
  Compatibility,
  MissingPrerequisite,
  Io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidResolution:
    case ErrorKind::LayoutIncomplete:
    case ErrorKind::InvalidConfig:
    case ErrorKind::UnknownEdge:
    case ErrorKind::DimensionMismatch:
    case ErrorKind::Compatibility:
    case ErrorKind::MissingPrerequisite:
      return 1;
    case ErrorKind::CorruptArchive:
    case ErrorKind::UnsupportedVersion:
    case ErrorKind::Io:
      return 3;
    default:
      return 2;
  }
}

// ---------------------------------------------------------------------------
// CRC-32 (IEEE, reflected, poly 0xEDB88320). Used by every binary artifact
// so that byte-identical reproduction can be checked cheaply.
// ---------------------------------------------------------------------------

namespace detail {
inline const std::array<std::uint32_t, 256>& crc32_table() {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k)
        c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : (c >> 1);
      t[i] = c;
    }
    return t;
  }();
  return table;
}
}  // namespace detail

class Crc32 {
 public:
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    const auto& table = detail::crc32_table();
    for (std::size_t i = 0; i < n; ++i)
      state_ = table[(state_ ^ p[i]) & 0xFFu] ^ (state_ >> 8);
  }
  std::uint32_t value() const { return state_ ^ 0xFFFFFFFFu; }

 private:
  std::uint32_t state_ = 0xFFFFFFFFu;
};

inline std::uint32_t crc32_of(const void* data, std::size_t n) {
  Crc32 c;
  c.update(data, n);
  return c.value();
}

// ---------------------------------------------------------------------------
// Deterministic RNG. splitmix64 streams: platform-independent, trivially
// splittable into per-sample child streams so parallel snapshot generation
// stays bit-identical to sequential.
// ---------------------------------------------------------------------------

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_unit();
  }

  // standard normal via Box-Muller (no spare caching: call order alone
  // determines the stream)
  double next_normal() {
    double u1 = next_unit();
    double u2 = next_unit();
    while (u1 <= 0.0) u1 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  // Independent child stream for a sample index; children of distinct
  // indices never collide with each other or the parent.
  RngStream child(std::uint64_t index) const {
    RngStream mix(state_ ^ (0xD6E8FEB86659FD93ull * (index + 1)));
    return RngStream(mix.next_u64());
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Little-endian binary IO with running CRC.
// ---------------------------------------------------------------------------

class ByteWriter {
 public:
  void write_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  void write_u32(std::uint32_t v) { write_le(v); }
  void write_u64(std::uint64_t v) { write_le(v); }
  void write_f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_le(bits);
  }
  void write_string(const std::string& s) {
    write_u32(static_cast<std::uint32_t>(s.size()));
    write_bytes(s.data(), s.size());
  }
  // Appends the CRC of everything written so far and flushes to disk.
  void finish_to_file(const std::string& path) {
    std::uint32_t crc = crc32_of(buf_.data(), buf_.size());
    write_u32(crc);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot open for writing: " + path);
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw Error(ErrorKind::Io, "write failed: " + path);
  }
  const std::vector<char>& bytes() const { return buf_; }

 private:
  template <typename T>
  void write_le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i)
      buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
  }
  std::vector<char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> data) : buf_(std::move(data)) {}

  static ByteReader from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open: " + path);
    std::vector<char> data((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    return ByteReader(std::move(data));
  }

  // Validates the trailing CRC against all preceding bytes.
  void check_crc(const std::string& what) {
    if (buf_.size() < 4)
      throw Error(ErrorKind::CorruptArchive, what + ": truncated file");
    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i)
      stored |= static_cast<std::uint32_t>(
                    static_cast<unsigned char>(buf_[buf_.size() - 4 + i]))
                << (8 * i);
    std::uint32_t actual = crc32_of(buf_.data(), buf_.size() - 4);
    if (stored != actual)
      throw Error(ErrorKind::CorruptArchive, what + ": CRC mismatch");
    end_ = buf_.size() - 4;
  }

  void read_bytes(void* out, std::size_t n) {
    if (pos_ + n > end_)
      throw Error(ErrorKind::CorruptArchive, "archive shorter than header claims");
    std::memcpy(out, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t read_u32() { return read_le<std::uint32_t>(); }
  std::uint64_t read_u64() { return read_le<std::uint64_t>(); }
  double read_f64() {
    std::uint64_t bits = read_le<std::uint64_t>();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string read_string() {
    std::uint32_t n = read_u32();
    std::string s(n, '\0');
    read_bytes(s.data(), n);
    return s;
  }
  std::size_t remaining() const { return end_ - pos_; }

 private:
  template <typename T>
  T read_le() {
    T v = 0;
    if (pos_ + sizeof(T) > end_)
      throw Error(ErrorKind::CorruptArchive, "archive shorter than header claims");
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<T>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }
  std::vector<char> buf_;
  std::size_t pos_ = 0;
  std::size_t end_ = 0;
};

inline std::uint32_t crc32_of_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open: " + path);
  std::vector<char> data((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
  return crc32_of(data.data(), data.size());
}

// ---------------------------------------------------------------------------
// Deterministic parallel loop: shards [0, n) over worker threads; each
// iteration must write only to its own slot so any thread count produces
// the same result as sequential execution.
// ---------------------------------------------------------------------------

template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  if (threads == 0)
    threads = static_cast<int>(std::thread::hardware_concurrency());
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr first_error;
  std::mutex err_mutex;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace ddfem
