#pragma once

// Binary ensemble archive, all fields little-endian:
//
//   char[8]  magic "CQMARCH\0"
//   u32      version (1)
//   u32      kind (0 normalized, 1 raw)
//   u64      config digest
//   u64      seed
//   u64      n_traj
//   u64      n_steps
//   u32      n_detectors
//   u32      reserved (0)
//   f64      t0, dt
//   f64      response, offset        (per detector)
//   then per trajectory, per detector: n_steps f64 signal samples.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "cqm/digest.hpp"
#include "cqm/trajectory.hpp"

namespace cqm {

/// Archive read/write failure.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::array<char, 8> archive_magic = {'C', 'Q', 'M', 'A', 'R', 'C', 'H', '\0'};
inline constexpr std::uint32_t archive_version = 1;

struct ArchiveHeader {
  SignalKind kind = SignalKind::raw;
  std::uint64_t config_digest = 0;
  std::uint64_t seed = 0;
  std::uint64_t n_traj = 0;
  std::uint64_t n_steps = 0;
  double t0 = 0.0;
  double dt = 0.0;
  std::vector<double> responses;  // one per detector
  std::vector<double> offsets;

  std::size_t n_detectors() const noexcept { return responses.size(); }
};

namespace detail {

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
inline void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
inline void put_f64(std::vector<unsigned char>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline std::uint64_t get_le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= std::uint64_t{p[i]} << (8 * i);
  return v;
}

inline std::vector<unsigned char> encode_header(const ArchiveHeader& h) {
  if (h.responses.size() != h.offsets.size()) throw ConfigError("archive header: response/offset count");
  std::vector<unsigned char> out(archive_magic.begin(), archive_magic.end());
  put_u32(out, archive_version);
  put_u32(out, h.kind == SignalKind::raw ? 1u : 0u);
  put_u64(out, h.config_digest);
  put_u64(out, h.seed);
  put_u64(out, h.n_traj);
  put_u64(out, h.n_steps);
  put_u32(out, static_cast<std::uint32_t>(h.n_detectors()));
  put_u32(out, 0);
  put_f64(out, h.t0);
  put_f64(out, h.dt);
  for (std::size_t l = 0; l < h.n_detectors(); ++l) {
    put_f64(out, h.responses[l]);
    put_f64(out, h.offsets[l]);
  }
  return out;
}

}  // namespace detail

/// Streams trajectories to an archive file; usable as an ensemble reducer.
/// Chunk copies buffer their records and the ordered merge appends them, so
/// the file content does not depend on the worker count.
class ArchiveWriter {
 public:
  ArchiveWriter(const std::string& path, ArchiveHeader header)
      : shared_(std::make_shared<Shared>()), header_(std::move(header)) {
    shared_->path = path;
    shared_->file.open(path, std::ios::binary | std::ios::trunc);
    if (!shared_->file) throw IoError("cannot open archive for writing: " + path);
    write_bytes(detail::encode_header(header_));
  }

  ArchiveWriter(const ArchiveWriter& other)
      : shared_(other.shared_), header_(other.header_), root_(false) {}
  ArchiveWriter& operator=(const ArchiveWriter&) = delete;
  ArchiveWriter(ArchiveWriter&&) noexcept = default;

  void add(std::uint64_t, const TrajectoryRecord& rec) {
    check(rec);
    if (root_) {
      append(rec.signals);
      ++shared_->written;
    } else {
      buffer_.insert(buffer_.end(), rec.signals.begin(), rec.signals.end());
      ++buffered_;
    }
  }

  void merge(ArchiveWriter&& later) {
    append(later.buffer_);
    shared_->written += later.buffered_;
    later.buffer_.clear();
    later.buffered_ = 0;
  }

  /// Flushes and closes; throws if the trajectory count differs from the header.
  void close() {
    if (!shared_->file.is_open()) return;
    shared_->file.flush();
    if (!shared_->file) throw IoError("write failure on " + shared_->path);
    shared_->file.close();
    if (shared_->written != header_.n_traj)
      throw IoError("archive " + shared_->path + " holds " + std::to_string(shared_->written) +
                    " trajectories, header declares " + std::to_string(header_.n_traj));
  }

  /// FNV-1a digest of every byte written so far.
  std::uint64_t digest() const noexcept { return shared_->hash.value(); }
  std::uint64_t written() const noexcept { return shared_->written; }

 private:
  struct Shared {
    std::string path;
    std::ofstream file;
    Fnv1a64 hash;
    std::uint64_t written = 0;
  };

  void check(const TrajectoryRecord& rec) const {
    if (rec.kind != header_.kind) throw ConfigError("record kind does not match the archive");
    if (rec.detector_count != header_.n_detectors() || rec.grid.n_steps() != header_.n_steps)
      throw ConfigError("record shape does not match the archive");
  }

  void write_bytes(const std::vector<unsigned char>& bytes) {
    shared_->file.write(reinterpret_cast<const char*>(bytes.data()),
                        static_cast<std::streamsize>(bytes.size()));
    if (!shared_->file) throw IoError("write failure on " + shared_->path);
    shared_->hash.update(std::as_bytes(std::span(bytes)));
  }

  void append(const std::vector<double>& values) {
    if (values.empty()) return;
    std::vector<unsigned char> bytes;
    bytes.reserve(values.size() * 8);
    for (double v : values) detail::put_f64(bytes, v);
    write_bytes(bytes);
  }

  std::shared_ptr<Shared> shared_;
  ArchiveHeader header_;
  bool root_ = true;
  std::vector<double> buffer_;
  std::uint64_t buffered_ = 0;
};

/// Sequential reader.
class ArchiveReader {
 public:
  explicit ArchiveReader(const std::string& path) : path_(path), file_(path, std::ios::binary) {
    if (!file_) throw IoError("cannot open archive: " + path);
    unsigned char fixed[56];
    read(fixed, sizeof fixed);
    if (std::memcmp(fixed, archive_magic.data(), 8) != 0) throw IoError(path + " is not a cqm archive");
    const auto version = static_cast<std::uint32_t>(detail::get_le(fixed + 8, 4));
    if (version != archive_version)
      throw IoError(path + ": unsupported archive version " + std::to_string(version));
    const auto kind = detail::get_le(fixed + 12, 4);
    if (kind > 1) throw IoError(path + ": unknown signal kind");
    header_.kind = kind == 1 ? SignalKind::raw : SignalKind::normalized;
    header_.config_digest = detail::get_le(fixed + 16, 8);
    header_.seed = detail::get_le(fixed + 24, 8);
    header_.n_traj = detail::get_le(fixed + 32, 8);
    header_.n_steps = detail::get_le(fixed + 40, 8);
    const auto nd = static_cast<std::uint32_t>(detail::get_le(fixed + 48, 4));
    if (nd == 0 || header_.n_steps == 0) throw IoError(path + ": empty archive shape");
    unsigned char times[16];
    read(times, sizeof times);
    header_.t0 = std::bit_cast<double>(detail::get_le(times, 8));
    header_.dt = std::bit_cast<double>(detail::get_le(times + 8, 8));
    for (std::uint32_t l = 0; l < nd; ++l) {
      unsigned char rd[16];
      read(rd, sizeof rd);
      header_.responses.push_back(std::bit_cast<double>(detail::get_le(rd, 8)));
      header_.offsets.push_back(std::bit_cast<double>(detail::get_le(rd + 8, 8)));
    }
    bytes_.resize(header_.n_steps * nd * 8);
  }

  const ArchiveHeader& header() const noexcept { return header_; }

  std::vector<DetectorModel> detector_maps() const {
    std::vector<DetectorModel> out;
    for (std::size_t l = 0; l < header_.n_detectors(); ++l)
      out.emplace_back(Vec3::UnitZ(), 1.0, 0.0, 1.0, header_.responses[l], header_.offsets[l]);
    return out;
  }

  /// Reads the next trajectory into `rec` (states left empty); false at the end.
  bool next(TrajectoryRecord& rec) {
    if (read_ == header_.n_traj) return false;
    read(bytes_.data(), bytes_.size());
    rec.grid = TimeGrid(header_.t0, header_.dt, header_.n_steps);
    rec.detector_count = header_.n_detectors();
    rec.kind = header_.kind;
    rec.states.clear();
    rec.signals.resize(header_.n_steps * header_.n_detectors());
    for (std::size_t i = 0; i < rec.signals.size(); ++i)
      rec.signals[i] = std::bit_cast<double>(detail::get_le(bytes_.data() + 8 * i, 8));
    ++read_;
    return true;
  }

  /// Feeds every remaining trajectory to a reducer, closing a chunk every
  /// `block_size` trajectories.
  template <class Reducer>
  void feed(Reducer& reducer, std::size_t block_size) {
    TrajectoryRecord rec;
    std::size_t in_block = 0;
    while (next(rec)) {
      reducer.add(read_ - 1, rec);
      if (++in_block == block_size) {
        if constexpr (requires { reducer.finish_chunk(); }) reducer.finish_chunk();
        in_block = 0;
      }
    }
    if constexpr (requires { reducer.finish_chunk(); }) reducer.finish_chunk();
  }

 private:
  void read(unsigned char* dst, std::size_t n) {
    file_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (file_.gcount() != static_cast<std::streamsize>(n)) throw IoError(path_ + ": truncated archive");
  }

  std::string path_;
  std::ifstream file_;
  ArchiveHeader header_;
  std::vector<unsigned char> bytes_;
  std::uint64_t read_ = 0;
};

/// FNV-1a over all bytes of a file.
inline std::uint64_t file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  Fnv1a64 h;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const auto got = static_cast<std::size_t>(in.gcount());
    h.update(std::as_bytes(std::span(buf.data(), got)));
  }
  return h.value();
}

/// Order-fixed digest of all signal samples of an ensemble (one FNV state
/// per chunk, combined in chunk order).
class SignalDigest {
 public:
  void add(std::uint64_t traj, const TrajectoryRecord& rec) {
    const std::uint64_t le = traj;
    std::byte b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<std::byte>((le >> (8 * i)) & 0xff);
    current_.update(std::span<const std::byte>(b, 8));
    current_.update(std::span<const double>(rec.signals));
    open_ = true;
  }
  void finish_chunk() {
    if (!open_) return;
    chunks_.push_back(current_.value());
    current_ = Fnv1a64{};
    open_ = false;
  }
  void merge(SignalDigest&& later) {
    later.finish_chunk();
    chunks_.insert(chunks_.end(), later.chunks_.begin(), later.chunks_.end());
  }
  std::uint64_t value() {
    finish_chunk();
    Fnv1a64 h;
    for (std::uint64_t c : chunks_) {
      std::byte b[8];
      for (int i = 0; i < 8; ++i) b[i] = static_cast<std::byte>((c >> (8 * i)) & 0xff);
      h.update(std::span<const std::byte>(b, 8));
    }
    return h.value();
  }

 private:
  Fnv1a64 current_;
  bool open_ = false;
  std::vector<std::uint64_t> chunks_;
};

}  // namespace cqm
