#pragma once

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <array>
#include <bit>
#include <cerrno>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "doptsel/errors.hpp"
#include "doptsel/hessian.hpp"
#include "doptsel/matrix.hpp"

namespace doptsel {

// KBF: flat binary container for K with block-granular random access.
//
//   bytes 0..3    magic "KBF1"
//   bytes 4..7    version (u32, = 1)
//   bytes 8..11   n_sensors (u32)
//   bytes 12..15  n_steps (u32)
//   bytes 16..19  dtype code (u32, 1 = f64)
//   bytes 20..23  block ordering code (u32, 1 = block-row-major)
//   bytes 24..31  zero padding (header is 16-byte aligned)
//   payload       n_sensors^2 blocks of n_steps^2 f64 values, block (i,j)
//                 at offset 32 + (i*n_sensors + j) * n_steps^2 * 8
//
// All integers and floats are little-endian. Both (i,j) and (j,i) are
// stored so every block read is a single contiguous range.

static_assert(std::endian::native == std::endian::little,
              "KBF I/O assumes a little-endian host");

inline constexpr std::size_t kKbfHeaderBytes = 32;
inline constexpr std::uint32_t kKbfVersion = 1;
inline constexpr std::uint32_t kKbfDtypeF64 = 1;
inline constexpr std::uint32_t kKbfOrderBlockRowMajor = 1;

namespace detail {
inline void put_u32(unsigned char* p, std::uint32_t v) {
  p[0] = static_cast<unsigned char>(v & 0xff);
  p[1] = static_cast<unsigned char>((v >> 8) & 0xff);
  p[2] = static_cast<unsigned char>((v >> 16) & 0xff);
  p[3] = static_cast<unsigned char>((v >> 24) & 0xff);
}
inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
}  // namespace detail

inline std::size_t kbf_payload_bytes(int n_sensors, int n_steps) {
  return static_cast<std::size_t>(n_sensors) * n_sensors * n_steps *
         static_cast<std::size_t>(n_steps) * sizeof(double);
}

inline std::size_t kbf_file_bytes(int n_sensors, int n_steps) {
  return kKbfHeaderBytes + kbf_payload_bytes(n_sensors, n_steps);
}

// Writes K to a KBF file. The matrix must be block-symmetric; asymmetry
// beyond 1e-10 relative is rejected before any bytes hit disk.
inline void write_kbf(const DataSpaceHessian& k, const std::filesystem::path& path) {
  if (k.symmetry_defect() > 1e-10)
    throw InvalidMatrix("refusing to write asymmetric K (defect " +
                        std::to_string(k.symmetry_defect()) + ")");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  std::array<unsigned char, kKbfHeaderBytes> header{};
  std::memcpy(header.data(), "KBF1", 4);
  detail::put_u32(header.data() + 4, kKbfVersion);
  detail::put_u32(header.data() + 8, static_cast<std::uint32_t>(k.n_sensors()));
  detail::put_u32(header.data() + 12, static_cast<std::uint32_t>(k.n_steps()));
  detail::put_u32(header.data() + 16, kKbfDtypeF64);
  detail::put_u32(header.data() + 20, kKbfOrderBlockRowMajor);
  out.write(reinterpret_cast<const char*>(header.data()), header.size());
  out.write(reinterpret_cast<const char*>(k.raw()),
            static_cast<std::streamsize>(k.raw_size() * sizeof(double)));
  if (!out) throw IoError("short write to " + path.string());
}

// Read-only handle to a KBF file. Blocks are fetched with pread, so one
// shared handle serves any number of concurrent reader threads.
class KStoreReader {
 public:
  explicit KStoreReader(const std::filesystem::path& path) : path_(path.string()) {
    fd_ = ::open(path_.c_str(), O_RDONLY);
    if (fd_ < 0) throw IoError("cannot open " + path_ + ": " + std::strerror(errno));
    std::array<unsigned char, kKbfHeaderBytes> header{};
    if (::pread(fd_, header.data(), header.size(), 0) !=
        static_cast<ssize_t>(header.size())) {
      ::close(fd_);
      throw CorruptFile(path_ + ": header truncated");
    }
    if (std::memcmp(header.data(), "KBF1", 4) != 0) {
      ::close(fd_);
      throw CorruptFile(path_ + ": bad magic");
    }
    const std::uint32_t version = detail::get_u32(header.data() + 4);
    n_sensors_ = static_cast<int>(detail::get_u32(header.data() + 8));
    n_steps_ = static_cast<int>(detail::get_u32(header.data() + 12));
    const std::uint32_t dtype = detail::get_u32(header.data() + 16);
    const std::uint32_t order = detail::get_u32(header.data() + 20);
    if (version != kKbfVersion || dtype != kKbfDtypeF64 || order != kKbfOrderBlockRowMajor ||
        n_sensors_ < 1 || n_steps_ < 1) {
      ::close(fd_);
      throw CorruptFile(path_ + ": unsupported header fields");
    }
    struct stat st{};
    if (::fstat(fd_, &st) != 0) {
      ::close(fd_);
      throw IoError(path_ + ": fstat failed");
    }
    if (static_cast<std::size_t>(st.st_size) != kbf_file_bytes(n_sensors_, n_steps_)) {
      ::close(fd_);
      throw CorruptFile(path_ + ": size " + std::to_string(st.st_size) + " != expected " +
                        std::to_string(kbf_file_bytes(n_sensors_, n_steps_)));
    }
  }

  ~KStoreReader() {
    if (fd_ >= 0) ::close(fd_);
  }
  KStoreReader(const KStoreReader&) = delete;
  KStoreReader& operator=(const KStoreReader&) = delete;
  KStoreReader(KStoreReader&& other) noexcept
      : path_(std::move(other.path_)), fd_(other.fd_), n_sensors_(other.n_sensors_),
        n_steps_(other.n_steps_) {
    other.fd_ = -1;
  }

  int n_sensors() const { return n_sensors_; }
  int n_steps() const { return n_steps_; }

  void read_block(int i, int j, MatView<double> out) const {
    if (i < 0 || i >= n_sensors_ || j < 0 || j >= n_sensors_)
      throw IndexOutOfRange("block (" + std::to_string(i) + "," + std::to_string(j) +
                            ") out of range");
    if (out.rows != n_steps_ || out.cols != n_steps_)
      throw DimensionMismatch("read_block: output must be n_steps x n_steps");
    const std::size_t block_bytes =
        static_cast<std::size_t>(n_steps_) * n_steps_ * sizeof(double);
    const off_t offset = static_cast<off_t>(
        kKbfHeaderBytes + (static_cast<std::size_t>(i) * n_sensors_ + j) * block_bytes);
    if (out.contiguous()) {
      read_exact(out.data, block_bytes, offset);
    } else {
      const std::size_t row_bytes = static_cast<std::size_t>(n_steps_) * sizeof(double);
      for (int r = 0; r < n_steps_; ++r)
        read_exact(out.row(r), row_bytes, offset + static_cast<off_t>(r * row_bytes));
    }
  }

  DataSpaceHessian read_all() const {
    DataSpaceHessian k(n_sensors_, n_steps_);
    for (int i = 0; i < n_sensors_; ++i)
      for (int j = 0; j < n_sensors_; ++j) read_block(i, j, k.block(i, j));
    return k;
  }

 private:
  void read_exact(void* dst, std::size_t bytes, off_t offset) const {
    unsigned char* p = static_cast<unsigned char*>(dst);
    std::size_t done = 0;
    while (done < bytes) {
      const ssize_t got = ::pread(fd_, p + done, bytes - done, offset + static_cast<off_t>(done));
      if (got < 0) {
        if (errno == EINTR) continue;
        throw IoError(path_ + ": pread failed: " + std::strerror(errno));
      }
      if (got == 0) throw CorruptFile(path_ + ": unexpected end of file");
      done += static_cast<std::size_t>(got);
    }
  }

  std::string path_;
  int fd_ = -1;
  int n_sensors_ = 0;
  int n_steps_ = 0;
};

}  // namespace doptsel
