#include "rembed/sidecar.hpp"

#include <bit>
#include <cstring>
#include <sstream>

#include "rembed/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "sidecar serialization assumes a little-endian host");

namespace rembed::dataio {

SidecarWriter::SidecarWriter(std::filesystem::path path)
    : path_(std::move(path)), tmp_path_(path_.string() + ".tmp") {
  out_.open(tmp_path_, std::ios::binary | std::ios::trunc);
  if (!out_) throw IoError("cannot open for writing: " + tmp_path_.string());
}

SidecarWriter::~SidecarWriter() {
  if (!committed_) {
    out_.close();
    std::error_code ec;
    std::filesystem::remove(tmp_path_, ec);
  }
}

std::uint64_t SidecarWriter::append(std::span<const std::uint32_t> dims,
                                    std::span<const double> payload) {
  require(!dims.empty(), "sidecar: record rank must be positive");
  std::uint64_t n = 1;
  for (std::uint32_t d : dims) {
    require(d > 0, "sidecar: dimensions must be positive");
    n *= d;
  }
  require(n == payload.size(), "sidecar: dims do not match payload size");

  const std::uint64_t offset = static_cast<std::uint64_t>(out_.tellp());
  out_.write(kSidecarMagic, sizeof(kSidecarMagic));
  const std::uint32_t rank = static_cast<std::uint32_t>(dims.size());
  out_.write(reinterpret_cast<const char*>(&rank), sizeof(rank));
  out_.write(reinterpret_cast<const char*>(dims.data()),
             static_cast<std::streamsize>(dims.size() * sizeof(std::uint32_t)));
  out_.write(reinterpret_cast<const char*>(payload.data()),
             static_cast<std::streamsize>(payload.size() * sizeof(double)));
  if (!out_) throw IoError("write failed: " + tmp_path_.string());
  return offset;
}

void SidecarWriter::commit() {
  out_.flush();
  out_.close();
  if (!out_) throw IoError("flush failed: " + tmp_path_.string());
  std::filesystem::rename(tmp_path_, path_);
  committed_ = true;
}

SidecarReader::SidecarReader(std::filesystem::path path) : path_(std::move(path)) {
  in_.open(path_, std::ios::binary);
  if (!in_) throw IoError("cannot open sidecar: " + path_.string());
}

SidecarReader::Record SidecarReader::read_at(std::uint64_t offset) {
  in_.clear();
  in_.seekg(static_cast<std::streamoff>(offset));
  char magic[8];
  in_.read(magic, sizeof(magic));
  if (!in_ || std::memcmp(magic, kSidecarMagic, sizeof(magic)) != 0) {
    throw SchemaError("sidecar: bad record magic at offset " + std::to_string(offset) +
                      " in " + path_.string());
  }
  std::uint32_t rank = 0;
  in_.read(reinterpret_cast<char*>(&rank), sizeof(rank));
  if (!in_ || rank == 0 || rank > 8) {
    throw SchemaError("sidecar: bad record rank at offset " + std::to_string(offset));
  }
  Record rec;
  rec.dims.resize(rank);
  in_.read(reinterpret_cast<char*>(rec.dims.data()),
           static_cast<std::streamsize>(rank * sizeof(std::uint32_t)));
  std::uint64_t n = 1;
  for (std::uint32_t d : rec.dims) {
    if (d == 0) throw SchemaError("sidecar: zero dimension at offset " + std::to_string(offset));
    n *= d;
    if (n > (1ull << 32)) {
      throw SchemaError("sidecar: implausible record size at offset " + std::to_string(offset));
    }
  }
  rec.payload.resize(n);
  in_.read(reinterpret_cast<char*>(rec.payload.data()),
           static_cast<std::streamsize>(n * sizeof(double)));
  if (!in_) throw SchemaError("sidecar: truncated record at offset " + std::to_string(offset));
  return rec;
}

std::uint64_t fnv1a_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace rembed::dataio
