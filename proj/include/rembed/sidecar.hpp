#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace rembed::dataio {

// Binary sidecar: a sequence of records, each
//   8-byte magic "REMBF64\0", uint32 rank, uint32 dims[rank],
//   row-major float64 little-endian payload.
// Offsets returned by append() address a record's first magic byte.
inline constexpr char kSidecarMagic[8] = {'R', 'E', 'M', 'B', 'F', '6', '4', '\0'};

class SidecarWriter {
 public:
  explicit SidecarWriter(std::filesystem::path path);
  ~SidecarWriter();

  std::uint64_t append(std::span<const std::uint32_t> dims, std::span<const double> payload);
  void commit();  // flush and atomically rename into place

 private:
  std::filesystem::path path_;
  std::filesystem::path tmp_path_;
  std::ofstream out_;
  bool committed_ = false;
};

class SidecarReader {
 public:
  explicit SidecarReader(std::filesystem::path path);

  struct Record {
    std::vector<std::uint32_t> dims;
    std::vector<double> payload;
  };

  Record read_at(std::uint64_t offset);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
};

// FNV-1a 64 over a whole file; used for checkpoint integrity.
std::uint64_t fnv1a_file(const std::filesystem::path& path);

// Writes content to "<path>.tmp" then renames; partial output never lands
// at the destination.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

}  // namespace rembed::dataio
