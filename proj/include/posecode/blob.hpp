#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace posecode {

// Named binary array with a shape header; the unit of parameter
// serialization. Data is stored row-major as float64 regardless of the
// in-memory scalar type.
struct NamedArray {
  std::string name;
  std::vector<int64_t> shape;
  std::vector<double> data;

  int64_t rows() const { return shape.empty() ? 0 : shape[0]; }
  int64_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
};

void save_blobs(const std::filesystem::path& path, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> load_blobs(const std::filesystem::path& path);

// FNV-1a over the file bytes; used for cache keys.
uint64_t file_content_hash(const std::filesystem::path& path);

}  // namespace posecode
