#include "posecode/blob.hpp"

#include <fstream>

#include "posecode/error.hpp"

namespace posecode {

namespace {
constexpr char kMagic[8] = {'P', 'C', 'B', 'L', 'O', 'B', '1', '\n'};
}

void save_blobs(const std::filesystem::path& path, const std::vector<NamedArray>& arrays) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write blob file: " + path.string());
  out.write(kMagic, 8);
  const int64_t n = static_cast<int64_t>(arrays.size());
  out.write(reinterpret_cast<const char*>(&n), 8);
  for (const auto& a : arrays) {
    const int64_t name_len = static_cast<int64_t>(a.name.size());
    out.write(reinterpret_cast<const char*>(&name_len), 8);
    out.write(a.name.data(), name_len);
    const int64_t rank = static_cast<int64_t>(a.shape.size());
    out.write(reinterpret_cast<const char*>(&rank), 8);
    int64_t count = 1;
    for (const int64_t d : a.shape) {
      out.write(reinterpret_cast<const char*>(&d), 8);
      count *= d;
    }
    if (count != static_cast<int64_t>(a.data.size()))
      throw DataError("blob '" + a.name + "': shape/data size mismatch");
    out.write(reinterpret_cast<const char*>(a.data.data()),
              static_cast<std::streamsize>(a.data.size() * sizeof(double)));
  }
  if (!out) throw DataError("short write on blob file: " + path.string());
}

std::vector<NamedArray> load_blobs(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open blob file: " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != std::string(kMagic, 8))
    throw DataError("blob file " + path.string() + ": bad magic");
  int64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), 8);
  if (!in || n < 0 || n > (1 << 20)) throw DataError("blob file: bad array count");
  std::vector<NamedArray> arrays;
  arrays.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    NamedArray a;
    int64_t name_len = 0;
    in.read(reinterpret_cast<char*>(&name_len), 8);
    if (!in || name_len < 0 || name_len > (1 << 16)) throw DataError("blob file: bad name length");
    a.name.resize(static_cast<size_t>(name_len));
    in.read(a.name.data(), name_len);
    int64_t rank = 0;
    in.read(reinterpret_cast<char*>(&rank), 8);
    if (!in || rank < 0 || rank > 8) throw DataError("blob file: bad rank");
    int64_t count = 1;
    for (int64_t d = 0; d < rank; ++d) {
      int64_t dim = 0;
      in.read(reinterpret_cast<char*>(&dim), 8);
      if (!in || dim < 0) throw DataError("blob file: bad dimension");
      a.shape.push_back(dim);
      count *= dim;
    }
    a.data.resize(static_cast<size_t>(count));
    in.read(reinterpret_cast<char*>(a.data.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw DataError("blob file " + path.string() + ": truncated array '" + a.name + "'");
    arrays.push_back(std::move(a));
  }
  return arrays;
}

uint64_t file_content_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot hash file: " + path.string());
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (!in) break;
  }
  return h;
}

}  // namespace posecode
