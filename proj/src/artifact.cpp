#include "posecode/artifact.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "posecode/version.hpp"

namespace posecode {

namespace detail {

Manifest read_manifest_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open artifact manifest: " + path.string());
  Manifest kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos)
      throw DataError("artifact manifest " + path.string() + ": malformed line '" + line + "'");
    std::string key = line.substr(0, colon);
    std::string value = line.substr(colon + 1);
    while (!value.empty() && value.front() == ' ') value.erase(value.begin());
    kv[key] = value;
  }
  return kv;
}

void write_manifest_file(const std::filesystem::path& path, const Manifest& kv,
                         const std::vector<std::string>& order) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write artifact manifest: " + path.string());
  for (const auto& key : order) out << key << ": " << kv.at(key) << "\n";
  for (const auto& [key, value] : kv) {
    if (std::find(order.begin(), order.end(), key) == order.end())
      out << key << ": " << value << "\n";
  }
  if (!out) throw DataError("short write on manifest: " + path.string());
}

void check_format_version(const std::string& version, const std::string& what) {
  const auto dot = version.find('.');
  if (dot == std::string::npos)
    throw ArtifactMismatchError(what + ": malformed format version '" + version + "'");
  int major = -1;
  try {
    major = std::stoi(version.substr(0, dot));
  } catch (...) {
    throw ArtifactMismatchError(what + ": malformed format version '" + version + "'");
  }
  if (major != kArtifactFormatMajor)
    throw ArtifactMismatchError(what + ": unsupported format major version " +
                                std::to_string(major) + " (supported: " +
                                std::to_string(kArtifactFormatMajor) + ")");
}

}  // namespace detail

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_norm_file(const std::filesystem::path& path, const NormalizationParams& norm) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write normalization params: " + path.string());
  for (Eigen::Index d = 0; d < norm.min.size(); ++d)
    out << fmt_double(norm.min(d)) << " " << fmt_double(norm.max(d)) << "\n";
}

NormalizationParams read_norm_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open normalization params: " + path.string());
  std::vector<double> mins, maxs;
  double lo, hi;
  while (in >> lo >> hi) {
    mins.push_back(lo);
    maxs.push_back(hi);
  }
  NormalizationParams p;
  p.min = Eigen::Map<Eigen::VectorXd>(mins.data(), static_cast<Eigen::Index>(mins.size()));
  p.max = Eigen::Map<Eigen::VectorXd>(maxs.data(), static_cast<Eigen::Index>(maxs.size()));
  p.validate();
  return p;
}

}  // namespace

template <typename Scalar>
CodebookArtifact make_codebook_artifact(const CodebookModel<Scalar>& model,
                                        const SkeletonSpec& skeleton,
                                        const NormalizationParams& norm, double fps,
                                        uint64_t seed) {
  CodebookArtifact a;
  a.format_version = kArtifactFormatVersion;
  a.config = model.config();
  a.skeleton = skeleton;
  a.norm = norm;
  a.fps = fps;
  a.seed = seed;
  a.weights = model.export_arrays();
  return a;
}

template CodebookArtifact make_codebook_artifact<float>(const CodebookModel<float>&,
                                                        const SkeletonSpec&,
                                                        const NormalizationParams&, double,
                                                        uint64_t);
template CodebookArtifact make_codebook_artifact<double>(const CodebookModel<double>&,
                                                         const SkeletonSpec&,
                                                         const NormalizationParams&, double,
                                                         uint64_t);

void save_codebook_artifact(const CodebookArtifact& artifact, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  detail::Manifest kv;
  kv["format_version"] = artifact.format_version;
  kv["kind"] = "codebook";
  kv["vocab_size"] = std::to_string(artifact.config.vocab_size);
  kv["window"] = std::to_string(artifact.config.window);
  kv["embed"] = std::to_string(artifact.config.embed);
  kv["layers"] = std::to_string(artifact.config.layers);
  kv["heads"] = std::to_string(artifact.config.heads);
  kv["ff_size"] = std::to_string(artifact.config.ff_size);
  kv["dropout"] = fmt_double(artifact.config.dropout);
  kv["counter_weight"] = fmt_double(artifact.config.counter_weight);
  kv["contrastive_weight"] = fmt_double(artifact.config.contrastive_weight);
  kv["temperature"] = fmt_double(artifact.config.temperature);
  kv["lr"] = fmt_double(artifact.config.lr);
  kv["plateau_patience"] = std::to_string(artifact.config.plateau_patience);
  kv["plateau_factor"] = fmt_double(artifact.config.plateau_factor);
  kv["joints"] = std::to_string(artifact.skeleton.joints);
  kv["dims"] = std::to_string(artifact.skeleton.dims);
  kv["fps"] = fmt_double(artifact.fps);
  kv["seed"] = std::to_string(artifact.seed);
  std::ostringstream groups;
  for (const auto& g : artifact.skeleton.groups)
    groups << g.name << " " << g.begin << " " << g.end << " ";
  kv["layout"] = groups.str();
  detail::write_manifest_file(dir / "manifest.txt", kv,
                              {"format_version", "kind", "vocab_size", "window", "embed"});
  write_norm_file(dir / "norm.txt", artifact.norm);
  save_blobs(dir / "params.bin", artifact.weights);
}

CodebookArtifact load_codebook_artifact(const std::filesystem::path& dir) {
  const auto kv = detail::read_manifest_file(dir / "manifest.txt");
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end())
      throw DataError("artifact manifest missing key '" + key + "' in " + dir.string());
    return it->second;
  };
  CodebookArtifact a;
  a.format_version = need("format_version");
  detail::check_format_version(a.format_version, "codebook artifact " + dir.string());
  if (need("kind") != "codebook")
    throw ArtifactMismatchError("artifact at " + dir.string() + " has kind '" + need("kind") +
                                "', expected 'codebook'");
  a.config.vocab_size = std::stoi(need("vocab_size"));
  a.config.window = std::stoi(need("window"));
  a.config.embed = std::stoi(need("embed"));
  a.config.layers = std::stoi(need("layers"));
  a.config.heads = std::stoi(need("heads"));
  a.config.ff_size = std::stoi(need("ff_size"));
  a.config.dropout = std::stod(need("dropout"));
  a.config.counter_weight = std::stod(need("counter_weight"));
  a.config.contrastive_weight = std::stod(need("contrastive_weight"));
  a.config.temperature = std::stod(need("temperature"));
  a.config.lr = std::stod(need("lr"));
  a.config.plateau_patience = std::stoi(need("plateau_patience"));
  a.config.plateau_factor = std::stod(need("plateau_factor"));
  a.skeleton.joints = std::stoi(need("joints"));
  a.skeleton.dims = std::stoi(need("dims"));
  std::istringstream groups(need("layout"));
  JointGroup g;
  while (groups >> g.name >> g.begin >> g.end) a.skeleton.groups.push_back(g);
  if (a.skeleton.groups.empty())
    a.skeleton.groups = {{"joints", 0, a.skeleton.joints}};
  a.skeleton.validate();
  a.fps = std::stod(need("fps"));
  a.seed = std::stoull(need("seed"));
  a.norm = read_norm_file(dir / "norm.txt");
  if (a.norm.min.size() != a.skeleton.dims)
    throw DataError("artifact norm params have " + std::to_string(a.norm.min.size()) +
                    " dims, skeleton has " + std::to_string(a.skeleton.dims));
  a.weights = load_blobs(dir / "params.bin");
  return a;
}

std::string read_artifact_version(const std::filesystem::path& dir) {
  const auto kv = detail::read_manifest_file(dir / "manifest.txt");
  auto it = kv.find("format_version");
  if (it == kv.end()) throw DataError("artifact manifest missing format_version");
  return it->second;
}

}  // namespace posecode
