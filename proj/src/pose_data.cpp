#include "posecode/pose_data.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cctype>
#include <cstring>
#include <fstream>
#include <sstream>

#include "posecode/version.hpp"

namespace posecode {

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void check_finite_or_throw(const Eigen::MatrixXd& m, const std::string& what) {
  if (!m.allFinite()) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        if (!std::isfinite(m(r, c))) {
          throw NonFiniteValueError(what + ": non-finite value at frame " + std::to_string(r) +
                                    ", coordinate " + std::to_string(c));
        }
      }
    }
  }
}

}  // namespace

SkeletonSpec SkeletonSpec::default_sign_layout(int dims) {
  SkeletonSpec s;
  s.joints = 61;
  s.dims = dims;
  s.groups = {{"left_hand", 0, 21}, {"right_hand", 21, 42}, {"body", 42, 51}, {"face", 51, 61}};
  return s;
}

SkeletonSpec SkeletonSpec::plain(int joints, int dims) {
  SkeletonSpec s;
  s.joints = joints;
  s.dims = dims;
  s.groups = {{"joints", 0, joints}};
  return s;
}

void SkeletonSpec::validate() const {
  if (joints <= 0 || dims <= 0) throw DataError("skeleton: joints and dims must be positive");
  if (groups.empty()) throw DataError("skeleton: at least one joint group required");
  int covered = 0;
  int cursor = 0;
  for (const auto& g : groups) {
    if (g.begin != cursor || g.end <= g.begin)
      throw DataError("skeleton: group '" + g.name + "' does not tile the joint range");
    covered += g.end - g.begin;
    cursor = g.end;
  }
  if (covered != joints) throw DataError("skeleton: group sizes sum to " +
                                         std::to_string(covered) + ", expected " +
                                         std::to_string(joints));
}

void NormalizationParams::validate() const {
  if (min.size() != max.size() || min.size() == 0)
    throw DataError("normalization params: min/max size mismatch");
  for (Eigen::Index d = 0; d < min.size(); ++d) {
    if (!(max(d) > min(d)))
      throw DegenerateDimensionError("normalization params: max <= min on dimension " +
                                     std::to_string(d));
  }
}

void PoseSequence::validate() const {
  spec.validate();
  if (frames.rows() < 1) throw DataError("pose sequence: at least one frame required");
  if (frames.cols() != spec.coords())
    throw JointCountError("pose sequence: frame width " + std::to_string(frames.cols()) +
                          " does not match J*D = " + std::to_string(spec.coords()));
  if (!(fps > 0.0)) throw DataError("pose sequence: fps must be positive");
  check_finite_or_throw(frames, "pose sequence");
}

namespace {

// ---- text variant ----

PoseSequence load_pose_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open pose file: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kPoseTextMagic)
    throw MalformedHeaderError("pose file " + path.string() + ": missing magic line");

  int64_t joints = -1, dims = -1, declared_frames = -1;
  double fps = -1.0;
  std::string source_id;
  std::vector<JointGroup> groups;
  std::optional<NormalizationParams> norm;

  while (in.peek() == '#') {
    std::getline(in, line);
    std::istringstream ls(line);
    std::string hash, key;
    ls >> hash >> key;
    if (key == "joints") ls >> joints;
    else if (key == "dims") ls >> dims;
    else if (key == "frames") ls >> declared_frames;
    else if (key == "fps") ls >> fps;
    else if (key == "source") ls >> source_id;
    else if (key == "group") {
      JointGroup g;
      ls >> g.name >> g.begin >> g.end;
      groups.push_back(g);
    } else if (key == "norm") {
      if (dims <= 0) throw MalformedHeaderError("pose file: norm record before dims");
      NormalizationParams p;
      p.min.resize(dims);
      p.max.resize(dims);
      for (int64_t d = 0; d < dims; ++d) ls >> p.min(d);
      for (int64_t d = 0; d < dims; ++d) ls >> p.max(d);
      norm = p;
    } else {
      throw MalformedHeaderError("pose file: unknown header record '" + key + "'");
    }
    if (ls.fail()) throw MalformedHeaderError("pose file: malformed header record '" + key + "'");
  }
  if (joints <= 0 || dims <= 0 || declared_frames <= 0 || !(fps > 0.0))
    throw MalformedHeaderError("pose file " + path.string() +
                               ": header must declare positive joints, dims, frames, fps");

  PoseSequence seq;
  seq.spec.joints = static_cast<int>(joints);
  seq.spec.dims = static_cast<int>(dims);
  seq.spec.groups = groups.empty()
                        ? std::vector<JointGroup>{{"joints", 0, static_cast<int>(joints)}}
                        : groups;
  seq.fps = fps;
  seq.source_id = source_id;
  seq.norm = norm;

  const int64_t coords = joints * dims;
  seq.frames.resize(declared_frames, coords);
  int64_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (row >= declared_frames)
      throw FrameCountError("pose file " + path.string() + ": more frames than declared " +
                            std::to_string(declared_frames));
    std::istringstream ls(line);
    for (int64_t c = 0; c < coords; ++c) {
      if (!(ls >> seq.frames(row, c))) {
        // num_get rejects nan/inf spellings; tell those apart from a short row.
        ls.clear();
        std::string token;
        if (ls >> token) {
          std::string lowered = token;
          for (auto& ch : lowered) ch = static_cast<char>(std::tolower(ch));
          if (lowered.find("nan") != std::string::npos || lowered.find("inf") != std::string::npos)
            throw NonFiniteValueError("pose file " + path.string() + ": non-finite value '" +
                                      token + "' at frame " + std::to_string(row));
          throw JointCountError("pose file " + path.string() + ": unparseable coordinate '" +
                                token + "' at frame " + std::to_string(row));
        }
        throw JointCountError("pose file " + path.string() + ": frame " + std::to_string(row) +
                              " has fewer than " + std::to_string(coords) + " coordinates");
      }
    }
    double extra;
    if (ls >> extra)
      throw JointCountError("pose file " + path.string() + ": frame " + std::to_string(row) +
                            " has more than " + std::to_string(coords) + " coordinates");
    ++row;
  }
  if (row != declared_frames)
    throw FrameCountError("pose file " + path.string() + ": declared " +
                          std::to_string(declared_frames) + " frames, found " +
                          std::to_string(row));
  check_finite_or_throw(seq.frames, "pose file " + path.string());
  seq.validate();
  return seq;
}

void save_pose_text(const PoseSequence& seq, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write pose file: " + path.string());
  out << kPoseTextMagic << "\n";
  if (!seq.source_id.empty()) out << "# source " << seq.source_id << "\n";
  out << "# joints " << seq.spec.joints << "\n";
  out << "# dims " << seq.spec.dims << "\n";
  out << "# frames " << seq.frames.rows() << "\n";
  out << "# fps " << format_double(seq.fps) << "\n";
  for (const auto& g : seq.spec.groups)
    out << "# group " << g.name << " " << g.begin << " " << g.end << "\n";
  if (seq.norm) {
    out << "# norm";
    for (Eigen::Index d = 0; d < seq.norm->min.size(); ++d) out << " " << format_double(seq.norm->min(d));
    for (Eigen::Index d = 0; d < seq.norm->max.size(); ++d) out << " " << format_double(seq.norm->max(d));
    out << "\n";
  }
  for (Eigen::Index r = 0; r < seq.frames.rows(); ++r) {
    for (Eigen::Index c = 0; c < seq.frames.cols(); ++c) {
      if (c) out << " ";
      out << format_double(seq.frames(r, c));
    }
    out << "\n";
  }
  if (!out) throw DataError("short write on pose file: " + path.string());
}

// ---- binary variant ----

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::string& ctx) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw MalformedHeaderError("pose file: truncated " + ctx);
  return v;
}

void put_string(std::ofstream& out, const std::string& s) {
  put<int64_t>(out, static_cast<int64_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::ifstream& in, const std::string& ctx) {
  const int64_t n = get<int64_t>(in, ctx);
  if (n < 0 || n > (1 << 20)) throw MalformedHeaderError("pose file: bad string length in " + ctx);
  std::string s(static_cast<size_t>(n), '\0');
  in.read(s.data(), n);
  if (!in) throw MalformedHeaderError("pose file: truncated " + ctx);
  return s;
}

void save_pose_binary(const PoseSequence& seq, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write pose file: " + path.string());
  out.write(kPoseBinaryMagic, 8);
  put<int64_t>(out, seq.spec.joints);
  put<int64_t>(out, seq.spec.dims);
  put<int64_t>(out, seq.frames.rows());
  put<double>(out, seq.fps);
  put_string(out, seq.source_id);
  put<int64_t>(out, static_cast<int64_t>(seq.spec.groups.size()));
  for (const auto& g : seq.spec.groups) {
    put_string(out, g.name);
    put<int64_t>(out, g.begin);
    put<int64_t>(out, g.end);
  }
  put<uint8_t>(out, seq.norm ? 1 : 0);
  if (seq.norm) {
    for (Eigen::Index d = 0; d < seq.spec.dims; ++d) put<double>(out, seq.norm->min(d));
    for (Eigen::Index d = 0; d < seq.spec.dims; ++d) put<double>(out, seq.norm->max(d));
  }
  for (Eigen::Index r = 0; r < seq.frames.rows(); ++r)
    for (Eigen::Index c = 0; c < seq.frames.cols(); ++c) put<double>(out, seq.frames(r, c));
  if (!out) throw DataError("short write on pose file: " + path.string());
}

PoseSequence load_pose_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open pose file: " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kPoseBinaryMagic, 8) != 0)
    throw MalformedHeaderError("pose file " + path.string() + ": bad binary magic");

  PoseSequence seq;
  const int64_t joints = get<int64_t>(in, "joints");
  const int64_t dims = get<int64_t>(in, "dims");
  const int64_t frames = get<int64_t>(in, "frames");
  seq.fps = get<double>(in, "fps");
  if (joints <= 0 || dims <= 0 || frames <= 0 || !(seq.fps > 0.0))
    throw MalformedHeaderError("pose file " + path.string() + ": invalid binary header");
  seq.spec.joints = static_cast<int>(joints);
  seq.spec.dims = static_cast<int>(dims);
  seq.source_id = get_string(in, "source id");
  const int64_t n_groups = get<int64_t>(in, "group count");
  for (int64_t i = 0; i < n_groups; ++i) {
    JointGroup g;
    g.name = get_string(in, "group name");
    g.begin = static_cast<int>(get<int64_t>(in, "group begin"));
    g.end = static_cast<int>(get<int64_t>(in, "group end"));
    seq.spec.groups.push_back(g);
  }
  if (seq.spec.groups.empty()) seq.spec.groups = {{"joints", 0, seq.spec.joints}};
  if (get<uint8_t>(in, "norm flag")) {
    NormalizationParams p;
    p.min.resize(dims);
    p.max.resize(dims);
    for (int64_t d = 0; d < dims; ++d) p.min(d) = get<double>(in, "norm min");
    for (int64_t d = 0; d < dims; ++d) p.max(d) = get<double>(in, "norm max");
    seq.norm = p;
  }
  seq.frames.resize(frames, joints * dims);
  for (int64_t r = 0; r < frames; ++r) {
    for (int64_t c = 0; c < joints * dims; ++c) {
      double v;
      in.read(reinterpret_cast<char*>(&v), sizeof(double));
      if (!in)
        throw FrameCountError("pose file " + path.string() + ": payload ends at frame " +
                              std::to_string(r) + " of declared " + std::to_string(frames));
      seq.frames(r, c) = v;
    }
  }
  char trailing;
  if (in.read(&trailing, 1))
    throw FrameCountError("pose file " + path.string() + ": payload longer than declared");
  check_finite_or_throw(seq.frames, "pose file " + path.string());
  seq.validate();
  return seq;
}

}  // namespace

PoseSequence load_pose_file(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".pose") return load_pose_text(path);
  if (ext == ".poseb") return load_pose_binary(path);
  throw UsageError("unknown pose file extension '" + ext + "' (expected .pose or .poseb)");
}

void save_pose_file(const PoseSequence& seq, const std::filesystem::path& path) {
  seq.validate();
  const auto ext = path.extension().string();
  if (ext == ".pose") return save_pose_text(seq, path);
  if (ext == ".poseb") return save_pose_binary(seq, path);
  throw UsageError("unknown pose file extension '" + ext + "' (expected .pose or .poseb)");
}

NormalizationParams compute_normalization(const std::vector<PoseSequence>& seqs) {
  if (seqs.empty()) throw DataError("normalization: no sequences given");
  const int dims = seqs.front().spec.dims;
  NormalizationParams p;
  p.min = Eigen::VectorXd::Constant(dims, std::numeric_limits<double>::infinity());
  p.max = Eigen::VectorXd::Constant(dims, -std::numeric_limits<double>::infinity());
  for (const auto& seq : seqs) {
    if (seq.spec.dims != dims) throw DataError("normalization: mixed dimensionality");
    for (int j = 0; j < seq.spec.joints; ++j) {
      for (int d = 0; d < dims; ++d) {
        const auto col = seq.frames.col(j * dims + d);
        p.min(d) = std::min(p.min(d), col.minCoeff());
        p.max(d) = std::max(p.max(d), col.maxCoeff());
      }
    }
  }
  for (int d = 0; d < dims; ++d) {
    if (!(p.max(d) - p.min(d) > 1e-12))
      throw DegenerateDimensionError("normalization: degenerate dimension " + std::to_string(d) +
                                     " (max == min)");
  }
  return p;
}

NormalizationParams compute_normalization(const PoseSequence& seq) {
  return compute_normalization(std::vector<PoseSequence>{seq});
}

std::pair<PoseSequence, NormalizationParams> normalize(
    const PoseSequence& seq, const std::optional<NormalizationParams>& params) {
  seq.validate();
  NormalizationParams p;
  if (params) {
    params->validate();
    if (params->min.size() != seq.spec.dims)
      throw DataError("normalization params have " + std::to_string(params->min.size()) +
                      " dimensions, sequence has " + std::to_string(seq.spec.dims));
    p = *params;
  } else {
    p = compute_normalization(seq);
  }
  PoseSequence out = seq;
  const bool clamp = params.has_value();
  for (int j = 0; j < seq.spec.joints; ++j) {
    for (int d = 0; d < seq.spec.dims; ++d) {
      const int c = j * seq.spec.dims + d;
      const double lo = p.min(d), span = p.max(d) - p.min(d);
      for (Eigen::Index r = 0; r < out.frames.rows(); ++r) {
        double v = (out.frames(r, c) - lo) / span;
        if (clamp) v = std::clamp(v, 0.0, 1.0);
        out.frames(r, c) = v;
      }
    }
  }
  out.norm = p;
  return {out, p};
}

PoseSequence denormalize(const PoseSequence& seq, const NormalizationParams& params) {
  seq.validate();
  params.validate();
  PoseSequence out = seq;
  for (int j = 0; j < seq.spec.joints; ++j) {
    for (int d = 0; d < seq.spec.dims; ++d) {
      const int c = j * seq.spec.dims + d;
      out.frames.col(c) =
          seq.frames.col(c).array() * (params.max(d) - params.min(d)) + params.min(d);
    }
  }
  out.norm.reset();
  return out;
}

PoseSequence subsample(const PoseSequence& seq, int factor) {
  if (factor < 1) throw UsageError("subsample: factor must be >= 1, got " + std::to_string(factor));
  seq.validate();
  if (factor == 1) return seq;
  const int kept = (seq.frame_count() + factor - 1) / factor;
  PoseSequence out = seq;
  out.frames.resize(kept, seq.frames.cols());
  for (int i = 0; i < kept; ++i) out.frames.row(i) = seq.frames.row(static_cast<Eigen::Index>(i) * factor);
  out.fps = seq.fps / factor;
  return out;
}

}  // namespace posecode
