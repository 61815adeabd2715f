#include "posecode/tokenizer.hpp"

#include <fstream>
#include <sstream>

#include "posecode/version.hpp"

namespace posecode {

TokenCodec::TokenCodec(const CodebookArtifact& artifact)
    : artifact_(artifact),
      model_(std::make_shared<CodebookModel<float>>(artifact.instantiate<float>())) {
  const int n = artifact_.config.vocab_size;
  const int u = artifact_.config.window;
  const int coords = artifact_.skeleton.coords();
  table_.resize(n, static_cast<Eigen::Index>(u) * coords);
  for (int k = 0; k < n; ++k) {
    const nn::Mat<float> entry = unflatten_rm(
        nn::Mat<float>(model_->entry_matrix().row(k)), u, artifact_.config.embed);
    const auto [poses, counters] = model_->decode(entry);
    for (int f = 0; f < u; ++f)
      for (int c = 0; c < coords; ++c)
        table_(k, static_cast<Eigen::Index>(f) * coords + c) =
            static_cast<double>(poses(f, c));
  }
}

void TokenCodec::set_token_pose_table(Eigen::MatrixXd table) {
  if (table.rows() != table_.rows() || table.cols() != table_.cols())
    throw ArtifactMismatchError("token pose table shape mismatch");
  table_ = std::move(table);
}

TokenSequence TokenCodec::tokenize(const PoseSequence& seq) const {
  seq.validate();
  if (!seq.spec.same_shape(artifact_.skeleton))
    throw ArtifactMismatchError("tokenize: sequence skeleton " + std::to_string(seq.spec.joints) +
                                "x" + std::to_string(seq.spec.dims) + " does not match artifact " +
                                std::to_string(artifact_.skeleton.joints) + "x" +
                                std::to_string(artifact_.skeleton.dims));
  const int u_cb = window();
  const int u = seq.frame_count();
  if (u < u_cb)
    throw DataError("tokenize: sequence of " + std::to_string(u) +
                    " frames shorter than window " + std::to_string(u_cb));
  const double lo = seq.frames.minCoeff(), hi = seq.frames.maxCoeff();
  if (lo < -1e-6 || hi > 1.0 + 1e-6)
    throw DataError("tokenize: coordinates in [" + std::to_string(lo) + ", " + std::to_string(hi) +
                    "] exceed [0,1]; normalize with the artifact's params first");

  TokenSequence out;
  out.source_id = seq.source_id;
  out.source_len = u;
  const int m = u / u_cb;
  out.dropped_frames = u - m * u_cb;
  out.tokens.reserve(m);
  for (int w = 0; w < m; ++w) {
    const nn::Mat<float> window =
        seq.frames.middleRows(static_cast<Eigen::Index>(w) * u_cb, u_cb).cast<float>();
    out.tokens.push_back(model_->quantize_infer(model_->encode(window)).first);
  }
  return out;
}

PoseSequence TokenCodec::detokenize(const TokenSequence& tokens) const {
  if (tokens.tokens.empty())
    throw DataError("detokenize: empty token sequence (pose sequences need >= 1 frame)");
  const int n = vocab_size();
  for (size_t i = 0; i < tokens.tokens.size(); ++i) {
    if (tokens.tokens[i] < 0 || tokens.tokens[i] >= n)
      throw DataError("detokenize: token " + std::to_string(tokens.tokens[i]) + " at position " +
                      std::to_string(i) + " outside [0, " + std::to_string(n) + ")");
  }
  const int u_cb = window();
  const int coords = artifact_.skeleton.coords();
  PoseSequence out;
  out.spec = artifact_.skeleton;
  out.fps = artifact_.fps;
  out.source_id = tokens.source_id;
  out.frames.resize(static_cast<Eigen::Index>(tokens.tokens.size()) * u_cb, coords);
  for (size_t k = 0; k < tokens.tokens.size(); ++k) {
    const auto row = table_.row(tokens.tokens[k]);
    for (int f = 0; f < u_cb; ++f)
      for (int c = 0; c < coords; ++c)
        out.frames(static_cast<Eigen::Index>(k) * u_cb + f, c) =
            row(static_cast<Eigen::Index>(f) * coords + c);
  }
  return out;
}

TokenSequence tokenize(const PoseSequence& seq, const CodebookArtifact& artifact) {
  return TokenCodec(artifact).tokenize(seq);
}

PoseSequence detokenize(const TokenSequence& tokens, const CodebookArtifact& artifact) {
  return TokenCodec(artifact).detokenize(tokens);
}

Eigen::MatrixXd build_token_pose_table(const CodebookArtifact& artifact) {
  return TokenCodec(artifact).token_pose_table();
}

void save_token_file(const std::filesystem::path& path, const std::vector<TokenSequence>& seqs,
                     int vocab_size, int window) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write token file: " + path.string());
  out << kTokenFileMagic << "\n";
  out << "# vocab " << vocab_size << "\n";
  out << "# window " << window << "\n";
  for (const auto& s : seqs) {
    std::string id = s.source_id.empty() ? "seq" : s.source_id;
    for (auto& ch : id)
      if (ch == ' ' || ch == '\t') ch = '_';
    out << id << " " << s.source_len;
    for (const int t : s.tokens) out << " " << t;
    out << "\n";
  }
  if (!out) throw DataError("short write on token file: " + path.string());
}

TokenFile load_token_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open token file: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kTokenFileMagic)
    throw MalformedHeaderError("token file " + path.string() + ": missing magic line");
  TokenFile tf;
  for (int i = 0; i < 2; ++i) {
    if (!std::getline(in, line)) throw MalformedHeaderError("token file: truncated header");
    std::istringstream ls(line);
    std::string hash, key;
    ls >> hash >> key;
    if (key == "vocab") ls >> tf.vocab_size;
    else if (key == "window") ls >> tf.window;
    else throw MalformedHeaderError("token file: unexpected header record '" + key + "'");
    if (ls.fail()) throw MalformedHeaderError("token file: malformed header record");
  }
  if (tf.vocab_size <= 0 || tf.window <= 0)
    throw MalformedHeaderError("token file: header must declare positive vocab and window");
  int line_no = 3;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    TokenSequence s;
    if (!(ls >> s.source_id >> s.source_len))
      throw DataError("token file " + path.string() + ": malformed line " +
                      std::to_string(line_no));
    int t;
    while (ls >> t) {
      if (t < 0 || t >= tf.vocab_size)
        throw DataError("token file " + path.string() + ": token " + std::to_string(t) +
                        " out of range on line " + std::to_string(line_no));
      s.tokens.push_back(t);
    }
    s.dropped_frames = s.source_len - static_cast<int>(s.tokens.size()) * tf.window;
    tf.sequences.push_back(std::move(s));
  }
  return tf;
}

}  // namespace posecode
