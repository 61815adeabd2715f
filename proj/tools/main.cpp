#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "posecode/metrics.hpp"
#include "posecode/pipeline.hpp"
#include "posecode/version.hpp"
#include "render.hpp"
#include "run_config.hpp"

namespace posecode::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> lowercase_words(const std::string& line) {
  std::vector<std::string> words;
  std::istringstream ls(line);
  std::string w;
  while (ls >> w) {
    for (auto& ch : w) ch = static_cast<char>(std::tolower(ch));
    words.push_back(w);
  }
  return words;
}

void write_run_info(const fs::path& dir, const std::string& command, const json& config,
                    const json& inputs) {
  fs::create_directories(dir);
  json info{{"command", command},
            {"library_version", kLibraryVersion},
            {"config", config},
            {"inputs", inputs}};
  std::ofstream out(dir / "run_info.json");
  out << info.dump(2) << "\n";
  if (!out) throw DataError("cannot write run_info.json in " + dir.string());
  std::ofstream cfg(dir / "config.json");
  cfg << config.dump(2) << "\n";
}

json artifact_input(const fs::path& dir) {
  return json{{"path", dir.string()}, {"format_version", read_artifact_version(dir)}};
}

std::string split_manifest(const std::string& split) {
  if (split == "all") return "manifest.tsv";
  if (split == "train" || split == "dev" || split == "test") return "manifest_" + split + ".tsv";
  throw UsageError("unknown split '" + split + "' (expected train|dev|test|all)");
}

// Token-pose table cache under POSECODE_CACHE_DIR, keyed by the artifact's
// content so a retrained artifact never reuses a stale table.
TokenCodec make_codec(const CodebookArtifact& artifact, const fs::path& artifact_dir) {
  TokenCodec codec(artifact);
  const char* cache_root = std::getenv("POSECODE_CACHE_DIR");
  if (!cache_root || !*cache_root) return codec;
  const uint64_t key = file_content_hash(artifact_dir / "params.bin") ^
                       (file_content_hash(artifact_dir / "manifest.txt") * 0x9e3779b97f4a7c15ULL);
  char name[64];
  std::snprintf(name, sizeof(name), "token_table_%016llx.bin",
                static_cast<unsigned long long>(key));
  const fs::path cache_file = fs::path(cache_root) / name;
  if (fs::exists(cache_file)) {
    const auto blobs = load_blobs(cache_file);
    if (blobs.size() == 1 && blobs[0].name == "token_pose_table") {
      Eigen::MatrixXd table(blobs[0].rows(), blobs[0].cols());
      size_t k = 0;
      for (Eigen::Index r = 0; r < table.rows(); ++r)
        for (Eigen::Index c = 0; c < table.cols(); ++c) table(r, c) = blobs[0].data[k++];
      codec.set_token_pose_table(std::move(table));
      return codec;
    }
  }
  fs::create_directories(cache_root);
  NamedArray a;
  a.name = "token_pose_table";
  const auto& t = codec.token_pose_table();
  a.shape = {t.rows(), t.cols()};
  a.data.reserve(static_cast<size_t>(t.size()));
  for (Eigen::Index r = 0; r < t.rows(); ++r)
    for (Eigen::Index c = 0; c < t.cols(); ++c) a.data.push_back(t(r, c));
  save_blobs(cache_file, {a});
  return codec;
}

void write_training_log(const fs::path& path, const std::vector<double>& losses,
                        const std::vector<std::pair<int, ReplacementReport>>& replacements,
                        double final_lr) {
  std::ofstream out(path);
  for (size_t e = 0; e < losses.size(); ++e) out << "epoch " << e << " loss " << losses[e] << "\n";
  for (const auto& [epoch, report] : replacements) {
    out << "replacement epoch " << epoch;
    if (report.skipped) out << " skipped: " << report.message;
    else out << " replaced " << report.replaced.size();
    out << "\n";
  }
  out << "final_lr " << final_lr << "\n";
}

// ---- commands -------------------------------------------------------------

int cmd_gen_data(const RunConfig& cfg, const fs::path& out, bool force) {
  if (fs::exists(out) && !fs::is_empty(out) && !force)
    throw UsageError("output directory " + out.string() +
                     " exists and is not empty (use --force to overwrite)");
  if (force && fs::exists(out)) fs::remove_all(out);
  const SyntheticCorpus corpus = generate_synthetic_corpus(cfg.data);
  write_corpus(corpus, out);
  write_run_info(out, "gen-data", cfg.to_json(), json::object());
  std::cout << "wrote " << corpus.records.size() << " records to " << out.string() << "\n";
  return 0;
}

int cmd_train_codebook(const RunConfig& cfg, const fs::path& corpus, const fs::path& out) {
  CodebookTrainOptions opts;
  opts.epochs = cfg.codebook_epochs;
  opts.batch_size = cfg.codebook_batch_size;
  opts.seed = cfg.seed;
  const std::optional<ReplacementPolicy> policy =
      cfg.replacement_enabled ? std::optional<ReplacementPolicy>(cfg.replacement) : std::nullopt;
  const CodebookTrainingRun run =
      train_codebook_pipeline(corpus, cfg.codebook, policy, opts, cfg.subsample,
                              cfg.window_stride);
  save_codebook_artifact(run.artifact, out);
  write_training_log(out / "training_log.txt", run.result.epoch_loss, run.result.replacements,
                     run.result.final_lr);
  write_run_info(out, "train-codebook", cfg.to_json(), json{{"corpus", corpus.string()}});
  std::cout << "trained codebook: final epoch loss " << run.result.epoch_loss.back() << " after "
            << run.result.epoch_loss.size() << " epochs\n";
  return 0;
}

int cmd_tokenize(const fs::path& artifact_dir, const fs::path& corpus, const std::string& split,
                 int subsample, const fs::path& out) {
  const CodebookArtifact artifact = load_codebook_artifact(artifact_dir);
  const TokenCodec codec = make_codec(artifact, artifact_dir);
  const LoadedSplit loaded = load_split(corpus, split_manifest(split), subsample);
  const std::vector<TokenSequence> tokens = tokenize_split(codec, loaded);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_token_file(out, tokens, codec.vocab_size(), codec.window());
  json info{{"command", "tokenize"},
            {"library_version", kLibraryVersion},
            {"inputs",
             json{{"artifact", artifact_input(artifact_dir)},
                  {"corpus", corpus.string()},
                  {"split", split},
                  {"subsample", subsample}}}};
  std::ofstream ri(out.string() + ".run.json");
  ri << info.dump(2) << "\n";
  std::cout << "tokenized " << tokens.size() << " sequences to " << out.string() << "\n";
  return 0;
}

int cmd_train_translator(const RunConfig& cfg, const fs::path& corpus, const std::string& split,
                         const fs::path& tokens_file, const std::string& dev_split,
                         const fs::path& dev_tokens_file, const fs::path& out) {
  const TokenFile tokens = load_token_file(tokens_file);
  const LoadedSplit loaded = load_split(corpus, split_manifest(split), 1);
  if (loaded.entries.size() != tokens.sequences.size())
    throw DataError("token file has " + std::to_string(tokens.sequences.size()) +
                    " sequences, split manifest has " + std::to_string(loaded.entries.size()));
  std::vector<TranslationPair> pairs;
  for (size_t i = 0; i < tokens.sequences.size(); ++i)
    pairs.push_back({loaded.entries[i].sentence, tokens.sequences[i].tokens});

  std::vector<TranslationPair> dev_pairs;
  if (!dev_tokens_file.empty()) {
    const TokenFile dev_tokens = load_token_file(dev_tokens_file);
    if (dev_tokens.vocab_size != tokens.vocab_size)
      throw ArtifactMismatchError("dev token file vocab differs from train token file");
    const LoadedSplit dev_loaded = load_split(corpus, split_manifest(dev_split), 1);
    if (dev_loaded.entries.size() != dev_tokens.sequences.size())
      throw DataError("dev token file and dev manifest disagree on sequence count");
    for (size_t i = 0; i < dev_tokens.sequences.size(); ++i)
      dev_pairs.push_back({dev_loaded.entries[i].sentence, dev_tokens.sequences[i].tokens});
  }

  TranslatorTrainOptions opts;
  opts.epochs = cfg.translator_epochs;
  opts.batch_size = cfg.translator_batch_size;
  opts.seed = cfg.seed;
  auto [model, result] =
      train_translator<float>(pairs, cfg.translator, tokens.vocab_size, opts, dev_pairs);
  save_translator_artifact(make_translator_artifact(model, cfg.seed), out);
  write_training_log(out / "training_log.txt", result.epoch_loss, {}, result.final_lr);
  write_run_info(out, "train-translator", cfg.to_json(),
                 json{{"corpus", corpus.string()},
                      {"tokens", tokens_file.string()},
                      {"dev_tokens", dev_tokens_file.string()}});
  std::cout << "trained translator: final loss " << result.epoch_loss.back()
            << ", teacher-forced accuracy " << teacher_forced_accuracy(model, pairs) << "\n";
  return 0;
}

int cmd_translate(const fs::path& model_dir, const fs::path& artifact_dir,
                  const fs::path& input_file, const fs::path& out, bool stitch,
                  const StitchConfig& stitch_cfg, int beam_size, double length_penalty,
                  int max_len) {
  const CodebookArtifact artifact = load_codebook_artifact(artifact_dir);
  TranslatorArtifact tartifact = load_translator_artifact(model_dir);
  if (tartifact.codebook_size != artifact.config.vocab_size)
    throw ArtifactMismatchError("translator was trained against N=" +
                                std::to_string(tartifact.codebook_size) +
                                ", codebook artifact has N=" +
                                std::to_string(artifact.config.vocab_size));
  if (max_len > 0) {
    tartifact.config.max_output_len = max_len;
    tartifact.max_output_len = max_len;
  }
  const TranslatorModel<float> model = tartifact.instantiate<float>();
  const TokenCodec codec = make_codec(artifact, artifact_dir);

  std::ifstream in(input_file);
  if (!in) throw DataError("cannot open input sentences: " + input_file.string());
  fs::create_directories(out / "poses");
  std::vector<TokenSequence> all_tokens;
  std::string line;
  int index = 0;
  char name[64];
  while (std::getline(in, line)) {
    const std::vector<std::string> words = lowercase_words(line);
    if (words.empty()) continue;
    const DecodeResult decoded = beam_search(model, words, beam_size, length_penalty);
    const std::vector<int> tokens = decoded.tokens();
    if (tokens.empty())
      throw DataError("empty translation for input line " + std::to_string(index + 1) + ": '" +
                      line + "'");
    std::snprintf(name, sizeof(name), "sent_%05d", index);
    TokenSequence ts;
    ts.tokens = tokens;
    ts.source_len = static_cast<int>(tokens.size()) * codec.window();
    ts.source_id = name;
    all_tokens.push_back(ts);

    PoseSequence pose = codec.detokenize(ts);
    if (stitch)
      pose = stitch_apply(pose, token_boundaries(static_cast<int>(tokens.size()), codec.window()),
                          stitch_cfg);
    pose = denormalize(pose, artifact.norm);
    pose.norm = artifact.norm;
    pose.source_id = name;
    std::snprintf(name, sizeof(name), "poses/sent_%05d.pose", index);
    save_pose_file(pose, out / name);
    ++index;
  }
  if (all_tokens.empty()) throw DataError("no non-empty input sentences in " + input_file.string());
  save_token_file(out / "tokens.txt", all_tokens, codec.vocab_size(), codec.window());
  write_run_info(out, "translate",
                 json{{"beam_size", beam_size},
                      {"length_penalty", length_penalty},
                      {"stitch", stitch},
                      {"blend_width", stitch_cfg.blend_width},
                      {"spline_order", stitch_cfg.spline_order},
                      {"smoothing", stitch_cfg.smoothing},
                      {"max_output_len", tartifact.max_output_len}},
                 json{{"model", artifact_input(model_dir)},
                      {"artifact", artifact_input(artifact_dir)},
                      {"input", input_file.string()}});
  std::cout << "translated " << index << " sentences into " << out.string() << "\n";
  return 0;
}

std::vector<fs::path> list_pose_files(const fs::path& dir) {
  std::vector<fs::path> files;
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto ext = entry.path().extension().string();
    if (ext == ".pose" || ext == ".poseb") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no pose files in " + dir.string());
  return files;
}

int cmd_evaluate(const fs::path& hyp_tokens, const fs::path& ref_tokens,
                 const fs::path& hyp_poses, const fs::path& ref_poses, const fs::path& out_prefix,
                 const std::string& bleu_level) {
  const bool with_text = !hyp_tokens.empty();
  const bool with_pose = !hyp_poses.empty();
  if (with_text != !ref_tokens.empty())
    throw UsageError("evaluate: --hyp-tokens and --ref-tokens go together");
  if (with_pose != !ref_poses.empty())
    throw UsageError("evaluate: --hyp-poses and --ref-poses go together");
  if (!with_text && !with_pose)
    throw UsageError("evaluate needs --hyp-tokens/--ref-tokens or --hyp-poses/--ref-poses");

  EvaluationReport report;
  std::vector<SymbolSeq> hyp_syms, ref_syms;
  if (with_text) {
    const TokenFile hyp = load_token_file(hyp_tokens);
    const TokenFile ref = load_token_file(ref_tokens);
    if (hyp.vocab_size != ref.vocab_size)
      throw ArtifactMismatchError("hypothesis and reference token files use different vocabs");
    if (hyp.sequences.size() != ref.sequences.size())
      throw DataError("hypothesis and reference token files differ in sequence count");
    for (size_t i = 0; i < hyp.sequences.size(); ++i) {
      hyp_syms.push_back(tokens_to_symbols(hyp.sequences[i].tokens));
      ref_syms.push_back(tokens_to_symbols(ref.sequences[i].tokens));
    }
  }

  std::vector<PoseSequence> hyps, refs;
  if (with_pose) {
    const auto hyp_files = list_pose_files(hyp_poses);
    const auto ref_files = list_pose_files(ref_poses);
    if (hyp_files.size() != ref_files.size())
      throw DataError("hypothesis and reference pose directories differ in file count");
    for (size_t i = 0; i < hyp_files.size(); ++i) {
      hyps.push_back(load_pose_file(hyp_files[i]));
      refs.push_back(load_pose_file(ref_files[i]));
    }
    // DTW-MJE is defined over [0,1]-normalized skeletons; reuse one global
    // normalization fitted on the references for both sides.
    const NormalizationParams norm = compute_normalization(refs);
    for (auto& p : hyps) p = normalize(p, norm).first;
    for (auto& p : refs) p = normalize(p, norm).first;
  }

  const size_t rows = std::max(hyp_syms.size(), hyps.size());
  if (with_text && with_pose && hyp_syms.size() != hyps.size())
    throw DataError("token and pose inputs disagree on sequence count");

  double mje_sum = 0.0, vh_sum = 0.0, vr_sum = 0.0, rouge_sum = 0.0;
  for (size_t i = 0; i < rows; ++i) {
    SequenceReportRow row;
    row.id = with_pose ? refs[i].source_id : "seq_" + std::to_string(i);
    if (row.id.empty()) row.id = "seq_" + std::to_string(i);
    if (with_pose) {
      row.has_pose = true;
      row.dtw_mje = dtw_mje(hyps[i], refs[i]);
      row.velocity_std_hyp = hyps[i].frame_count() > 1 ? velocity_std(hyps[i]) : 0.0;
      row.velocity_std_ref = refs[i].frame_count() > 1 ? velocity_std(refs[i]) : 0.0;
      mje_sum += row.dtw_mje;
      vh_sum += row.velocity_std_hyp;
      vr_sum += row.velocity_std_ref;
    }
    if (with_text) {
      row.has_text = true;
      row.bleu = sentence_bleu(hyp_syms[i], {ref_syms[i]});
      row.rouge = rouge_l(hyp_syms[i], ref_syms[i]);
      rouge_sum += row.rouge;
    }
    report.rows.push_back(row);
  }

  report.aggregate.id = "corpus";
  if (with_pose) {
    report.aggregate.has_pose = true;
    report.aggregate.dtw_mje = mje_sum / rows;
    report.aggregate.velocity_std_hyp = vh_sum / rows;
    report.aggregate.velocity_std_ref = vr_sum / rows;
  }
  if (with_text) {
    report.aggregate.has_text = true;
    if (bleu_level == "sentence") {
      std::array<double, 4> acc{};
      for (const auto& row : report.rows)
        for (int n = 0; n < 4; ++n) acc[n] += row.bleu.bleu[n];
      for (int n = 0; n < 4; ++n) report.aggregate.bleu.bleu[n] = acc[n] / rows;
    } else {
      std::vector<std::vector<SymbolSeq>> wrapped;
      for (const auto& r : ref_syms) wrapped.push_back({r});
      report.aggregate.bleu = corpus_bleu(hyp_syms, wrapped);
    }
    report.aggregate.rouge = rouge_sum / rows;
  }

  if (out_prefix.has_parent_path()) fs::create_directories(out_prefix.parent_path());
  std::ofstream csv(out_prefix.string() + ".csv");
  csv << report.to_csv();
  std::ofstream txt(out_prefix.string() + ".txt");
  txt << report.to_summary();
  if (!csv || !txt) throw DataError("cannot write report at prefix " + out_prefix.string());
  std::cout << report.to_summary();
  return 0;
}

int cmd_render(const fs::path& pose_file, const fs::path& out, int size) {
  const PoseSequence seq = load_pose_file(pose_file);
  const int n = render_pose_sequence(seq, out, size);
  std::cout << "rendered " << n << " frames to " << out.string() << "\n";
  return 0;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"pose codebook learning, text-to-token translation and pose synthesis"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "JSON run configuration")->envname("POSECODE_CONFIG");

  auto load_config = [&]() -> RunConfig {
    if (config_path.empty()) throw UsageError("this command requires --config");
    return RunConfig::load(config_path);
  };

  std::string out, corpus, artifact_dir, model_dir, input_file, split = "train";
  std::string dev_split = "dev", dev_tokens;
  std::string hyp_tokens, ref_tokens, hyp_poses, ref_poses;
  bool force = false;
  bool stitch = false;
  bool replacement_on = true;
  int subsample = 1, beam_size = 0, max_len = 0, image_size = 384;
  double length_penalty = -1.0;
  int blend_width = -1, spline_order = -1;
  double smoothing = -1.0;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  gen->add_option("--out", out, "output corpus directory")->required();
  gen->add_flag("--force", force, "overwrite an existing non-empty directory");

  auto* traincb = app.add_subcommand("train-codebook", "train the pose codebook");
  traincb->add_option("--corpus", corpus, "corpus directory")->required();
  traincb->add_option("--out", out, "artifact output directory")->required();
  traincb->add_flag("--replacement,!--no-replacement", replacement_on,
                    "toggle dead-entry replacement (default from config)");

  auto* tok = app.add_subcommand("tokenize", "tokenize a corpus split with a frozen artifact");
  tok->add_option("--artifact", artifact_dir, "codebook artifact directory")->required();
  tok->add_option("--corpus", corpus, "corpus directory")->required();
  tok->add_option("--split", split, "train|dev|test|all (default train)");
  tok->add_option("--subsample", subsample, "frame subsampling factor (must match training)");
  tok->add_option("--out", out, "output token file")->required();

  auto* traintr = app.add_subcommand("train-translator", "train the text-to-token translator");
  traintr->add_option("--corpus", corpus, "corpus directory")->required();
  traintr->add_option("--split", split, "split the token file was built from (default train)");
  traintr->add_option("--tokens", input_file, "training token file")->required();
  traintr->add_option("--dev-split", dev_split, "dev split name (default dev)");
  traintr->add_option("--dev-tokens", dev_tokens, "dev token file (optional)");
  traintr->add_option("--out", out, "model output directory")->required();

  auto* tr = app.add_subcommand("translate", "translate sentences to poses");
  tr->add_option("--model", model_dir, "translator artifact directory")->required();
  tr->add_option("--artifact", artifact_dir, "codebook artifact directory")->required();
  tr->add_option("--input", input_file, "text file, one sentence per line")->required();
  tr->add_option("--out", out, "output directory")->required();
  tr->add_flag("--stitch", stitch, "smooth token boundaries");
  tr->add_option("--beam-size", beam_size, "beam size (default from model config)");
  tr->add_option("--length-penalty", length_penalty, "length penalty (default from model)");
  tr->add_option("--max-len", max_len, "decoding length cap (default from model)");
  tr->add_option("--blend-width", blend_width, "stitch blend width");
  tr->add_option("--spline-order", spline_order, "stitch spline order");
  tr->add_option("--smoothing", smoothing, "stitch spline smoothing");

  auto* ev = app.add_subcommand("evaluate", "score hypotheses against references");
  ev->add_option("--hyp-tokens", hyp_tokens, "hypothesis token file");
  ev->add_option("--ref-tokens", ref_tokens, "reference token file");
  ev->add_option("--hyp-poses", hyp_poses, "hypothesis pose directory");
  ev->add_option("--ref-poses", ref_poses, "reference pose directory");
  ev->add_option("--out", out, "report path prefix")->required();

  auto* rnd = app.add_subcommand("render", "render a pose file to stick-figure images");
  rnd->add_option("--poses", input_file, "pose file")->required();
  rnd->add_option("--out", out, "output image directory")->required();
  rnd->add_option("--size", image_size, "square image size in pixels (default 384)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      app.exit(e);
      return 0;
    }
    std::cerr << e.what() << "\n";
    return static_cast<int>(ErrorCode::usage);
  }

  try {
    if (gen->parsed()) return cmd_gen_data(load_config(), out, force);
    if (traincb->parsed()) {
      RunConfig cfg = load_config();
      if (traincb->count("--replacement") || traincb->count("--no-replacement"))
        cfg.replacement_enabled = replacement_on;
      return cmd_train_codebook(cfg, corpus, out);
    }
    if (tok->parsed()) return cmd_tokenize(artifact_dir, corpus, split, subsample, out);
    if (traintr->parsed())
      return cmd_train_translator(load_config(), corpus, split, input_file, dev_split, dev_tokens,
                                  out);
    if (tr->parsed()) {
      StitchConfig scfg;
      if (!config_path.empty()) {
        const RunConfig cfg = RunConfig::load(config_path);
        scfg = cfg.stitcher;
        if (beam_size <= 0) beam_size = cfg.translator.beam_size;
        if (length_penalty < 0) length_penalty = cfg.translator.length_penalty;
      }
      if (blend_width > 0) scfg.blend_width = blend_width;
      if (spline_order > 0) scfg.spline_order = spline_order;
      if (smoothing >= 0) scfg.smoothing = smoothing;
      if (beam_size <= 0) {
        const TranslatorArtifact ta = load_translator_artifact(model_dir);
        beam_size = ta.config.beam_size;
        if (length_penalty < 0) length_penalty = ta.config.length_penalty;
      }
      if (length_penalty < 0) length_penalty = 2.0;
      return cmd_translate(model_dir, artifact_dir, input_file, out, stitch, scfg, beam_size,
                           length_penalty, max_len);
    }
    if (ev->parsed()) {
      std::string bleu_level = "corpus";
      if (!config_path.empty()) bleu_level = RunConfig::load(config_path).bleu_level;
      return cmd_evaluate(hyp_tokens, ref_tokens, hyp_poses, ref_poses, out, bleu_level);
    }
    if (rnd->parsed()) return cmd_render(input_file, out, image_size);
    throw UsageError("no subcommand given");
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace posecode::cli

int main(int argc, char** argv) { return posecode::cli::run(argc, argv); }
