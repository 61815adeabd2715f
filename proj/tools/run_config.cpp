#include "run_config.hpp"

#include <fstream>
#include <set>

namespace posecode::cli {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& section,
                const std::set<std::string>& known) {
  for (const auto& [key, value] : obj.items()) {
    if (!known.count(key))
      throw UsageError("config: unknown key '" + key + "' in section '" + section + "'");
  }
}

template <typename T>
void get_if(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  check_keys(j, "(root)",
             {"seed", "determinism", "data", "codebook", "translator", "stitcher", "metrics"});
  get_if(j, "seed", c.seed);
  get_if(j, "determinism", c.determinism);

  if (j.contains("data")) {
    const json& d = j.at("data");
    check_keys(d, "data",
               {"primitive_count", "primitive_len", "sentences", "noise_scale", "joints", "dims",
                "fps", "min_sentence_len", "max_sentence_len", "distractor_rate",
                "spline_control_points", "train_frac", "dev_frac", "subsample"});
    get_if(d, "primitive_count", c.data.primitive_count);
    get_if(d, "primitive_len", c.data.primitive_len);
    get_if(d, "sentences", c.data.sentences);
    get_if(d, "noise_scale", c.data.noise_scale);
    get_if(d, "joints", c.data.joints);
    get_if(d, "dims", c.data.dims);
    get_if(d, "fps", c.data.fps);
    get_if(d, "min_sentence_len", c.data.min_sentence_len);
    get_if(d, "max_sentence_len", c.data.max_sentence_len);
    get_if(d, "distractor_rate", c.data.distractor_rate);
    get_if(d, "spline_control_points", c.data.spline_control_points);
    get_if(d, "train_frac", c.data.train_frac);
    get_if(d, "dev_frac", c.data.dev_frac);
    get_if(d, "subsample", c.subsample);
  }
  c.data.seed = c.seed;

  if (j.contains("codebook")) {
    const json& b = j.at("codebook");
    check_keys(b, "codebook",
               {"vocab_size", "window", "embed", "layers", "heads", "ff_size", "dropout",
                "counter_weight", "contrastive_weight", "temperature", "lr", "plateau_patience",
                "plateau_factor", "epochs", "batch_size", "window_stride", "replacement"});
    get_if(b, "vocab_size", c.codebook.vocab_size);
    get_if(b, "window", c.codebook.window);
    get_if(b, "embed", c.codebook.embed);
    get_if(b, "layers", c.codebook.layers);
    get_if(b, "heads", c.codebook.heads);
    get_if(b, "ff_size", c.codebook.ff_size);
    get_if(b, "dropout", c.codebook.dropout);
    get_if(b, "counter_weight", c.codebook.counter_weight);
    get_if(b, "contrastive_weight", c.codebook.contrastive_weight);
    get_if(b, "temperature", c.codebook.temperature);
    get_if(b, "lr", c.codebook.lr);
    get_if(b, "plateau_patience", c.codebook.plateau_patience);
    get_if(b, "plateau_factor", c.codebook.plateau_factor);
    get_if(b, "epochs", c.codebook_epochs);
    get_if(b, "batch_size", c.codebook_batch_size);
    get_if(b, "window_stride", c.window_stride);
    if (b.contains("replacement")) {
      const json& r = b.at("replacement");
      check_keys(r, "codebook.replacement",
                 {"enabled", "mode", "dead_threshold", "active_threshold", "noise_scale",
                  "interval_epochs", "interval_growth", "stop_lr"});
      get_if(r, "enabled", c.replacement_enabled);
      if (r.contains("mode")) {
        const std::string mode = r.at("mode").get<std::string>();
        if (mode == "active-plus-noise") c.replacement.mode = ReplacementMode::active_plus_noise;
        else if (mode == "encoder-sample") c.replacement.mode = ReplacementMode::encoder_sample;
        else throw UsageError("config: unknown replacement mode '" + mode + "'");
      }
      get_if(r, "dead_threshold", c.replacement.dead_threshold);
      get_if(r, "active_threshold", c.replacement.active_threshold);
      get_if(r, "noise_scale", c.replacement.noise_scale);
      get_if(r, "interval_epochs", c.replacement.interval_epochs);
      get_if(r, "interval_growth", c.replacement.interval_growth);
      get_if(r, "stop_lr", c.replacement.stop_lr);
    }
  }

  if (j.contains("translator")) {
    const json& t = j.at("translator");
    check_keys(t, "translator",
               {"layers", "heads", "embed", "ff_size", "dropout", "lr", "beam_size",
                "length_penalty", "max_output_len", "plateau_patience", "plateau_factor",
                "label_smoothing", "epochs", "batch_size"});
    get_if(t, "layers", c.translator.layers);
    get_if(t, "heads", c.translator.heads);
    get_if(t, "embed", c.translator.embed);
    get_if(t, "ff_size", c.translator.ff_size);
    get_if(t, "dropout", c.translator.dropout);
    get_if(t, "lr", c.translator.lr);
    get_if(t, "beam_size", c.translator.beam_size);
    get_if(t, "length_penalty", c.translator.length_penalty);
    get_if(t, "max_output_len", c.translator.max_output_len);
    get_if(t, "plateau_patience", c.translator.plateau_patience);
    get_if(t, "plateau_factor", c.translator.plateau_factor);
    get_if(t, "label_smoothing", c.translator.label_smoothing);
    get_if(t, "epochs", c.translator_epochs);
    get_if(t, "batch_size", c.translator_batch_size);
  }

  if (j.contains("stitcher")) {
    const json& s = j.at("stitcher");
    check_keys(s, "stitcher", {"blend_width", "spline_order", "smoothing"});
    get_if(s, "blend_width", c.stitcher.blend_width);
    get_if(s, "spline_order", c.stitcher.spline_order);
    get_if(s, "smoothing", c.stitcher.smoothing);
  }

  if (j.contains("metrics")) {
    const json& m = j.at("metrics");
    check_keys(m, "metrics", {"bleu_level"});
    get_if(m, "bleu_level", c.bleu_level);
    if (c.bleu_level != "corpus" && c.bleu_level != "sentence")
      throw UsageError("config: metrics.bleu_level must be 'corpus' or 'sentence'");
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw UsageError("config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json RunConfig::to_json() const {
  return json{
      {"seed", seed},
      {"determinism", determinism},
      {"data",
       {{"primitive_count", data.primitive_count},
        {"primitive_len", data.primitive_len},
        {"sentences", data.sentences},
        {"noise_scale", data.noise_scale},
        {"joints", data.joints},
        {"dims", data.dims},
        {"fps", data.fps},
        {"min_sentence_len", data.min_sentence_len},
        {"max_sentence_len", data.max_sentence_len},
        {"distractor_rate", data.distractor_rate},
        {"spline_control_points", data.spline_control_points},
        {"train_frac", data.train_frac},
        {"dev_frac", data.dev_frac},
        {"subsample", subsample}}},
      {"codebook",
       {{"vocab_size", codebook.vocab_size},
        {"window", codebook.window},
        {"embed", codebook.embed},
        {"layers", codebook.layers},
        {"heads", codebook.heads},
        {"ff_size", codebook.ff_size},
        {"dropout", codebook.dropout},
        {"counter_weight", codebook.counter_weight},
        {"contrastive_weight", codebook.contrastive_weight},
        {"temperature", codebook.temperature},
        {"lr", codebook.lr},
        {"plateau_patience", codebook.plateau_patience},
        {"plateau_factor", codebook.plateau_factor},
        {"epochs", codebook_epochs},
        {"batch_size", codebook_batch_size},
        {"window_stride", window_stride},
        {"replacement",
         {{"enabled", replacement_enabled},
          {"mode", replacement.mode == ReplacementMode::active_plus_noise ? "active-plus-noise"
                                                                          : "encoder-sample"},
          {"dead_threshold", replacement.dead_threshold},
          {"active_threshold", replacement.active_threshold},
          {"noise_scale", replacement.noise_scale},
          {"interval_epochs", replacement.interval_epochs},
          {"interval_growth", replacement.interval_growth},
          {"stop_lr", replacement.stop_lr}}}}},
      {"translator",
       {{"layers", translator.layers},
        {"heads", translator.heads},
        {"embed", translator.embed},
        {"ff_size", translator.ff_size},
        {"dropout", translator.dropout},
        {"lr", translator.lr},
        {"beam_size", translator.beam_size},
        {"length_penalty", translator.length_penalty},
        {"max_output_len", translator.max_output_len},
        {"plateau_patience", translator.plateau_patience},
        {"plateau_factor", translator.plateau_factor},
        {"label_smoothing", translator.label_smoothing},
        {"epochs", translator_epochs},
        {"batch_size", translator_batch_size}}},
      {"stitcher",
       {{"blend_width", stitcher.blend_width},
        {"spline_order", stitcher.spline_order},
        {"smoothing", stitcher.smoothing}}},
      {"metrics", {{"bleu_level", bleu_level}}}};
}

}  // namespace posecode::cli
