#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"
#include "posecode/codebook_train.hpp"
#include "posecode/stitcher.hpp"
#include "posecode/synthetic.hpp"
#include "posecode/translator.hpp"

namespace posecode::cli {

// Declarative run configuration. Every key is optional and falls back to
// the defaults below; unknown keys are rejected so typos fail loudly.
struct RunConfig {
  uint64_t seed = 7;
  bool determinism = true;

  SyntheticConfig data;
  int subsample = 1;

  CodebookConfig codebook;
  int codebook_epochs = 120;
  int codebook_batch_size = 32;
  int window_stride = 0;
  bool replacement_enabled = true;
  ReplacementPolicy replacement;

  TranslatorConfig translator;
  int translator_epochs = 80;
  int translator_batch_size = 16;

  StitchConfig stitcher;

  std::string bleu_level = "corpus";

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

}  // namespace posecode::cli
