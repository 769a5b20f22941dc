#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pla/association.hpp"
#include "pla/model.hpp"

namespace pla {

/// Everything a pipeline command needs. Loaded from a "key = value" file;
/// command-line flags are applied afterwards and win.
struct RunConfig {
  std::string scenes_dir;
  std::string frames_dir;
  std::string captions;
  std::string embeddings;
  std::string lexicon;
  std::string partition;
  std::string out_dir = ".";
  std::string pairs;       // defaults to <out>/pairs.bin
  std::string checkpoint;  // defaults to <out>/model.ckpt

  AssociationConfig association;
  TrainConfig train;
  bool calibration = true;
  bool fallback_embeddings = false;
  std::uint64_t fallback_seed = 0;

  /// Sets one key; throws InputError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  void validate() const;

  std::string pairs_path() const;
  std::string checkpoint_path() const;

  /// Every key with its current value, in a stable order.
  std::vector<std::pair<std::string, std::string>> entries() const;
};

/// Relative paths in the file are resolved against the file's directory.
RunConfig load_run_config(const std::string& path);
std::string run_config_to_text(const RunConfig& cfg);

}  // namespace pla
