#pragma once

#include <string>
#include <vector>

#include "wdci/trainer.hpp"

WDCI_NAMESPACE_BEGIN

/// Everything a command needs, settable through flat key=value text.
struct RunConfig {
  TrainConfig train;
  std::string data_dir;      // ground-truth pairs {id}_L.png / {id}_R.png
  std::string manifest;      // optional "id train|val" list
  std::string cache_dir;     // optional low-frequency target cache
  int synthetic_pairs = 0;   // > 0 and no data_dir: procedural dataset
  int synthetic_size = 64;
  double val_fraction = 0.2;
  double uniform_fraction = 0.6;
  double mse_threshold = 0.01;

  DatasetOptions dataset_options() const;
};

/// Sets one key. Unknown keys and unparsable values throw ConfigError naming
/// the key. "preset" (desk | full) resets the schedule fields.
void set_config_key(RunConfig& cfg, const std::string& key, const std::string& value);

/// Applies "key=value" lines; '#' starts a comment, blank lines are skipped.
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin = "<text>");
void apply_config_file(RunConfig& cfg, const std::string& path);

/// Every key with its current value, one "key=value" line each, in a fixed
/// order. Feeding the result back through apply_config_text reproduces cfg.
std::string resolved_config(const RunConfig& cfg);

std::vector<std::string> config_keys();

WDCI_NAMESPACE_END
