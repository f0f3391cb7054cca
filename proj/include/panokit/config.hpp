#pragma once

#include <string>
#include <vector>

#include "panokit/dataset.hpp"
#include "panokit/layout_head.hpp"
#include "panokit/model.hpp"
#include "panokit/optim.hpp"

namespace panokit {

// Flat, file-loadable view of every knob a run needs. The defaults here are
// the desk-scale configuration; `config_keys_help()` lists the full-scale
// counterpart of each key next to it.
struct RunConfig {
  // Input geometry and channels.
  size_t width = 128;
  size_t height = 64;
  bool edge_enhance = true;
  double alpha = 20.0;
  double beta = 25.0;
  double theta = 100.0;
  bool scale_theta = true;

  // Network shape.
  std::vector<size_t> channels{16, 32, 64, 128};
  size_t patch = 16;
  size_t d_model = 256;
  size_t d_hidden = 256;
  size_t layers = 4;
  size_t heads = 4;
  size_t mlp_factor = 4;
  std::string pe = "recurrent";  // recurrent | learned | none
  bool row_embed = true;

  // Loss.
  double w_cor = 1.0;
  double w_bon = 1.0;
  bool loss_3d = true;

  // Optimization and data.
  double lr = 3e-3;
  size_t batch = 8;
  size_t epochs = 60;
  unsigned long seed = 1234;
  size_t train_rooms = 64;
  size_t held_rooms = 16;
  bool augment = true;
  std::string out_dir = "runs/toy";

  ModelConfig to_model_config() const;  // finalized; throws ConfigError
  LossWeights to_loss_weights() const;
  AdamConfig to_adam() const;
  FreqMaskParams to_mask_params() const;
};

// Sets one key. Throws ConfigError on an unknown key or unparseable value.
void apply_kv(RunConfig& cfg, const std::string& key, const std::string& value);

// Reads a flat key=value file ('#' comments, blank lines skipped).
// Throws IoError on file problems, ConfigError on bad content.
void load_config_file(RunConfig& cfg, const std::string& path);

// Named bundles of overrides. Throws ConfigError on an unknown name.
void apply_preset(RunConfig& cfg, const std::string& name);
std::vector<std::string> preset_names();

// Round-trippable key=value dump of the whole config.
std::string describe(const RunConfig& cfg);

// Help table: one line per key with the desk default, the full-scale
// default (where one exists), and what the key means.
std::string config_keys_help();

}  // namespace panokit
