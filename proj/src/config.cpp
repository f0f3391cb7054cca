#include "panokit/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "panokit/error.hpp"
#include "panokit/patching.hpp"

namespace panokit {

namespace {

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on")
    return true;
  if (value == "false" || value == "0" || value == "no" || value == "off")
    return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" +
                    value + "'");
}

size_t parse_size(const std::string& key, const std::string& value) {
  size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(value, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" +
                      value + "'");
  }
  if (pos != value.size() || v < 0)
    throw ConfigError("config key '" + key +
                      "': expected a non-negative integer, got '" + value +
                      "'");
  return size_t(v);
}

double parse_real(const std::string& key, const std::string& value) {
  size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" +
                      value + "'");
  }
  if (pos != value.size())
    throw ConfigError("config key '" + key + "': expected a number, got '" +
                      value + "'");
  return v;
}

std::vector<size_t> parse_size_list(const std::string& key,
                                    const std::string& value) {
  std::vector<size_t> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ','))
    out.push_back(parse_size(key, item));
  if (out.empty())
    throw ConfigError("config key '" + key + "': expected a comma list");
  return out;
}

std::string join_sizes(const std::vector<size_t>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

}  // namespace

ModelConfig RunConfig::to_model_config() const {
  ModelConfig m;
  m.width = width;
  m.height = height;
  m.use_edge_channels = edge_enhance;
  m.mask = to_mask_params();
  m.backbone.channels = channels;
  m.patching.d_model = d_model;
  m.patching.patch = patch;
  m.patching.d_hidden = d_hidden;
  m.patching.use_row_embed = row_embed;
  m.patching.pe_mode = pe_mode_from_name(pe);
  m.encoder.layers = layers;
  m.encoder.heads = heads;
  m.encoder.mlp_factor = mlp_factor;
  m.finalize();
  return m;
}

LossWeights RunConfig::to_loss_weights() const {
  LossWeights w;
  w.w_cor = w_cor;
  w.w_bon = w_bon;
  w.boundary_in_3d = loss_3d;
  return w;
}

AdamConfig RunConfig::to_adam() const {
  AdamConfig a;
  a.lr = lr;
  return a;
}

FreqMaskParams RunConfig::to_mask_params() const {
  FreqMaskParams p;
  p.alpha = alpha;
  p.beta = beta;
  p.theta = theta;
  p.scale_theta = scale_theta;
  return p;
}

void apply_kv(RunConfig& cfg, const std::string& key,
              const std::string& value) {
  if (key == "width")
    cfg.width = parse_size(key, value);
  else if (key == "height")
    cfg.height = parse_size(key, value);
  else if (key == "edge_enhance")
    cfg.edge_enhance = parse_bool(key, value);
  else if (key == "alpha")
    cfg.alpha = parse_real(key, value);
  else if (key == "beta")
    cfg.beta = parse_real(key, value);
  else if (key == "theta")
    cfg.theta = parse_real(key, value);
  else if (key == "scale_theta")
    cfg.scale_theta = parse_bool(key, value);
  else if (key == "channels")
    cfg.channels = parse_size_list(key, value);
  else if (key == "patch")
    cfg.patch = parse_size(key, value);
  else if (key == "d_model")
    cfg.d_model = parse_size(key, value);
  else if (key == "d_hidden")
    cfg.d_hidden = parse_size(key, value);
  else if (key == "layers")
    cfg.layers = parse_size(key, value);
  else if (key == "heads")
    cfg.heads = parse_size(key, value);
  else if (key == "mlp_factor")
    cfg.mlp_factor = parse_size(key, value);
  else if (key == "pe") {
    pe_mode_from_name(value);  // validates
    cfg.pe = value;
  } else if (key == "row_embed")
    cfg.row_embed = parse_bool(key, value);
  else if (key == "w_cor")
    cfg.w_cor = parse_real(key, value);
  else if (key == "w_bon")
    cfg.w_bon = parse_real(key, value);
  else if (key == "loss_3d")
    cfg.loss_3d = parse_bool(key, value);
  else if (key == "lr")
    cfg.lr = parse_real(key, value);
  else if (key == "batch")
    cfg.batch = parse_size(key, value);
  else if (key == "epochs")
    cfg.epochs = parse_size(key, value);
  else if (key == "seed")
    cfg.seed = parse_size(key, value);
  else if (key == "train_rooms")
    cfg.train_rooms = parse_size(key, value);
  else if (key == "held_rooms")
    cfg.held_rooms = parse_size(key, value);
  else if (key == "augment")
    cfg.augment = parse_bool(key, value);
  else if (key == "out_dir")
    cfg.out_dir = value;
  else
    throw ConfigError("unknown config key '" + key + "'");
}

void load_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": expected key=value");
    apply_kv(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void apply_preset(RunConfig& cfg, const std::string& name) {
  if (name == "overfit64") {
    cfg.train_rooms = 64;
    cfg.held_rooms = 16;
  } else if (name == "overfit16") {
    cfg.train_rooms = 16;
    cfg.held_rooms = 4;
    cfg.epochs = 20;
  } else {
    throw ConfigError("unknown preset '" + name + "' (have: overfit64, overfit16)");
  }
}

std::vector<std::string> preset_names() { return {"overfit64", "overfit16"}; }

std::string describe(const RunConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "width=" << c.width << "\n"
      << "height=" << c.height << "\n"
      << "edge_enhance=" << (c.edge_enhance ? "true" : "false") << "\n"
      << "alpha=" << c.alpha << "\n"
      << "beta=" << c.beta << "\n"
      << "theta=" << c.theta << "\n"
      << "scale_theta=" << (c.scale_theta ? "true" : "false") << "\n"
      << "channels=" << join_sizes(c.channels) << "\n"
      << "patch=" << c.patch << "\n"
      << "d_model=" << c.d_model << "\n"
      << "d_hidden=" << c.d_hidden << "\n"
      << "layers=" << c.layers << "\n"
      << "heads=" << c.heads << "\n"
      << "mlp_factor=" << c.mlp_factor << "\n"
      << "pe=" << c.pe << "\n"
      << "row_embed=" << (c.row_embed ? "true" : "false") << "\n"
      << "w_cor=" << c.w_cor << "\n"
      << "w_bon=" << c.w_bon << "\n"
      << "loss_3d=" << (c.loss_3d ? "true" : "false") << "\n"
      << "lr=" << c.lr << "\n"
      << "batch=" << c.batch << "\n"
      << "epochs=" << c.epochs << "\n"
      << "seed=" << c.seed << "\n"
      << "train_rooms=" << c.train_rooms << "\n"
      << "held_rooms=" << c.held_rooms << "\n"
      << "augment=" << (c.augment ? "true" : "false") << "\n"
      << "out_dir=" << c.out_dir << "\n";
  return out.str();
}

std::string config_keys_help() {
  // key, desk default, full-scale default ("-" where the full-scale system
  // has no comparable knob), meaning.
  static const char* rows[][4] = {
      {"width", "128", "1024", "panorama width in pixels"},
      {"height", "64", "512", "panorama height in pixels"},
      {"edge_enhance", "true", "true", "append frequency-domain edge channels"},
      {"alpha", "20", "20", "near-horizontal direction band edge (degrees)"},
      {"beta", "25", "25", "near-vertical direction band edge (degrees)"},
      {"theta", "100", "100", "radial cutoff in bins, calibrated at 512 px"},
      {"scale_theta", "true", "true", "rescale theta with min(H,W)/512"},
      {"channels", "16,32,64,128", "-", "conv pyramid widths per stage"},
      {"patch", "16", "16", "square image-patch edge"},
      {"d_model", "256", "-", "token embedding size"},
      {"d_hidden", "256", "-", "image-patch MLP hidden width (0 = linear)"},
      {"layers", "4", "-", "encoder depth"},
      {"heads", "4", "-", "attention heads"},
      {"mlp_factor", "4", "4", "encoder MLP expansion"},
      {"pe", "recurrent", "recurrent", "position encoding: recurrent|learned|none"},
      {"row_embed", "true", "true", "learned per-row embedding on image patches"},
      {"w_cor", "1", "1", "corner-probability loss weight"},
      {"w_bon", "1", "1", "boundary loss weight"},
      {"loss_3d", "true", "true", "boundary loss in 3-D (false: latitude L1)"},
      {"lr", "0.003", "0.0001", "Adam learning rate"},
      {"batch", "8", "8", "samples per optimizer step"},
      {"epochs", "60", "300", "training epochs"},
      {"seed", "1234", "-", "RNG seed for init, data, and augmentation"},
      {"train_rooms", "64", "-", "synthetic training rooms"},
      {"held_rooms", "16", "-", "synthetic held-out rooms"},
      {"augment", "true", "true", "flip/roll/gamma/mask augmentation"},
      {"out_dir", "runs/toy", "-", "output directory"},
  };
  std::ostringstream out;
  out << "config keys (set via file or --set key=value):\n";
  char line[160];
  std::snprintf(line, sizeof line, "  %-13s %-14s %-12s %s\n", "key",
                "desk default", "full-scale", "meaning");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "  %-13s %-14s %-12s %s\n", r[0], r[1],
                  r[2], r[3]);
    out << line;
  }
  return out.str();
}

}  // namespace panokit
