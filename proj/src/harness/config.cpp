#include "wsnn/harness/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "wsnn/errors.hpp"

namespace wsnn::harness {

namespace {

std::string trim(const std::string& s) {
  size_t b = 0;
  size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

const std::map<std::string, std::string>& Config::defaults() {
  static const std::map<std::string, std::string> kDefaults = {
      // Data assembly.
      {"mnist_dir", "data/mnist"},   // directory with the four IDX files
      {"canvas", "32"},              // output canvas side; >32 translates digits
      {"resize", "0"},               // downsample inputs to this side (0 = off)
      {"subset", "0"},               // train on the first N items (0 = all)
      {"data_seed", "7"},            // placement/clutter randomness
      {"online_translate", "false"},  // re-place digits every epoch
      {"clutter", "false"},          // paste distractor crops onto the canvas
      {"normalize", "false"},        // standardize pixels with train-split stats
      {"augment", "none"},           // none | shift(N) | hflip(P) | crop_rescale(LO,HI,OUT)
      {"unbalanced", ""},            // class:fraction list, e.g. "0:0.05,1:0.05"
      {"split", "train"},            // gen-data: which split to synthesize

      // Model.
      {"model", "lenet32"},     // lenet32 | mlp32 | convnet100 | mil_fcn | stn
      {"init", "fan_in_sqrt"},  // fan_in_sqrt | paper_literal
      {"stn_mode", "3p"},       // 2p | 3p | 4p | 6p
      {"stn_localizer_input", "downsampled"},  // downsampled | full
      {"stn_fixed_scale", "0.32"},             // isotropic scale used by 2p
      {"stn_out", "32"},                       // transformer output side

      // Optimization.
      {"optimizer", "adam"},  // adam | sgd
      {"lr", "0.0003"},
      {"lr_decay", "0"},
      {"momentum", "0.9"},
      {"nesterov", "false"},
      {"weight_decay", "0"},
      {"batch_size", "256"},
      {"max_epochs", "100"},
      {"patience", "10"},
      {"loss", "cross_entropy"},  // cross_entropy | mse | multilabel_entropy
      {"seed", "1"},

      // Fine-tuning (model = mil_fcn built from a lenet32 checkpoint).
      {"finetune_from", ""},
      {"finetune_multiplier", "0.1"},
      {"finetune_reset", ""},  // comma-separated layer labels to re-initialize

      // Evaluation / ensembling / saliency inputs.
      {"checkpoint", ""},
      {"checkpoints", ""},  // comma-separated list for `ensemble`
      {"ensemble_mode", "vote"},     // vote | mean_logit
      {"prior_correction", "false"},
      {"image_index", "0"},
      {"class_index", "0"},

      // Runtime plumbing.
      {"kernels", "auto"},  // auto | scalar | avx2 | avx512
      {"out", "out"},
      {"deterministic_timing", "false"},  // write 0.000 in the seconds column
  };
  return kDefaults;
}

void Config::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const size_t eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": expected `key = value`, got: " + body);
    }
    set(trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
  }
}

void Config::set(const std::string& key, const std::string& value) {
  if (defaults().find(key) == defaults().end()) {
    throw ConfigError("unknown config key: " + key);
  }
  overrides_[key] = value;
}

std::string Config::str(const std::string& key) const {
  const auto over = overrides_.find(key);
  if (over != overrides_.end()) return over->second;
  const auto def = defaults().find(key);
  if (def == defaults().end()) throw ConfigError("unknown config key: " + key);
  return def->second;
}

int64_t Config::integer(const std::string& key) const {
  const std::string v = str(key);
  try {
    size_t used = 0;
    const long long n = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError("config key `" + key + "` expects an integer, got: " + v);
  }
}

double Config::number(const std::string& key) const {
  const std::string v = str(key);
  try {
    size_t used = 0;
    const double n = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError("config key `" + key + "` expects a number, got: " + v);
  }
}

bool Config::flag(const std::string& key) const {
  const std::string v = str(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key `" + key + "` expects true/false, got: " + v);
}

std::string Config::dump() const {
  std::ostringstream out;
  for (const auto& [key, def] : defaults()) {
    const auto over = overrides_.find(key);
    out << key << " = " << (over != overrides_.end() ? over->second : def)
        << "\n";
  }
  return out.str();
}

std::string Config::hash() const {
  const std::string text = dump();
  uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a 64-bit offset basis
  for (const unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace wsnn::harness
