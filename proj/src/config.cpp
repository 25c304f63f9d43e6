#include "wdci/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "wdci/errors.hpp"

WDCI_NAMESPACE_BEGIN

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const char* want) {
  throw ConfigError("config key '" + key + "': cannot parse '" + value + "' as " + want);
}

template <class T>
T parse_int(const std::string& key, const std::string& v) {
  T out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad(key, v, "an integer");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) bad(key, v, "a number");
    return d;
  } catch (const std::logic_error&) {
    bad(key, v, "a number");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  bad(key, v, "a boolean");
}

template <class T>
std::string fmt_real(T v) {
  std::ostringstream os;
  os.precision(std::numeric_limits<T>::max_digits10);
  os << v;
  return os.str();
}

struct Entry {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

#define WDCI_INT(name, field, type)                                                              \
  Entry{name, [](const RunConfig& c) { return std::to_string(c.field); },                       \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_int<type>(k, v); }}
#define WDCI_REAL(name, field, type)                                                             \
  Entry{name, [](const RunConfig& c) { return fmt_real(c.field); },                             \
        [](RunConfig& c, const std::string& k, const std::string& v) {                          \
          c.field = static_cast<type>(parse_double(k, v));                                      \
        }}
#define WDCI_BOOL(name, field)                                                                   \
  Entry{name, [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); },       \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_bool(k, v); }}
#define WDCI_STR(name, field)                                                                    \
  Entry{name, [](const RunConfig& c) { return c.field; },                                       \
        [](RunConfig& c, const std::string&, const std::string& v) { c.field = v; }}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      WDCI_INT("epochs", train.epochs, int),
      WDCI_INT("batch_size", train.batch_size, int),
      WDCI_INT("crop_size", train.crop_size, int),
      WDCI_REAL("lr_initial", train.lr_initial, double),
      WDCI_INT("lr_halve_every", train.lr_halve_every, int),
      WDCI_INT("seed", train.seed, std::uint64_t),
      WDCI_REAL("grad_clip", train.grad_clip, double),
      WDCI_INT("max_steps", train.max_steps, long),
      WDCI_INT("channels", train.net.channels, int),
      WDCI_INT("levels", train.net.levels, int),
      WDCI_INT("large_kernel", train.net.large_kernel, int),
      WDCI_INT("max_disparity", train.net.max_disparity, int),
      WDCI_BOOL("use_hf_cim", train.net.use_hf_cim),
      WDCI_BOOL("use_dtem", train.net.use_dtem),
      WDCI_BOOL("use_iam", train.net.use_iam),
      WDCI_BOOL("use_downsample_fusion", train.net.use_downsample_fusion),
      WDCI_BOOL("global_residual", train.net.global_residual),
      WDCI_BOOL("use_fre", train.loss.use_fre),
      WDCI_BOOL("use_spa", train.loss.use_spa),
      WDCI_BOOL("use_fre_low", train.loss.use_fre_low),
      WDCI_BOOL("use_spa_low", train.loss.use_spa_low),
      WDCI_BOOL("use_vgg_low", train.loss.use_vgg_low),
      WDCI_BOOL("perceptual_per_view", train.loss.perceptual_per_view),
      WDCI_REAL("perceptual_weight", train.loss.perceptual_weight, real),
      WDCI_INT("ssim_window", train.loss.ssim_window, int),
      WDCI_INT("ssim_window_low", train.loss.ssim_window_low, int),
      WDCI_STR("data_dir", data_dir),
      WDCI_STR("manifest", manifest),
      WDCI_STR("cache_dir", cache_dir),
      WDCI_INT("synthetic_pairs", synthetic_pairs, int),
      WDCI_INT("synthetic_size", synthetic_size, int),
      WDCI_REAL("val_fraction", val_fraction, double),
      WDCI_REAL("uniform_fraction", uniform_fraction, double),
      WDCI_REAL("mse_threshold", mse_threshold, double),
  };
  return table;
}

#undef WDCI_INT
#undef WDCI_REAL
#undef WDCI_BOOL
#undef WDCI_STR

}  // namespace

DatasetOptions RunConfig::dataset_options() const {
  DatasetOptions o;
  o.seed = train.seed;
  o.val_fraction = val_fraction;
  o.uniform_fraction = uniform_fraction;
  o.levels = train.net.levels;
  o.cache_dir = cache_dir;
  return o;
}

void set_config_key(RunConfig& cfg, const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key), value = trim(raw_value);
  if (key == "preset") {
    TrainConfig base;
    if (value == "full") base = TrainConfig::full_scale();
    else if (value != "desk") bad(key, value, "desk or full");
    cfg.train.epochs = base.epochs;
    cfg.train.batch_size = base.batch_size;
    cfg.train.crop_size = base.crop_size;
    return;
  }
  for (const auto& e : entries()) {
    if (e.key == key) {
      e.set(cfg, key, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value, got '" + trim(line) + "'");
    }
    set_config_key(cfg, line.substr(0, eq), line.substr(eq + 1));
  }
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  apply_config_text(cfg, ss.str(), path);
}

std::string resolved_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& e : entries()) out += e.key + "=" + e.get(cfg) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& e : entries()) keys.push_back(e.key);
  return keys;
}

WDCI_NAMESPACE_END
