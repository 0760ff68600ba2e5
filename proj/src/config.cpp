#include "hemodet/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace hemodet {

namespace {

// Sentinel meaning "derive from window_size" until the key is seen.
constexpr long kDeriveCapacity = -1;

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

long to_long(const std::string& key, const std::string& v) {
  long out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("key '" + key + "': expected integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("");
    return out;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected number, got '" + v + "'");
  }
}

std::vector<double> to_double_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty())
      throw ConfigError("key '" + key + "': empty list element in '" + v + "'");
    out.push_back(to_double(key, item));
  }
  if (out.empty()) throw ConfigError("key '" + key + "': empty list");
  return out;
}

std::string fmt_long(long v) { return std::to_string(v); }

std::string fmt_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

std::string fmt_double_list(const std::vector<double>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += fmt_double(v[i]);
  }
  return out;
}

struct KeyDef {
  const char* name;
  std::function<std::string(const ModelConfig&)> get;
  std::function<void(ModelConfig&, const std::string&)> set;
};

#define LONG_KEY(key, field)                                               \
  {key, [](const ModelConfig& c) { return fmt_long(c.field); },            \
   [](ModelConfig& c, const std::string& v) { c.field = to_long(key, v); }}
#define DOUBLE_KEY(key, field)                                             \
  {key, [](const ModelConfig& c) { return fmt_double(c.field); },          \
   [](ModelConfig& c, const std::string& v) { c.field = to_double(key, v); }}
#define STRING_KEY(key, field)                                             \
  {key, [](const ModelConfig& c) { return c.field; },                      \
   [](ModelConfig& c, const std::string& v) { c.field = v; }}

const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> table = {
      LONG_KEY("model.window_size", window_size),
      LONG_KEY("model.input_resolution", input_resolution),
      LONG_KEY("model.channels.coarse", channels_coarse),
      LONG_KEY("model.channels.quarter", channels_quarter),
      LONG_KEY("model.channels.eighth", channels_eighth),
      LONG_KEY("model.memory_capacity", memory_capacity),
      DOUBLE_KEY("model.gabor.wavelength", gabor.wavelength),
      DOUBLE_KEY("model.gabor.phase", gabor.phase),
      DOUBLE_KEY("model.gabor.sigma", gabor.sigma),
      DOUBLE_KEY("model.gabor.aspect", gabor.aspect),
      LONG_KEY("model.gabor.kernel_size", gabor.kernel_size),
      LONG_KEY("model.gabor.orientations", gabor.orientations),
      DOUBLE_KEY("model.existence_threshold", existence_threshold),
      DOUBLE_KEY("loss.region_weight", region_weight),
      DOUBLE_KEY("loss.edge_weight", edge_weight),
      DOUBLE_KEY("loss.score_weight", score_weight),
      DOUBLE_KEY("loss.point_weight", point_weight),
      DOUBLE_KEY("train.lr_encoder", lr_encoder),
      DOUBLE_KEY("train.lr_other", lr_other),
      LONG_KEY("train.epochs", epochs),
      LONG_KEY("train.warmup_steps", warmup_steps),
      LONG_KEY("train.total_steps", total_steps),
      LONG_KEY("train.max_steps", max_steps),
      DOUBLE_KEY("train.teacher_forcing_fraction", teacher_forcing_fraction),
      STRING_KEY("flow.backend", flow_backend),
      STRING_KEY("flow.offset_normalization", offset_normalization),
      {"eval.pck_thresholds",
       [](const ModelConfig& c) { return fmt_double_list(c.pck_thresholds); },
       [](ModelConfig& c, const std::string& v) {
         c.pck_thresholds = to_double_list("eval.pck_thresholds", v);
       }},
      LONG_KEY("seed", seed),
  };
  return table;
}

#undef LONG_KEY
#undef DOUBLE_KEY
#undef STRING_KEY

const KeyDef* find_key(const std::string& name) {
  for (const KeyDef& k : key_table())
    if (name == k.name) return &k;
  return nullptr;
}

ModelConfig parse_raw(const std::string& text) {
  ModelConfig cfg;
  cfg.memory_capacity = kDeriveCapacity;
  std::stringstream ss(text);
  std::string line;
  long lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value', got '" +
                        s + "'");
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    const KeyDef* def = find_key(key);
    if (!def)
      throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    def->set(cfg, value);
  }
  return cfg;
}

void finalize(ModelConfig& cfg) {
  if (cfg.memory_capacity == kDeriveCapacity) cfg.memory_capacity = cfg.window_size - 1;
}

void check(bool ok, const std::string& field, const std::string& why) {
  if (!ok) throw ConfigError("config field '" + field + "': " + why);
}

}  // namespace

ModelConfig parse_config(const std::string& text) {
  ModelConfig cfg = parse_raw(text);
  finalize(cfg);
  return cfg;
}

void apply_env_overrides(ModelConfig& cfg) {
  for (const KeyDef& k : key_table()) {
    std::string env = "HEMODET_";
    for (char c : std::string(k.name))
      env += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (const char* v = std::getenv(env.c_str())) k.set(cfg, v);
  }
}

ModelConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  ModelConfig cfg = parse_raw(buf.str());
  apply_env_overrides(cfg);
  finalize(cfg);
  validate_config(cfg);
  return cfg;
}

void validate_config(const ModelConfig& cfg) {
  check(cfg.window_size >= 2, "model.window_size", "must be >= 2");
  check(cfg.input_resolution >= 16 && cfg.input_resolution % 16 == 0,
        "model.input_resolution", "must be >= 16 and divisible by 16");
  check(cfg.channels_coarse >= 8 && cfg.channels_coarse % 8 == 0, "model.channels.coarse",
        "must be >= 8 and divisible by 8");
  check(cfg.channels_quarter >= 1, "model.channels.quarter", "must be positive");
  check(cfg.channels_eighth >= 1, "model.channels.eighth", "must be positive");
  check(cfg.memory_capacity == cfg.window_size - 1, "model.memory_capacity",
        "must equal model.window_size - 1");
  check(cfg.gabor.wavelength > 0, "model.gabor.wavelength", "must be positive");
  check(cfg.gabor.sigma > 0, "model.gabor.sigma", "must be positive");
  check(cfg.gabor.aspect > 0, "model.gabor.aspect", "must be positive");
  check(cfg.gabor.kernel_size >= 3 && cfg.gabor.kernel_size % 2 == 1,
        "model.gabor.kernel_size", "must be odd and >= 3");
  check(cfg.gabor.orientations >= 1, "model.gabor.orientations", "must be >= 1");
  check(cfg.existence_threshold > 0 && cfg.existence_threshold < 1,
        "model.existence_threshold", "must be in (0,1)");
  check(cfg.region_weight >= 0, "loss.region_weight", "must be >= 0");
  check(cfg.edge_weight >= 0, "loss.edge_weight", "must be >= 0");
  check(cfg.score_weight >= 0, "loss.score_weight", "must be >= 0");
  check(cfg.point_weight >= 0, "loss.point_weight", "must be >= 0");
  check(cfg.lr_encoder > 0, "train.lr_encoder", "must be positive");
  check(cfg.lr_other > 0, "train.lr_other", "must be positive");
  check(cfg.epochs >= 1, "train.epochs", "must be >= 1");
  check(cfg.warmup_steps >= 0, "train.warmup_steps", "must be >= 0");
  check(cfg.total_steps >= 0, "train.total_steps", "must be >= 0");
  check(cfg.max_steps >= 0, "train.max_steps", "must be >= 0");
  check(cfg.teacher_forcing_fraction >= 0 && cfg.teacher_forcing_fraction <= 1,
        "train.teacher_forcing_fraction", "must be in [0,1]");
  check(cfg.flow_backend == "classical" || cfg.flow_backend == "injected" ||
            cfg.flow_backend == "external",
        "flow.backend", "must be one of classical|injected|external");
  check(cfg.offset_normalization == "paper_hw" || cfg.offset_normalization == "background_count",
        "flow.offset_normalization", "must be paper_hw or background_count");
  check(!cfg.pck_thresholds.empty(), "eval.pck_thresholds", "must be non-empty");
  for (double t : cfg.pck_thresholds)
    check(t > 0 && t < 1, "eval.pck_thresholds", "entries must be in (0,1)");
  check(cfg.seed >= 0, "seed", "must be >= 0");
}

std::string serialize_config(const ModelConfig& cfg) {
  std::vector<std::string> lines;
  for (const KeyDef& k : key_table()) lines.push_back(std::string(k.name) + " = " + k.get(cfg));
  std::sort(lines.begin(), lines.end());
  std::string out;
  for (const std::string& l : lines) out += l + "\n";
  return out;
}

}  // namespace hemodet
