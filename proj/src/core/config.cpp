#include "core/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "core/errors.hpp"
#include "core/textfmt.hpp"

namespace mga {
namespace {

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  return out;
}

int parse_int(const std::string& key, const std::string& v) {
  int out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  return out;
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("config key '" + key + "': expected an unsigned integer, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

struct Entry {
  const char* key;
  std::function<std::string(const Config&)> get;
  std::function<void(Config&, const std::string&)> set;
};

#define MGA_BOOL(name, field)                                              \
  Entry{name, [](const Config& c) { return std::string(c.field ? "true" : "false"); }, \
        [](Config& c, const std::string& v) { c.field = parse_bool(name, v); }}
#define MGA_INT(name, field)                                               \
  Entry{name, [](const Config& c) { return std::to_string(c.field); },     \
        [](Config& c, const std::string& v) { c.field = parse_int(name, v); }}
#define MGA_DOUBLE(name, field)                                            \
  Entry{name, [](const Config& c) { return format_double(c.field); },      \
        [](Config& c, const std::string& v) { c.field = parse_double(name, v); }}
#define MGA_STRING(name, field)                                            \
  Entry{name, [](const Config& c) { return c.field; },                     \
        [](Config& c, const std::string& v) { c.field = v; }}

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = {
      MGA_BOOL("model.use_codebook", use_codebook),
      MGA_BOOL("model.locality_last", locality_last),
      MGA_BOOL("model.use_hard_negative", use_hard_negative),
      MGA_STRING("model.pooling", pooling),
      MGA_STRING("model.norm", norm),
      MGA_INT("model.d", d),
      MGA_INT("model.joint_dim", joint_dim),
      MGA_INT("model.audio_blocks", audio_blocks),
      MGA_INT("model.text_blocks", text_blocks),
      MGA_INT("model.codebook_size", codebook_size),
      MGA_DOUBLE("model.eta", eta),
      MGA_INT("model.text_max_len", text_max_len),
      MGA_DOUBLE("loss.gamma", gamma),
      MGA_DOUBLE("loss.tau_init", tau_init),
      MGA_BOOL("loss.stop_grad_weights", stop_grad_weights),
      MGA_BOOL("loss.sum_reduction", sum_reduction),
      MGA_DOUBLE("optimizer.lr", lr),
      MGA_DOUBLE("optimizer.beta1", beta1),
      MGA_DOUBLE("optimizer.beta2", beta2),
      MGA_DOUBLE("optimizer.eps", adam_eps),
      MGA_DOUBLE("optimizer.clip_norm", clip_norm),
      MGA_INT("train.batch", batch),
      MGA_INT("train.epochs", epochs),
      Entry{"train.seed",
            [](const Config& c) { return std::to_string(c.seed); },
            [](Config& c, const std::string& v) { c.seed = parse_u64("train.seed", v); }},
      MGA_INT("eval.collar", collar),
      MGA_INT("eval.median_w", median_w),
      MGA_STRING("paths.corpus", corpus_dir),
      MGA_STRING("paths.out", out_dir),
      MGA_STRING("paths.resume", resume),
  };
  return entries;
}

#undef MGA_BOOL
#undef MGA_INT
#undef MGA_DOUBLE
#undef MGA_STRING

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

Config default_config() { return Config{}; }

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& e : registry()) keys.push_back(e.key);
  std::sort(keys.begin(), keys.end());
  return keys;
}

void config_set(Config& cfg, const std::string& key, const std::string& value) {
  for (const auto& e : registry()) {
    if (key == e.key) {
      e.set(cfg, value);
      return;
    }
  }
  std::string msg = "unknown config key '" + key + "'; valid keys:";
  for (const auto& k : config_keys()) msg += " " + k;
  throw ConfigError(msg);
}

std::string config_get(const Config& cfg, const std::string& key) {
  for (const auto& e : registry())
    if (key == e.key) return e.get(cfg);
  std::string msg = "unknown config key '" + key + "'; valid keys:";
  for (const auto& k : config_keys()) msg += " " + k;
  throw ConfigError(msg);
}

void merge_config_file(Config& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + " line " + std::to_string(lineno) +
                        ": expected 'key = value'");
    config_set(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

Config load_config_file(const std::string& path) {
  Config cfg = default_config();
  merge_config_file(cfg, path);
  return cfg;
}

std::string dump_config(const Config& cfg) {
  std::vector<std::pair<std::string, std::string>> rows;
  for (const auto& e : registry()) rows.emplace_back(e.key, e.get(cfg));
  std::sort(rows.begin(), rows.end());
  std::string out;
  for (const auto& [k, v] : rows) out += k + " = " + v + "\n";
  return out;
}

uint64_t config_hash(const Config& cfg) {
  // Only keys that define what the checkpoint's tensors mean take part:
  // architecture and objective. Loop length, optimizer knobs, and paths can
  // change across a resume without invalidating the stored state.
  std::vector<std::pair<std::string, std::string>> rows;
  for (const auto& e : registry()) {
    std::string key = e.key;
    if (key.rfind("model.", 0) == 0 || key.rfind("loss.", 0) == 0)
      rows.emplace_back(key, e.get(cfg));
  }
  std::sort(rows.begin(), rows.end());
  uint64_t h = 1469598103934665603ull;  // FNV-1a 64-bit offset basis
  auto feed = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
  };
  for (const auto& [k, v] : rows) {
    feed(k);
    feed("=");
    feed(v);
    feed("\n");
  }
  return h;
}

void validate_config(const Config& cfg) {
  for (double v : {cfg.eta, cfg.gamma, cfg.tau_init, cfg.lr, cfg.beta1, cfg.beta2,
                   cfg.adam_eps, cfg.clip_norm})
    if (!std::isfinite(v)) throw ConfigError("config contains a non-finite number");
  if (cfg.pooling != "max" && cfg.pooling != "mean")
    throw ConfigError("model.pooling must be 'max' or 'mean', got '" + cfg.pooling + "'");
  if (cfg.norm != "sparsemax" && cfg.norm != "softmax")
    throw ConfigError("model.norm must be 'sparsemax' or 'softmax', got '" + cfg.norm + "'");
  if (!cfg.use_codebook && (cfg.pooling != "max" || cfg.norm != "sparsemax"))
    throw ConfigError(
        "model.pooling/model.norm select a codebook aggregation variant and "
        "require model.use_codebook = true");
  if (cfg.d <= 0 || cfg.joint_dim <= 0) throw ConfigError("model dims must be positive");
  if (cfg.audio_blocks <= 0 || cfg.text_blocks <= 0)
    throw ConfigError("block counts must be positive");
  if (cfg.codebook_size <= 0) throw ConfigError("model.codebook_size must be positive");
  if (cfg.eta <= 0) throw ConfigError("model.eta must be positive");
  if (cfg.text_max_len <= 0) throw ConfigError("model.text_max_len must be positive");
  if (cfg.gamma < 0) throw ConfigError("loss.gamma must be non-negative");
  if (cfg.tau_init < 0.005 || cfg.tau_init > 1.0)
    throw ConfigError("loss.tau_init must lie in [0.005, 1]");
  if (cfg.lr < 0) throw ConfigError("optimizer.lr must be non-negative");
  if (cfg.beta1 < 0 || cfg.beta1 >= 1 || cfg.beta2 < 0 || cfg.beta2 >= 1)
    throw ConfigError("adam betas must lie in [0, 1)");
  if (cfg.adam_eps <= 0) throw ConfigError("optimizer.eps must be positive");
  if (cfg.clip_norm <= 0) throw ConfigError("optimizer.clip_norm must be positive");
  if (cfg.batch < 2) throw ConfigError("train.batch must be at least 2");
  if (cfg.epochs < 0) throw ConfigError("train.epochs must be non-negative");
  if (cfg.collar < 0) throw ConfigError("eval.collar must be non-negative");
  if (cfg.median_w < 1 || cfg.median_w % 2 == 0)
    throw ConfigError("eval.median_w must be a positive odd number");
}

}  // namespace mga
