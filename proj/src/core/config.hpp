#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mga {

// Flat key=value configuration for training, evaluation, and the ablation
// harness. Every key has a typed default below; parsing rejects unknown keys
// and lists the valid ones. The canonical dump (sorted keys, round-trip
// number formatting) doubles as the checkpoint compatibility fingerprint.
struct Config {
  // model toggles
  bool use_codebook = true;      // codebook aggregation vs mean pooling
  bool locality_last = true;     // last audio block position-wise
  bool use_hard_negative = true; // weighted negatives in the loss
  std::string pooling = "max";   // codebook affinity pooling: max | mean
  std::string norm = "sparsemax";// codebook weight normalizer: sparsemax | softmax

  // model shape
  int d = 64;
  int joint_dim = 64;
  int audio_blocks = 3;
  int text_blocks = 2;
  int codebook_size = 256;
  // Affinity scale. Sharper values shrink the sparsemax support toward
  // one-hot, which starves most codewords of gradient at this model scale;
  // 1.0 keeps early support broad and lets it sharpen as codewords separate.
  double eta = 1.0;
  int text_max_len = 8;

  // loss
  double gamma = 0.15;
  double tau_init = 0.07;
  bool stop_grad_weights = true;
  bool sum_reduction = false;

  // optimizer
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;

  // training loop
  int batch = 32;
  int epochs = 30;
  uint64_t seed = 1;

  // evaluation
  int collar = 2;
  int median_w = 3;

  // paths
  std::string corpus_dir = "data";
  std::string out_dir = "runs/default";
  std::string resume = "";
};

Config default_config();

// key=value assignment; throws ConfigError on unknown key or unparsable value,
// naming every valid key in the unknown-key case.
void config_set(Config& cfg, const std::string& key, const std::string& value);

// Current value of one key, formatted the way dump_config prints it.
std::string config_get(const Config& cfg, const std::string& key);

// Plain-text file: one key = value per line, '#' comments, blank lines allowed.
Config load_config_file(const std::string& path);

// Applies the file's keys onto an existing config, leaving other keys alone.
void merge_config_file(Config& cfg, const std::string& path);

// Canonical form: every key, sorted, as "key = value\n" with round-trip
// number formatting. Stable across runs and platforms with IEEE doubles.
std::string dump_config(const Config& cfg);

// FNV-1a over the canonical dump of the model.* and loss.* keys: the part of
// the config a checkpoint's tensors depend on. Optimizer, loop, and path keys
// may change across a resume without invalidating stored state.
uint64_t config_hash(const Config& cfg);

// Cross-field rules (e.g. aggregation variants require the codebook).
void validate_config(const Config& cfg);

std::vector<std::string> config_keys();

}  // namespace mga
