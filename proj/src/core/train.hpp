#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "core/data.hpp"
#include "core/model.hpp"

namespace mga {

// Adam moments mirror the model's parameter tree; `step` counts optimizer
// updates and drives bias correction.
struct AdamState {
  Model m;
  Model v;
  long step = 0;
};

AdamState make_adam_state(const Model& model);

// Scales every gradient by clip/norm when the global norm exceeds clip.
// Returns the pre-clip global norm.
double clip_global_norm(Model& grads, double clip);

// One Adam update with bias correction. Parameter and gradient trees must
// visit identical names (anything else is a wiring bug, not user error).
void adam_step(Model& params, const Model& grads, AdamState& st, const Config& cfg);

// Post-step maintenance: codewords back to unit norm, temperature clamped
// to [0.005, 1].
void apply_constraints(Model& m);

// Checkpoint: "MGAC" magic, version, named tensor entries (model parameters,
// Adam moments, step/epoch counters, training RNG state), trailing config
// hash. Same state in, identical bytes out.
void save_checkpoint(const std::string& path, const Model& model, const AdamState& opt,
                     const std::vector<uint64_t>& rng_state, int epoch,
                     uint64_t cfg_hash);

struct LoadedCheckpoint {
  Model model;
  AdamState opt;
  std::vector<uint64_t> rng_state;
  int epoch = 0;
};

// `reference` supplies the expected shapes (a freshly built model for the
// current config); a stored hash differing from cfg_hash is rejected.
LoadedCheckpoint load_checkpoint(const std::string& path, const Model& reference,
                                 uint64_t cfg_hash);

struct TrainResult {
  int epochs_run = 0;
  int best_epoch = -1;      // epoch index of the best validation R@1
  double best_val_r1 = -1;
  double final_train_loss = 0;
  std::string out_dir;
  std::string best_path;
  std::string last_path;
  std::string metrics_path;
};

using EpochCallback = std::function<void(int epoch, double train_loss, double val_r1)>;

// Full run: deterministic shuffles, per-epoch validation retrieval, metrics
// appended to out/metrics.csv, best/last checkpoints, effective config dump.
// Resumes from cfg.resume when set, continuing counters and the RNG stream.
TrainResult train_model(const Config& cfg, const Corpus& corpus,
                        const EpochCallback& on_epoch = nullptr);

}  // namespace mga
