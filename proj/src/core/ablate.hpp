#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "core/config.hpp"
#include "core/data.hpp"

namespace mga {

// One toggle combination for the component study: the three module switches
// plus the two aggregation design swaps applied on top of the full model.
struct AblationRow {
  std::string name;       // report label
  std::string slug;       // directory-safe name
  bool use_codebook = false;
  bool locality_last = false;
  bool use_hard_negative = false;
  std::string pooling = "max";
  std::string norm = "sparsemax";
};

// The seven studied configurations, in report order: baseline, each module
// added cumulatively, the full model, then the full model with mean pooling
// and with softmax normalization.
std::vector<AblationRow> ablation_rows();

// Outcome of one (row, seed) training + test-split evaluation. A failed run
// keeps its slot with ok=false and the error message; other runs proceed.
struct AblationRun {
  std::string row;
  uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double train_loss = 0;
  int best_epoch = -1;
  double r1_t2a = 0, r1_a2t = 0, r1_mean = 0;
  double r5_t2a = 0, r5_a2t = 0;
  double tag_accuracy = 0, tag_map = 0;
  double micro_event_f1 = 0, micro_segment_f1 = 0;
  double threshold = 0;
  double seconds = 0;
};

struct AblationReport {
  std::vector<AblationRow> rows;
  std::vector<uint64_t> seeds;
  std::vector<AblationRun> runs;  // rows-major, seeds in request order
  Config base;                    // settings shared by every run
  double total_seconds = 0;
};

// Epoch budget that keeps the full 7 x 3 sweep well under 45 minutes on one
// core at the default corpus scale; single runs can afford the longer
// schedule in the config default.
inline constexpr int kAblateEpochs = 12;

using AblationProgress = std::function<void(const AblationRun&)>;

// Trains every row x seed from `base` (seed and toggles overridden per run,
// outputs under base out dir / slug / seed<N>), evaluates the best validation
// checkpoint on the test split.
AblationReport run_ablation(const Config& base, const Corpus& corpus,
                            const std::vector<uint64_t>& seeds,
                            const AblationProgress& on_run = nullptr);

// Directional checks between rows, counted over seeds where both runs of a
// comparison succeeded.
struct AblationTrends {
  int f1_pairs = 0;        // seeds with both full and baseline ok
  int full_f1_wins = 0;    // full strictly above baseline on micro event F1
  int r1_pairs = 0;
  int full_r1_close = 0;   // full R@1 mean >= baseline - 1 point
  int norm_pairs = 0;      // seeds with both full and softmax variant ok
  int softmax_not_above = 0;  // softmax variant F1 <= full (sparsemax) F1
};
AblationTrends ablation_trends(const AblationReport& r);

std::string ablation_to_json(const AblationReport& r);
std::string ablation_to_csv(const AblationReport& r);

}  // namespace mga
