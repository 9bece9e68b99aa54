#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mga {

// Finite-difference audit of every differentiable primitive and of three
// composed paths (plain contrastive loss, weighted-negative loss, and the
// full encode -> aggregate -> loss pipeline), each at freshly drawn random
// points.
//
// Boundary exclusion rule: sparsemax support edges and pooling-max ties make
// the true derivative one-sided, while the checker differences both sides.
// A draw is therefore discarded and redrawn when any sparsemax coordinate
// sits within 1e-4 of its support threshold or any pooling column's top two
// scores are within 1e-4 of each other; the step size of 1e-5 cannot cross a
// boundary that far away. Discards are counted, never silently hidden.
struct GradCheckItem {
  std::string name;
  int points = 0;    // points actually evaluated
  int skipped = 0;   // boundary redraws
  double worst = 0;  // worst mixed relative error over all points
  double tol = 0;    // 1e-6 for linear ops, 1e-4 otherwise
  bool pass = false;
};

struct GradSuiteResult {
  std::vector<GradCheckItem> items;
  bool all_pass() const;
};

GradSuiteResult run_grad_suite(int points_per_item, uint64_t seed);

std::string grad_suite_to_json(const GradSuiteResult& r);
std::string grad_suite_to_text(const GradSuiteResult& r);

}  // namespace mga
