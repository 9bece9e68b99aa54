#include "core/gradsuite.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "core/errors.hpp"
#include "core/losses.hpp"
#include "core/model.hpp"
#include "core/ops.hpp"
#include "core/textfmt.hpp"

namespace mga {
namespace {

constexpr double kBoundaryMargin = 1e-4;
constexpr double kLinearTol = 1e-6;
constexpr double kNonlinearTol = 1e-4;

// One checkable instance: inputs plus cotangent for a DualOp. Returning false
// asks the driver to redraw (boundary proximity).
using InstanceFn = bool(std::vector<Tensor>& inputs, Tensor& cot, Rng& rng);

GradCheckItem run_item(const std::string& name, double tol, int points, Rng& rng,
                       const DualOp& op, InstanceFn* make_instance) {
  GradCheckItem item;
  item.name = name;
  item.tol = tol;
  int made = 0;
  int attempts = 0;
  const int max_attempts = points * 50;
  while (made < points) {
    if (++attempts > max_attempts)
      throw GenerationError("grad suite: could not draw enough interior points for " +
                            name);
    std::vector<Tensor> inputs;
    Tensor cot;
    if (!make_instance(inputs, cot, rng)) {
      ++item.skipped;
      continue;
    }
    item.worst = std::max(item.worst, grad_check(op, inputs, cot));
    ++made;
  }
  item.points = made;
  item.pass = item.worst < tol;
  return item;
}

Tensor randn_vec(int n, Rng& rng, double sd = 1.0) { return Tensor::randn({n}, rng, sd); }

// ---------------------------------------------------------------------------
// Primitive ops
// ---------------------------------------------------------------------------

GradCheckItem check_matmul(int points, Rng& rng) {
  DualOp op{"matmul",
            [](const std::vector<Tensor>& in) { return matmul(in[0], in[1]); },
            [](const std::vector<Tensor>& in, const Tensor& cot) {
              auto [da, db] = matmul_vjp(in[0], in[1], cot);
              return std::vector<Tensor>{da, db};
            }};
  return run_item("matmul", kLinearTol, points, rng, op,
                  +[](std::vector<Tensor>& in, Tensor& cot, Rng& r) {
                    in = {Tensor::randn({4, 6}, r), Tensor::randn({6, 5}, r)};
                    cot = Tensor::randn({4, 5}, r);
                    return true;
                  });
}

GradCheckItem check_matmul_nt(int points, Rng& rng) {
  // call sites differentiate a*b^T as d_a = cot*b, d_b = cot^T*a
  DualOp op{"matmul_nt",
            [](const std::vector<Tensor>& in) { return matmul_nt(in[0], in[1]); },
            [](const std::vector<Tensor>& in, const Tensor& cot) {
              return std::vector<Tensor>{matmul(cot, in[1]), matmul_tn(cot, in[0])};
            }};
  return run_item("matmul_nt", kLinearTol, points, rng, op,
                  +[](std::vector<Tensor>& in, Tensor& cot, Rng& r) {
                    in = {Tensor::randn({4, 6}, r), Tensor::randn({5, 6}, r)};
                    cot = Tensor::randn({4, 5}, r);
                    return true;
                  });
}

GradCheckItem check_matmul_tn(int points, Rng& rng) {
  // a^T*b with d_a = b*cot^T ... expressed through the same primitives the
  // encoder backward uses: d_a = matmul(b, transpose(cot)), d_b = matmul(a, cot)
  DualOp op{"matmul_tn",
            [](const std::vector<Tensor>& in) { return matmul_tn(in[0], in[1]); },
            [](const std::vector<Tensor>& in, const Tensor& cot) {
              return std::vector<Tensor>{matmul(in[1], transpose(cot)),
                                         matmul(in[0], cot)};
            }};
  return run_item("matmul_tn", kLinearTol, points, rng, op,
                  +[](std::vector<Tensor>& in, Tensor& cot, Rng& r) {
                    in = {Tensor::randn({6, 4}, r), Tensor::randn({6, 5}, r)};
                    cot = Tensor::randn({4, 5}, r);
                    return true;
                  });
}

GradCheckItem check_softmax(int points, Rng& rng) {
  const double scale = 0.7;
  DualOp op{"softmax",
            [scale](const std::vector<Tensor>& in) { return softmax(in[0], scale); },
            [scale](const std::vector<Tensor>& in, const Tensor& cot) {
              return std::vector<Tensor>{softmax_vjp(softmax(in[0], scale), cot, scale)};
            }};
  return run_item("softmax", kNonlinearTol, points, rng, op,
                  +[](std::vector<Tensor>& in, Tensor& cot, Rng& r) {
                    in = {randn_vec(7, r, 1.5)};
                    cot = randn_vec(7, r);
                    return true;
                  });
}

GradCheckItem check_sparsemax(int points, Rng& rng) {
  DualOp op{"sparsemax",
            [](const std::vector<Tensor>& in) { return sparsemax(in[0]); },
            [](const std::vector<Tensor>& in, const Tensor& cot) {
              return std::vector<Tensor>{
                  sparsemax_vjp(sparsemax_full(in[0]).support, cot)};
            }};
  return run_item("sparsemax", kNonlinearTol, points, rng, op,
                  +[](std::vector<Tensor>& in, Tensor& cot, Rng& r) {
                    Tensor x = randn_vec(7, r, 2.0);
                    if (sparsemax_full(x).boundary_margin < kBoundaryMargin)
                      return false;  // support edge: derivative is one-sided
                    in = {x};
                    cot = randn_vec(7, r);
                    return true;
                  });
}

GradCheckItem check_max(int points, Rng& rng) {
  DualOp op{"max_over_rows",
            [](const std::vector<Tensor>& in) {
              return Tensor::vec({max_over_rows(in[0]).value});
            },
            [](const std::vector<Tensor>& in, const Tensor& cot) {
              MaxResult m = max_over_rows(in[0]);
              return std::vector<Tensor>{max_over_rows_vjp(
                  static_cast<int>(in[0].numel()), m.argmax, cot.at(0))};
            }};
  return run_item("max_over_rows", kNonlinearTol, points, rng, op,
                  +[](std::vector<Tensor>& in, Tensor& cot, Rng& r) {
                    Tensor x = randn_vec(6, r);
                    std::vector<double> sorted = x.raw();
                    std::sort(sorted.begin(), sorted.end());
                    if (sorted[5] - sorted[4] < kBoundaryMargin)
                      return false;  // a tie makes the max one-sided
                    in = {x};
                    cot = Tensor::vec({r.normal()});
                    return true;
                  });
}

GradCheckItem check_layernorm(int points, Rng& rng) {
  const double eps = 1e-5;
  DualOp op{"layernorm",
            [eps](const std::vector<Tensor>& in) {
              return layernorm(in[0], in[1], in[2], eps);
            },
            [eps](const std::vector<Tensor>& in, const Tensor& cot) {
              LayernormGrads g = layernorm_vjp(in[0], in[1], in[2], eps, cot);
              return std::vector<Tensor>{g.d_x, g.d_gain, g.d_bias};
            }};
  return run_item("layernorm", kNonlinearTol, points, rng, op,
                  +[](std::vector<Tensor>& in, Tensor& cot, Rng& r) {
                    in = {randn_vec(6, r), randn_vec(6, r, 0.5), randn_vec(6, r, 0.5)};
                    cot = randn_vec(6, r);
                    return true;
                  });
}

GradCheckItem check_gelu(int points, Rng& rng) {
  DualOp op{"gelu", [](const std::vector<Tensor>& in) { return gelu(in[0]); },
            [](const std::vector<Tensor>& in, const Tensor& cot) {
              return std::vector<Tensor>{gelu_vjp(in[0], cot)};
            }};
  return run_item("gelu", kNonlinearTol, points, rng, op,
                  +[](std::vector<Tensor>& in, Tensor& cot, Rng& r) {
                    in = {randn_vec(9, r, 2.0)};
                    cot = randn_vec(9, r);
                    return true;
                  });
}

GradCheckItem check_l2_normalize(int points, Rng& rng) {
  DualOp op{"l2_normalize",
            [](const std::vector<Tensor>& in) { return l2_normalize(in[0]); },
            [](const std::vector<Tensor>& in, const Tensor& cot) {
              return std::vector<Tensor>{l2_normalize_vjp(in[0], cot)};
            }};
  return run_item("l2_normalize", kNonlinearTol, points, rng, op,
                  +[](std::vector<Tensor>& in, Tensor& cot, Rng& r) {
                    Tensor x = randn_vec(6, r);
                    if (x.norm2() < 1e-2) return false;  // curvature blows up at 0
                    in = {x};
                    cot = randn_vec(6, r);
                    return true;
                  });
}

GradCheckItem check_add(int points, Rng& rng) {
  DualOp op{"add", [](const std::vector<Tensor>& in) { return add(in[0], in[1]); },
            [](const std::vector<Tensor>&, const Tensor& cot) {
              return std::vector<Tensor>{cot, cot};
            }};
  return run_item("add", kLinearTol, points, rng, op,
                  +[](std::vector<Tensor>& in, Tensor& cot, Rng& r) {
                    in = {randn_vec(5, r), randn_vec(5, r)};
                    cot = randn_vec(5, r);
                    return true;
                  });
}

GradCheckItem check_scale(int points, Rng& rng) {
  const double s = -1.7;
  DualOp op{"scale", [s](const std::vector<Tensor>& in) { return scale(in[0], s); },
            [s](const std::vector<Tensor>&, const Tensor& cot) {
              return std::vector<Tensor>{scale(cot, s)};
            }};
  return run_item("scale", kLinearTol, points, rng, op,
                  +[](std::vector<Tensor>& in, Tensor& cot, Rng& r) {
                    in = {randn_vec(5, r)};
                    cot = randn_vec(5, r);
                    return true;
                  });
}

GradCheckItem check_transpose(int points, Rng& rng) {
  DualOp op{"transpose",
            [](const std::vector<Tensor>& in) { return transpose(in[0]); },
            [](const std::vector<Tensor>&, const Tensor& cot) {
              return std::vector<Tensor>{transpose(cot)};
            }};
  return run_item("transpose", kLinearTol, points, rng, op,
                  +[](std::vector<Tensor>& in, Tensor& cot, Rng& r) {
                    in = {Tensor::randn({4, 3}, r)};
                    cot = Tensor::randn({3, 4}, r);
                    return true;
                  });
}

GradCheckItem check_embed_lookup(int points, Rng& rng) {
  const std::vector<int> ids = {1, 3, 1, 7};  // repeated id exercises accumulation
  DualOp op{"embed_lookup",
            [ids](const std::vector<Tensor>& in) { return embed_lookup(in[0], ids); },
            [ids](const std::vector<Tensor>& in, const Tensor& cot) {
              return std::vector<Tensor>{embed_lookup_vjp(in[0], ids, cot)};
            }};
  return run_item("embed_lookup", kLinearTol, points, rng, op,
                  +[](std::vector<Tensor>& in, Tensor& cot, Rng& r) {
                    in = {Tensor::randn({8, 5}, r)};
                    cot = Tensor::randn({4, 5}, r);
                    return true;
                  });
}

// ---------------------------------------------------------------------------
// Composite paths
// ---------------------------------------------------------------------------

// similarity matrix + log temperature -> scalar loss
GradCheckItem check_loss_path(const std::string& name, bool hard_negative, int points,
                              Rng& rng) {
  const double gamma = hard_negative ? 0.4 : 0.0;
  auto loss_of = [hard_negative, gamma](const std::vector<Tensor>& in) {
    LossConfig lc;
    lc.gamma = gamma;
    lc.log_tau = in[1].at(0);
    lc.stop_grad_weights = false;  // differentiate the true objective
    return hard_negative ? hn_clap_loss(in[0], lc) : clap_loss(in[0], lc);
  };
  DualOp op{name,
            [loss_of](const std::vector<Tensor>& in) {
              return Tensor::vec({loss_of(in).value});
            },
            [loss_of](const std::vector<Tensor>& in, const Tensor& cot) {
              LossResult res = loss_of(in);
              Tensor d_s = res.d_s;
              d_s.scale_inplace(cot.at(0));
              return std::vector<Tensor>{d_s, Tensor::vec({res.d_log_tau * cot.at(0)})};
            }};
  return run_item(name, kNonlinearTol, points, rng, op,
                  +[](std::vector<Tensor>& in, Tensor& cot, Rng& r) {
                    Tensor s = Tensor::randn({4, 4}, r, 0.6);
                    Tensor lt = Tensor::vec({std::log(0.05) + 0.5 * r.normal()});
                    in = {s, lt};
                    cot = Tensor::vec({1.0 + 0.1 * r.normal()});
                    return true;
                  });
}

Config composite_config() {
  Config c = default_config();
  config_set(c, "model.d", "6");
  config_set(c, "model.joint_dim", "6");
  config_set(c, "model.audio_blocks", "2");
  config_set(c, "model.text_blocks", "1");
  config_set(c, "model.codebook_size", "4");
  config_set(c, "model.eta", "0.5");
  config_set(c, "model.text_max_len", "4");
  config_set(c, "loss.gamma", "0.3");
  config_set(c, "loss.stop_grad_weights", "false");
  return c;
}

constexpr int kCompFin = 4;
constexpr int kCompVocab = 6;
constexpr int kCompT = 3;

// smallest-gap between a column's best two entries across all codewords
double min_pool_gap(const Tensor& features, const Codebook& cb) {
  Tensor dots = matmul_nt(features, cb.z);
  double gap = 1e300;
  for (int k = 0; k < dots.cols(); ++k) {
    double best = -1e300, second = -1e300;
    for (int t = 0; t < dots.rows(); ++t) {
      const double v = dots.at(t, k);
      if (v > best) {
        second = best;
        best = v;
      } else if (v > second) {
        second = v;
      }
    }
    if (dots.rows() > 1) gap = std::min(gap, best - second);
  }
  return gap;
}

// the full pipeline, differentiated with respect to every model parameter
GradCheckItem check_model_path(int points, Rng& rng) {
  GradCheckItem item;
  item.name = "encode_aggregate_loss";
  item.tol = kNonlinearTol;
  const Config cfg = composite_config();

  int made = 0, attempts = 0;
  while (made < points) {
    if (++attempts > points * 50)
      throw GenerationError("grad suite: model path could not find interior points");

    Config c = cfg;
    c.seed = rng.next_u64();
    Model m = make_model(c, kCompFin, kCompVocab, kCompT);
    std::vector<Tensor> frames = {Tensor::randn({kCompT, kCompFin}, rng),
                                  Tensor::randn({kCompT, kCompFin}, rng)};
    std::vector<std::vector<int>> captions = {
        {static_cast<int>(rng.below(kCompVocab)), static_cast<int>(rng.below(kCompVocab))},
        {static_cast<int>(rng.below(kCompVocab)), static_cast<int>(rng.below(kCompVocab))}};

    BatchCache cache;
    model_forward(m, frames, captions, cache);
    bool interior = true;
    for (const auto& side : {&cache.audio, &cache.text})
      for (const auto& e : *side) {
        interior &= e.agg.boundary_margin > kBoundaryMargin;
        interior &= min_pool_gap(e.enc.features, m.cb) > kBoundaryMargin;
      }
    if (!interior) {
      ++item.skipped;
      continue;
    }

    std::vector<std::pair<std::string, Tensor*>> params;
    visit_model(m, [&params](const std::string& n, Tensor& t) {
      params.emplace_back(n, &t);
    });
    std::vector<Tensor> inputs;
    for (auto& [n, t] : params) inputs.push_back(*t);

    DualOp op{"encode_aggregate_loss",
              [&m, &params, &frames, &captions](const std::vector<Tensor>& in) {
                for (size_t i = 0; i < params.size(); ++i) *params[i].second = in[i];
                BatchCache bc;
                return Tensor::vec({model_forward(m, frames, captions, bc)});
              },
              [&m, &params, &frames, &captions](const std::vector<Tensor>& in,
                                                const Tensor& cot) {
                for (size_t i = 0; i < params.size(); ++i) *params[i].second = in[i];
                BatchCache bc;
                model_forward(m, frames, captions, bc);
                Model grads = zeros_like_model(m);
                model_backward(m, bc, grads);
                std::vector<Tensor> out;
                visit_model(grads, [&out, &cot](const std::string&, Tensor& t) {
                  t.scale_inplace(cot.at(0));
                  out.push_back(t);
                });
                return out;
              }};
    item.worst = std::max(item.worst, grad_check(op, inputs, Tensor::vec({1.0})));
    ++made;
  }
  item.points = made;
  item.pass = item.worst < item.tol;
  return item;
}

}  // namespace

bool GradSuiteResult::all_pass() const {
  for (const auto& item : items)
    if (!item.pass) return false;
  return !items.empty();
}

GradSuiteResult run_grad_suite(int points_per_item, uint64_t seed) {
  if (points_per_item < 1) throw ConfigError("grad suite needs at least one point");
  Rng rng(Rng::mix(seed, 0x67726164));  // "grad"
  GradSuiteResult r;
  r.items.push_back(check_matmul(points_per_item, rng));
  r.items.push_back(check_matmul_nt(points_per_item, rng));
  r.items.push_back(check_matmul_tn(points_per_item, rng));
  r.items.push_back(check_softmax(points_per_item, rng));
  r.items.push_back(check_sparsemax(points_per_item, rng));
  r.items.push_back(check_max(points_per_item, rng));
  r.items.push_back(check_layernorm(points_per_item, rng));
  r.items.push_back(check_gelu(points_per_item, rng));
  r.items.push_back(check_l2_normalize(points_per_item, rng));
  r.items.push_back(check_add(points_per_item, rng));
  r.items.push_back(check_scale(points_per_item, rng));
  r.items.push_back(check_transpose(points_per_item, rng));
  r.items.push_back(check_embed_lookup(points_per_item, rng));
  r.items.push_back(check_loss_path("loss_plain", false, points_per_item, rng));
  r.items.push_back(check_loss_path("loss_weighted", true, points_per_item, rng));
  r.items.push_back(check_model_path(points_per_item, rng));
  return r;
}

std::string grad_suite_to_json(const GradSuiteResult& r) {
  nlohmann::json j;
  j["all_pass"] = r.all_pass();
  j["items"] = nlohmann::json::array();
  for (const auto& item : r.items) {
    nlohmann::json ji;
    ji["name"] = item.name;
    ji["points"] = item.points;
    ji["skipped"] = item.skipped;
    ji["worst_rel_err"] = item.worst;
    ji["tolerance"] = item.tol;
    ji["pass"] = item.pass;
    j["items"].push_back(ji);
  }
  return j.dump(2);
}

std::string grad_suite_to_text(const GradSuiteResult& r) {
  std::ostringstream out;
  for (const auto& item : r.items) {
    out << (item.pass ? "pass" : "FAIL") << "  ";
    out << item.name;
    for (size_t i = item.name.size(); i < 24; ++i) out << ' ';
    out << "worst " << format_double(item.worst) << "  tol "
        << format_double(item.tol) << "  points " << item.points;
    if (item.skipped) out << "  (skipped " << item.skipped << " boundary draws)";
    out << "\n";
  }
  out << (r.all_pass() ? "all gradient checks passed" : "GRADIENT CHECKS FAILED")
      << "\n";
  return out.str();
}

}  // namespace mga
