#include "core/ablate.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "core/errors.hpp"
#include "core/eval.hpp"
#include "core/textfmt.hpp"
#include "core/train.hpp"

namespace mga {
namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Config row_config(const Config& base, const AblationRow& row, uint64_t seed) {
  Config c = base;
  c.use_codebook = row.use_codebook;
  c.locality_last = row.locality_last;
  c.use_hard_negative = row.use_hard_negative;
  c.pooling = row.pooling;
  c.norm = row.norm;
  c.seed = seed;
  c.resume = "";
  c.out_dir = base.out_dir + "/" + row.slug + "/seed" + std::to_string(seed);
  return c;
}

AblationRun execute_run(const Config& base, const AblationRow& row, uint64_t seed,
                        const Corpus& corpus) {
  AblationRun run;
  run.row = row.name;
  run.seed = seed;
  auto t0 = std::chrono::steady_clock::now();
  try {
    Config cfg = row_config(base, row, seed);
    validate_config(cfg);
    TrainResult tr = train_model(cfg, corpus);
    run.train_loss = tr.final_train_loss;
    run.best_epoch = tr.best_epoch;

    // evaluate the checkpoint that won on validation, as a fresh load
    Model ref = make_model(cfg, corpus.manifest.f_in,
                           static_cast<int>(corpus.manifest.vocab.tokens.size()),
                           corpus.manifest.t);
    LoadedCheckpoint best = load_checkpoint(tr.best_path, ref, config_hash(cfg));
    EvalReport rep = evaluate_split(best.model, corpus, "test", cfg.median_w,
                                    cfg.collar);
    run.r1_t2a = rep.retrieval.r1_t2a;
    run.r1_a2t = rep.retrieval.r1_a2t;
    run.r1_mean = rep.retrieval.r1_mean();
    run.r5_t2a = rep.retrieval.r5_t2a;
    run.r5_a2t = rep.retrieval.r5_a2t;
    run.tag_accuracy = rep.tagging.accuracy;
    run.tag_map = rep.tagging.map;
    run.micro_event_f1 = rep.detection.micro_event_f1;
    run.micro_segment_f1 = rep.detection.micro_segment_f1;
    run.threshold = rep.detection.threshold;
    run.ok = true;
  } catch (const std::exception& e) {
    run.ok = false;
    run.error = e.what();
  }
  run.seconds = seconds_since(t0);
  return run;
}

struct Stat {
  double mean = 0, sd = 0;
  int n = 0;
};

Stat stat_of(const std::vector<double>& xs) {
  Stat s;
  s.n = static_cast<int>(xs.size());
  if (s.n == 0) return s;
  for (double x : xs) s.mean += x;
  s.mean /= s.n;
  if (s.n >= 2) {
    double acc = 0;
    for (double x : xs) acc += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(acc / (s.n - 1));
  }
  return s;
}

// metric name -> accessor, shared by the JSON and CSV writers
const std::vector<std::pair<std::string, double AblationRun::*>>& metric_fields() {
  static const std::vector<std::pair<std::string, double AblationRun::*>> fields = {
      {"train_loss", &AblationRun::train_loss},
      {"r1_t2a", &AblationRun::r1_t2a},
      {"r1_a2t", &AblationRun::r1_a2t},
      {"r1_mean", &AblationRun::r1_mean},
      {"r5_t2a", &AblationRun::r5_t2a},
      {"r5_a2t", &AblationRun::r5_a2t},
      {"tag_accuracy", &AblationRun::tag_accuracy},
      {"tag_map", &AblationRun::tag_map},
      {"micro_event_f1", &AblationRun::micro_event_f1},
      {"micro_segment_f1", &AblationRun::micro_segment_f1},
      {"threshold", &AblationRun::threshold},
  };
  return fields;
}

std::vector<const AblationRun*> runs_of_row(const AblationReport& r,
                                            const std::string& name, bool ok_only) {
  std::vector<const AblationRun*> out;
  for (const auto& run : r.runs)
    if (run.row == name && (!ok_only || run.ok)) out.push_back(&run);
  return out;
}

const AblationRun* find_run(const AblationReport& r, const std::string& name,
                            uint64_t seed) {
  for (const auto& run : r.runs)
    if (run.row == name && run.seed == seed && run.ok) return &run;
  return nullptr;
}

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';  // doubled per the usual csv convention
    out += c;
  }
  out += "\"";
  return out;
}

}  // namespace

std::vector<AblationRow> ablation_rows() {
  auto row = [](std::string name, std::string slug, bool cb, bool lb, bool hn,
                std::string pooling = "max", std::string norm = "sparsemax") {
    AblationRow r;
    r.name = std::move(name);
    r.slug = std::move(slug);
    r.use_codebook = cb;
    r.locality_last = lb;
    r.use_hard_negative = hn;
    r.pooling = std::move(pooling);
    r.norm = std::move(norm);
    return r;
  };
  return {
      row("baseline", "baseline", false, false, false),
      row("+codebook", "codebook", true, false, false),
      row("+locality", "locality", false, true, false),
      row("+codebook+locality", "codebook-locality", true, true, false),
      row("full", "full", true, true, true),
      row("full/mean-pool", "full-mean-pool", true, true, true, "mean"),
      row("full/softmax", "full-softmax", true, true, true, "max", "softmax"),
  };
}

AblationReport run_ablation(const Config& base, const Corpus& corpus,
                            const std::vector<uint64_t>& seeds,
                            const AblationProgress& on_run) {
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
  AblationReport report;
  report.rows = ablation_rows();
  report.seeds = seeds;
  report.base = base;
  auto t0 = std::chrono::steady_clock::now();
  for (const auto& row : report.rows)
    for (uint64_t seed : seeds) {
      report.runs.push_back(execute_run(base, row, seed, corpus));
      if (on_run) on_run(report.runs.back());
    }
  report.total_seconds = seconds_since(t0);
  return report;
}

AblationTrends ablation_trends(const AblationReport& r) {
  AblationTrends t;
  for (uint64_t seed : r.seeds) {
    const AblationRun* full = find_run(r, "full", seed);
    const AblationRun* base = find_run(r, "baseline", seed);
    const AblationRun* soft = find_run(r, "full/softmax", seed);
    if (full && base) {
      ++t.f1_pairs;
      if (full->micro_event_f1 > base->micro_event_f1) ++t.full_f1_wins;
      ++t.r1_pairs;
      if (full->r1_mean >= base->r1_mean - 1.0) ++t.full_r1_close;
    }
    if (full && soft) {
      ++t.norm_pairs;
      if (soft->micro_event_f1 <= full->micro_event_f1) ++t.softmax_not_above;
    }
  }
  return t;
}

std::string ablation_to_json(const AblationReport& r) {
  nlohmann::json j;
  j["seeds"] = r.seeds;
  j["total_seconds"] = r.total_seconds;
  j["config"] = dump_config(r.base);
  j["rows"] = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json jr;
    jr["name"] = row.name;
    jr["toggles"] = {{"use_codebook", row.use_codebook},
                     {"locality_last", row.locality_last},
                     {"use_hard_negative", row.use_hard_negative},
                     {"pooling", row.pooling},
                     {"norm", row.norm}};
    jr["runs"] = nlohmann::json::array();
    for (const AblationRun* run : runs_of_row(r, row.name, false)) {
      nlohmann::json js;
      js["seed"] = run->seed;
      js["ok"] = run->ok;
      js["seconds"] = run->seconds;
      if (run->ok) {
        js["best_epoch"] = run->best_epoch;
        for (const auto& [key, member] : metric_fields()) js[key] = run->*member;
      } else {
        js["error"] = run->error;
      }
      jr["runs"].push_back(js);
    }
    nlohmann::json summary;
    auto ok_runs = runs_of_row(r, row.name, true);
    for (const auto& [key, member] : metric_fields()) {
      std::vector<double> xs;
      for (const AblationRun* run : ok_runs) xs.push_back(run->*member);
      Stat s = stat_of(xs);
      if (s.n > 0) summary[key] = {{"mean", s.mean}, {"sd", s.sd}, {"n", s.n}};
    }
    jr["summary"] = summary;
    j["rows"].push_back(jr);
  }
  AblationTrends t = ablation_trends(r);
  j["trends"] = {{"f1_pairs", t.f1_pairs},
                 {"full_f1_wins", t.full_f1_wins},
                 {"r1_pairs", t.r1_pairs},
                 {"full_r1_close", t.full_r1_close},
                 {"norm_pairs", t.norm_pairs},
                 {"softmax_not_above", t.softmax_not_above}};
  return j.dump(2);
}

std::string ablation_to_csv(const AblationReport& r) {
  std::ostringstream out;
  out << "config,seed,status";
  for (const auto& [key, member] : metric_fields()) out << "," << key;
  out << ",seconds,error\n";
  auto emit_value = [&out](double v) { out << "," << format_double(v); };
  for (const auto& row : r.rows) {
    for (const AblationRun* run : runs_of_row(r, row.name, false)) {
      out << csv_quote(row.name) << "," << run->seed << ","
          << (run->ok ? "ok" : "error");
      for (const auto& [key, member] : metric_fields())
        if (run->ok)
          emit_value(run->*member);
        else
          out << ",";
      emit_value(run->seconds);
      out << "," << (run->ok ? "" : csv_quote(run->error)) << "\n";
    }
    auto ok_runs = runs_of_row(r, row.name, true);
    if (ok_runs.empty()) continue;
    for (const char* which : {"mean", "sd"}) {
      out << csv_quote(row.name) << "," << which << ",";
      for (const auto& [key, member] : metric_fields()) {
        std::vector<double> xs;
        for (const AblationRun* run : ok_runs) xs.push_back(run->*member);
        Stat s = stat_of(xs);
        emit_value(which == std::string("mean") ? s.mean : s.sd);
      }
      out << ",,\n";
    }
  }
  return out.str();
}

}  // namespace mga
