#include "mga/mga_c.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "core/ablate.hpp"
#include "core/config.hpp"
#include "core/data.hpp"
#include "core/errors.hpp"
#include "core/eval.hpp"
#include "core/gradsuite.hpp"
#include "core/train.hpp"

struct mga_config {
  mga::Config cfg;
};

struct mga_corpus {
  mga::Corpus corpus;
};

struct mga_model {
  mga::Model model;
  explicit mga_model(mga::Model m) : model(std::move(m)) {}
};

namespace {

thread_local std::string g_last_error;

mga_status status_of(const mga::MgaError& e) {
  switch (e.kind()) {
    case mga::ErrorKind::Config:
      return MGA_USAGE;
    case mga::ErrorKind::Io:
    case mga::ErrorKind::Format:
      return MGA_IO;
    case mga::ErrorKind::Numeric:
    case mga::ErrorKind::Degenerate:
      return MGA_NUMERIC;
    default:
      return MGA_ERR;
  }
}

template <typename Fn>
mga_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    return fn();
  } catch (const mga::MgaError& e) {
    g_last_error = e.what();
    return status_of(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MGA_ERR;
  }
}

mga_status usage(const char* message) {
  g_last_error = message;
  return MGA_USAGE;
}

/* malloc-backed copy so C callers pair it with mga_string_free */
char* copy_out(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

mga_status give(char** slot, const std::string& s) {
  if (!slot) return MGA_OK;
  *slot = copy_out(s);
  if (!*slot) {
    g_last_error = "out of memory";
    return MGA_ERR;
  }
  return MGA_OK;
}

void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw mga::IoError("cannot write " + path);
  out << body;
  out.close();
  if (!out) throw mga::IoError("failed writing " + path);
}

}  // namespace

extern "C" {

const char* mga_last_error(void) { return g_last_error.c_str(); }

void mga_string_free(char* s) { std::free(s); }

/* ------------------------------------------------------------------ */

mga_config* mga_config_new(void) {
  try {
    return new mga_config{mga::default_config()};
  } catch (...) {
    return nullptr;
  }
}

void mga_config_free(mga_config* cfg) { delete cfg; }

mga_status mga_config_load_file(mga_config* cfg, const char* path) {
  if (!cfg || !path) return usage("mga_config_load_file: NULL argument");
  return guarded([&] {
    mga::merge_config_file(cfg->cfg, path);
    return MGA_OK;
  });
}

mga_status mga_config_set(mga_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) return usage("mga_config_set: NULL argument");
  return guarded([&] {
    mga::config_set(cfg->cfg, key, value);
    return MGA_OK;
  });
}

mga_status mga_config_get(const mga_config* cfg, const char* key, char** value) {
  if (!cfg || !key || !value) return usage("mga_config_get: NULL argument");
  return guarded([&] { return give(value, mga::config_get(cfg->cfg, key)); });
}

mga_status mga_config_validate(const mga_config* cfg) {
  if (!cfg) return usage("mga_config_validate: NULL config");
  return guarded([&] {
    mga::validate_config(cfg->cfg);
    return MGA_OK;
  });
}

mga_status mga_config_dump(const mga_config* cfg, char** out) {
  if (!cfg || !out) return usage("mga_config_dump: NULL argument");
  return guarded([&] { return give(out, mga::dump_config(cfg->cfg)); });
}

/* ------------------------------------------------------------------ */

mga_status mga_corpus_generate(const char* out_dir, int clips, int frames,
                               int events, int feat_dim, double sigma,
                               uint64_t seed, mga_corpus** out) {
  if (!out_dir) return usage("mga_corpus_generate: NULL out_dir");
  return guarded([&] {
    mga::CorpusParams p;
    if (clips > 0) p.n_clips = clips;
    if (frames > 0) p.t = frames;
    if (events > 0) p.e = events;
    if (feat_dim > 0) p.f_in = feat_dim;
    if (sigma >= 0.0) p.sigma = sigma;
    p.seed = seed;
    mga::Corpus corpus = mga::gen_corpus(p);
    mga::write_corpus(corpus, out_dir);
    if (out) *out = new mga_corpus{std::move(corpus)};
    return MGA_OK;
  });
}

mga_status mga_corpus_open(const char* dir, mga_corpus** out) {
  if (!dir || !out) return usage("mga_corpus_open: NULL argument");
  return guarded([&] {
    *out = new mga_corpus{mga::read_corpus(dir)};
    return MGA_OK;
  });
}

mga_status mga_corpus_summary(const mga_corpus* corpus, char** out) {
  if (!corpus || !out) return usage("mga_corpus_summary: NULL argument");
  return guarded([&] {
    const mga::CorpusManifest& m = corpus->corpus.manifest;
    std::string s;
    s += "clips: train " + std::to_string(m.train_ids.size()) + ", val " +
         std::to_string(m.val_ids.size()) + ", test " +
         std::to_string(m.test_ids.size()) + "\n";
    s += "frames per clip: " + std::to_string(m.t) +
         ", feature dim: " + std::to_string(m.f_in) + "\n";
    s += "event classes: " + std::to_string(m.vocab.events.size()) +
         ", vocabulary: " + std::to_string(m.vocab.tokens.size()) + " tokens\n";
    return give(out, s);
  });
}

void mga_corpus_free(mga_corpus* corpus) { delete corpus; }

/* ------------------------------------------------------------------ */

mga_status mga_train(const mga_config* cfg, const mga_corpus* corpus,
                     mga_epoch_cb cb, void* user, char** summary_json) {
  if (!cfg || !corpus) return usage("mga_train: NULL argument");
  return guarded([&] {
    mga::EpochCallback on_epoch;
    if (cb)
      on_epoch = [cb, user](int epoch, double loss, double r1) {
        cb(epoch, loss, r1, user);
      };
    mga::TrainResult r = mga::train_model(cfg->cfg, corpus->corpus, on_epoch);
    nlohmann::json j;
    j["epochs_run"] = r.epochs_run;
    j["best_epoch"] = r.best_epoch;
    j["best_val_r1"] = r.best_val_r1;
    j["final_train_loss"] = r.final_train_loss;
    j["out_dir"] = r.out_dir;
    j["best_checkpoint"] = r.best_path;
    j["last_checkpoint"] = r.last_path;
    j["metrics_csv"] = r.metrics_path;
    return give(summary_json, j.dump(2));
  });
}

/* ------------------------------------------------------------------ */

mga_status mga_model_load(const mga_config* cfg, const mga_corpus* corpus,
                          const char* checkpoint, mga_model** out) {
  if (!cfg || !corpus || !checkpoint || !out)
    return usage("mga_model_load: NULL argument");
  return guarded([&] {
    const mga::CorpusManifest& m = corpus->corpus.manifest;
    mga::Model ref = mga::make_model(cfg->cfg, m.f_in,
                                     static_cast<int>(m.vocab.tokens.size()), m.t);
    mga::LoadedCheckpoint loaded =
        mga::load_checkpoint(checkpoint, ref, mga::config_hash(cfg->cfg));
    *out = new mga_model(std::move(loaded.model));
    return MGA_OK;
  });
}

void mga_model_free(mga_model* model) { delete model; }

mga_status mga_evaluate(const mga_model* model, const mga_corpus* corpus,
                        const char* split, int as_json, char** report) {
  if (!model || !corpus || !split || !report)
    return usage("mga_evaluate: NULL argument");
  return guarded([&] {
    const mga::Config& c = model->model.cfg;
    mga::EvalReport r = mga::evaluate_split(model->model, corpus->corpus, split,
                                            c.median_w, c.collar);
    return give(report, as_json ? mga::report_to_json(r) : mga::report_to_text(r));
  });
}

mga_status mga_inspect_codebook(const mga_model* model, const mga_corpus* corpus,
                                const char* split, int top_classes, int as_json,
                                char** report) {
  if (!model || !corpus || !split || !report)
    return usage("mga_inspect_codebook: NULL argument");
  return guarded([&] {
    mga::CodebookReport r =
        mga::inspect_codebook(model->model, corpus->corpus, split, top_classes);
    const mga::Vocabulary& vocab = corpus->corpus.manifest.vocab;
    return give(report, as_json ? mga::codebook_report_to_json(r, vocab)
                                : mga::codebook_report_to_text(r, vocab));
  });
}

mga_status mga_export_heatmap(const mga_model* model, const mga_corpus* corpus,
                              int clip_id, const char* csv_path) {
  if (!model || !corpus || !csv_path)
    return usage("mga_export_heatmap: NULL argument");
  return guarded([&] {
    mga::export_similarity_heatmap(model->model, corpus->corpus, clip_id, csv_path);
    return MGA_OK;
  });
}

/* ------------------------------------------------------------------ */

mga_status mga_ablate(const mga_config* cfg, const mga_corpus* corpus,
                      const uint64_t* seeds, int n_seeds, int epochs,
                      const char* json_path, const char* csv_path,
                      mga_ablate_cb cb, void* user, char** trends_json) {
  if (!cfg || !corpus) return usage("mga_ablate: NULL argument");
  if (!seeds || n_seeds < 1) return usage("mga_ablate: need at least one seed");
  return guarded([&] {
    std::vector<uint64_t> seed_list(seeds, seeds + n_seeds);
    mga::Config base = cfg->cfg;
    base.epochs = epochs > 0 ? epochs : mga::kAblateEpochs;
    mga::AblationProgress progress;
    if (cb)
      progress = [cb, user](const mga::AblationRun& r) {
        cb(r.row.c_str(), r.seed, r.ok ? 1 : 0, r.seconds,
           r.ok ? nullptr : r.error.c_str(), user);
      };
    mga::AblationReport report =
        mga::run_ablation(base, corpus->corpus, seed_list, progress);
    if (json_path) write_text_file(json_path, mga::ablation_to_json(report));
    if (csv_path) write_text_file(csv_path, mga::ablation_to_csv(report));

    mga::AblationTrends t = mga::ablation_trends(report);
    int failures = 0;
    for (const auto& run : report.runs)
      if (!run.ok) ++failures;
    nlohmann::json j;
    j["runs"] = report.runs.size();
    j["failures"] = failures;
    j["total_seconds"] = report.total_seconds;
    j["f1_pairs"] = t.f1_pairs;
    j["full_f1_wins"] = t.full_f1_wins;
    j["r1_pairs"] = t.r1_pairs;
    j["full_r1_close"] = t.full_r1_close;
    j["norm_pairs"] = t.norm_pairs;
    j["softmax_not_above"] = t.softmax_not_above;
    return give(trends_json, j.dump(2));
  });
}

mga_status mga_grad_check(int points_per_item, uint64_t seed, int as_json,
                          char** report) {
  return guarded([&] {
    mga::GradSuiteResult r = mga::run_grad_suite(points_per_item, seed);
    mga_status give_status =
        give(report, as_json ? mga::grad_suite_to_json(r) : mga::grad_suite_to_text(r));
    if (give_status != MGA_OK) return give_status;
    if (!r.all_pass()) {
      int failed = 0;
      for (const auto& item : r.items)
        if (!item.pass) ++failed;
      g_last_error = std::to_string(failed) + " gradient check item(s) failed";
      return MGA_NUMERIC;
    }
    return MGA_OK;
  });
}

}  // extern "C"
