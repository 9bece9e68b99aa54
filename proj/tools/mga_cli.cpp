// Command-line front end. Everything below talks to the shared library
// through its C interface; exit codes are the mga_status values (0 ok,
// 2 usage, 3 io, 4 numeric).

#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mga/mga_c.h"

namespace {

int fail(mga_status st) {
  std::fprintf(stderr, "error: %s\n", mga_last_error());
  return static_cast<int>(st);
}

// RAII for strings handed out by the library
struct OwnedString {
  char* s = nullptr;
  ~OwnedString() { mga_string_free(s); }
  const char* get() const { return s ? s : ""; }
};

struct OwnedConfig {
  mga_config* cfg = nullptr;
  ~OwnedConfig() { mga_config_free(cfg); }
};

struct OwnedCorpus {
  mga_corpus* corpus = nullptr;
  ~OwnedCorpus() { mga_corpus_free(corpus); }
};

struct OwnedModel {
  mga_model* model = nullptr;
  ~OwnedModel() { mga_model_free(model); }
};

// Shared --config/--set plumbing. File first, overrides second, so a --set
// always wins over the file.
struct ConfigArgs {
  std::string file;
  std::vector<std::string> sets;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", file, "key = value config file");
    cmd->add_option("--set", sets, "override one key, as key=value")
        ->take_all()
        ->expected(-1);
  }

  mga_status build(OwnedConfig& out) const {
    out.cfg = mga_config_new();
    if (!out.cfg) {
      std::fprintf(stderr, "error: cannot allocate config\n");
      return MGA_ERR;
    }
    if (!file.empty()) {
      mga_status st = mga_config_load_file(out.cfg, file.c_str());
      if (st != MGA_OK) return st;
    }
    for (const std::string& kv : sets) {
      const size_t eq = kv.find('=');
      if (eq == std::string::npos || eq == 0) {
        std::fprintf(stderr, "error: --set expects key=value, got '%s'\n",
                     kv.c_str());
        return MGA_USAGE;
      }
      mga_status st = mga_config_set(out.cfg, kv.substr(0, eq).c_str(),
                                     kv.substr(eq + 1).c_str());
      if (st != MGA_OK) return st;
    }
    return MGA_OK;
  }
};

mga_status open_corpus_from_config(const mga_config* cfg, OwnedCorpus& out) {
  OwnedString dir;
  mga_status st = mga_config_get(cfg, "paths.corpus", &dir.s);
  if (st != MGA_OK) return st;
  return mga_corpus_open(dir.get(), &out.corpus);
}

void print_epoch(int epoch, double train_loss, double val_r1, void*) {
  std::printf("epoch %d  train loss %.4f  val R@1 %.2f\n", epoch, train_loss,
              val_r1);
  std::fflush(stdout);
}

void print_run(const char* row, uint64_t seed, int ok, double seconds,
               const char* error, void*) {
  if (ok)
    std::printf("%-22s seed %llu  ok      %.1fs\n", row,
                static_cast<unsigned long long>(seed), seconds);
  else
    std::printf("%-22s seed %llu  FAILED  %.1fs  %s\n", row,
                static_cast<unsigned long long>(seed), seconds,
                error ? error : "");
  std::fflush(stdout);
}

int run_gen_data(const std::string& out_dir, int clips, int frames, int events,
                 int feat, double sigma, uint64_t seed) {
  OwnedCorpus corpus;
  mga_status st = mga_corpus_generate(out_dir.c_str(), clips, frames, events,
                                      feat, sigma, seed, &corpus.corpus);
  if (st != MGA_OK) return fail(st);
  OwnedString summary;
  st = mga_corpus_summary(corpus.corpus, &summary.s);
  if (st != MGA_OK) return fail(st);
  std::printf("wrote corpus to %s\n%s", out_dir.c_str(), summary.get());
  return 0;
}

int run_train(const ConfigArgs& args, bool dump_defaults) {
  if (dump_defaults) {
    OwnedConfig defaults;
    defaults.cfg = mga_config_new();
    OwnedString dump;
    mga_status st = mga_config_dump(defaults.cfg, &dump.s);
    if (st != MGA_OK) return fail(st);
    std::printf("%s", dump.get());
    return 0;
  }
  OwnedConfig cfg;
  mga_status st = args.build(cfg);
  if (st != MGA_OK) return fail(st);
  st = mga_config_validate(cfg.cfg);
  if (st != MGA_OK) return fail(st);

  OwnedCorpus corpus;
  st = open_corpus_from_config(cfg.cfg, corpus);
  if (st != MGA_OK) return fail(st);

  OwnedString effective;
  if (mga_config_dump(cfg.cfg, &effective.s) == MGA_OK)
    std::printf("effective config:\n%s\n", effective.get());

  OwnedString summary;
  st = mga_train(cfg.cfg, corpus.corpus, print_epoch, nullptr, &summary.s);
  if (st != MGA_OK) return fail(st);

  auto j = nlohmann::json::parse(summary.get());
  std::printf("done: best epoch %d (val R@1 %.2f), final train loss %.4f\n",
              j["best_epoch"].get<int>(), j["best_val_r1"].get<double>(),
              j["final_train_loss"].get<double>());
  std::printf("best checkpoint: %s\n", j["best_checkpoint"].get<std::string>().c_str());
  std::printf("metrics: %s\n", j["metrics_csv"].get<std::string>().c_str());
  return 0;
}

int run_eval(const ConfigArgs& args, const std::string& checkpoint,
             const std::string& split, bool as_json) {
  OwnedConfig cfg;
  mga_status st = args.build(cfg);
  if (st != MGA_OK) return fail(st);
  OwnedCorpus corpus;
  st = open_corpus_from_config(cfg.cfg, corpus);
  if (st != MGA_OK) return fail(st);
  OwnedModel model;
  st = mga_model_load(cfg.cfg, corpus.corpus, checkpoint.c_str(), &model.model);
  if (st != MGA_OK) return fail(st);
  OwnedString report;
  st = mga_evaluate(model.model, corpus.corpus, split.c_str(), as_json ? 1 : 0,
                    &report.s);
  if (st != MGA_OK) return fail(st);
  std::printf("%s", report.get());
  return 0;
}

int run_ablate(const ConfigArgs& args, const std::vector<uint64_t>& seeds,
               int epochs, const std::string& json_path,
               const std::string& csv_path) {
  OwnedConfig cfg;
  mga_status st = args.build(cfg);
  if (st != MGA_OK) return fail(st);
  OwnedCorpus corpus;
  st = open_corpus_from_config(cfg.cfg, corpus);
  if (st != MGA_OK) return fail(st);

  OwnedString trends;
  st = mga_ablate(cfg.cfg, corpus.corpus, seeds.data(),
                  static_cast<int>(seeds.size()), epochs, json_path.c_str(),
                  csv_path.empty() ? nullptr : csv_path.c_str(), print_run,
                  nullptr, &trends.s);
  if (st != MGA_OK) return fail(st);

  auto j = nlohmann::json::parse(trends.get());
  std::printf("finished %d runs (%d failed) in %.1fs\n", j["runs"].get<int>(),
              j["failures"].get<int>(), j["total_seconds"].get<double>());
  std::printf("full beats baseline event F1: %d of %d seeds\n",
              j["full_f1_wins"].get<int>(), j["f1_pairs"].get<int>());
  std::printf("full within 1 R@1 point of baseline: %d of %d seeds\n",
              j["full_r1_close"].get<int>(), j["r1_pairs"].get<int>());
  std::printf("softmax variant not above sparsemax: %d of %d seeds\n",
              j["softmax_not_above"].get<int>(), j["norm_pairs"].get<int>());
  std::printf("report: %s\n", json_path.c_str());
  return 0;
}

int run_inspect(const ConfigArgs& args, const std::string& checkpoint,
                const std::string& split, int top, bool as_json) {
  OwnedConfig cfg;
  mga_status st = args.build(cfg);
  if (st != MGA_OK) return fail(st);
  OwnedCorpus corpus;
  st = open_corpus_from_config(cfg.cfg, corpus);
  if (st != MGA_OK) return fail(st);
  OwnedModel model;
  st = mga_model_load(cfg.cfg, corpus.corpus, checkpoint.c_str(), &model.model);
  if (st != MGA_OK) return fail(st);
  OwnedString report;
  st = mga_inspect_codebook(model.model, corpus.corpus, split.c_str(), top,
                            as_json ? 1 : 0, &report.s);
  if (st != MGA_OK) return fail(st);
  std::printf("%s", report.get());
  return 0;
}

int run_heatmap(const ConfigArgs& args, const std::string& checkpoint, int clip,
                const std::string& out_csv) {
  OwnedConfig cfg;
  mga_status st = args.build(cfg);
  if (st != MGA_OK) return fail(st);
  OwnedCorpus corpus;
  st = open_corpus_from_config(cfg.cfg, corpus);
  if (st != MGA_OK) return fail(st);
  OwnedModel model;
  st = mga_model_load(cfg.cfg, corpus.corpus, checkpoint.c_str(), &model.model);
  if (st != MGA_OK) return fail(st);
  st = mga_export_heatmap(model.model, corpus.corpus, clip, out_csv.c_str());
  if (st != MGA_OK) return fail(st);
  std::printf("wrote %s and %s.json\n", out_csv.c_str(), out_csv.c_str());
  return 0;
}

int run_grad_check(int points, uint64_t seed, bool as_json) {
  OwnedString report;
  mga_status st = mga_grad_check(points, seed, as_json ? 1 : 0, &report.s);
  std::printf("%s", report.get());
  if (st != MGA_OK) return fail(st);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"audio-text alignment toolkit"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  std::string gen_out = "data";
  int gen_clips = 0, gen_frames = 0, gen_events = 0, gen_feat = 0;
  double gen_sigma = -1.0;
  uint64_t gen_seed = 1;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--clips", gen_clips, "total clips (default 1250)");
  gen->add_option("--frames", gen_frames, "frames per clip (default 32)");
  gen->add_option("--events", gen_events, "event classes (default 10)");
  gen->add_option("--feat", gen_feat, "frame feature dim (default 16)");
  gen->add_option("--sigma", gen_sigma, "frame noise level (default 0.1)");
  gen->add_option("--seed", gen_seed, "generation seed");

  // train
  auto* train = app.add_subcommand("train", "train a model");
  ConfigArgs train_cfg;
  train_cfg.attach(train);
  bool dump_defaults = false;
  train->add_flag("--dump-defaults", dump_defaults,
                  "print every config default and exit");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  ConfigArgs eval_cfg;
  eval_cfg.attach(eval);
  std::string eval_ckpt, eval_split = "test";
  bool eval_json = false;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--split", eval_split, "train, val or test");
  eval->add_flag("--json", eval_json, "emit the JSON report");

  // ablate
  auto* ablate = app.add_subcommand(
      "ablate", "train and evaluate every studied toggle combination");
  ConfigArgs ablate_cfg;
  ablate_cfg.attach(ablate);
  std::vector<uint64_t> seeds = {1, 2, 3};
  int ablate_epochs = 0;
  std::string ablate_json = "ablation.json", ablate_csv;
  ablate->add_option("--seeds", seeds, "seeds to sweep")->delimiter(',');
  ablate->add_option("--epochs", ablate_epochs,
                     "per-run training epochs (0 = sweep default)");
  ablate->add_option("--out", ablate_json, "JSON report path");
  ablate->add_option("--csv", ablate_csv, "CSV report path (optional)");

  // inspect-codebook
  auto* inspect =
      app.add_subcommand("inspect-codebook", "codeword usage statistics");
  ConfigArgs inspect_cfg;
  inspect_cfg.attach(inspect);
  std::string inspect_ckpt, inspect_split = "val";
  int inspect_top = 3;
  bool inspect_json = false;
  inspect->add_option("--checkpoint", inspect_ckpt, "checkpoint file")->required();
  inspect->add_option("--split", inspect_split, "split to scan");
  inspect->add_option("--top", inspect_top, "classes listed per codeword");
  inspect->add_flag("--json", inspect_json, "emit the JSON report");

  // export-heatmap
  auto* heatmap = app.add_subcommand("export-heatmap",
                                     "class-by-frame similarity CSV for a clip");
  ConfigArgs heatmap_cfg;
  heatmap_cfg.attach(heatmap);
  std::string heatmap_ckpt, heatmap_out = "heatmap.csv";
  int heatmap_clip = 0;
  heatmap->add_option("--checkpoint", heatmap_ckpt, "checkpoint file")->required();
  heatmap->add_option("--clip", heatmap_clip, "clip id")->required();
  heatmap->add_option("--out", heatmap_out, "CSV path");

  // grad-check
  auto* grad = app.add_subcommand("grad-check",
                                  "finite-difference audit of all gradients");
  int grad_points = 100;
  uint64_t grad_seed = 1;
  bool grad_json = false;
  grad->add_option("--points", grad_points, "points per checked item");
  grad->add_option("--seed", grad_seed, "draw seed");
  grad->add_flag("--json", grad_json, "emit the JSON report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exits 0
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the message
    return static_cast<int>(MGA_USAGE);
  }

  if (gen->parsed())
    return run_gen_data(gen_out, gen_clips, gen_frames, gen_events, gen_feat,
                        gen_sigma, gen_seed);
  if (train->parsed()) return run_train(train_cfg, dump_defaults);
  if (eval->parsed()) return run_eval(eval_cfg, eval_ckpt, eval_split, eval_json);
  if (ablate->parsed())
    return run_ablate(ablate_cfg, seeds, ablate_epochs, ablate_json, ablate_csv);
  if (inspect->parsed())
    return run_inspect(inspect_cfg, inspect_ckpt, inspect_split, inspect_top,
                       inspect_json);
  if (heatmap->parsed())
    return run_heatmap(heatmap_cfg, heatmap_ckpt, heatmap_clip, heatmap_out);
  if (grad->parsed()) return run_grad_check(grad_points, grad_seed, grad_json);
  return static_cast<int>(MGA_USAGE);
}
