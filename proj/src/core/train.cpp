#include "core/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "core/errors.hpp"
#include "core/eval.hpp"
#include "core/ops.hpp"
#include "core/textfmt.hpp"

namespace mga {
namespace {

constexpr uint64_t kTrainStream = 0x747261696e;  // "train"

using NamedTensors = std::vector<std::pair<std::string, Tensor*>>;

NamedTensors collect(Model& m) {
  NamedTensors out;
  visit_model(m, [&out](const std::string& name, Tensor& t) { out.emplace_back(name, &t); });
  return out;
}

void require_aligned(const NamedTensors& a, const NamedTensors& b, const char* what) {
  if (a.size() != b.size())
    throw WiringError(std::string(what) + ": parameter trees differ in size");
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].first != b[i].first)
      throw WiringError(std::string(what) + ": parameter key mismatch, '" + a[i].first +
                        "' vs '" + b[i].first + "'");
    if (!a[i].second->same_shape(*b[i].second))
      throw WiringError(std::string(what) + ": shape mismatch at '" + a[i].first + "'");
  }
}

void zero_model(Model& m) {
  visit_model(m, [](const std::string&, Tensor& t) { t.fill(0.0); });
}

// little-endian primitives; payloads are raw IEEE-754 bits
void put_u16(std::ostream& os, uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  os.write(b, 2);
}
void put_u32(std::ostream& os, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}
void put_u64(std::ostream& os, uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}
void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<uint64_t>(v)); }

uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}
uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}
uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

void write_entry(std::ostream& os, const std::string& name, const Tensor& t) {
  if (name.size() > 0xffff) throw WiringError("checkpoint entry name too long");
  put_u16(os, static_cast<uint16_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  os.put(static_cast<char>(1));  // dtype f64
  os.put(static_cast<char>(t.ndim()));
  for (int i = 0; i < t.ndim(); ++i) put_u32(os, static_cast<uint32_t>(t.dim(i)));
  for (double v : t.raw()) put_f64(os, v);
}

struct RawEntry {
  Tensor tensor;
  bool used = false;
};

// RNG state (4 x u64) rides in a tensor entry as u32 halves; doubles hold
// 32-bit integers exactly, so the round-trip is lossless.
Tensor rng_to_tensor(const std::vector<uint64_t>& state) {
  if (state.size() != 4) throw WiringError("rng state must have 4 words");
  Tensor t = Tensor::zeros({8});
  for (int i = 0; i < 4; ++i) {
    t.at(2 * i) = static_cast<double>(state[static_cast<size_t>(i)] & 0xffffffffull);
    t.at(2 * i + 1) = static_cast<double>(state[static_cast<size_t>(i)] >> 32);
  }
  return t;
}

std::vector<uint64_t> rng_from_tensor(const Tensor& t) {
  if (t.numel() != 8) throw FormatError("checkpoint rng state has wrong size");
  std::vector<uint64_t> state(4);
  for (int i = 0; i < 4; ++i) {
    auto lo = static_cast<uint64_t>(t.at(2 * i));
    auto hi = static_cast<uint64_t>(t.at(2 * i + 1));
    state[static_cast<size_t>(i)] = lo | (hi << 32);
  }
  return state;
}

}  // namespace

AdamState make_adam_state(const Model& model) {
  AdamState st;
  st.m = zeros_like_model(model);
  st.v = zeros_like_model(model);
  st.step = 0;
  return st;
}

double clip_global_norm(Model& grads, double clip) {
  double sq = 0;
  visit_model(grads, [&sq](const std::string&, Tensor& t) {
    for (double v : t.raw()) sq += v * v;
  });
  double norm = std::sqrt(sq);
  if (norm > clip && norm > 0) {
    const double s = clip / norm;
    visit_model(grads, [s](const std::string&, Tensor& t) { t.scale_inplace(s); });
  }
  return norm;
}

void adam_step(Model& params, const Model& grads, AdamState& st, const Config& cfg) {
  NamedTensors p = collect(params);
  NamedTensors g = collect(const_cast<Model&>(grads));
  NamedTensors mm = collect(st.m);
  NamedTensors vv = collect(st.v);
  require_aligned(p, g, "adam params/grads");
  require_aligned(p, mm, "adam params/moment m");
  require_aligned(p, vv, "adam params/moment v");

  st.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (size_t i = 0; i < p.size(); ++i) {
    auto& pd = p[i].second->raw();
    const auto& gd = g[i].second->raw();
    auto& md = mm[i].second->raw();
    auto& vd = vv[i].second->raw();
    for (size_t k = 0; k < pd.size(); ++k) {
      md[k] = cfg.beta1 * md[k] + (1.0 - cfg.beta1) * gd[k];
      vd[k] = cfg.beta2 * vd[k] + (1.0 - cfg.beta2) * gd[k] * gd[k];
      const double mhat = md[k] / bc1;
      const double vhat = vd[k] / bc2;
      pd[k] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }
}

void apply_constraints(Model& m) {
  renormalize_rows(m.cb.z);
  const double lo = std::log(0.005);
  m.log_tau.at(0) = std::clamp(m.log_tau.at(0), lo, 0.0);
}

void save_checkpoint(const std::string& path, const Model& model, const AdamState& opt,
                     const std::vector<uint64_t>& rng_state, int epoch,
                     uint64_t cfg_hash) {
  NamedTensors params = collect(const_cast<Model&>(model));
  NamedTensors mm = collect(const_cast<Model&>(opt.m));
  NamedTensors vv = collect(const_cast<Model&>(opt.v));
  require_aligned(params, mm, "checkpoint moments");
  require_aligned(params, vv, "checkpoint moments");

  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint: " + path);
  os.write("MGAC", 4);
  put_u32(os, 1);  // version
  const uint32_t count = static_cast<uint32_t>(3 * params.size() + 3);
  put_u32(os, count);
  for (const auto& [name, t] : params) write_entry(os, name, *t);
  for (const auto& [name, t] : mm) write_entry(os, "opt.m." + name, *t);
  for (const auto& [name, t] : vv) write_entry(os, "opt.v." + name, *t);
  write_entry(os, "opt.step", Tensor::vec({static_cast<double>(opt.step)}));
  write_entry(os, "train.epoch", Tensor::vec({static_cast<double>(epoch)}));
  write_entry(os, "rng.train", rng_to_tensor(rng_state));
  put_u64(os, cfg_hash);
  os.close();
  if (!os) throw IoError("failed writing checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path, const Model& reference,
                                 uint64_t cfg_hash) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "MGAC")
    throw FormatError("not a checkpoint file (bad magic): " + path);
  const uint32_t version = get_u32(is);
  if (version != 1)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const uint32_t count = get_u32(is);

  std::map<std::string, RawEntry> entries;
  for (uint32_t e = 0; e < count; ++e) {
    const uint16_t name_len = get_u16(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const int dtype = is.get();
    const int ndim = is.get();
    if (!is || (dtype != 0 && dtype != 1) || ndim < 0 || ndim > 8)
      throw FormatError("corrupt checkpoint entry header: " + path);
    std::vector<int> dims(static_cast<size_t>(ndim));
    size_t numel = 1;
    for (int i = 0; i < ndim; ++i) {
      dims[static_cast<size_t>(i)] = static_cast<int>(get_u32(is));
      numel *= static_cast<size_t>(dims[static_cast<size_t>(i)]);
    }
    std::vector<double> data(numel);
    if (dtype == 1) {
      for (size_t i = 0; i < numel; ++i) data[i] = std::bit_cast<double>(get_u64(is));
    } else {
      for (size_t i = 0; i < numel; ++i) data[i] = std::bit_cast<float>(get_u32(is));
    }
    if (!is) throw FormatError("checkpoint truncated inside entry '" + name + "'");
    if (entries.count(name)) throw FormatError("duplicate checkpoint entry '" + name + "'");
    entries.emplace(name, RawEntry{Tensor(dims, std::move(data)), false});
  }
  const uint64_t stored_hash = get_u64(is);
  if (!is) throw FormatError("checkpoint truncated before config hash: " + path);
  if (stored_hash != cfg_hash)
    throw FormatError("checkpoint config hash mismatch: stored " +
                      std::to_string(stored_hash) + ", current " +
                      std::to_string(cfg_hash));

  LoadedCheckpoint out;
  out.model = zeros_like_model(reference);
  out.opt = make_adam_state(reference);

  auto take = [&entries, &path](const std::string& name, Tensor& dst) {
    auto it = entries.find(name);
    if (it == entries.end())
      throw FormatError("checkpoint missing entry '" + name + "': " + path);
    if (!it->second.tensor.same_shape(dst))
      throw FormatError("checkpoint entry '" + name + "' has shape " +
                        it->second.tensor.shape_str() + ", expected " + dst.shape_str());
    dst = it->second.tensor;
    it->second.used = true;
  };
  visit_model(out.model, [&take](const std::string& name, Tensor& t) { take(name, t); });
  visit_model(out.opt.m, [&take](const std::string& name, Tensor& t) { take("opt.m." + name, t); });
  visit_model(out.opt.v, [&take](const std::string& name, Tensor& t) { take("opt.v." + name, t); });

  Tensor step_t = Tensor::zeros({1});
  take("opt.step", step_t);
  out.opt.step = static_cast<long>(step_t.at(0));
  Tensor epoch_t = Tensor::zeros({1});
  take("train.epoch", epoch_t);
  out.epoch = static_cast<int>(epoch_t.at(0));
  Tensor rng_t = Tensor::zeros({8});
  take("rng.train", rng_t);
  out.rng_state = rng_from_tensor(rng_t);

  for (const auto& [name, entry] : entries)
    if (!entry.used)
      throw FormatError("checkpoint has unexpected entry '" + name + "': " + path);
  return out;
}

TrainResult train_model(const Config& cfg, const Corpus& corpus,
                        const EpochCallback& on_epoch) {
  validate_config(cfg);
  const CorpusManifest& man = corpus.manifest;
  if (man.train_ids.empty() || man.val_ids.empty())
    throw ConfigError("training needs non-empty train and val splits");

  Model model = make_model(cfg, man.vocab.f_in, man.vocab.size(), man.t);
  AdamState opt = make_adam_state(model);
  Rng rng(Rng::mix(cfg.seed, kTrainStream));
  int start_epoch = 0;
  const uint64_t hash = config_hash(cfg);

  if (!cfg.resume.empty()) {
    LoadedCheckpoint loaded = load_checkpoint(cfg.resume, model, hash);
    model = std::move(loaded.model);
    opt = std::move(loaded.opt);
    rng.set_state(loaded.rng_state);
    start_epoch = loaded.epoch;
  }

  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw IoError("cannot create output dir: " + cfg.out_dir);

  TrainResult result;
  result.out_dir = cfg.out_dir;
  result.best_path = (fs::path(cfg.out_dir) / "best.ckpt").string();
  result.last_path = (fs::path(cfg.out_dir) / "last.ckpt").string();
  result.metrics_path = (fs::path(cfg.out_dir) / "metrics.csv").string();

  {
    std::ofstream eff(fs::path(cfg.out_dir) / "effective.config");
    if (!eff) throw IoError("cannot write effective config in " + cfg.out_dir);
    eff << dump_config(cfg);
  }

  std::ofstream metrics;
  if (start_epoch == 0) {
    metrics.open(result.metrics_path);
    if (metrics) metrics << "epoch,split,metric,value\n";
  } else {
    metrics.open(result.metrics_path, std::ios::app);
  }
  if (!metrics) throw IoError("cannot write metrics: " + result.metrics_path);

  // Frames are pure functions of the stored clip record; render each train clip once.
  std::map<int, Tensor> frame_cache;
  for (int id : man.train_ids)
    frame_cache.emplace(id, render_frames(corpus.clip_by_id(id), man.vocab));

  Model grads = zeros_like_model(model);
  std::vector<int> order = man.train_ids;

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    order = man.train_ids;
    for (size_t i = order.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(rng.below(i));
      std::swap(order[i - 1], order[j]);
    }

    double loss_sum = 0;
    int batches = 0;
    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch)) {
      const size_t end = std::min(order.size(), at + static_cast<size_t>(cfg.batch));
      if (end - at < 2) break;  // a single leftover clip has no negatives
      std::vector<Tensor> frames;
      std::vector<std::vector<int>> captions;
      for (size_t i = at; i < end; ++i) {
        const SyntheticClip& clip = corpus.clip_by_id(order[i]);
        frames.push_back(frame_cache.at(clip.id));
        captions.push_back(clip.caption);
      }

      auto diagnose = [&](const std::string& detail) {
        std::ostringstream diag;
        diag << detail << " at epoch " << epoch << " batch " << batches
             << " (first clip id " << order[at] << ");";
        visit_model(model, [&diag](const std::string& name, Tensor& t) {
          if (name.find(".block") == std::string::npos)
            diag << " |" << name << "|=" << t.norm2();
        });
        return diag.str();
      };

      BatchCache cache;
      double loss;
      try {
        loss = model_forward(model, frames, captions, cache);
        zero_model(grads);
        model_backward(model, cache, grads);
      } catch (const NumericError& e) {
        throw NumericError(diagnose(e.what()));
      }
      if (!std::isfinite(loss))
        throw NumericError(diagnose("non-finite loss"));
      clip_global_norm(grads, cfg.clip_norm);
      adam_step(model, grads, opt, cfg);
      apply_constraints(model);
      loss_sum += loss;
      ++batches;
    }
    const double train_loss = batches == 0 ? 0.0 : loss_sum / batches;

    SplitEmbeddings val = embed_split(model, corpus, man.val_ids, false);
    RetrievalMetrics vr = eval_retrieval(val);

    metrics << epoch << ",train,loss," << format_double(train_loss) << "\n";
    metrics << epoch << ",val,r1_t2a," << format_double(vr.r1_t2a) << "\n";
    metrics << epoch << ",val,r1_a2t," << format_double(vr.r1_a2t) << "\n";
    metrics << epoch << ",val,r1_mean," << format_double(vr.r1_mean()) << "\n";
    metrics.flush();
    if (!metrics) throw IoError("failed writing metrics: " + result.metrics_path);

    save_checkpoint(result.last_path, model, opt, rng.state(), epoch + 1, hash);
    if (vr.r1_mean() > result.best_val_r1) {
      result.best_val_r1 = vr.r1_mean();
      result.best_epoch = epoch;
      save_checkpoint(result.best_path, model, opt, rng.state(), epoch + 1, hash);
    }
    result.final_train_loss = train_loss;
    result.epochs_run = epoch + 1 - start_epoch;
    if (on_epoch) on_epoch(epoch, train_loss, vr.r1_mean());
  }

  if (cfg.epochs <= start_epoch) {
    // no epochs to run: leave usable checkpoints behind without clobbering
    // ones an earlier run already wrote into this directory
    if (!fs::exists(result.last_path))
      save_checkpoint(result.last_path, model, opt, rng.state(), start_epoch, hash);
    if (!fs::exists(result.best_path))
      save_checkpoint(result.best_path, model, opt, rng.state(), start_epoch, hash);
  }
  return result;
}

}  // namespace mga
