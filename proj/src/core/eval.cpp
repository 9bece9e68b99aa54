#include "core/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "core/errors.hpp"
#include "core/ops.hpp"
#include "core/textfmt.hpp"

namespace mga {
namespace {

using nlohmann::json;

// Queries are columns of `scores` when axis == 0 (rank rows for each column)
// and rows when axis == 1. Returns the best rank over the positive set: 1 +
// the number of candidates that strictly beat every positive, ties counting
// only when the candidate id is lower.
int best_rank(const Tensor& sim, const std::vector<int>& ids, int query, int axis,
              const std::vector<int>& positives) {
  const int n = axis == 0 ? sim.rows() : sim.cols();
  int best = n + 1;
  for (int p : positives) {
    double sp = axis == 0 ? sim.at(p, query) : sim.at(query, p);
    int better = 0;
    for (int c = 0; c < n; ++c) {
      double sc = axis == 0 ? sim.at(c, query) : sim.at(query, c);
      if (sc > sp || (sc == sp && ids[static_cast<size_t>(c)] < ids[static_cast<size_t>(p)]))
        ++better;
    }
    best = std::min(best, better + 1);
  }
  return best;
}

double pct(long hits, long total) {
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(hits) / static_cast<double>(total);
}

double f1_from_counts(long tp, long fp, long fn) {
  const long denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

const std::vector<int>& split_ids(const Corpus& corpus, const std::string& split) {
  if (split == "train") return corpus.manifest.train_ids;
  if (split == "val") return corpus.manifest.val_ids;
  if (split == "test") return corpus.manifest.test_ids;
  throw ConfigError("unknown split '" + split + "' (train, val, test)");
}

}  // namespace

SplitEmbeddings embed_split(const Model& m, const Corpus& corpus,
                            const std::vector<int>& ids, bool keep_frames) {
  if (ids.empty()) throw ConfigError("cannot embed an empty split");
  SplitEmbeddings e;
  e.ids = ids;
  const int n = static_cast<int>(ids.size());
  e.audio_globals = Tensor::zeros({n, m.cfg.joint_dim});
  e.text_globals = Tensor::zeros({n, m.cfg.joint_dim});
  for (int i = 0; i < n; ++i) {
    const SyntheticClip& clip = corpus.clip_by_id(ids[static_cast<size_t>(i)]);
    Tensor frames = render_frames(clip, corpus.manifest.vocab);
    EmbedCache cache;
    e.audio_globals.set_row(i, embed_audio(m, frames, &cache));
    if (keep_frames) e.frame_features.push_back(cache.enc.features);
    e.text_globals.set_row(i, embed_text(m, clip.caption));
  }
  return e;
}

RetrievalMetrics retrieval_from_sim(const Tensor& sim, const std::vector<int>& ids) {
  const int n = sim.rows();
  std::vector<std::vector<int>> diag(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) diag[static_cast<size_t>(i)] = {i};
  return retrieval_from_sim(sim, ids, diag, diag);
}

RetrievalMetrics retrieval_from_sim(const Tensor& sim, const std::vector<int>& ids,
                                    const std::vector<std::vector<int>>& pos_t2a,
                                    const std::vector<std::vector<int>>& pos_a2t) {
  if (sim.ndim() != 2 || sim.rows() != sim.cols())
    throw DimensionError("retrieval expects a square similarity matrix");
  const int n = sim.rows();
  if (static_cast<int>(ids.size()) != n ||
      static_cast<int>(pos_t2a.size()) != n || static_cast<int>(pos_a2t.size()) != n)
    throw DimensionError("retrieval: ids/positives sized against the matrix");
  long h1_t2a = 0, h5_t2a = 0, h1_a2t = 0, h5_a2t = 0;
  for (int q = 0; q < n; ++q) {
    int rt = best_rank(sim, ids, q, 0, pos_t2a[static_cast<size_t>(q)]);
    h1_t2a += rt <= 1;
    h5_t2a += rt <= 5;
    int ra = best_rank(sim, ids, q, 1, pos_a2t[static_cast<size_t>(q)]);
    h1_a2t += ra <= 1;
    h5_a2t += ra <= 5;
  }
  RetrievalMetrics r;
  r.r1_t2a = pct(h1_t2a, n);
  r.r5_t2a = pct(h5_t2a, n);
  r.r1_a2t = pct(h1_a2t, n);
  r.r5_a2t = pct(h5_a2t, n);
  return r;
}

RetrievalMetrics eval_retrieval(const SplitEmbeddings& e) {
  return retrieval_from_sim(matmul_nt(e.audio_globals, e.text_globals), e.ids);
}

Tensor class_text_globals(const Model& m, const Vocabulary& vocab) {
  const int e = static_cast<int>(vocab.events.size());
  Tensor out = Tensor::zeros({e, m.cfg.joint_dim});
  for (int c = 0; c < e; ++c)
    out.set_row(c, embed_text(m, {vocab.events[static_cast<size_t>(c)].name_token}));
  return out;
}

TaggingMetrics eval_tagging(const Corpus& corpus, const SplitEmbeddings& e,
                            const Tensor& class_globals) {
  const int n = static_cast<int>(e.ids.size());
  const int n_classes = class_globals.rows();
  Tensor scores = matmul_nt(e.audio_globals, class_globals);  // N x E

  TaggingMetrics t;
  long correct = 0;
  for (int i = 0; i < n; ++i) {
    const SyntheticClip& clip = corpus.clip_by_id(e.ids[static_cast<size_t>(i)]);
    if (clip.events.size() != 1) continue;
    ++t.n_single;
    int arg = 0;
    for (int c = 1; c < n_classes; ++c)
      if (scores.at(i, c) > scores.at(i, arg)) arg = c;  // ties keep the lower class
    correct += arg == clip.events[0].class_id;
  }
  t.accuracy = t.n_single == 0 ? 0.0 : static_cast<double>(correct) / t.n_single;

  double ap_sum = 0;
  int ap_count = 0;
  for (int c = 0; c < n_classes; ++c) {
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (scores.at(a, c) != scores.at(b, c)) return scores.at(a, c) > scores.at(b, c);
      return e.ids[static_cast<size_t>(a)] < e.ids[static_cast<size_t>(b)];
    });
    auto relevant = [&](int i) {
      const SyntheticClip& clip = corpus.clip_by_id(e.ids[static_cast<size_t>(i)]);
      for (const auto& ev : clip.events)
        if (ev.class_id == c) return true;
      return false;
    };
    long pos_seen = 0;
    double precision_sum = 0;
    for (int rank = 1; rank <= n; ++rank) {
      if (relevant(order[static_cast<size_t>(rank - 1)])) {
        ++pos_seen;
        precision_sum += static_cast<double>(pos_seen) / rank;
      }
    }
    if (pos_seen == 0) {
      t.ap.push_back(-1.0);
      t.skipped.push_back(c);
    } else {
      double ap = precision_sum / static_cast<double>(pos_seen);
      t.ap.push_back(ap);
      ap_sum += ap;
      ++ap_count;
    }
  }
  t.map = ap_count == 0 ? 0.0 : ap_sum / ap_count;
  return t;
}

Tensor median_filter(const Tensor& x, int w) {
  if (x.ndim() != 1) throw DimensionError("median_filter expects a vector");
  if (w < 1 || w % 2 == 0) throw ConfigError("median filter window must be odd");
  const int n = static_cast<int>(x.numel());
  const int h = w / 2;
  Tensor out = Tensor::zeros({n});
  std::vector<double> window(static_cast<size_t>(w));
  for (int t = 0; t < n; ++t) {
    for (int k = -h; k <= h; ++k) {
      int idx = std::clamp(t + k, 0, n - 1);  // edge replication
      window[static_cast<size_t>(k + h)] = x.at(idx);
    }
    std::sort(window.begin(), window.end());
    out.at(t) = window[static_cast<size_t>(h)];
  }
  return out;
}

std::vector<Segment> segments_above(const Tensor& timeline, double threshold) {
  if (timeline.ndim() != 1) throw DimensionError("segments_above expects a vector");
  std::vector<Segment> segs;
  const int n = static_cast<int>(timeline.numel());
  int start = -1;
  for (int t = 0; t < n; ++t) {
    bool active = timeline.at(t) >= threshold;
    if (active && start < 0) start = t;
    if (!active && start >= 0) {
      segs.push_back({start, t});
      start = -1;
    }
  }
  if (start >= 0) segs.push_back({start, n});
  return segs;
}

int match_events(const std::vector<Segment>& pred, const std::vector<Segment>& gt,
                 int collar) {
  const int np = static_cast<int>(pred.size());
  const int ng = static_cast<int>(gt.size());
  auto valid = [&](int i, int j) {
    return std::abs(pred[static_cast<size_t>(i)].onset - gt[static_cast<size_t>(j)].onset) <= collar &&
           std::abs(pred[static_cast<size_t>(i)].offset - gt[static_cast<size_t>(j)].offset) <= collar;
  };

  std::vector<int> pred_match(static_cast<size_t>(np), -1);
  std::vector<int> gt_match(static_cast<size_t>(ng), -1);

  // Greedy seed: candidate pairs by onset distance, then offset distance,
  // then indices, so the reported pairing is deterministic.
  struct Cand { int don, doff, i, j; };
  std::vector<Cand> cands;
  for (int i = 0; i < np; ++i)
    for (int j = 0; j < ng; ++j)
      if (valid(i, j))
        cands.push_back({std::abs(pred[static_cast<size_t>(i)].onset - gt[static_cast<size_t>(j)].onset),
                         std::abs(pred[static_cast<size_t>(i)].offset - gt[static_cast<size_t>(j)].offset),
                         i, j});
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    return std::tie(a.don, a.doff, a.i, a.j) < std::tie(b.don, b.doff, b.i, b.j);
  });
  for (const auto& c : cands)
    if (pred_match[static_cast<size_t>(c.i)] < 0 && gt_match[static_cast<size_t>(c.j)] < 0) {
      pred_match[static_cast<size_t>(c.i)] = c.j;
      gt_match[static_cast<size_t>(c.j)] = c.i;
    }

  // Greedy alone is not monotone under collar widening (a newly valid pair
  // can shadow two old ones), so complete the seed to a maximum matching;
  // maximum matching size only grows when the candidate edge set grows.
  std::vector<char> visited;
  auto augment = [&](auto&& self, int i) -> bool {
    for (int j = 0; j < ng; ++j) {
      if (!valid(i, j) || visited[static_cast<size_t>(j)]) continue;
      visited[static_cast<size_t>(j)] = 1;
      if (gt_match[static_cast<size_t>(j)] < 0 || self(self, gt_match[static_cast<size_t>(j)])) {
        pred_match[static_cast<size_t>(i)] = j;
        gt_match[static_cast<size_t>(j)] = i;
        return true;
      }
    }
    return false;
  };
  for (int i = 0; i < np; ++i) {
    if (pred_match[static_cast<size_t>(i)] >= 0) continue;
    visited.assign(static_cast<size_t>(ng), 0);
    augment(augment, i);
  }

  int tp = 0;
  for (int i = 0; i < np; ++i) tp += pred_match[static_cast<size_t>(i)] >= 0;
  return tp;
}

DetectionMetrics eval_detection(const Corpus& corpus, const SplitEmbeddings& e,
                                const Tensor& class_globals, double threshold,
                                int median_w, int collar) {
  if (e.frame_features.size() != e.ids.size())
    throw DimensionError("detection needs frame features for every clip in the split");
  const int n_classes = class_globals.rows();
  DetectionMetrics d;
  d.threshold = threshold;
  std::vector<long> ctp(static_cast<size_t>(n_classes), 0);
  std::vector<long> cfp(static_cast<size_t>(n_classes), 0);
  std::vector<long> cfn(static_cast<size_t>(n_classes), 0);
  long seg_tp = 0, seg_fp = 0, seg_fn = 0;

  for (size_t i = 0; i < e.ids.size(); ++i) {
    const SyntheticClip& clip = corpus.clip_by_id(e.ids[i]);
    const Tensor& features = e.frame_features[i];
    const int t_len = features.rows();
    for (int c = 0; c < n_classes; ++c) {
      Tensor timeline = frame_similarity_map(features, class_globals.row(c));
      Tensor filtered = median_filter(timeline, median_w);
      std::vector<Segment> pred = segments_above(filtered, threshold);
      std::vector<Segment> gt;
      for (const auto& ev : clip.events)
        if (ev.class_id == c) gt.push_back({ev.onset, ev.offset});

      int tp = match_events(pred, gt, collar);
      ctp[static_cast<size_t>(c)] += tp;
      cfp[static_cast<size_t>(c)] += static_cast<long>(pred.size()) - tp;
      cfn[static_cast<size_t>(c)] += static_cast<long>(gt.size()) - tp;

      for (int t = 0; t < t_len; ++t) {
        bool p_active = filtered.at(t) >= threshold;
        bool g_active = false;
        for (const auto& s : gt) g_active |= t >= s.onset && t < s.offset;
        seg_tp += p_active && g_active;
        seg_fp += p_active && !g_active;
        seg_fn += !p_active && g_active;
      }
    }
  }

  for (int c = 0; c < n_classes; ++c) {
    d.tp += ctp[static_cast<size_t>(c)];
    d.fp += cfp[static_cast<size_t>(c)];
    d.fn += cfn[static_cast<size_t>(c)];
    d.class_event_f1.push_back(
        f1_from_counts(ctp[static_cast<size_t>(c)], cfp[static_cast<size_t>(c)],
                       cfn[static_cast<size_t>(c)]));
  }
  d.micro_event_f1 = f1_from_counts(d.tp, d.fp, d.fn);
  d.micro_segment_f1 = f1_from_counts(seg_tp, seg_fp, seg_fn);
  return d;
}

std::vector<double> default_threshold_grid() {
  return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
}

double sweep_detection_threshold(const Corpus& corpus, const SplitEmbeddings& e,
                                 const Tensor& class_globals,
                                 const std::vector<double>& grid, int median_w,
                                 int collar) {
  if (grid.empty()) throw ConfigError("threshold grid is empty");
  double best_theta = grid[0];
  double best_f1 = -1;
  for (double theta : grid) {
    double f1 = eval_detection(corpus, e, class_globals, theta, median_w, collar)
                    .micro_event_f1;
    if (f1 > best_f1) {  // ties keep the lower threshold
      best_f1 = f1;
      best_theta = theta;
    }
  }
  return best_theta;
}

CodebookReport inspect_codebook(const Model& m, const Corpus& corpus,
                                const std::string& split, int top_k) {
  if (!m.cfg.use_codebook)
    throw ConfigError("codebook inspection needs model.use_codebook = true");
  if (top_k < 0) throw ConfigError("top_k must be >= 0");
  const std::vector<int>& ids = split_ids(corpus, split);
  if (ids.empty()) throw ConfigError("split '" + split + "' is empty");

  CodebookReport r;
  r.split = split;
  r.m = m.cb.m();
  r.n_clips = static_cast<int>(ids.size());
  r.audio_hits.assign(static_cast<size_t>(r.m), 0);
  r.text_hits.assign(static_cast<size_t>(r.m), 0);

  long audio_support_total = 0;
  long text_support_total = 0;
  for (int id : ids) {
    const SyntheticClip& clip = corpus.clip_by_id(id);
    EmbedCache audio, text;
    embed_audio(m, render_frames(clip, corpus.manifest.vocab), &audio);
    embed_text(m, clip.caption, &text);
    audio_support_total += static_cast<long>(audio.agg.support.size());
    text_support_total += static_cast<long>(text.agg.support.size());
    for (int k : audio.agg.support) ++r.audio_hits[static_cast<size_t>(k)];
    for (int k : text.agg.support) ++r.text_hits[static_cast<size_t>(k)];
  }
  r.mean_support_audio = static_cast<double>(audio_support_total) / r.n_clips;
  r.mean_support_text = static_cast<double>(text_support_total) / r.n_clips;
  for (int k = 0; k < r.m; ++k)
    if (r.audio_hits[static_cast<size_t>(k)] == 0 &&
        r.text_hits[static_cast<size_t>(k)] == 0)
      r.dead.push_back(k);

  if (top_k > 0) {
    auto ranking =
        codeword_class_ranking(m.cb, class_text_globals(m, corpus.manifest.vocab));
    r.top_classes.resize(static_cast<size_t>(r.m));
    for (int k = 0; k < r.m; ++k) {
      auto& ranked = ranking[static_cast<size_t>(k)];
      const size_t keep = std::min(ranked.size(), static_cast<size_t>(top_k));
      r.top_classes[static_cast<size_t>(k)].assign(ranked.begin(),
                                                   ranked.begin() + keep);
    }
  }
  return r;
}

std::string codebook_report_to_json(const CodebookReport& r, const Vocabulary& vocab) {
  json j;
  j["split"] = r.split;
  j["m"] = r.m;
  j["n_clips"] = r.n_clips;
  j["dead"] = r.dead;
  j["mean_support_audio"] = r.mean_support_audio;
  j["mean_support_text"] = r.mean_support_text;
  j["codewords"] = json::array();
  for (int k = 0; k < r.m; ++k) {
    json jk;
    jk["id"] = k;
    jk["audio_hits"] = r.audio_hits[static_cast<size_t>(k)];
    jk["text_hits"] = r.text_hits[static_cast<size_t>(k)];
    if (!r.top_classes.empty()) {
      jk["top_classes"] = json::array();
      for (const auto& [cls, score] : r.top_classes[static_cast<size_t>(k)]) {
        json jc;
        jc["class_id"] = cls;
        jc["name"] = vocab.tokens[static_cast<size_t>(
            vocab.events[static_cast<size_t>(cls)].name_token)];
        jc["score"] = score;
        jk["top_classes"].push_back(jc);
      }
    }
    j["codewords"].push_back(jk);
  }
  return j.dump(2);
}

std::string codebook_report_to_text(const CodebookReport& r, const Vocabulary& vocab) {
  std::ostringstream out;
  out << "codebook usage on split '" << r.split << "' (" << r.n_clips << " clips)\n";
  out << "codewords: " << r.m << ", dead: " << r.dead.size() << "\n";
  out << "mean support size: audio " << format_double(r.mean_support_audio)
      << ", text " << format_double(r.mean_support_text) << "\n";

  // busiest codewords first; enough rows to see the shape without a page of output
  std::vector<int> order(static_cast<size_t>(r.m));
  for (int k = 0; k < r.m; ++k) order[static_cast<size_t>(k)] = k;
  std::sort(order.begin(), order.end(), [&r](int a, int b) {
    const int ha = r.audio_hits[static_cast<size_t>(a)] +
                   r.text_hits[static_cast<size_t>(a)];
    const int hb = r.audio_hits[static_cast<size_t>(b)] +
                   r.text_hits[static_cast<size_t>(b)];
    if (ha != hb) return ha > hb;
    return a < b;
  });
  const int shown = std::min(r.m, 10);
  out << "top " << shown << " codewords by support hits (audio/text):\n";
  for (int i = 0; i < shown; ++i) {
    const int k = order[static_cast<size_t>(i)];
    out << "  #" << k << "  " << r.audio_hits[static_cast<size_t>(k)] << "/"
        << r.text_hits[static_cast<size_t>(k)];
    if (!r.top_classes.empty() && !r.top_classes[static_cast<size_t>(k)].empty()) {
      out << "  nearest classes:";
      for (const auto& [cls, score] : r.top_classes[static_cast<size_t>(k)]) {
        out << " " << vocab.tokens[static_cast<size_t>(
                          vocab.events[static_cast<size_t>(cls)].name_token)]
            << "(" << format_double(score) << ")";
      }
    }
    out << "\n";
  }
  return out.str();
}

void export_similarity_heatmap(const Model& m, const Corpus& corpus, int clip_id,
                               const std::string& csv_path) {
  const SyntheticClip& clip = corpus.clip_by_id(clip_id);
  const Vocabulary& vocab = corpus.manifest.vocab;
  Tensor frames = render_frames(clip, vocab);
  EmbedCache cache;
  embed_audio(m, frames, &cache);
  Tensor class_globals = class_text_globals(m, vocab);

  std::ofstream csv(csv_path);
  if (!csv) throw IoError("cannot write heatmap csv: " + csv_path);
  for (int c = 0; c < class_globals.rows(); ++c) {
    Tensor timeline = frame_similarity_map(cache.enc.features, class_globals.row(c));
    for (int t = 0; t < static_cast<int>(timeline.numel()); ++t) {
      if (t) csv << ",";
      csv << format_double(timeline.at(t));
    }
    csv << "\n";
  }
  csv.close();
  if (!csv) throw IoError("failed writing heatmap csv: " + csv_path);

  json side;
  side["clip_id"] = clip.id;
  side["t"] = clip.t;
  side["e"] = class_globals.rows();
  side["csv"] = csv_path;
  side["config"] = dump_config(m.cfg);
  side["events"] = json::array();
  for (const auto& ev : clip.events) {
    json je;
    je["class_id"] = ev.class_id;
    je["name"] = vocab.tokens[static_cast<size_t>(
        vocab.events[static_cast<size_t>(ev.class_id)].name_token)];
    je["onset"] = ev.onset;
    je["offset"] = ev.offset;
    side["events"].push_back(je);
  }
  std::ofstream js(csv_path + ".json");
  if (!js) throw IoError("cannot write heatmap sidecar: " + csv_path + ".json");
  js << side.dump(2) << "\n";
  js.close();
  if (!js) throw IoError("failed writing heatmap sidecar: " + csv_path + ".json");
}

EvalReport evaluate_split(const Model& m, const Corpus& corpus,
                          const std::string& split, int median_w, int collar) {
  EvalReport r;
  r.split = split;
  const std::vector<int>& ids = split_ids(corpus, split);
  if (ids.empty()) throw ConfigError("split '" + split + "' is empty");
  r.n_clips = static_cast<int>(ids.size());

  SplitEmbeddings e = embed_split(m, corpus, ids, /*keep_frames=*/true);
  Tensor class_globals = class_text_globals(m, corpus.manifest.vocab);
  r.retrieval = eval_retrieval(e);
  r.tagging = eval_tagging(corpus, e, class_globals);

  double theta;
  if (split == "val") {
    theta = sweep_detection_threshold(corpus, e, class_globals,
                                      default_threshold_grid(), median_w, collar);
  } else {
    SplitEmbeddings val = embed_split(m, corpus, split_ids(corpus, "val"), true);
    theta = sweep_detection_threshold(corpus, val, class_globals,
                                      default_threshold_grid(), median_w, collar);
  }
  r.detection = eval_detection(corpus, e, class_globals, theta, median_w, collar);
  return r;
}

std::string report_to_json(const EvalReport& r) {
  json j;
  j["split"] = r.split;
  j["n_clips"] = r.n_clips;
  j["retrieval"] = {{"r1_t2a", r.retrieval.r1_t2a}, {"r5_t2a", r.retrieval.r5_t2a},
                    {"r1_a2t", r.retrieval.r1_a2t}, {"r5_a2t", r.retrieval.r5_a2t},
                    {"r1_mean", r.retrieval.r1_mean()}};
  j["tagging"] = {{"accuracy", r.tagging.accuracy},
                  {"n_single", r.tagging.n_single},
                  {"map", r.tagging.map},
                  {"ap", r.tagging.ap},
                  {"classes_without_positives", r.tagging.skipped}};
  j["detection"] = {{"micro_event_f1", r.detection.micro_event_f1},
                    {"micro_segment_f1", r.detection.micro_segment_f1},
                    {"class_event_f1", r.detection.class_event_f1},
                    {"tp", r.detection.tp}, {"fp", r.detection.fp},
                    {"fn", r.detection.fn},
                    {"threshold", r.detection.threshold}};
  return j.dump(2);
}

std::string report_to_text(const EvalReport& r) {
  std::ostringstream out;
  auto line = [&out](const std::string& k, double v) {
    out << "  " << k;
    for (size_t i = k.size(); i < 22; ++i) out << ' ';
    out << format_double(v) << "\n";
  };
  out << "split " << r.split << " (" << r.n_clips << " clips)\n";
  out << "retrieval\n";
  line("R@1 text->audio", r.retrieval.r1_t2a);
  line("R@5 text->audio", r.retrieval.r5_t2a);
  line("R@1 audio->text", r.retrieval.r1_a2t);
  line("R@5 audio->text", r.retrieval.r5_a2t);
  line("R@1 mean", r.retrieval.r1_mean());
  out << "tagging\n";
  line("accuracy (single)", r.tagging.accuracy);
  line("mAP", r.tagging.map);
  if (!r.tagging.skipped.empty()) {
    out << "  classes without positives excluded from mAP:";
    for (int c : r.tagging.skipped) out << " " << c;
    out << "\n";
  }
  out << "detection (threshold " << format_double(r.detection.threshold)
      << ", onset/offset collar matching)\n";
  line("micro event F1", r.detection.micro_event_f1);
  line("micro segment F1", r.detection.micro_segment_f1);
  return out.str();
}

}  // namespace mga
