#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "core/errors.hpp"
#include "core/eval.hpp"
#include "core/ops.hpp"

using namespace mga;

namespace {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::path("scratch") / ("eval_" + tag);
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

Config tiny_config() {
  Config c = default_config();
  config_set(c, "model.d", "8");
  config_set(c, "model.joint_dim", "8");
  config_set(c, "model.audio_blocks", "1");
  config_set(c, "model.text_blocks", "1");
  config_set(c, "model.codebook_size", "8");
  return c;
}

Corpus tiny_corpus() {
  CorpusParams p;
  p.n_clips = 30;
  p.t = 16;
  p.f_in = 6;
  p.e = 3;
  p.sigma = 0.05;
  p.seed = 5;
  return gen_corpus(p);
}

std::vector<int> ident_ids(int n) {
  std::vector<int> ids(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) ids[static_cast<size_t>(i)] = i;
  return ids;
}

}  // namespace

TEST_CASE("retrieval on a dominant diagonal is perfect") {
  Tensor sim = Tensor::mat({{0.9, 0.1, 0.0}, {0.2, 0.8, 0.1}, {0.0, 0.3, 0.7}});
  RetrievalMetrics r = retrieval_from_sim(sim, ident_ids(3));
  CHECK(r.r1_t2a == doctest::Approx(100.0));
  CHECK(r.r1_a2t == doctest::Approx(100.0));
  CHECK(r.r5_t2a == doctest::Approx(100.0));
  CHECK(r.r1_mean() == doctest::Approx(100.0));
}

TEST_CASE("single pair scores 100 everywhere") {
  Tensor sim = Tensor::mat({{0.0}});
  RetrievalMetrics r = retrieval_from_sim(sim, ident_ids(1));
  CHECK(r.r1_t2a == doctest::Approx(100.0));
  CHECK(r.r5_a2t == doctest::Approx(100.0));
}

TEST_CASE("similarity ties break toward the lower id") {
  Tensor sim = Tensor::full({3, 3}, 0.5);
  RetrievalMetrics r = retrieval_from_sim(sim, ident_ids(3));
  // only query 0's positive is id-minimal among the ties
  CHECK(r.r1_t2a == doctest::Approx(100.0 / 3));
  CHECK(r.r5_t2a == doctest::Approx(100.0));
}

TEST_CASE("rank invariance under a strictly increasing transform") {
  Rng rng(7);
  Tensor sim = Tensor::randn({10, 10}, rng);
  RetrievalMetrics base = retrieval_from_sim(sim, ident_ids(10));
  Tensor mapped = sim;
  for (double& v : mapped.raw()) v = 2 * v + 1;
  RetrievalMetrics moved = retrieval_from_sim(mapped, ident_ids(10));
  CHECK(base.r1_t2a == moved.r1_t2a);
  CHECK(base.r5_t2a == moved.r5_t2a);
  CHECK(base.r1_a2t == moved.r1_a2t);
  CHECK(base.r5_a2t == moved.r5_a2t);
}

TEST_CASE("duplicating every pair keeps R@k when copies count as positives") {
  Rng rng(9);
  Tensor g = Tensor::randn({4, 6}, rng);
  for (int i = 0; i < 4; ++i) g.set_row(i, l2_normalize(g.row(i)));
  Tensor base_sim = matmul_nt(g, g);
  RetrievalMetrics base = retrieval_from_sim(base_sim, ident_ids(4));

  // duplicated corpus: items 4..7 are bit-identical copies of 0..3
  Tensor dup = Tensor::zeros({8, 8});
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) dup.at(i, j) = base_sim.at(i % 4, j % 4);
  std::vector<std::vector<int>> pos(8);
  for (int q = 0; q < 8; ++q) pos[static_cast<size_t>(q)] = {q % 4, q % 4 + 4};
  RetrievalMetrics moved = retrieval_from_sim(dup, ident_ids(8), pos, pos);
  CHECK(base.r1_t2a == moved.r1_t2a);
  CHECK(base.r5_t2a == moved.r5_t2a);
  CHECK(base.r1_a2t == moved.r1_a2t);
  CHECK(base.r5_a2t == moved.r5_a2t);
}

TEST_CASE("median filter smooths blips and keeps plateaus") {
  Tensor x = Tensor::vec({0, 1, 0, 1, 0});
  Tensor y = median_filter(x, 3);
  CHECK(y.at(0) == 0);
  CHECK(y.at(1) == 0);
  CHECK(y.at(2) == 1);
  CHECK(y.at(3) == 0);
  CHECK(y.at(4) == 0);

  Tensor plateau = Tensor::vec({0, 0, 1, 1, 1, 0, 0});
  Tensor z = median_filter(plateau, 3);
  for (int i = 0; i < 7; ++i) CHECK(z.at(i) == plateau.at(i));

  CHECK_THROWS_AS(median_filter(x, 2), ConfigError);
  CHECK(median_filter(x, 1).at(1) == 1);
}

TEST_CASE("thresholding yields contiguous segments") {
  Tensor t = Tensor::vec({0.0, 0.9, 0.8, 0.1, 0.7});
  auto segs = segments_above(t, 0.5);
  REQUIRE(segs.size() == 2);
  CHECK(segs[0].onset == 1);
  CHECK(segs[0].offset == 3);
  CHECK(segs[1].onset == 4);
  CHECK(segs[1].offset == 5);
  CHECK(segments_above(Tensor::vec({0.9, 0.9}), 0.5).size() == 1);
  CHECK(segments_above(Tensor::vec({0.1, 0.2}), 0.5).empty());
}

TEST_CASE("event matching is one-to-one within the collar") {
  std::vector<Segment> gt = {{5, 10}};
  CHECK(match_events({{5, 10}}, gt, 0) == 1);
  CHECK(match_events({{7, 12}}, gt, 2) == 1);
  CHECK(match_events({{7, 12}}, gt, 1) == 0);
  CHECK(match_events({{4, 9}, {6, 11}}, gt, 2) == 1);  // no double counting
  CHECK(match_events({}, gt, 2) == 0);
  CHECK(match_events({{5, 10}}, {}, 2) == 0);
}

TEST_CASE("widening the collar never loses true positives") {
  // At collar 2 the valid pairs are p0-g1 and p1-g0. Collar 3 adds p0-g0,
  // whose onset distance of 0 puts it first in the greedy order where it
  // would shadow both originals; the matching must still find two pairs.
  std::vector<Segment> pred = {{0, 13}, {1, 9}};
  std::vector<Segment> gt = {{0, 10}, {2, 15}};
  CHECK(match_events(pred, gt, 2) == 2);
  int prev = 0;
  for (int collar = 0; collar <= 8; ++collar) {
    int tp = match_events(pred, gt, collar);
    CHECK(tp >= prev);
    prev = tp;
  }
  CHECK(match_events(pred, gt, 3) == 2);
}

namespace {

// Embeddings where every frame feature is the one-hot of the covering class,
// so the similarity map against one-hot class globals is exactly the event
// indicator.
SplitEmbeddings indicator_embeddings(const Corpus& corpus, const std::vector<int>& ids,
                                     int n_classes) {
  SplitEmbeddings e;
  e.ids = ids;
  const int d = n_classes;
  e.audio_globals = Tensor::zeros({static_cast<int>(ids.size()), d});
  e.text_globals = Tensor::zeros({static_cast<int>(ids.size()), d});
  for (int id : ids) {
    const SyntheticClip& clip = corpus.clip_by_id(id);
    Tensor f = Tensor::zeros({clip.t, d});
    for (const auto& ev : clip.events)
      for (int t = ev.onset; t < ev.offset; ++t) f.at(t, ev.class_id) = 1.0;
    e.frame_features.push_back(f);
  }
  return e;
}

}  // namespace

TEST_CASE("perfect similarity maps give F1 = 1 at any interior threshold") {
  Corpus corpus = tiny_corpus();
  const int n_classes = 3;
  Tensor class_globals = Tensor::zeros({n_classes, n_classes});
  for (int c = 0; c < n_classes; ++c) class_globals.at(c, c) = 1.0;
  SplitEmbeddings e =
      indicator_embeddings(corpus, corpus.manifest.val_ids, n_classes);
  for (double theta : {0.2, 0.5, 0.8}) {
    DetectionMetrics d = eval_detection(corpus, e, class_globals, theta, 3, 2);
    CHECK(d.micro_event_f1 == doctest::Approx(1.0));
    CHECK(d.micro_segment_f1 == doctest::Approx(1.0));
    CHECK(d.fp == 0);
    CHECK(d.fn == 0);
  }
}

TEST_CASE("constant similarity maps degrade gracefully") {
  Corpus corpus = tiny_corpus();
  const int n_classes = 3;
  Tensor class_globals = Tensor::zeros({n_classes, n_classes});
  for (int c = 0; c < n_classes; ++c) class_globals.at(c, c) = 1.0;

  std::vector<int> one_id = {corpus.manifest.val_ids[0]};
  SplitEmbeddings e;
  e.ids = one_id;
  const SyntheticClip& clip = corpus.clip_by_id(one_id[0]);
  e.audio_globals = Tensor::zeros({1, n_classes});
  e.text_globals = Tensor::zeros({1, n_classes});
  e.frame_features.push_back(Tensor::full({clip.t, n_classes}, 0.5));

  // theta above the constant: no predictions at all -> zero TP/FP
  DetectionMetrics none = eval_detection(corpus, e, class_globals, 0.9, 3, 2);
  CHECK(none.tp == 0);
  CHECK(none.fp == 0);
  CHECK(none.fn == static_cast<long>(clip.events.size()));

  // theta below: one full-clip segment per class
  DetectionMetrics full = eval_detection(corpus, e, class_globals, 0.4, 3, 2);
  CHECK(full.tp + full.fp == n_classes);
  CHECK(full.micro_event_f1 >= 0.0);
  CHECK(full.micro_event_f1 <= 1.0);
}

TEST_CASE("threshold sweep picks the best validation threshold") {
  Corpus corpus = tiny_corpus();
  const int n_classes = 3;
  Tensor class_globals = Tensor::zeros({n_classes, n_classes});
  for (int c = 0; c < n_classes; ++c) class_globals.at(c, c) = 1.0;
  SplitEmbeddings e =
      indicator_embeddings(corpus, corpus.manifest.val_ids, n_classes);
  // indicator maps are perfect at every theta, so ties resolve to the lowest
  double theta = sweep_detection_threshold(corpus, e, class_globals,
                                           default_threshold_grid(), 3, 2);
  CHECK(theta == doctest::Approx(0.1));
  CHECK_THROWS_AS(
      sweep_detection_threshold(corpus, e, class_globals, {}, 3, 2), ConfigError);
}

TEST_CASE("tagging scores argmax accuracy and per-class AP") {
  CorpusParams p;
  p.n_clips = 20;
  p.t = 12;
  p.f_in = 6;
  p.e = 2;
  p.max_events = 1;  // every clip single-event
  p.sigma = 0.05;
  p.seed = 3;
  Corpus corpus = gen_corpus(p);
  const std::vector<int>& ids = corpus.manifest.train_ids;

  // three classes scored, third has no positives anywhere
  Tensor class_globals = Tensor::zeros({3, 3});
  for (int c = 0; c < 3; ++c) class_globals.at(c, c) = 1.0;
  SplitEmbeddings e;
  e.ids = ids;
  e.audio_globals = Tensor::zeros({static_cast<int>(ids.size()), 3});
  e.text_globals = Tensor::zeros({static_cast<int>(ids.size()), 3});
  for (size_t i = 0; i < ids.size(); ++i) {
    const SyntheticClip& clip = corpus.clip_by_id(ids[i]);
    e.audio_globals.at(static_cast<int>(i), clip.events[0].class_id) = 1.0;
  }

  TaggingMetrics t = eval_tagging(corpus, e, class_globals);
  CHECK(t.n_single == static_cast<int>(ids.size()));
  CHECK(t.accuracy == doctest::Approx(1.0));
  CHECK(t.map == doctest::Approx(1.0));
  REQUIRE(t.ap.size() == 3);
  CHECK(t.ap[0] == doctest::Approx(1.0));
  CHECK(t.ap[1] == doctest::Approx(1.0));
  CHECK(t.ap[2] == doctest::Approx(-1.0));
  REQUIRE(t.skipped.size() == 1);
  CHECK(t.skipped[0] == 2);
}

TEST_CASE("heatmap export round-trips") {
  TempDir dir("heatmap");
  Corpus corpus = tiny_corpus();
  Config c = tiny_config();
  Model m = make_model(c, corpus.manifest.vocab.f_in, corpus.manifest.vocab.size(),
                       corpus.manifest.t);
  const int clip_id = corpus.manifest.test_ids[0];
  auto csv_path = (dir.path / "heat.csv").string();
  export_similarity_heatmap(m, corpus, clip_id, csv_path);

  std::ifstream csv(csv_path);
  REQUIRE(csv.good());
  std::vector<std::vector<double>> grid;
  std::string line;
  while (std::getline(csv, line)) {
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    grid.push_back(row);
  }
  REQUIRE(grid.size() == corpus.manifest.vocab.events.size());
  for (const auto& row : grid) {
    REQUIRE(static_cast<int>(row.size()) == corpus.manifest.t);
    for (double v : row) {
      CHECK(v <= 1.0 + 1e-9);
      CHECK(v >= -1.0 - 1e-9);
    }
  }

  // values reproduce the model's own similarity map bit-for-bit
  const SyntheticClip& clip = corpus.clip_by_id(clip_id);
  Tensor frames = render_frames(clip, corpus.manifest.vocab);
  EmbedCache cache;
  embed_audio(m, frames, &cache);
  Tensor cls = class_text_globals(m, corpus.manifest.vocab);
  for (size_t cidx = 0; cidx < grid.size(); ++cidx) {
    Tensor timeline =
        frame_similarity_map(cache.enc.features, cls.row(static_cast<int>(cidx)));
    for (int t = 0; t < corpus.manifest.t; ++t)
      CHECK(grid[cidx][static_cast<size_t>(t)] == timeline.at(t));
  }

  nlohmann::json side;
  std::ifstream(csv_path + ".json") >> side;
  CHECK(side["clip_id"] == clip_id);
  CHECK(side["t"] == corpus.manifest.t);
  CHECK(side["events"].size() == clip.events.size());
  CHECK(side["events"][0]["onset"] == clip.events[0].onset);
}

TEST_CASE("full split evaluation is deterministic and bounded") {
  Corpus corpus = tiny_corpus();
  Config c = tiny_config();
  Model m = make_model(c, corpus.manifest.vocab.f_in, corpus.manifest.vocab.size(),
                       corpus.manifest.t);
  EvalReport a = evaluate_split(m, corpus, "test", 3, 2);
  EvalReport b = evaluate_split(m, corpus, "test", 3, 2);
  CHECK(a.retrieval.r1_mean() == b.retrieval.r1_mean());
  CHECK(a.detection.micro_event_f1 == b.detection.micro_event_f1);
  CHECK(a.tagging.map == b.tagging.map);
  CHECK(a.retrieval.r1_t2a >= 0);
  CHECK(a.retrieval.r5_t2a <= 100);
  CHECK(a.retrieval.r1_t2a <= a.retrieval.r5_t2a);
  CHECK(a.detection.micro_event_f1 >= 0);
  CHECK(a.detection.micro_event_f1 <= 1);

  std::string js = report_to_json(a);
  auto parsed = nlohmann::json::parse(js);
  CHECK(parsed["split"] == "test");
  CHECK(parsed["retrieval"]["r1_mean"] == a.retrieval.r1_mean());
  std::string txt = report_to_text(a);
  CHECK(txt.find("micro event F1") != std::string::npos);

  CHECK_THROWS_AS(evaluate_split(m, corpus, "dev", 3, 2), ConfigError);
}

TEST_CASE("embedding a split rejects empty id lists") {
  Corpus corpus = tiny_corpus();
  Config c = tiny_config();
  Model m = make_model(c, corpus.manifest.vocab.f_in, corpus.manifest.vocab.size(),
                       corpus.manifest.t);
  CHECK_THROWS_AS(embed_split(m, corpus, {}, false), ConfigError);
  SplitEmbeddings e = embed_split(m, corpus, corpus.manifest.val_ids, false);
  Tensor cls = class_text_globals(m, corpus.manifest.vocab);
  CHECK_THROWS_AS(eval_detection(corpus, e, cls, 0.5, 3, 2), DimensionError);
}

TEST_CASE("codebook inspection counts supports and finds dead codewords") {
  Corpus corpus = tiny_corpus();
  Config c = tiny_config();
  Model m = make_model(c, corpus.manifest.f_in,
                       static_cast<int>(corpus.manifest.vocab.tokens.size()),
                       corpus.manifest.t);

  CodebookReport r = inspect_codebook(m, corpus, "train", 2);
  CHECK(r.m == 8);
  CHECK(r.n_clips == static_cast<int>(corpus.manifest.train_ids.size()));
  REQUIRE(r.audio_hits.size() == 8);
  REQUIRE(r.text_hits.size() == 8);

  // support sizes are per-clip means, so they sit in [1, M]
  CHECK(r.mean_support_audio >= 1.0);
  CHECK(r.mean_support_audio <= 8.0);
  CHECK(r.mean_support_text >= 1.0);
  CHECK(r.mean_support_text <= 8.0);

  // hit totals must equal the summed support sizes
  long audio_total = 0;
  for (int h : r.audio_hits) audio_total += h;
  CHECK(static_cast<double>(audio_total) ==
        doctest::Approx(r.mean_support_audio * r.n_clips));

  // dead list = codewords with zero hits on both sides
  for (int k : r.dead) {
    CHECK(r.audio_hits[static_cast<size_t>(k)] == 0);
    CHECK(r.text_hits[static_cast<size_t>(k)] == 0);
  }

  REQUIRE(r.top_classes.size() == 8);
  for (const auto& ranked : r.top_classes) {
    REQUIRE(ranked.size() == 2);  // top_k, corpus has 3 classes
    CHECK(ranked[0].second >= ranked[1].second);
  }

  // same split twice is identical
  CodebookReport r2 = inspect_codebook(m, corpus, "train", 2);
  CHECK(r2.dead == r.dead);
  CHECK(r2.audio_hits == r.audio_hits);
  CHECK(r2.mean_support_text == r.mean_support_text);
}

TEST_CASE("codebook inspection reports render in both formats") {
  Corpus corpus = tiny_corpus();
  Config c = tiny_config();
  Model m = make_model(c, corpus.manifest.f_in,
                       static_cast<int>(corpus.manifest.vocab.tokens.size()),
                       corpus.manifest.t);
  CodebookReport r = inspect_codebook(m, corpus, "val", 1);

  auto j = nlohmann::json::parse(codebook_report_to_json(r, corpus.manifest.vocab));
  CHECK(j["m"].get<int>() == 8);
  CHECK(j["codewords"].size() == 8);
  CHECK(j["mean_support_audio"].get<double>() == r.mean_support_audio);
  CHECK(j["dead"].size() == r.dead.size());

  std::string text = codebook_report_to_text(r, corpus.manifest.vocab);
  CHECK(text.find("dead:") != std::string::npos);
  CHECK(text.find("mean support size") != std::string::npos);
}

TEST_CASE("codebook inspection requires the codebook path") {
  Corpus corpus = tiny_corpus();
  Config c = tiny_config();
  config_set(c, "model.use_codebook", "false");
  Model m = make_model(c, corpus.manifest.f_in,
                       static_cast<int>(corpus.manifest.vocab.tokens.size()),
                       corpus.manifest.t);
  CHECK_THROWS_AS(inspect_codebook(m, corpus, "train", 2), ConfigError);
}
