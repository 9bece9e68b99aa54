#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "core/data.hpp"
#include "core/errors.hpp"
#include "core/tensor.hpp"

using namespace mga;
namespace fs = std::filesystem;

namespace {

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.same_shape(b));
  double m = 0.0;
  for (size_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(a.raw()[i] - b.raw()[i]));
  return m;
}

// Fresh scratch directory under the test's cwd, wiped on destruction.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::path("scratch") / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("vocabulary generation is deterministic and well-formed") {
  Vocabulary a = gen_vocabulary(8, 16, 42);
  Vocabulary b = gen_vocabulary(8, 16, 42);

  REQUIRE(a.tokens.size() == b.tokens.size());
  CHECK(a.tokens == b.tokens);
  REQUIRE(a.events.size() == 8);
  for (size_t i = 0; i < a.events.size(); ++i) {
    CHECK(a.events[i].id == static_cast<int>(i));
    CHECK(a.events[i].name_token == b.events[i].name_token);
    CHECK(max_abs_diff(a.events[i].prototype, b.events[i].prototype) == 0.0);
    CHECK(a.events[i].prototype.norm2() == doctest::Approx(1.0).epsilon(1e-9));
  }

  // fillers occupy the leading ids
  CHECK(a.tokens[0] == "a");
  CHECK(a.tokens[5] == "with");
  CHECK(a.token_id("then") == 2);
  CHECK_THROWS_AS(a.token_id("nonexistent"), VocabularyError);

  for (size_t i = 0; i < a.events.size(); ++i)
    for (size_t j = i + 1; j < a.events.size(); ++j)
      CHECK(a.events[i].prototype.dot(a.events[j].prototype) < 0.5);

  Vocabulary c = gen_vocabulary(8, 16, 43);
  bool any_diff = false;
  for (size_t i = 0; i < c.events.size(); ++i)
    if (max_abs_diff(a.events[i].prototype, c.events[i].prototype) > 0.0) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("vocabulary generation works at the minimal configuration") {
  Vocabulary v = gen_vocabulary(2, 2, 7);
  REQUIRE(v.events.size() == 2);
  CHECK(v.events[0].prototype.dot(v.events[1].prototype) < 0.5);
  CHECK_THROWS_AS(gen_vocabulary(1, 16, 7), ConfigError);
}

TEST_CASE("noise-free rendering places prototypes exactly") {
  Vocabulary v = gen_vocabulary(4, 6, 9);

  SyntheticClip whole;
  whole.id = 0;
  whole.seed = 123;
  whole.t = 8;
  whole.sigma = 0.0;
  whole.events = {{2, 0, 8}};
  whole.caption = {v.token_id("a"), v.events[2].name_token, v.token_id("sound")};
  Tensor frames = render_frames(whole, v);
  for (int t = 0; t < 8; ++t)
    CHECK(max_abs_diff(frames.row(t), v.events[2].prototype) == 0.0);

  SyntheticClip partial = whole;
  partial.events = {{1, 2, 5}};
  Tensor pf = render_frames(partial, v);
  for (int t : {0, 1, 5, 6, 7}) CHECK(pf.row(t).norm2() == 0.0);
  for (int t : {2, 3, 4}) CHECK(max_abs_diff(pf.row(t), v.events[1].prototype) == 0.0);
}

TEST_CASE("overlapping events sum their prototypes") {
  Vocabulary v = gen_vocabulary(3, 5, 11);
  SyntheticClip clip;
  clip.t = 6;
  clip.sigma = 0.0;
  clip.events = {{0, 0, 4}, {1, 2, 6}};
  clip.caption = {v.events[0].name_token, v.token_id("then"), v.events[1].name_token};

  Tensor frames = render_frames(clip, v);
  Tensor both = v.events[0].prototype;
  both.add_inplace(v.events[1].prototype);
  CHECK(max_abs_diff(frames.row(2), both) == 0.0);
  CHECK(max_abs_diff(frames.row(0), v.events[0].prototype) == 0.0);
  CHECK(max_abs_diff(frames.row(5), v.events[1].prototype) == 0.0);
}

TEST_CASE("clip generation is deterministic and regenerable") {
  Vocabulary v = gen_vocabulary(6, 8, 13);
  auto [clip_a, frames_a] = gen_clip(v, 3, 16, 3, 0.1, 999);
  auto [clip_b, frames_b] = gen_clip(v, 3, 16, 3, 0.1, 999);

  CHECK(clip_a.caption == clip_b.caption);
  REQUIRE(clip_a.events.size() == clip_b.events.size());
  CHECK(max_abs_diff(frames_a, frames_b) == 0.0);

  // re-render from the stored spec alone
  Tensor again = render_frames(clip_a, v);
  CHECK(max_abs_diff(frames_a, again) == 0.0);
}

TEST_CASE("generated clips satisfy the structural invariants") {
  Vocabulary v = gen_vocabulary(10, 16, 17);
  int seen_counts[4] = {0, 0, 0, 0};
  for (int i = 0; i < 200; ++i) {
    auto [clip, frames] = gen_clip(v, i, 32, 3, 0.1, 5000 + static_cast<uint64_t>(i));
    REQUIRE(clip.events.size() >= 1);
    REQUIRE(clip.events.size() <= 3);
    ++seen_counts[clip.events.size()];

    std::set<int> classes;
    for (size_t e = 0; e < clip.events.size(); ++e) {
      const ClipEvent& ev = clip.events[e];
      CHECK(ev.onset >= 0);
      CHECK(ev.onset < ev.offset);
      CHECK(ev.offset <= 32);
      classes.insert(ev.class_id);
      if (e > 0) CHECK(clip.events[e - 1].onset <= ev.onset);
    }
    CHECK(classes.size() == clip.events.size());  // distinct classes per clip

    // caption names match the clip's classes as multisets
    std::vector<int> event_names, caption_names;
    for (const ClipEvent& ev : clip.events)
      event_names.push_back(v.events[static_cast<size_t>(ev.class_id)].name_token);
    for (int tok : clip.caption)
      if (tok >= 6) caption_names.push_back(tok);
    std::sort(event_names.begin(), event_names.end());
    std::sort(caption_names.begin(), caption_names.end());
    CHECK(event_names == caption_names);

    CHECK(frames.rows() == 32);
    CHECK(frames.cols() == 16);
  }
  // all three template arities occur across 200 draws
  CHECK(seen_counts[1] > 0);
  CHECK(seen_counts[2] > 0);
  CHECK(seen_counts[3] > 0);
}

TEST_CASE("clip generation rejects invalid parameters") {
  Vocabulary v = gen_vocabulary(4, 8, 19);
  CHECK_THROWS_AS(gen_clip(v, 0, 3, 3, 0.1, 1), ConfigError);
  CHECK_THROWS_AS(gen_clip(v, 0, 16, 0, 0.1, 1), ConfigError);
  CHECK_THROWS_AS(gen_clip(v, 0, 16, 3, -0.5, 1), ConfigError);
  Vocabulary two = gen_vocabulary(2, 8, 19);
  CHECK_THROWS_AS(gen_clip(two, 0, 16, 3, 0.1, 1), ConfigError);
}

TEST_CASE("corpus splits are disjoint and cover every clip") {
  CorpusParams p;
  p.n_clips = 40;
  p.e = 5;
  p.t = 16;
  p.f_in = 8;
  Corpus c = gen_corpus(p);

  CHECK(c.manifest.train_ids.size() == 32);
  CHECK(c.manifest.val_ids.size() == 4);
  CHECK(c.manifest.test_ids.size() == 4);

  std::set<int> all;
  for (int id : c.manifest.train_ids) all.insert(id);
  for (int id : c.manifest.val_ids) all.insert(id);
  for (int id : c.manifest.test_ids) all.insert(id);
  CHECK(all.size() == 40);
  CHECK(*all.begin() == 0);
  CHECK(*all.rbegin() == 39);
  CHECK(c.clips.size() == 40);
  CHECK(c.clip_by_id(17).id == 17);
  CHECK_THROWS_AS(c.clip_by_id(40), FormatError);
}

TEST_CASE("corpus round-trips through the on-disk format exactly") {
  TempDir dir("corpus_roundtrip");
  CorpusParams p;
  p.n_clips = 100;
  p.e = 6;
  p.t = 20;
  p.f_in = 10;
  p.seed = 31;
  Corpus a = gen_corpus(p);
  write_corpus(a, dir.str());

  Corpus b = read_corpus(dir.str());
  CHECK(b.manifest.version == a.manifest.version);
  CHECK(b.manifest.f_in == a.manifest.f_in);
  CHECK(b.manifest.t == a.manifest.t);
  CHECK(b.manifest.seed == a.manifest.seed);
  CHECK(b.manifest.vocab.tokens == a.manifest.vocab.tokens);
  CHECK(b.manifest.train_ids == a.manifest.train_ids);
  CHECK(b.manifest.val_ids == a.manifest.val_ids);
  CHECK(b.manifest.test_ids == a.manifest.test_ids);
  REQUIRE(b.manifest.vocab.events.size() == a.manifest.vocab.events.size());
  for (size_t i = 0; i < a.manifest.vocab.events.size(); ++i) {
    const EventClass& ea = a.manifest.vocab.events[i];
    const EventClass& eb = b.manifest.vocab.events[i];
    CHECK(eb.name_token == ea.name_token);
    CHECK(max_abs_diff(eb.prototype, ea.prototype) == 0.0);  // bit-exact doubles
  }
  REQUIRE(b.clips.size() == a.clips.size());
  for (size_t i = 0; i < a.clips.size(); ++i) {
    CHECK(b.clips[i].id == a.clips[i].id);
    CHECK(b.clips[i].seed == a.clips[i].seed);
    CHECK(b.clips[i].t == a.clips[i].t);
    CHECK(b.clips[i].caption == a.clips[i].caption);
    CHECK(b.clips[i].sigma == a.clips[i].sigma);
    REQUIRE(b.clips[i].events.size() == a.clips[i].events.size());
    for (size_t e = 0; e < a.clips[i].events.size(); ++e) {
      CHECK(b.clips[i].events[e].class_id == a.clips[i].events[e].class_id);
      CHECK(b.clips[i].events[e].onset == a.clips[i].events[e].onset);
      CHECK(b.clips[i].events[e].offset == a.clips[i].events[e].offset);
    }
    // frames regenerate identically from the reloaded spec
    CHECK(max_abs_diff(render_frames(b.clips[i], b.manifest.vocab),
                       render_frames(a.clips[i], a.manifest.vocab)) == 0.0);
  }

  // write(read(write(x))) produces identical bytes
  TempDir dir2("corpus_rewrite");
  write_corpus(b, dir2.str());
  CHECK(slurp(dir.path / "manifest.json") == slurp(dir2.path / "manifest.json"));
  CHECK(slurp(dir.path / "clips.jsonl") == slurp(dir2.path / "clips.jsonl"));
}

TEST_CASE("corrupted corpus lines are reported with their line number") {
  TempDir dir("corpus_corrupt");
  CorpusParams p;
  p.n_clips = 10;
  p.e = 4;
  p.t = 12;
  p.f_in = 6;
  Corpus c = gen_corpus(p);
  write_corpus(c, dir.str());

  // truncate line 3 of clips.jsonl
  std::vector<std::string> lines;
  {
    std::ifstream in(dir.path / "clips.jsonl");
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
  }
  lines[2] = lines[2].substr(0, lines[2].size() / 2);
  {
    std::ofstream out(dir.path / "clips.jsonl");
    for (const std::string& line : lines) out << line << "\n";
  }

  try {
    read_corpus(dir.str());
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("version mismatch is rejected") {
  TempDir dir("corpus_version");
  CorpusParams p;
  p.n_clips = 10;
  p.e = 3;
  p.t = 8;
  p.f_in = 4;
  Corpus c = gen_corpus(p);
  c.manifest.version = "mga-corpus/999";
  write_corpus(c, dir.str());
  CHECK_THROWS_AS(read_corpus(dir.str()), FormatError);
}

TEST_CASE("a thousand-clip corpus stays under the size budget") {
  TempDir dir("corpus_size");
  CorpusParams p;
  p.n_clips = 1000;
  Corpus c = gen_corpus(p);
  write_corpus(c, dir.str());

  const auto bytes = fs::file_size(dir.path / "clips.jsonl") +
                     fs::file_size(dir.path / "manifest.json");
  CHECK(bytes < 5u * 1024 * 1024);
}

TEST_CASE("default corpus parameters give the documented split sizes") {
  CorpusParams p;
  CHECK(p.n_clips == 1250);
  Corpus c = gen_corpus(p);
  CHECK(c.manifest.train_ids.size() == 1000);
  CHECK(c.manifest.val_ids.size() == 125);
  CHECK(c.manifest.test_ids.size() == 125);
}
