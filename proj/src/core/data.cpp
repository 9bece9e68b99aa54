#include "core/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <utility>

#include "core/errors.hpp"
#include "core/ops.hpp"

namespace mga {

using nlohmann::json;

const char* const kFillerWords[6] = {"a", "sound", "then", "and", "of", "with"};

namespace {

// Stream tags keep the vocabulary, per-clip event draws, and per-clip noise on
// independent deterministic RNG streams.
constexpr uint64_t kVocabStream = 0x766f636162ULL;
constexpr uint64_t kEventStream = 0x6576656e74ULL;
constexpr uint64_t kNoiseStream = 0x6e6f697365ULL;
constexpr uint64_t kClipBase = 0x636c697000000000ULL;

}  // namespace

int Vocabulary::token_id(const std::string& word) const {
  for (size_t i = 0; i < tokens.size(); ++i)
    if (tokens[i] == word) return static_cast<int>(i);
  throw VocabularyError("unknown token '" + word + "'");
}

Vocabulary gen_vocabulary(int e, int f_in, uint64_t seed) {
  if (e < 2) throw ConfigError("gen_vocabulary: need at least 2 event classes");
  if (f_in < 1) throw ConfigError("gen_vocabulary: F_in must be positive");

  Vocabulary v;
  v.f_in = f_in;
  for (const char* w : kFillerWords) v.tokens.emplace_back(w);

  Rng rng(Rng::mix(seed, kVocabStream));
  const int max_draws = 10000;
  int draws = 0;
  for (int i = 0; i < e; ++i) {
    EventClass ec;
    ec.id = i;
    ec.name_token = static_cast<int>(v.tokens.size());
    v.tokens.push_back("ev" + std::to_string(i));

    for (;;) {
      if (++draws > max_draws)
        throw GenerationError("gen_vocabulary: prototype rejection exceeded " +
                              std::to_string(max_draws) + " draws (F_in too small for " +
                              std::to_string(e) + " classes?)");
      Tensor cand = l2_normalize(Tensor::randn({f_in}, rng));
      bool ok = true;
      for (const EventClass& prev : v.events)
        if (cand.dot(prev.prototype) >= 0.5) {
          ok = false;
          break;
        }
      if (ok) {
        ec.prototype = std::move(cand);
        break;
      }
    }
    v.events.push_back(std::move(ec));
  }
  return v;
}

namespace {

std::vector<int> caption_for(const Vocabulary& vocab,
                             const std::vector<ClipEvent>& events) {
  auto name = [&vocab](const ClipEvent& ev) {
    return vocab.events[static_cast<size_t>(ev.class_id)].name_token;
  };
  const int a = vocab.token_id("a");
  const int sound = vocab.token_id("sound");
  const int then = vocab.token_id("then");
  const int and_tok = vocab.token_id("and");
  const int with_tok = vocab.token_id("with");

  switch (events.size()) {
    case 1:
      return {a, name(events[0]), sound};
    case 2:
      return {name(events[0]), then, name(events[1])};
    case 3:
      return {name(events[0]), and_tok, name(events[1]), with_tok, name(events[2])};
    default:
      throw GenerationError("caption template supports 1 to 3 events");
  }
}

}  // namespace

std::pair<SyntheticClip, Tensor> gen_clip(const Vocabulary& vocab, int clip_id, int t,
                                          int max_events, double sigma, uint64_t seed) {
  if (t < 4) throw ConfigError("gen_clip: T must be at least 4");
  if (max_events < 1 || max_events > 3)
    throw ConfigError("gen_clip: max_events must be in [1, 3]");
  if (max_events > static_cast<int>(vocab.events.size()))
    throw ConfigError("gen_clip: more events requested than classes exist");
  if (sigma < 0.0) throw ConfigError("gen_clip: sigma must be >= 0");

  SyntheticClip clip;
  clip.id = clip_id;
  clip.seed = seed;
  clip.t = t;
  clip.sigma = sigma;

  Rng rng(Rng::mix(seed, kEventStream));
  const int n_events = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(max_events)));

  // distinct classes via partial Fisher-Yates
  std::vector<int> ids(vocab.events.size());
  std::iota(ids.begin(), ids.end(), 0);
  for (int i = 0; i < n_events; ++i) {
    const size_t j = i + rng.below(ids.size() - static_cast<size_t>(i));
    std::swap(ids[static_cast<size_t>(i)], ids[j]);
  }

  for (int i = 0; i < n_events; ++i) {
    const EventClass& ec = vocab.events[static_cast<size_t>(ids[static_cast<size_t>(i)])];
    const int hi = std::min(ec.max_dur, t);
    const int dur = ec.min_dur + static_cast<int>(rng.below(
                                     static_cast<uint64_t>(hi - ec.min_dur + 1)));
    const int onset = static_cast<int>(rng.below(static_cast<uint64_t>(t - dur + 1)));
    clip.events.push_back({ec.id, onset, onset + dur});
  }
  std::sort(clip.events.begin(), clip.events.end(),
            [](const ClipEvent& x, const ClipEvent& y) {
              if (x.onset != y.onset) return x.onset < y.onset;
              if (x.class_id != y.class_id) return x.class_id < y.class_id;
              return x.offset < y.offset;
            });

  clip.caption = caption_for(vocab, clip.events);
  return {clip, render_frames(clip, vocab)};
}

Tensor render_frames(const SyntheticClip& clip, const Vocabulary& vocab) {
  if (vocab.f_in < 1) throw ConfigError("render_frames: vocabulary has no frame dim");
  Tensor frames({clip.t, vocab.f_in});
  for (const ClipEvent& ev : clip.events) {
    if (ev.class_id < 0 || ev.class_id >= static_cast<int>(vocab.events.size()))
      throw VocabularyError("render_frames: unknown class id " +
                            std::to_string(ev.class_id));
    if (ev.onset < 0 || ev.onset >= ev.offset || ev.offset > clip.t)
      throw FormatError("render_frames: event interval out of range");
    const Tensor& proto = vocab.events[static_cast<size_t>(ev.class_id)].prototype;
    for (int t = ev.onset; t < ev.offset; ++t) frames.add_row(t, proto);
  }
  Rng rng(Rng::mix(clip.seed, kNoiseStream));
  for (int t = 0; t < clip.t; ++t)
    for (int f = 0; f < vocab.f_in; ++f) frames.at(t, f) += clip.sigma * rng.normal();
  return frames;
}

const SyntheticClip& Corpus::clip_by_id(int id) const {
  for (const SyntheticClip& c : clips)
    if (c.id == id) return c;
  throw FormatError("corpus has no clip with id " + std::to_string(id));
}

Corpus gen_corpus(const CorpusParams& p) {
  if (p.n_clips < 3) throw ConfigError("gen_corpus: need at least 3 clips");
  if (!(p.train_frac > 0.0) || !(p.val_frac > 0.0) || p.train_frac + p.val_frac >= 1.0)
    throw ConfigError("gen_corpus: split fractions must be positive and sum below 1");

  Corpus corpus;
  corpus.manifest.f_in = p.f_in;
  corpus.manifest.t = p.t;
  corpus.manifest.seed = p.seed;
  corpus.manifest.vocab = gen_vocabulary(p.e, p.f_in, p.seed);

  for (int id = 0; id < p.n_clips; ++id) {
    auto [clip, frames] = gen_clip(corpus.manifest.vocab, id, p.t, p.max_events, p.sigma,
                                   Rng::mix(p.seed, kClipBase + static_cast<uint64_t>(id)));
    (void)frames;  // regenerated on demand; the corpus stores only the clip record
    corpus.clips.push_back(std::move(clip));
  }

  const int n_train = static_cast<int>(std::llround(p.n_clips * p.train_frac));
  const int n_val = static_cast<int>(std::llround(p.n_clips * p.val_frac));
  if (n_train < 1 || n_val < 1 || n_train + n_val >= p.n_clips)
    throw ConfigError("gen_corpus: split fractions leave an empty split");
  for (int id = 0; id < p.n_clips; ++id) {
    if (id < n_train)
      corpus.manifest.train_ids.push_back(id);
    else if (id < n_train + n_val)
      corpus.manifest.val_ids.push_back(id);
    else
      corpus.manifest.test_ids.push_back(id);
  }
  return corpus;
}

namespace {

std::string caption_words(const std::vector<int>& caption, const Vocabulary& vocab) {
  std::string out;
  for (size_t i = 0; i < caption.size(); ++i) {
    const int id = caption[i];
    if (id < 0 || id >= vocab.size())
      throw VocabularyError("caption token id " + std::to_string(id) + " out of range");
    if (i) out += ' ';
    out += vocab.tokens[static_cast<size_t>(id)];
  }
  return out;
}

std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab) {
  std::vector<int> ids;
  std::istringstream in(text);
  std::string word;
  while (in >> word) ids.push_back(vocab.token_id(word));
  if (ids.empty()) throw FormatError("empty caption");
  return ids;
}

void check_caption_consistency(const SyntheticClip& clip, const Vocabulary& vocab) {
  std::vector<int> from_events, from_caption;
  for (const ClipEvent& ev : clip.events)
    from_events.push_back(vocab.events[static_cast<size_t>(ev.class_id)].name_token);
  for (int tok : clip.caption)
    for (const EventClass& ec : vocab.events)
      if (ec.name_token == tok) {
        from_caption.push_back(tok);
        break;
      }
  std::sort(from_events.begin(), from_events.end());
  std::sort(from_caption.begin(), from_caption.end());
  if (from_events != from_caption)
    throw FormatError("caption names do not match clip events");
}

json manifest_to_json(const CorpusManifest& m) {
  json events = json::array();
  for (const EventClass& ec : m.vocab.events) {
    json proto = json::array();
    for (int i = 0; i < ec.prototype.dim(0); ++i) proto.push_back(ec.prototype.at(i));
    events.push_back({{"id", ec.id},
                      {"name_token", ec.name_token},
                      {"min_dur", ec.min_dur},
                      {"max_dur", ec.max_dur},
                      {"prototype", proto}});
  }
  return json{{"version", m.version},
              {"f_in", m.f_in},
              {"t", m.t},
              {"seed", m.seed},
              {"tokens", m.vocab.tokens},
              {"events", events},
              {"splits",
               {{"train", m.train_ids}, {"val", m.val_ids}, {"test", m.test_ids}}}};
}

CorpusManifest manifest_from_json(const json& j) {
  CorpusManifest m;
  m.version = j.at("version").get<std::string>();
  if (m.version != "mga-corpus/1")
    throw FormatError("unsupported corpus version '" + m.version + "'");
  m.f_in = j.at("f_in").get<int>();
  m.t = j.at("t").get<int>();
  m.seed = j.at("seed").get<uint64_t>();
  m.vocab.f_in = m.f_in;
  m.vocab.tokens = j.at("tokens").get<std::vector<std::string>>();
  for (const json& e : j.at("events")) {
    EventClass ec;
    ec.id = e.at("id").get<int>();
    ec.name_token = e.at("name_token").get<int>();
    ec.min_dur = e.at("min_dur").get<int>();
    ec.max_dur = e.at("max_dur").get<int>();
    std::vector<double> proto = e.at("prototype").get<std::vector<double>>();
    const int n = static_cast<int>(proto.size());
    ec.prototype = Tensor({n}, std::move(proto));
    m.vocab.events.push_back(std::move(ec));
  }
  m.train_ids = j.at("splits").at("train").get<std::vector<int>>();
  m.val_ids = j.at("splits").at("val").get<std::vector<int>>();
  m.test_ids = j.at("splits").at("test").get<std::vector<int>>();
  return m;
}

}  // namespace

void write_corpus(const Corpus& corpus, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());

  {
    std::ofstream out(dir + "/manifest.json");
    if (!out) throw IoError("cannot write " + dir + "/manifest.json");
    out << manifest_to_json(corpus.manifest).dump(2) << "\n";
    if (!out) throw IoError("write failed for " + dir + "/manifest.json");
  }

  std::ofstream out(dir + "/clips.jsonl");
  if (!out) throw IoError("cannot write " + dir + "/clips.jsonl");
  for (const SyntheticClip& clip : corpus.clips) {
    json events = json::array();
    for (const ClipEvent& ev : clip.events)
      events.push_back(json::array({ev.class_id, ev.onset, ev.offset}));
    const json line = {{"id", clip.id},
                       {"seed", clip.seed},
                       {"T", clip.t},
                       {"events", events},
                       {"caption", caption_words(clip.caption, corpus.manifest.vocab)},
                       {"sigma", clip.sigma}};
    out << line.dump() << "\n";
  }
  if (!out) throw IoError("write failed for " + dir + "/clips.jsonl");
}

Corpus read_corpus(const std::string& dir) {
  Corpus corpus;
  {
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw IoError("cannot read " + dir + "/manifest.json");
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw FormatError(std::string("manifest.json: ") + e.what());
    }
    corpus.manifest = manifest_from_json(j);
  }

  std::ifstream in(dir + "/clips.jsonl");
  if (!in) throw IoError("cannot read " + dir + "/clips.jsonl");
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      SyntheticClip clip;
      clip.id = j.at("id").get<int>();
      clip.seed = j.at("seed").get<uint64_t>();
      clip.t = j.at("T").get<int>();
      for (const json& e : j.at("events")) {
        ClipEvent ev{e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<int>()};
        if (ev.onset < 0 || ev.onset >= ev.offset || ev.offset > clip.t)
          throw FormatError("event interval out of range");
        clip.events.push_back(ev);
      }
      if (clip.events.empty() || clip.events.size() > 3)
        throw FormatError("clip must carry 1 to 3 events");
      clip.caption = tokenize(j.at("caption").get<std::string>(), corpus.manifest.vocab);
      clip.sigma = j.at("sigma").get<double>();
      check_caption_consistency(clip, corpus.manifest.vocab);
      corpus.clips.push_back(std::move(clip));
    } catch (const MgaError& e) {
      throw FormatError("clips.jsonl line " + std::to_string(line_no) + ": " + e.what());
    } catch (const json::exception& e) {
      throw FormatError("clips.jsonl line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return corpus;
}

}  // namespace mga
