#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace mga {

// A synthetic sound class: a fixed unit-norm prototype vector in frame space
// plus the caption token that names it.
struct EventClass {
  int id = 0;
  int name_token = 0;
  Tensor prototype;  // F_in, unit norm
  int min_dur = 3;
  int max_dur = 16;
};

struct Vocabulary {
  std::vector<std::string> tokens;  // fillers first, then event names
  std::vector<EventClass> events;
  int f_in = 0;

  int size() const { return static_cast<int>(tokens.size()); }
  int token_id(const std::string& word) const;  // throws VocabularyError if absent
};

// Filler words available to captions. "of" never appears in a template; it
// exists so the vocabulary has a token the model must learn to ignore.
extern const char* const kFillerWords[6];  // a, sound, then, and, of, with

// E event classes with rejection-sampled prototypes (pairwise cosine < 0.5).
Vocabulary gen_vocabulary(int e, int f_in, uint64_t seed);

struct ClipEvent {
  int class_id = 0;
  int onset = 0;   // inclusive frame
  int offset = 0;  // exclusive frame
};

struct SyntheticClip {
  int id = 0;
  uint64_t seed = 0;
  int t = 0;
  std::vector<ClipEvent> events;  // onset-sorted
  std::vector<int> caption;       // token ids
  double sigma = 0.0;
};

// Samples 1..max_events distinct classes with random intervals (overlaps
// allowed), builds the caption from the event-count template, renders frames.
// Everything is a pure function of (vocab, arguments, seed).
std::pair<SyntheticClip, Tensor> gen_clip(const Vocabulary& vocab, int clip_id, int t,
                                          int max_events, double sigma, uint64_t seed);

// frame_t = sum of prototypes active at t, plus N(0, sigma^2 I); bit-exact
// regeneration from the stored clip record.
Tensor render_frames(const SyntheticClip& clip, const Vocabulary& vocab);

struct CorpusManifest {
  std::string version = "mga-corpus/1";
  int f_in = 0;
  int t = 0;
  uint64_t seed = 0;
  Vocabulary vocab;
  std::vector<int> train_ids, val_ids, test_ids;
};

struct Corpus {
  CorpusManifest manifest;
  std::vector<SyntheticClip> clips;

  const SyntheticClip& clip_by_id(int id) const;  // throws if unknown id
};

struct CorpusParams {
  int n_clips = 1250;
  int t = 32;
  int f_in = 16;
  int e = 10;
  int max_events = 3;
  double sigma = 0.1;
  double train_frac = 0.8;
  double val_frac = 0.1;
  uint64_t seed = 1;
};

Corpus gen_corpus(const CorpusParams& params);

// dir/manifest.json + dir/clips.jsonl; read(write(c)) reproduces the corpus
// exactly, including prototype bits.
void write_corpus(const Corpus& corpus, const std::string& dir);
Corpus read_corpus(const std::string& dir);

}  // namespace mga
