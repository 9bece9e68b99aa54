#pragma once

#include <string>
#include <vector>

#include "core/data.hpp"
#include "core/model.hpp"
#include "core/tensor.hpp"

namespace mga {

// Embeddings for one corpus split, rows in split order. Frame features are
// only materialized when detection needs them.
struct SplitEmbeddings {
  std::vector<int> ids;
  Tensor audio_globals;  // N x D
  Tensor text_globals;   // N x D
  std::vector<Tensor> frame_features;  // per clip T x D when requested
};

SplitEmbeddings embed_split(const Model& m, const Corpus& corpus,
                            const std::vector<int>& ids, bool keep_frames);

struct RetrievalMetrics {
  double r1_t2a = 0, r5_t2a = 0;  // percentages
  double r1_a2t = 0, r5_a2t = 0;

  double r1_mean() const { return 0.5 * (r1_t2a + r1_a2t); }
};

// Candidates ranked by similarity, ties broken toward the lower id. R@k is hit
// when any positive lands in the top k; the default ground truth is the
// diagonal (query i's positive set = {i}), and the overload takes explicit
// positive sets so content-identical duplicates can be scored as positives.
RetrievalMetrics retrieval_from_sim(const Tensor& sim, const std::vector<int>& ids);
RetrievalMetrics retrieval_from_sim(const Tensor& sim, const std::vector<int>& ids,
                                    const std::vector<std::vector<int>>& pos_t2a,
                                    const std::vector<std::vector<int>>& pos_a2t);
RetrievalMetrics eval_retrieval(const SplitEmbeddings& e);

// Class text embeddings: the class name is the whole caption.
Tensor class_text_globals(const Model& m, const Vocabulary& vocab);

struct TaggingMetrics {
  double accuracy = 0;   // argmax over classes, single-event clips only
  int n_single = 0;
  std::vector<double> ap;       // per class; -1 marks "no positives in split"
  std::vector<int> skipped;     // classes excluded from the mean
  double map = 0;               // mean AP over classes with positives
};

TaggingMetrics eval_tagging(const Corpus& corpus, const SplitEmbeddings& e,
                            const Tensor& class_globals);

// Median filter with edge replication; window must be odd.
Tensor median_filter(const Tensor& x, int w);

struct Segment {
  int onset = 0;
  int offset = 0;  // exclusive
};

// Contiguous frame runs with filtered similarity >= threshold.
std::vector<Segment> segments_above(const Tensor& timeline, double threshold);

// One-to-one event matching: candidate pairs are valid when onset and offset
// each differ by at most `collar` frames; pairs are seeded greedily by onset
// distance and completed to a maximum matching, so widening the collar never
// loses true positives.
int match_events(const std::vector<Segment>& pred, const std::vector<Segment>& gt,
                 int collar);

struct DetectionMetrics {
  double micro_event_f1 = 0;
  double micro_segment_f1 = 0;
  std::vector<double> class_event_f1;
  long tp = 0, fp = 0, fn = 0;  // event-level micro counts
  double threshold = 0;
};

DetectionMetrics eval_detection(const Corpus& corpus, const SplitEmbeddings& e,
                                const Tensor& class_globals, double threshold,
                                int median_w, int collar);

// Sweeps thresholds on one split (by micro event F1, ties to the lower
// threshold). The standard grid is {0.1, ..., 0.9}.
double sweep_detection_threshold(const Corpus& corpus, const SplitEmbeddings& e,
                                 const Tensor& class_globals,
                                 const std::vector<double>& grid, int median_w,
                                 int collar);
std::vector<double> default_threshold_grid();

// Codeword usage over one split: how often each codeword lands in an
// aggregation support, which class embeddings it sits closest to, and which
// codewords are dead (in no support on either modality across the whole
// split). Requires the codebook aggregation path.
struct CodebookReport {
  std::string split;
  int m = 0;
  int n_clips = 0;
  std::vector<int> audio_hits;  // per codeword: clips whose audio support has it
  std::vector<int> text_hits;
  std::vector<int> dead;        // codeword indices with zero hits on both sides
  double mean_support_audio = 0;  // mean support size per clip
  double mean_support_text = 0;
  // per codeword: the top_k (class id, affinity) pairs, best first
  std::vector<std::vector<std::pair<int, double>>> top_classes;
};

CodebookReport inspect_codebook(const Model& m, const Corpus& corpus,
                                const std::string& split, int top_k);
std::string codebook_report_to_json(const CodebookReport& r, const Vocabulary& vocab);
std::string codebook_report_to_text(const CodebookReport& r, const Vocabulary& vocab);

// Heatmap export: CSV of raw cosine, rows = classes, cols = frames, plus a
// sidecar JSON with the clip's ground-truth intervals.
void export_similarity_heatmap(const Model& m, const Corpus& corpus, int clip_id,
                               const std::string& csv_path);

// Full evaluation of one split (threshold chosen on the validation split).
struct EvalReport {
  std::string split;
  int n_clips = 0;
  RetrievalMetrics retrieval;
  TaggingMetrics tagging;
  DetectionMetrics detection;
};

EvalReport evaluate_split(const Model& m, const Corpus& corpus,
                          const std::string& split, int median_w, int collar);

std::string report_to_json(const EvalReport& r);
std::string report_to_text(const EvalReport& r);

}  // namespace mga
