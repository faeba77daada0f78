#pragma once
// A minimal differentiable scorer standing in for a full grounding
// backbone: clip features plus query token ids go in, a saliency track,
// N moment predictions, and class probabilities come out. Backprop is
// hand-derived and routed through the shine::simd kernels so the whole
// objective can be exercised and gradient-checked end to end.

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "shine/corpus.hpp"
#include "shine/evalkit.hpp"
#include "shine/loss.hpp"
#include "shine/matcher.hpp"
#include "shine/synthgen.hpp"

namespace shine {

struct ModelConfig {
  int d_v = 32;       // clip feature width
  int d_e = 32;       // token embedding width
  int d_h = 64;       // shared hidden width
  int n_queries = 5;  // moment queries
  int vocab_size = 0;
};

// All arrays are flat row-major. The span and class heads read the
// pooled hidden state concatenated with the query embedding, so their
// weight matrices are 2 x (d_h + d_e).
struct ModelParams {
  ModelConfig cfg;
  std::vector<double> token_table;  // vocab_size x d_e
  std::vector<double> w_s;          // d_h x (d_v + d_e)
  std::vector<double> b_s;          // d_h
  std::vector<double> u_s;          // d_h
  std::vector<double> b_sal;        // 1
  std::vector<double> queries;      // n_queries x d_h
  std::vector<double> w_span;       // 2 x (d_h + d_e)
  std::vector<double> b_span;       // 2
  std::vector<double> w_cls;        // 2 x (d_h + d_e)
  std::vector<double> b_cls;        // 2
};

// Gradients share the parameter layout.
using Gradients = ModelParams;

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);
ModelParams zeros_like(const ModelConfig& cfg);

// Visits every parameter array in a fixed order (scalars included as
// size-1 arrays); used for updates, clipping, and serialization.
template <class Params, class Fn>
void for_each_array(Params& p, Fn&& fn) {
  fn("token_table", p.token_table);
  fn("w_s", p.w_s);
  fn("b_s", p.b_s);
  fn("u_s", p.u_s);
  fn("b_sal", p.b_sal);
  fn("queries", p.queries);
  fn("w_span", p.w_span);
  fn("b_span", p.b_span);
  fn("w_cls", p.w_cls);
  fn("b_cls", p.b_cls);
}

// Token ids for the synthetic language: "person", "the", then the class
// vocabularies in VERB, NOUN, ADJ, PREP, ADV order.
struct TokenVocab {
  std::vector<std::string> words;
  std::unordered_map<std::string, int> index;

  static TokenVocab from_synth(const SynthVocab& vocab);
  int id(const std::string& word) const;  // throws UnknownToken
  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  int size() const { return static_cast<int>(words.size()); }
};

struct ForwardCache {
  int t_clips = 0;
  std::vector<int> token_ids;
  std::vector<double> e;            // d_e query embedding
  std::vector<double> xe;           // T x (d_v + d_e) concatenated inputs
  std::vector<double> h;            // T x d_h hidden states
  std::vector<double> attn;         // n_queries x T
  std::vector<double> pooled;       // n_queries x d_h
  std::vector<double> pe;           // n_queries x (d_h + d_e)
  std::vector<double> span_logits;  // n_queries x 2, pre-squash
  std::vector<double> cls_logits;   // n_queries x 2
  std::vector<double> cls_prob;     // n_queries x 2 softmax, fg first
  bool with_heads = true;
};

struct ForwardOutput {
  SaliencyTrack saliency;
  std::vector<MomentPrediction> spans;  // empty when heads are skipped
  ForwardCache cache;
};

// Clip-side trunk pre-activations W_s[:, :d_v] x_t + b_s, shared by every
// query track evaluated over the same clip features. The query tracks of
// one sample differ only in the embedding e, so the expensive clip-side
// matvec is hoisted out of the per-track passes.
struct TrunkShared {
  int t_clips = 0;
  std::vector<double> zx;  // T x d_h
};

TrunkShared make_trunk_shared(
    const ModelParams& params,
    const std::vector<std::vector<double>>& clip_features);

// with_heads = false evaluates only the saliency path (negative-query
// passes never read the span or class heads). Passing a TrunkShared built
// from the same params and clip features skips the clip-side matvec; the
// result is identical either way.
ForwardOutput forward(const ModelParams& params,
                      const std::vector<std::vector<double>>& clip_features,
                      const std::vector<int>& token_ids, bool with_heads = true,
                      const TrunkShared* shared = nullptr);

struct SampleInput {
  std::string query_id;
  std::vector<std::vector<double>> clip_features;  // T x d_v
  std::vector<int> positive_ids;
  std::array<std::vector<int>, 3> negative_ids;  // hn1..hn3
  SpanClips span;                                // ground-truth clips
  MomentSpan gt_norm;                            // same span in [0,1] time
};

struct LossSettings {
  BaseLossConfig base;
  CoarseConfig coarse;
  FineConfig fine;
  double alpha = 1.0;
  double beta = 1.0;
  bool use_coarse = true;
  bool use_fine = true;
  // Drop the base contrastive saliency term; the coarse intra hinge
  // takes over its role.
  bool replace_saliency = false;
};

struct SampleLoss {
  LossReport report;
  Assignment assignment;
};

// Five forward passes (positive, hn1..hn3, easy negative) composed into
// one report: matched span regression + classification + easy-pair +
// contrastive saliency as the base, plus the coarse and fine ranking
// terms under alpha and beta.
SampleLoss compute_sample_loss(const ModelParams& params,
                               const SampleInput& sample,
                               const std::vector<int>& easy_ids,
                               const LossSettings& cfg);

struct BatchItem {
  const SampleInput* sample = nullptr;
  const std::vector<int>* easy_ids = nullptr;
};

struct BatchGrads {
  Gradients grads;        // mean over the batch
  LossReport mean_report; // terms and total only
};

// Exact reverse-mode gradients of the combined objective, matcher
// assignment held fixed. Throws NonFinite on any non-finite value.
BatchGrads backward(const ModelParams& params,
                    const std::vector<BatchItem>& batch,
                    const LossSettings& cfg);

// Versioned JSON dump of all parameter arrays with shape headers;
// round-trips bitwise.
void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

struct ToyDataset {
  TokenVocab vocab;
  std::map<Split, std::vector<SampleInput>> splits;
};

// Materializes features and token ids for every sample and attaches the
// forged hierarchy (keyed by negative_key). Throws MissingTrack when a
// query lacks one of its three levels.
ToyDataset build_dataset(const SynthCorpus& corpus, const FeatureSpace& space,
                         const std::map<std::string, NegativeRecord>& negatives);

struct TrainConfig {
  ModelConfig model;
  LossSettings loss;
  int epochs = 30;
  double lr = 0.25;
  int batch_size = 32;
  double clip_norm = 10.0;
  std::uint64_t seed = 1;
  // Metrics cadence in the trace; 0 evaluates only after the last epoch.
  int eval_every = 1;
  std::string trace_path;       // empty: keep the trace in memory only
  std::string checkpoint_path;  // empty: no checkpoint file
};

struct TrainResult {
  ModelParams params;
  std::vector<std::string> trace;  // one JSON record per epoch
  std::map<Split, SplitMetrics> final_metrics;
};

// Plain gradient descent with norm clipping, seeded and deterministic.
// Throws DivergedLoss after saving the last good checkpoint.
TrainResult train(const TrainConfig& cfg, const ToyDataset& data);

// Metrics for one split; the easy negative for sample i is sample
// (i + 1) mod n, fixed so evaluation is deterministic.
SplitMetrics evaluate_split(const ModelParams& params,
                            const std::vector<SampleInput>& samples,
                            const LossSettings& cfg);

std::map<Split, SplitMetrics> evaluate_all(const ModelParams& params,
                                           const ToyDataset& data,
                                           const LossSettings& cfg);

}  // namespace shine
