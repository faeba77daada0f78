#pragma once
// Saliency ranking losses (coarse and fine) and the DETR-style base losses.
// Every operation is a pure function returning the loss value together with
// analytic gradients with respect to its raw inputs.
//
// Score handling: the coarse ranking loss consumes raw scores (its margins
// live on logit scale); the fine ranking loss and the negative-pair loss
// consume logistically squashed scores clamped to [eps, 1-eps] so the log
// terms stay finite. Gradients are always reported in raw-score space, with
// the squashing chain rule applied internally (derivative 0 in the clamped
// region). Hinge subgradients at a kink (argument exactly 0) are 0.

#include <array>
#include <map>
#include <string>
#include <vector>

#include "shine/corpus.hpp"
#include "shine/errors.hpp"

namespace shine {

inline constexpr double kSquashEps = 1e-7;

double squash(double v);
double squash_deriv(double v);

struct SaliencyTrack {
  std::vector<double> raw;
  std::vector<double> squashed;  // squash(raw), same length

  int size() const { return static_cast<int>(raw.size()); }
};

SaliencyTrack make_track(std::vector<double> raw);

// total always equals the plain sum of `terms` (weights are folded in when
// terms are accumulated); `notes` carries non-additive diagnostics.
struct LossReport {
  double total = 0.0;
  std::map<std::string, double> terms;
  std::map<std::string, std::vector<double>> grads;
  std::map<std::string, double> notes;

  void rename_grad(const std::string& from, const std::string& to);
  // this += weight * other. Term and note keys get the prefix; gradients
  // merge by canonical input name across components.
  void accumulate(const LossReport& other, double weight = 1.0,
                  const std::string& prefix = "");
};

struct CoarseConfig {
  double h1 = 1.0;
  double h2 = 2.0;
  int q = 8;
  bool use_intra = true;
  bool use_inter = true;
};

enum class FineMode { relative, absolute };

struct FineConfig {
  std::array<double, 4> margins = {0.25, 0.25, 0.25, 0.25};
  FineMode mode = FineMode::relative;
  // When set, the squashed positive track acting as the observation inside
  // d(S_p, .) is treated as a constant.
  bool detach_observation = false;
  std::array<bool, 4> active = {true, true, true, true};
};

struct BaseLossConfig {
  double lambda_l1 = 10.0;
  double lambda_giou = 1.0;
  double lambda_cls = 4.0;
  double lambda_neg = 1.0;
  double lambda_cont = 1.0;
  double tau = 0.5;
  int max_rank = 1;
};

// Top-k mean of raw scores inside the span, k = max(1, floor(T+/q)).
// Ties break on (value desc, index asc); positions list the k selected
// clips for gradient routing.
struct PooledScore {
  double value = 0.0;
  int k = 0;
  std::vector<int> positions;
};
PooledScore pooled_pos(const SaliencyTrack& track, const SpanClips& span,
                       int q);

// Maximum raw score over out-of-span clips (first index on ties).
struct MaxOutside {
  double value = 0.0;
  int index = 0;
};
MaxOutside max_outside(const SaliencyTrack& track, const SpanClips& span);

// L_cr = max(0, h1 + S-_p - S+_p) + max(0, h2 + S+_n - S+_p) on raw
// scores; S+_n pools the negative track over the positive span. The intra
// term is skipped (and noted) when the span covers every clip.
// Gradient keys: "S_p", "S_n".
LossReport coarse_loss(const SaliencyTrack& s_p, const SaliencyTrack& s_n,
                       const SpanClips& span, const CoarseConfig& cfg);

// Y_i = 1 inside the span, 0 outside.
std::vector<double> pseudo_label(const SpanClips& span, int T);

// d(y, y_hat) = -(1/T) sum y_i log y_hat_i; y_i = 0 contributes exactly 0.
double nll_distance(const std::vector<double>& y,
                    const std::vector<double>& y_hat);

// Four hinges over the distance ladder d0..d4 built from squashed tracks:
// d0 = d(Y, S_p), d_i = d(S_p, S^i_hn), d4 = d(S_p, S_n). Relative mode
// compares consecutive distances; absolute mode anchors terms 2-4 on d1.
// Gradient keys: "S_p", "S_hn1", "S_hn2", "S_hn3", "S_n".
LossReport fine_loss(const SaliencyTrack& s_p, const SaliencyTrack& s_hn1,
                     const SaliencyTrack& s_hn2, const SaliencyTrack& s_hn3,
                     const SaliencyTrack& s_n, const SpanClips& span,
                     const FineConfig& cfg);

// Hinge arithmetic on a precomputed distance ladder (fixture hook).
double fine_loss_from_distances(const std::array<double, 5>& d,
                                const FineConfig& cfg);

// Interval generalized IoU in [-1, 1].
double giou_1d(const MomentSpan& a, const MomentSpan& b);

// lambda_l1 * (|dc| + |dw|) + lambda_giou * (1 - GIoU), gradients with
// respect to the predicted (center, width) under key "span_pred".
LossReport span_loss(const CenterWidth& gt, const CenterWidth& pred,
                     const BaseLossConfig& cfg);

// Mean over clips of -log(1 - squashed). Gradient key: "S_neg".
LossReport neg_pair_loss(const SaliencyTrack& s_neg);

// For r = 1..max_rank, -log( sum_pos e^{S/tau} / sum_all e^{S/tau} ) with
// X_pos^r = {rank >= r}. Levels with an empty side are skipped and recorded
// as zero-valued terms. Gradient key: "S".
LossReport contrastive_rank_loss(const SaliencyTrack& track,
                                 const std::vector<int>& ranks, double tau,
                                 int max_rank);

// L = base + alpha * coarse + beta * fine with merged term/gradient maps
// (components prefixed "base.", "cr.", "fr."). Throws NonFiniteTerm.
LossReport combine(const LossReport& base, const LossReport& coarse,
                   const LossReport& fine, double alpha, double beta);

}  // namespace shine
