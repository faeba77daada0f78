#pragma once
// Bipartite matching of predicted moments to ground-truth spans. The cost
// matrix reuses the base loss weights; the solver is a Hungarian assignment
// with a deterministic lexicographic tie-break.

#include <utility>
#include <vector>

#include "shine/corpus.hpp"
#include "shine/errors.hpp"
#include "shine/loss.hpp"

namespace shine {

struct MomentPrediction {
  CenterWidth span;
  double p_foreground = 0.5;
  double p_background = 0.5;
};

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (prediction, ground truth)
  double total_cost = 0.0;
};

// cost[i][j] = lambda_cls * (-p_fg_i) + lambda_l1 * L1(span_i, gt_j)
//            + lambda_giou * (1 - GIoU(span_i, gt_j)).
std::vector<std::vector<double>> match_cost(
    const std::vector<MomentPrediction>& preds,
    const std::vector<MomentSpan>& gts, const BaseLossConfig& cfg);

// Minimum-total-cost one-to-one assignment of size min(rows, cols); ties
// resolve to the lexicographically smallest pair list.
Assignment solve(const std::vector<std::vector<double>>& cost);

}  // namespace shine
