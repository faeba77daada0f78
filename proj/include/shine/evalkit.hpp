#pragma once
// Retrieval metrics and saliency-ordering diagnostics: interval IoU,
// R@n with an IoU threshold, mean IoU, and the five-track hierarchy
// checks used to monitor training.

#include <vector>

#include "shine/corpus.hpp"

namespace shine {

struct SplitMetrics {
  double r1_at_05 = 0.0;
  double r1_at_07 = 0.0;
  double mean_iou = 0.0;
  double ordering_accuracy = 0.0;
  double hierarchy_violation_rate = 0.0;
};

// Intersection over union of two intervals; 0 for disjoint spans.
double iou_1d(const MomentSpan& a, const MomentSpan& b);

// Fraction of queries whose top-n predictions contain at least one span
// with IoU strictly greater than m. preds[i] is ranked best-first and
// must be non-empty.
double recall_at(const std::vector<std::vector<MomentSpan>>& preds,
                 const std::vector<MomentSpan>& gts, int n, double m);

// Mean IoU of each query's top-1 prediction against its ground truth.
double mean_iou(const std::vector<std::vector<MomentSpan>>& preds,
                const std::vector<MomentSpan>& gts);

// One record per sample: pooled in-span means for the positive query,
// the three hard negatives, and the easy negative, in that order.
using OrderingRecord = std::vector<double>;

// Fraction of records whose five pooled values decrease strictly; any
// tie counts as a violation.
double ordering_accuracy(const std::vector<OrderingRecord>& records);

// Fraction of the four adjacent pairs per record that are out of order
// (ties included); 0 exactly when ordering_accuracy is 1.
double hierarchy_violation_rate(const std::vector<OrderingRecord>& records);

}  // namespace shine
