#include "shine/evalkit.hpp"

#include <algorithm>
#include <cmath>

#include "shine/errors.hpp"

namespace shine {

namespace {

void check_span(const MomentSpan& s) {
  if (!std::isfinite(s.start) || !std::isfinite(s.end))
    throw Error(Errc::non_finite, "iou_1d: non-finite span bound");
  if (s.start > s.end)
    throw Error(Errc::degenerate_span, "iou_1d: start after end");
}

void check_pred_shape(const std::vector<std::vector<MomentSpan>>& preds,
                      const std::vector<MomentSpan>& gts, const char* who) {
  if (preds.empty())
    throw Error(Errc::empty_predictions,
                     std::string(who) + ": no queries");
  if (preds.size() != gts.size())
    throw Error(Errc::shape_mismatch,
                     std::string(who) + ": preds/gts size mismatch");
  for (const auto& p : preds)
    if (p.empty())
      throw Error(Errc::empty_predictions,
                       std::string(who) + ": query with no predictions");
}

void check_records(const std::vector<OrderingRecord>& records,
                   const char* who) {
  if (records.empty())
    throw Error(Errc::missing_track, std::string(who) + ": no records");
  for (const auto& r : records) {
    if (r.size() != 5)
      throw Error(Errc::missing_track,
                       std::string(who) + ": record needs all five tracks");
    for (double v : r)
      if (!std::isfinite(v))
        throw Error(Errc::non_finite,
                         std::string(who) + ": non-finite pooled value");
  }
}

}  // namespace

double iou_1d(const MomentSpan& a, const MomentSpan& b) {
  check_span(a);
  check_span(b);
  const double inter = std::min(a.end, b.end) -
                       std::max(a.start, b.start);
  const double uni = (a.end - a.start) + (b.end - b.start) -
                     std::max(inter, 0.0);
  if (uni <= 0.0) return a.start == b.start ? 1.0 : 0.0;
  return std::max(inter, 0.0) / uni;
}

double recall_at(const std::vector<std::vector<MomentSpan>>& preds,
                 const std::vector<MomentSpan>& gts, int n, double m) {
  check_pred_shape(preds, gts, "recall_at");
  if (n < 1)
    throw Error(Errc::config_error, "recall_at: n must be at least 1");
  if (!std::isfinite(m))
    throw Error(Errc::non_finite, "recall_at: non-finite threshold");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const std::size_t top = std::min<std::size_t>(n, preds[i].size());
    for (std::size_t r = 0; r < top; ++r) {
      if (iou_1d(preds[i][r], gts[i]) > m) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double mean_iou(const std::vector<std::vector<MomentSpan>>& preds,
                const std::vector<MomentSpan>& gts) {
  check_pred_shape(preds, gts, "mean_iou");
  double acc = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    acc += iou_1d(preds[i][0], gts[i]);
  return acc / static_cast<double>(preds.size());
}

double ordering_accuracy(const std::vector<OrderingRecord>& records) {
  check_records(records, "ordering_accuracy");
  std::size_t ok = 0;
  for (const auto& r : records) {
    bool strict = true;
    for (int i = 0; i + 1 < 5; ++i)
      if (!(r[i] > r[i + 1])) strict = false;
    if (strict) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(records.size());
}

double hierarchy_violation_rate(const std::vector<OrderingRecord>& records) {
  check_records(records, "hierarchy_violation_rate");
  std::size_t bad = 0;
  for (const auto& r : records)
    for (int i = 0; i + 1 < 5; ++i)
      if (!(r[i] > r[i + 1])) ++bad;
  return static_cast<double>(bad) / (4.0 * static_cast<double>(records.size()));
}

}  // namespace shine
