#include "shine/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace shine {

namespace {

void require_finite(double v, const char* where) {
  if (!std::isfinite(v)) {
    throw Error(Errc::non_finite, std::string(where) + " is not finite");
  }
}

void check_span(const SpanClips& span, int T) {
  if (span.begin < 0 || span.end > T || span.begin >= span.end) {
    throw Error(Errc::empty_span,
                "span [" + std::to_string(span.begin) + "," +
                    std::to_string(span.end) + ") invalid for T=" +
                    std::to_string(T));
  }
}

void check_same_length(const SaliencyTrack& a, const SaliencyTrack& b,
                       const char* name) {
  if (a.size() != b.size()) {
    throw Error(Errc::length_mismatch,
                std::string(name) + " has length " + std::to_string(b.size()) +
                    ", expected " + std::to_string(a.size()));
  }
}

double hinge(double arg) { return arg > 0.0 ? arg : 0.0; }

}  // namespace

double squash(double v) {
  double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                      : std::exp(v) / (1.0 + std::exp(v));
  return std::clamp(s, kSquashEps, 1.0 - kSquashEps);
}

double squash_deriv(double v) {
  double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                      : std::exp(v) / (1.0 + std::exp(v));
  if (s <= kSquashEps || s >= 1.0 - kSquashEps) return 0.0;
  return s * (1.0 - s);
}

SaliencyTrack make_track(std::vector<double> raw) {
  SaliencyTrack t;
  t.squashed.reserve(raw.size());
  for (double v : raw) {
    require_finite(v, "raw score");
    t.squashed.push_back(squash(v));
  }
  t.raw = std::move(raw);
  return t;
}

void LossReport::rename_grad(const std::string& from, const std::string& to) {
  auto it = grads.find(from);
  if (it == grads.end()) return;
  auto node = grads.extract(it);
  node.key() = to;
  grads.insert(std::move(node));
}

void LossReport::accumulate(const LossReport& other, double weight,
                            const std::string& prefix) {
  total += weight * other.total;
  for (const auto& [k, v] : other.terms) terms[prefix + k] += weight * v;
  for (const auto& [k, n] : other.notes) notes[prefix + k] = n;
  // Gradients merge by canonical input name so contributions from different
  // loss components sum on the same tensor.
  for (const auto& [k, g] : other.grads) {
    auto& dst = grads[k];
    if (dst.empty()) dst.assign(g.size(), 0.0);
    if (dst.size() != g.size()) {
      throw Error(Errc::shape_mismatch, "gradient '" + k + "' changed length");
    }
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += weight * g[i];
  }
}

PooledScore pooled_pos(const SaliencyTrack& track, const SpanClips& span,
                       int q) {
  if (q <= 0) throw Error(Errc::config_error, "pooling divisor q must be > 0");
  check_span(span, track.size());
  int t_pos = span.count();
  int k = std::max(1, t_pos / q);

  std::vector<int> idx(static_cast<std::size_t>(t_pos));
  std::iota(idx.begin(), idx.end(), span.begin);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (track.raw[a] != track.raw[b]) return track.raw[a] > track.raw[b];
    return a < b;
  });
  idx.resize(static_cast<std::size_t>(k));

  PooledScore out;
  out.k = k;
  out.positions = std::move(idx);
  double sum = 0.0;
  for (int i : out.positions) sum += track.raw[i];
  out.value = sum / k;
  return out;
}

MaxOutside max_outside(const SaliencyTrack& track, const SpanClips& span) {
  check_span(span, track.size());
  MaxOutside best;
  bool found = false;
  for (int i = 0; i < track.size(); ++i) {
    if (span.contains(i)) continue;
    if (!found || track.raw[i] > best.value) {
      best.value = track.raw[i];
      best.index = i;
      found = true;
    }
  }
  if (!found) {
    throw Error(Errc::no_outside_clips, "span covers every clip");
  }
  return best;
}

LossReport coarse_loss(const SaliencyTrack& s_p, const SaliencyTrack& s_n,
                       const SpanClips& span, const CoarseConfig& cfg) {
  check_same_length(s_p, s_n, "negative track");
  check_span(span, s_p.size());

  LossReport rep;
  std::vector<double> g_p(s_p.raw.size(), 0.0);
  std::vector<double> g_n(s_n.raw.size(), 0.0);

  PooledScore pp = pooled_pos(s_p, span, cfg.q);
  rep.notes["k"] = pp.k;

  if (cfg.use_intra) {
    if (span.count() == s_p.size()) {
      // No outside clips: the intra hinge has no reference, skip it.
      rep.terms["intra"] = 0.0;
      rep.notes["intra_skipped"] = 1.0;
    } else {
      MaxOutside mo = max_outside(s_p, span);
      double arg = cfg.h1 + mo.value - pp.value;
      double val = hinge(arg);
      rep.terms["intra"] = val;
      if (arg > 0.0) {
        g_p[mo.index] += 1.0;
        for (int i : pp.positions) g_p[i] -= 1.0 / pp.k;
      }
    }
  }

  if (cfg.use_inter) {
    PooledScore pn = pooled_pos(s_n, span, cfg.q);
    double arg = cfg.h2 + pn.value - pp.value;
    double val = hinge(arg);
    rep.terms["inter"] = val;
    if (arg > 0.0) {
      for (int i : pn.positions) g_n[i] += 1.0 / pn.k;
      for (int i : pp.positions) g_p[i] -= 1.0 / pp.k;
    }
  }

  rep.grads["S_p"] = std::move(g_p);
  rep.grads["S_n"] = std::move(g_n);
  for (const auto& [k, v] : rep.terms) rep.total += v;
  return rep;
}

std::vector<double> pseudo_label(const SpanClips& span, int T) {
  check_span(span, T);
  std::vector<double> y(static_cast<std::size_t>(T), 0.0);
  for (int i = span.begin; i < span.end; ++i) y[i] = 1.0;
  return y;
}

double nll_distance(const std::vector<double>& y,
                    const std::vector<double>& y_hat) {
  if (y.size() != y_hat.size()) {
    throw Error(Errc::length_mismatch,
                "distance over tracks of length " + std::to_string(y.size()) +
                    " and " + std::to_string(y_hat.size()));
  }
  if (y.empty()) throw Error(Errc::empty_span, "distance over empty tracks");
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 0.0) continue;  // masked position, contributes exactly 0
    if (y_hat[i] <= 0.0) {
      throw Error(Errc::non_finite, "log of non-positive prediction");
    }
    sum += y[i] * std::log(y_hat[i]);
  }
  return -sum / static_cast<double>(y.size());
}

double fine_loss_from_distances(const std::array<double, 5>& d,
                                const FineConfig& cfg) {
  double total = 0.0;
  for (int j = 0; j < 4; ++j) {
    if (!cfg.active[j]) continue;
    double lhs = (cfg.mode == FineMode::absolute && j >= 1) ? d[1] : d[j];
    total += hinge(cfg.margins[j] + lhs - d[j + 1]);
  }
  return total;
}

LossReport fine_loss(const SaliencyTrack& s_p, const SaliencyTrack& s_hn1,
                     const SaliencyTrack& s_hn2, const SaliencyTrack& s_hn3,
                     const SaliencyTrack& s_n, const SpanClips& span,
                     const FineConfig& cfg) {
  const SaliencyTrack* preds[4] = {&s_hn1, &s_hn2, &s_hn3, &s_n};
  check_same_length(s_p, s_hn1, "hn1 track");
  check_same_length(s_p, s_hn2, "hn2 track");
  check_same_length(s_p, s_hn3, "hn3 track");
  check_same_length(s_p, s_n, "negative track");
  const int T = s_p.size();
  check_span(span, T);
  for (double m : cfg.margins) {
    if (!(m >= 0.0)) throw Error(Errc::config_error, "negative fine margin");
  }

  std::vector<double> y = pseudo_label(span, T);
  const std::vector<double>& p = s_p.squashed;

  std::array<double, 5> d{};
  d[0] = nll_distance(y, p);
  for (int j = 1; j <= 4; ++j) d[j] = nll_distance(p, preds[j - 1]->squashed);

  // Hinge activity and the resulting d-coefficients. coef[j] = dL/dd[j].
  std::array<double, 4> args{};
  std::array<bool, 4> on{};
  for (int j = 0; j < 4; ++j) {
    double lhs = (cfg.mode == FineMode::absolute && j >= 1) ? d[1] : d[j];
    args[j] = cfg.margins[j] + lhs - d[j + 1];
    on[j] = cfg.active[j] && args[j] > 0.0;
  }
  std::array<double, 5> coef{};
  for (int j = 0; j < 4; ++j) {
    if (!on[j]) continue;
    coef[j + 1] -= 1.0;
    if (cfg.mode == FineMode::absolute && j >= 1) {
      coef[1] += 1.0;
    } else {
      coef[j] += 1.0;
    }
  }

  LossReport rep;
  for (int j = 0; j < 4; ++j) {
    rep.terms["fr" + std::to_string(j)] =
        cfg.active[j] ? hinge(args[j]) : 0.0;
    rep.notes["d" + std::to_string(j)] = d[j];
  }
  rep.notes["d4"] = d[4];
  for (const auto& [k, v] : rep.terms) rep.total += v;

  // Gradients in squashed space, then chained to raw.
  std::vector<double> gp(p.size(), 0.0);
  const double inv_t = 1.0 / static_cast<double>(T);
  if (coef[0] != 0.0) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (y[i] != 0.0) gp[i] += coef[0] * (-inv_t * y[i] / p[i]);
    }
  }
  std::array<std::vector<double>, 4> gt;
  for (int j = 1; j <= 4; ++j) {
    const std::vector<double>& t = preds[j - 1]->squashed;
    gt[j - 1].assign(t.size(), 0.0);
    if (coef[j] == 0.0) continue;
    for (std::size_t i = 0; i < t.size(); ++i) {
      gt[j - 1][i] = coef[j] * (-inv_t * p[i] / t[i]);
      if (!cfg.detach_observation) {
        gp[i] += coef[j] * (-inv_t * std::log(t[i]));
      }
    }
  }

  auto chain = [](const SaliencyTrack& tr, std::vector<double>& g) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] *= squash_deriv(tr.raw[i]);
    }
  };
  chain(s_p, gp);
  for (int j = 0; j < 4; ++j) chain(*preds[j], gt[j]);

  rep.grads["S_p"] = std::move(gp);
  rep.grads["S_hn1"] = std::move(gt[0]);
  rep.grads["S_hn2"] = std::move(gt[1]);
  rep.grads["S_hn3"] = std::move(gt[2]);
  rep.grads["S_n"] = std::move(gt[3]);
  return rep;
}

double giou_1d(const MomentSpan& a, const MomentSpan& b) {
  if (a.length() < 0.0 || b.length() < 0.0) {
    throw Error(Errc::degenerate_span, "negative-length span");
  }
  double inter = std::max(0.0, std::min(a.end, b.end) -
                                   std::max(a.start, b.start));
  double uni = a.length() + b.length() - inter;
  double hull = std::max(a.end, b.end) - std::min(a.start, b.start);
  if (uni <= 0.0 || hull <= 0.0) {
    throw Error(Errc::degenerate_span, "both spans have zero length");
  }
  return inter / uni - (hull - uni) / hull;
}

LossReport span_loss(const CenterWidth& gt, const CenterWidth& pred,
                     const BaseLossConfig& cfg) {
  if (gt.width <= 0.0 || pred.width <= 0.0) {
    throw Error(Errc::degenerate_span, "span width must be positive");
  }
  double dc = pred.center - gt.center;
  double dw = pred.width - gt.width;
  double sgn_c = dc > 0.0 ? 1.0 : (dc < 0.0 ? -1.0 : 0.0);
  double sgn_w = dw > 0.0 ? 1.0 : (dw < 0.0 ? -1.0 : 0.0);

  MomentSpan a = from_center_width(pred);
  MomentSpan b = from_center_width(gt);
  double inter = std::max(0.0, std::min(a.end, b.end) -
                                   std::max(a.start, b.start));
  double uni = a.length() + b.length() - inter;
  double hull = std::max(a.end, b.end) - std::min(a.start, b.start);
  double g = inter / uni - (hull - uni) / hull;

  // Partials with respect to the predicted endpoints; giou = I/U - 1 + U/H.
  double di_ds = 0.0, di_de = 0.0;
  if (inter > 0.0) {
    di_ds = (a.start >= b.start) ? -1.0 : 0.0;
    di_de = (a.end <= b.end) ? 1.0 : 0.0;
  }
  double du_ds = -1.0 - di_ds;
  double du_de = 1.0 - di_de;
  double dh_ds = (a.start <= b.start) ? -1.0 : 0.0;
  double dh_de = (a.end >= b.end) ? 1.0 : 0.0;

  auto dg = [&](double di, double du, double dh) {
    return (di * uni - inter * du) / (uni * uni) +
           (du * hull - uni * dh) / (hull * hull);
  };
  double dg_ds = dg(di_ds, du_ds, dh_ds);
  double dg_de = dg(di_de, du_de, dh_de);
  // start = c - w/2, end = c + w/2.
  double dg_dc = dg_ds + dg_de;
  double dg_dw = 0.5 * (dg_de - dg_ds);

  LossReport rep;
  rep.terms["span_l1"] = cfg.lambda_l1 * (std::abs(dc) + std::abs(dw));
  rep.terms["span_giou"] = cfg.lambda_giou * (1.0 - g);
  rep.total = rep.terms["span_l1"] + rep.terms["span_giou"];
  rep.notes["giou"] = g;
  rep.grads["span_pred"] = {cfg.lambda_l1 * sgn_c - cfg.lambda_giou * dg_dc,
                            cfg.lambda_l1 * sgn_w - cfg.lambda_giou * dg_dw};
  return rep;
}

LossReport neg_pair_loss(const SaliencyTrack& s_neg) {
  if (s_neg.size() == 0) {
    throw Error(Errc::empty_span, "negative-pair loss over empty track");
  }
  const int T = s_neg.size();
  LossReport rep;
  std::vector<double> g(s_neg.raw.size(), 0.0);
  double sum = 0.0;
  for (int i = 0; i < T; ++i) {
    double s = s_neg.squashed[i];
    sum += -std::log(1.0 - s);
    g[i] = (1.0 / (T * (1.0 - s))) * squash_deriv(s_neg.raw[i]);
  }
  rep.terms["neg_pair"] = sum / T;
  rep.total = rep.terms["neg_pair"];
  rep.grads["S_neg"] = std::move(g);
  return rep;
}

LossReport contrastive_rank_loss(const SaliencyTrack& track,
                                 const std::vector<int>& ranks, double tau,
                                 int max_rank) {
  if (track.size() == 0) {
    throw Error(Errc::empty_span, "contrastive loss over empty track");
  }
  if (static_cast<int>(ranks.size()) != track.size()) {
    throw Error(Errc::length_mismatch, "rank labels do not match track");
  }
  if (tau <= 0.0) throw Error(Errc::config_error, "tau must be > 0");
  if (max_rank < 1) throw Error(Errc::config_error, "max_rank must be >= 1");
  for (int r : ranks) {
    if (r < 0 || r > max_rank) {
      throw Error(Errc::config_error,
                  "rank label " + std::to_string(r) + " outside [0," +
                      std::to_string(max_rank) + "]");
    }
  }

  const std::size_t n = track.raw.size();
  LossReport rep;
  std::vector<double> g(n, 0.0);

  double zmax = *std::max_element(track.raw.begin(), track.raw.end()) / tau;
  std::vector<double> e(n);
  double sum_all = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    e[i] = std::exp(track.raw[i] / tau - zmax);
    sum_all += e[i];
  }

  for (int r = 1; r <= max_rank; ++r) {
    double sum_pos = 0.0;
    int n_pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (ranks[i] >= r) {
        sum_pos += e[i];
        ++n_pos;
      }
    }
    std::string key = "cont_r" + std::to_string(r);
    if (n_pos == 0 || n_pos == static_cast<int>(n)) {
      rep.terms[key] = 0.0;
      rep.notes[key + "_skipped"] = 1.0;
      continue;
    }
    rep.terms[key] = std::log(sum_all) - std::log(sum_pos);
    for (std::size_t i = 0; i < n; ++i) {
      double d = e[i] / sum_all;
      if (ranks[i] >= r) d -= e[i] / sum_pos;
      g[i] += d / tau;
    }
  }

  for (const auto& [k, v] : rep.terms) rep.total += v;
  rep.grads["S"] = std::move(g);
  return rep;
}

LossReport combine(const LossReport& base, const LossReport& coarse,
                   const LossReport& fine, double alpha, double beta) {
  auto check_report = [](const LossReport& r, const char* name) {
    require_finite(r.total, name);
    for (const auto& [k, v] : r.terms) require_finite(v, (k).c_str());
    for (const auto& [k, g] : r.grads) {
      for (double v : g) require_finite(v, (k).c_str());
    }
  };
  check_report(base, "base total");
  check_report(coarse, "coarse total");
  check_report(fine, "fine total");
  require_finite(alpha, "alpha");
  require_finite(beta, "beta");

  LossReport rep;
  rep.accumulate(base, 1.0, "base.");
  rep.accumulate(coarse, alpha, "cr.");
  rep.accumulate(fine, beta, "fr.");
  return rep;
}

}  // namespace shine
