#include "shine/toymodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <numeric>
#include <sstream>
#include <utility>

#include "json.hpp"
#include "shine/errors.hpp"
#include "shine/kernels.hpp"
#include "shine/negforge.hpp"
#include "shine/rng.hpp"
#include "shine/tagger.hpp"

namespace shine {

namespace {

using nlohmann::json;

constexpr int kCheckpointVersion = 1;

void require(bool ok, Errc code, const std::string& msg) {
  if (!ok) throw Error(code, msg);
}

std::size_t idx2(std::size_t row, std::size_t col, std::size_t cols) {
  return row * cols + col;
}

double init_scale(const ModelConfig& cfg, const std::string& name) {
  if (name == "token_table") return 0.5;
  if (name == "w_s") return 1.0 / std::sqrt(double(cfg.d_v + cfg.d_e));
  if (name == "u_s" || name == "queries")
    return 1.0 / std::sqrt(double(cfg.d_h));
  if (name == "w_span" || name == "w_cls")
    return 1.0 / std::sqrt(double(cfg.d_h + cfg.d_e));
  return 0.0;  // biases start at zero
}

std::vector<int> array_shape(const ModelConfig& c, const std::string& name) {
  if (name == "token_table") return {c.vocab_size, c.d_e};
  if (name == "w_s") return {c.d_h, c.d_v + c.d_e};
  if (name == "b_s" || name == "u_s") return {c.d_h};
  if (name == "b_sal") return {1};
  if (name == "queries") return {c.n_queries, c.d_h};
  if (name == "w_span" || name == "w_cls") return {2, c.d_h + c.d_e};
  return {2};  // b_span, b_cls
}

template <class Fn>
void zip_arrays(ModelParams& a, const ModelParams& b, Fn&& fn) {
  fn(a.token_table, b.token_table);
  fn(a.w_s, b.w_s);
  fn(a.b_s, b.b_s);
  fn(a.u_s, b.u_s);
  fn(a.b_sal, b.b_sal);
  fn(a.queries, b.queries);
  fn(a.w_span, b.w_span);
  fn(a.b_span, b.b_span);
  fn(a.w_cls, b.w_cls);
  fn(a.b_cls, b.b_cls);
}

struct PassBundle {
  ForwardOutput pos, hn1, hn2, hn3, easy;
};

SampleLoss assemble_loss(const ModelParams& params, const SampleInput& s,
                         const std::vector<int>& easy_ids,
                         const LossSettings& cfg, PassBundle* passes_out) {
  const int n_q = params.cfg.n_queries;
  const int t_clips = static_cast<int>(s.clip_features.size());

  PassBundle local;
  PassBundle& b = passes_out ? *passes_out : local;
  const TrunkShared trunk = make_trunk_shared(params, s.clip_features);
  b.pos = forward(params, s.clip_features, s.positive_ids, true, &trunk);
  // Only the fine loss reads the hierarchical tracks; skipping their
  // passes roughly halves a base-only or coarse-only training step.
  if (cfg.use_fine) {
    b.hn1 = forward(params, s.clip_features, s.negative_ids[0], false, &trunk);
    b.hn2 = forward(params, s.clip_features, s.negative_ids[1], false, &trunk);
    b.hn3 = forward(params, s.clip_features, s.negative_ids[2], false, &trunk);
  }
  b.easy = forward(params, s.clip_features, easy_ids, false, &trunk);

  LossReport base;

  // Matched span regression; the assignment is a constant of the
  // backward pass.
  const std::vector<MomentSpan> gts = {s.gt_norm};
  Assignment asg = solve(match_cost(b.pos.spans, gts, cfg.base));
  const CenterWidth gt_cw = to_center_width(s.gt_norm);
  std::vector<char> matched(n_q, 0);
  for (const auto& pr : asg.pairs) {
    matched[pr.first] = 1;
    LossReport sl = span_loss(gt_cw, b.pos.spans[pr.first].span, cfg.base);
    sl.rename_grad("span_pred", "span_q" + std::to_string(pr.first));
    base.accumulate(sl);
  }

  // Classification: matched queries are foreground (class 0), the rest
  // background; mean cross-entropy over the N queries.
  const double wc = cfg.base.lambda_cls / n_q;
  double ce = 0.0;
  for (int j = 0; j < n_q; ++j) {
    const int target = matched[j] ? 0 : 1;
    const double* prob = &b.pos.cache.cls_prob[2 * j];
    ce += -std::log(prob[target]);
    base.grads["cls_q" + std::to_string(j)] = {
        wc * (prob[0] - (target == 0 ? 1.0 : 0.0)),
        wc * (prob[1] - (target == 1 ? 1.0 : 0.0))};
  }
  base.terms["cls"] += wc * ce;
  base.total += wc * ce;

  LossReport np = neg_pair_loss(b.easy.saliency);
  np.rename_grad("S_neg", "S_n");
  base.accumulate(np, cfg.base.lambda_neg);

  if (!cfg.replace_saliency) {
    std::vector<int> ranks(t_clips, 0);
    for (int t = s.span.begin; t < s.span.end; ++t) ranks[t] = 1;
    LossReport ct = contrastive_rank_loss(b.pos.saliency, ranks,
                                          cfg.base.tau, cfg.base.max_rank);
    ct.rename_grad("S", "S_p");
    base.accumulate(ct, cfg.base.lambda_cont);
  }

  LossReport cr, fr;
  if (cfg.use_coarse)
    cr = coarse_loss(b.pos.saliency, b.easy.saliency, s.span, cfg.coarse);
  if (cfg.use_fine)
    fr = fine_loss(b.pos.saliency, b.hn1.saliency, b.hn2.saliency,
                   b.hn3.saliency, b.easy.saliency, s.span, cfg.fine);

  SampleLoss out;
  out.report = combine(base, cr, fr, cfg.alpha, cfg.beta);
  out.assignment = std::move(asg);
  return out;
}

// Reverse-mode through one forward pass. gsal holds d total / d raw
// saliency; gy and gc hold per-query span and class logit gradients
// (already chained through squash where needed). Null pointers mean the
// corresponding outputs are unused.
void backprop_pass(const ModelParams& params, const ForwardOutput& f,
                   const std::vector<double>* gsal,
                   const std::vector<std::array<double, 2>>* gy,
                   const std::vector<std::array<double, 2>>* gc,
                   Gradients& g) {
  const ModelConfig& cfg = params.cfg;
  const ForwardCache& c = f.cache;
  const int t_clips = c.t_clips;
  const int dh = cfg.d_h, de = cfg.d_e;
  const int din = cfg.d_v + cfg.d_e;
  const int dpe_n = dh + de;

  std::vector<double> dh_buf(std::size_t(t_clips) * dh, 0.0);
  std::vector<double> de_acc(de, 0.0);
  bool any = false;

  if (gsal) {
    for (int t = 0; t < t_clips; ++t) {
      const double gv = (*gsal)[t];
      if (gv == 0.0) continue;
      any = true;
      simd::axpy(gv, &c.h[std::size_t(t) * dh], g.u_s.data(), dh);
      g.b_sal[0] += gv;
      simd::axpy(gv, params.u_s.data(), &dh_buf[std::size_t(t) * dh], dh);
    }
  }

  if (gy || gc) {
    std::vector<double> dpe(dpe_n), da(t_clips), dl(t_clips);
    for (int j = 0; j < cfg.n_queries; ++j) {
      const std::array<double, 2> zy =
          gy ? (*gy)[j] : std::array<double, 2>{0.0, 0.0};
      const std::array<double, 2> zc =
          gc ? (*gc)[j] : std::array<double, 2>{0.0, 0.0};
      const bool has_y = zy[0] != 0.0 || zy[1] != 0.0;
      const bool has_c = zc[0] != 0.0 || zc[1] != 0.0;
      if (!has_y && !has_c) continue;
      any = true;
      std::fill(dpe.begin(), dpe.end(), 0.0);
      const double* pe = &c.pe[std::size_t(j) * dpe_n];
      if (has_y) {
        simd::matvec_t_acc(params.w_span.data(), 2, dpe_n, zy.data(),
                           dpe.data());
        simd::ger_acc(1.0, zy.data(), 2, pe, dpe_n, g.w_span.data());
        g.b_span[0] += zy[0];
        g.b_span[1] += zy[1];
      }
      if (has_c) {
        simd::matvec_t_acc(params.w_cls.data(), 2, dpe_n, zc.data(),
                           dpe.data());
        simd::ger_acc(1.0, zc.data(), 2, pe, dpe_n, g.w_cls.data());
        g.b_cls[0] += zc[0];
        g.b_cls[1] += zc[1];
      }
      simd::axpy(1.0, dpe.data() + dh, de_acc.data(), de);
      const double* dp = dpe.data();
      const double* attn = &c.attn[std::size_t(j) * t_clips];
      double mixed = 0.0;
      for (int t = 0; t < t_clips; ++t) {
        da[t] = simd::dot(dp, &c.h[std::size_t(t) * dh], dh);
        simd::axpy(attn[t], dp, &dh_buf[std::size_t(t) * dh], dh);
        mixed += attn[t] * da[t];
      }
      for (int t = 0; t < t_clips; ++t) {
        dl[t] = attn[t] * (da[t] - mixed);
        if (dl[t] == 0.0) continue;
        simd::axpy(dl[t], &c.h[std::size_t(t) * dh],
                   &g.queries[std::size_t(j) * dh], dh);
        simd::axpy(dl[t], &params.queries[std::size_t(j) * dh],
                   &dh_buf[std::size_t(t) * dh], dh);
      }
    }
  }

  if (!any) return;

  // W_s rows are [clip columns | embedding columns]. The embedding is
  // constant across clips, so its contribution collapses to one rank-1 on
  // the summed dz; only the clip side needs a per-clip update, taken in a
  // contiguous scratch block and folded into the strided rows afterwards.
  std::vector<double> dz(dh), dz_sum(dh, 0.0);
  std::vector<double> gwx(std::size_t(dh) * cfg.d_v, 0.0);
  bool any_clip = false;
  for (int t = 0; t < t_clips; ++t) {
    const double* hrow = &c.h[std::size_t(t) * dh];
    const double* drow = &dh_buf[std::size_t(t) * dh];
    bool nonzero = false;
    for (int k = 0; k < dh; ++k)
      if (drow[k] != 0.0) {
        nonzero = true;
        break;
      }
    if (!nonzero) continue;
    any_clip = true;
    for (int k = 0; k < dh; ++k) dz[k] = drow[k] * (1.0 - hrow[k] * hrow[k]);
    simd::ger_acc(1.0, dz.data(), dh, &c.xe[std::size_t(t) * din], cfg.d_v,
                  gwx.data());
    simd::axpy(1.0, dz.data(), g.b_s.data(), dh);
    simd::axpy(1.0, dz.data(), dz_sum.data(), dh);
  }
  if (any_clip) {
    for (int r = 0; r < dh; ++r) {
      simd::axpy(1.0, &gwx[std::size_t(r) * cfg.d_v],
                 &g.w_s[std::size_t(r) * din], cfg.d_v);
      simd::axpy(dz_sum[r], c.e.data(), &g.w_s[std::size_t(r) * din + cfg.d_v],
                 de);
    }
  }

  // The clip-feature side of d xe is discarded; only the query embedding
  // flows back. W_s is shared across clips, so the summed dz covers every
  // t; slice the embedding columns straight out of each row.
  for (int r = 0; r < dh; ++r)
    simd::axpy(dz_sum[r], &params.w_s[std::size_t(r) * din + cfg.d_v],
               de_acc.data(), de);

  const double inv_n = 1.0 / double(c.token_ids.size());
  for (int id : c.token_ids)
    simd::axpy(inv_n, de_acc.data(), &g.token_table[idx2(id, 0, de)], de);
}

json metrics_json(const std::map<Split, SplitMetrics>& mets) {
  json out = json::object();
  for (const auto& [split, m] : mets) {
    out[split_name(split)] = {{"r1_at_0.5", m.r1_at_05},
                              {"r1_at_0.7", m.r1_at_07},
                              {"mean_iou", m.mean_iou},
                              {"ordering_accuracy", m.ordering_accuracy},
                              {"hierarchy_violation_rate",
                               m.hierarchy_violation_rate}};
  }
  return out;
}

}  // namespace

ModelParams zeros_like(const ModelConfig& cfg) {
  require(cfg.d_v > 0 && cfg.d_e > 0 && cfg.d_h > 0 && cfg.n_queries > 0 &&
              cfg.vocab_size > 0,
          Errc::config_error, "model config: all dimensions must be positive");
  ModelParams p;
  p.cfg = cfg;
  p.token_table.assign(std::size_t(cfg.vocab_size) * cfg.d_e, 0.0);
  p.w_s.assign(std::size_t(cfg.d_h) * (cfg.d_v + cfg.d_e), 0.0);
  p.b_s.assign(cfg.d_h, 0.0);
  p.u_s.assign(cfg.d_h, 0.0);
  p.b_sal.assign(1, 0.0);
  p.queries.assign(std::size_t(cfg.n_queries) * cfg.d_h, 0.0);
  p.w_span.assign(2 * std::size_t(cfg.d_h + cfg.d_e), 0.0);
  p.b_span.assign(2, 0.0);
  p.w_cls.assign(2 * std::size_t(cfg.d_h + cfg.d_e), 0.0);
  p.b_cls.assign(2, 0.0);
  return p;
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams p = zeros_like(cfg);
  Rng root(seed);
  int stream = 0;
  for_each_array(p, [&](const char* name, std::vector<double>& a) {
    Rng r = root.fork(++stream);
    const double s = init_scale(cfg, name);
    if (s == 0.0) return;
    for (double& v : a) v = r.normal() * s;
  });
  return p;
}

TokenVocab TokenVocab::from_synth(const SynthVocab& vocab) {
  TokenVocab tv;
  auto add = [&tv](const std::string& w) {
    if (tv.index.count(w)) return;
    tv.index.emplace(w, static_cast<int>(tv.words.size()));
    tv.words.push_back(w);
  };
  add("person");
  add("the");
  for (const auto& cls : vocab.words)
    for (const auto& w : cls) add(w);
  return tv;
}

int TokenVocab::id(const std::string& word) const {
  auto it = index.find(word);
  if (it == index.end())
    throw Error(Errc::unknown_token, "token vocab: unknown word '" + word + "'");
  return it->second;
}

std::vector<int> TokenVocab::encode(
    const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

TrunkShared make_trunk_shared(
    const ModelParams& params,
    const std::vector<std::vector<double>>& clip_features) {
  const ModelConfig& cfg = params.cfg;
  const int t_clips = static_cast<int>(clip_features.size());
  const int din = cfg.d_v + cfg.d_e;
  const int dh = cfg.d_h;
  for (const auto& row : clip_features)
    require(static_cast<int>(row.size()) == cfg.d_v, Errc::shape_mismatch,
            "trunk: clip feature width does not match d_v");
  TrunkShared ts;
  ts.t_clips = t_clips;
  ts.zx.assign(std::size_t(t_clips) * dh, 0.0);
  for (int t = 0; t < t_clips; ++t) {
    double* zrow = &ts.zx[std::size_t(t) * dh];
    for (int r = 0; r < dh; ++r)
      zrow[r] = simd::dot(&params.w_s[std::size_t(r) * din],
                          clip_features[t].data(), cfg.d_v) +
                params.b_s[r];
  }
  return ts;
}

ForwardOutput forward(const ModelParams& params,
                      const std::vector<std::vector<double>>& clip_features,
                      const std::vector<int>& token_ids, bool with_heads,
                      const TrunkShared* shared) {
  const ModelConfig& cfg = params.cfg;
  const int t_clips = static_cast<int>(clip_features.size());
  require(t_clips >= 2, Errc::shape_mismatch, "forward: need at least 2 clips");
  for (const auto& row : clip_features)
    require(static_cast<int>(row.size()) == cfg.d_v, Errc::shape_mismatch,
            "forward: clip feature width does not match d_v");
  require(!token_ids.empty(), Errc::shape_mismatch, "forward: empty query");
  for (int id : token_ids)
    require(id >= 0 && id < cfg.vocab_size, Errc::unknown_token,
            "forward: token id out of range");

  const int din = cfg.d_v + cfg.d_e;
  const int dh = cfg.d_h, de = cfg.d_e;

  TrunkShared local_trunk;
  if (!shared) {
    local_trunk = make_trunk_shared(params, clip_features);
    shared = &local_trunk;
  }
  require(shared->t_clips == t_clips, Errc::shape_mismatch,
          "forward: shared trunk clip count does not match");

  ForwardCache c;
  c.t_clips = t_clips;
  c.token_ids = token_ids;
  c.with_heads = with_heads;

  c.e.assign(de, 0.0);
  for (int id : token_ids)
    simd::axpy(1.0, &params.token_table[idx2(id, 0, de)], c.e.data(), de);
  const double inv_n = 1.0 / double(token_ids.size());
  for (double& v : c.e) v *= inv_n;

  c.xe.assign(std::size_t(t_clips) * din, 0.0);
  for (int t = 0; t < t_clips; ++t) {
    double* row = &c.xe[std::size_t(t) * din];
    std::copy(clip_features[t].begin(), clip_features[t].end(), row);
    std::copy(c.e.begin(), c.e.end(), row + cfg.d_v);
  }

  // Query-side trunk offset: ze = W_s[:, d_v:] e, constant across clips.
  std::vector<double> ze(dh);
  for (int r = 0; r < dh; ++r)
    ze[r] = simd::dot(&params.w_s[std::size_t(r) * din + cfg.d_v], c.e.data(),
                      de);

  c.h.assign(std::size_t(t_clips) * dh, 0.0);
  std::vector<double> z(dh);
  for (int t = 0; t < t_clips; ++t) {
    const double* zx = &shared->zx[std::size_t(t) * dh];
    for (int r = 0; r < dh; ++r) z[r] = zx[r] + ze[r];
    simd::tanh_map(z.data(), &c.h[std::size_t(t) * dh], dh);
  }

  std::vector<double> raw(t_clips);
  for (int t = 0; t < t_clips; ++t)
    raw[t] = simd::dot(params.u_s.data(), &c.h[std::size_t(t) * dh], dh) +
             params.b_sal[0];

  ForwardOutput out;
  out.saliency = make_track(std::move(raw));

  if (with_heads) {
    const int n_q = cfg.n_queries;
    const int dpe_n = dh + de;
    c.attn.assign(std::size_t(n_q) * t_clips, 0.0);
    c.pooled.assign(std::size_t(n_q) * dh, 0.0);
    c.pe.assign(std::size_t(n_q) * dpe_n, 0.0);
    c.span_logits.assign(std::size_t(n_q) * 2, 0.0);
    c.cls_logits.assign(std::size_t(n_q) * 2, 0.0);
    c.cls_prob.assign(std::size_t(n_q) * 2, 0.0);
    out.spans.reserve(n_q);
    std::vector<double> logits(t_clips);
    for (int j = 0; j < n_q; ++j) {
      const double* q = &params.queries[std::size_t(j) * dh];
      for (int t = 0; t < t_clips; ++t)
        logits[t] = simd::dot(q, &c.h[std::size_t(t) * dh], dh);
      const double peak = simd::max_value(logits.data(), t_clips);
      double* attn = &c.attn[std::size_t(j) * t_clips];
      double denom = 0.0;
      for (int t = 0; t < t_clips; ++t) {
        attn[t] = std::exp(logits[t] - peak);
        denom += attn[t];
      }
      for (int t = 0; t < t_clips; ++t) attn[t] /= denom;

      double* pooled = &c.pooled[std::size_t(j) * dh];
      for (int t = 0; t < t_clips; ++t)
        simd::axpy(attn[t], &c.h[std::size_t(t) * dh], pooled, dh);

      double* pe = &c.pe[std::size_t(j) * dpe_n];
      std::copy(pooled, pooled + dh, pe);
      std::copy(c.e.begin(), c.e.end(), pe + dh);

      double* ylog = &c.span_logits[std::size_t(j) * 2];
      simd::matvec(params.w_span.data(), 2, dpe_n, pe, params.b_span.data(),
                   ylog);
      double* clog = &c.cls_logits[std::size_t(j) * 2];
      simd::matvec(params.w_cls.data(), 2, dpe_n, pe, params.b_cls.data(),
                   clog);
      double* prob = &c.cls_prob[std::size_t(j) * 2];
      const double cpeak = std::max(clog[0], clog[1]);
      prob[0] = std::exp(clog[0] - cpeak);
      prob[1] = std::exp(clog[1] - cpeak);
      const double csum = prob[0] + prob[1];
      prob[0] /= csum;
      prob[1] /= csum;

      MomentPrediction mp;
      mp.span = CenterWidth{squash(ylog[0]), squash(ylog[1])};
      mp.p_foreground = prob[0];
      mp.p_background = prob[1];
      out.spans.push_back(mp);
    }
  }

  out.cache = std::move(c);
  return out;
}

SampleLoss compute_sample_loss(const ModelParams& params,
                               const SampleInput& sample,
                               const std::vector<int>& easy_ids,
                               const LossSettings& cfg) {
  return assemble_loss(params, sample, easy_ids, cfg, nullptr);
}

BatchGrads backward(const ModelParams& params,
                    const std::vector<BatchItem>& batch,
                    const LossSettings& cfg) {
  require(!batch.empty(), Errc::config_error, "backward: empty batch");
  BatchGrads out;
  out.grads = zeros_like(params.cfg);
  const int n_q = params.cfg.n_queries;

  for (const BatchItem& item : batch) {
    require(item.sample != nullptr && item.easy_ids != nullptr,
            Errc::config_error, "backward: null batch item");
    PassBundle passes;
    SampleLoss sl =
        assemble_loss(params, *item.sample, *item.easy_ids, cfg, &passes);

    out.mean_report.total += sl.report.total;
    for (const auto& [k, v] : sl.report.terms) out.mean_report.terms[k] += v;

    const auto& grads = sl.report.grads;
    auto track_grad = [&grads](const char* key) -> const std::vector<double>* {
      auto it = grads.find(key);
      return it == grads.end() ? nullptr : &it->second;
    };

    std::vector<std::array<double, 2>> gy(n_q, {0.0, 0.0});
    std::vector<std::array<double, 2>> gc(n_q, {0.0, 0.0});
    for (int j = 0; j < n_q; ++j) {
      auto itc = grads.find("cls_q" + std::to_string(j));
      if (itc != grads.end()) gc[j] = {itc->second[0], itc->second[1]};
      auto its = grads.find("span_q" + std::to_string(j));
      if (its != grads.end()) {
        const double* ylog = &passes.pos.cache.span_logits[2 * j];
        gy[j] = {its->second[0] * squash_deriv(ylog[0]),
                 its->second[1] * squash_deriv(ylog[1])};
      }
    }

    backprop_pass(params, passes.pos, track_grad("S_p"), &gy, &gc, out.grads);
    backprop_pass(params, passes.hn1, track_grad("S_hn1"), nullptr, nullptr,
                  out.grads);
    backprop_pass(params, passes.hn2, track_grad("S_hn2"), nullptr, nullptr,
                  out.grads);
    backprop_pass(params, passes.hn3, track_grad("S_hn3"), nullptr, nullptr,
                  out.grads);
    backprop_pass(params, passes.easy, track_grad("S_n"), nullptr, nullptr,
                  out.grads);
  }

  const double inv_b = 1.0 / double(batch.size());
  out.mean_report.total *= inv_b;
  for (auto& [k, v] : out.mean_report.terms) v *= inv_b;
  for_each_array(out.grads, [&](const char* name, std::vector<double>& a) {
    for (double& v : a) {
      v *= inv_b;
      if (!std::isfinite(v))
        throw Error(Errc::non_finite,
                    std::string("backward: non-finite gradient in ") + name);
    }
  });
  return out;
}

void save_checkpoint(const ModelParams& params, const std::string& path) {
  const ModelConfig& cfg = params.cfg;
  json j;
  j["format_version"] = kCheckpointVersion;
  j["config"] = {{"d_v", cfg.d_v},
                 {"d_e", cfg.d_e},
                 {"d_h", cfg.d_h},
                 {"n_queries", cfg.n_queries},
                 {"vocab_size", cfg.vocab_size}};
  json arrays = json::object();
  for_each_array(params, [&](const char* name, const std::vector<double>& a) {
    arrays[name] = {{"shape", array_shape(cfg, name)}, {"data", a}};
  });
  j["params"] = std::move(arrays);
  std::ofstream out(path, std::ios::binary);
  require(out.good(), Errc::io_failure,
          "save_checkpoint: cannot open '" + path + "'");
  out << j.dump(2) << "\n";
  out.flush();
  require(out.good(), Errc::io_failure,
          "save_checkpoint: write failed for '" + path + "'");
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::missing_file,
          "load_checkpoint: cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(Errc::malformed_record,
                "load_checkpoint: " + std::string(e.what()));
  }
  try {
    require(j.at("format_version").get<int>() == kCheckpointVersion,
            Errc::malformed_record,
            "load_checkpoint: unsupported format version");
    const json& jc = j.at("config");
    ModelConfig cfg;
    cfg.d_v = jc.at("d_v").get<int>();
    cfg.d_e = jc.at("d_e").get<int>();
    cfg.d_h = jc.at("d_h").get<int>();
    cfg.n_queries = jc.at("n_queries").get<int>();
    cfg.vocab_size = jc.at("vocab_size").get<int>();
    ModelParams p = zeros_like(cfg);
    const json& ja = j.at("params");
    for_each_array(p, [&](const char* name, std::vector<double>& a) {
      const json& entry = ja.at(name);
      const auto shape = entry.at("shape").get<std::vector<int>>();
      std::size_t count = 1;
      for (int d : shape) count *= std::size_t(std::max(d, 0));
      require(count == a.size() &&
                  shape == array_shape(cfg, name),
              Errc::shape_mismatch,
              std::string("load_checkpoint: bad shape for ") + name);
      const json& data = entry.at("data");
      require(data.is_array() && data.size() == a.size(),
              Errc::shape_mismatch,
              std::string("load_checkpoint: bad data length for ") + name);
      for (std::size_t i = 0; i < a.size(); ++i)
        a[i] = data[i].get<double>();
    });
    return p;
  } catch (const json::exception& e) {
    throw Error(Errc::malformed_record,
                "load_checkpoint: " + std::string(e.what()));
  }
}

ToyDataset build_dataset(
    const SynthCorpus& corpus, const FeatureSpace& space,
    const std::map<std::string, NegativeRecord>& negatives) {
  ToyDataset ds;
  ds.vocab = TokenVocab::from_synth(corpus.vocab);
  const double duration = corpus.cfg.clips * corpus.cfg.clip_len_s;
  for (const SynthSample& s : corpus.samples) {
    SampleInput in;
    in.query_id = s.query_id;
    in.clip_features = sample_features(space, s, corpus.cfg);
    const TaggedQuery q = render_query(corpus.vocab, s.event, s.query_id);
    in.positive_ids = ds.vocab.encode(q.tokens);
    const NegLevel levels[3] = {NegLevel::hn1, NegLevel::hn2, NegLevel::hn3};
    for (int k = 0; k < 3; ++k) {
      auto it = negatives.find(negative_key(s.query_id, levels[k]));
      if (it == negatives.end())
        throw Error(Errc::missing_track,
                    "build_dataset: no hn" + std::to_string(k + 1) +
                        " record for " + s.query_id);
      in.negative_ids[k] = ds.vocab.encode(tokenize(it->second.negative_text));
    }
    in.span = s.span;
    const MomentSpan secs = clips_to_span(s.span, corpus.cfg.clip_len_s);
    in.gt_norm = MomentSpan{secs.start / duration, secs.end / duration};
    ds.splits[s.split].push_back(std::move(in));
  }
  return ds;
}

SplitMetrics evaluate_split(const ModelParams& params,
                            const std::vector<SampleInput>& samples,
                            const LossSettings& cfg) {
  require(!samples.empty(), Errc::empty_predictions,
          "evaluate_split: no samples");
  const std::size_t n = samples.size();
  std::vector<std::vector<MomentSpan>> preds(n);
  std::vector<MomentSpan> gts;
  std::vector<OrderingRecord> records;
  gts.reserve(n);
  records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const SampleInput& s = samples[i];
    const TrunkShared trunk = make_trunk_shared(params, s.clip_features);
    const ForwardOutput pos =
        forward(params, s.clip_features, s.positive_ids, true, &trunk);
    std::vector<int> order(pos.spans.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return pos.spans[a].p_foreground > pos.spans[b].p_foreground;
    });
    for (int r : order)
      preds[i].push_back(from_center_width(pos.spans[r].span));
    gts.push_back(s.gt_norm);

    const std::vector<int>& easy_ids =
        n > 1 ? samples[(i + 1) % n].positive_ids : s.positive_ids;
    OrderingRecord rec;
    rec.reserve(5);
    auto pooled = [&](const SaliencyTrack& t) {
      return pooled_pos(t, s.span, cfg.coarse.q).value;
    };
    rec.push_back(pooled(pos.saliency));
    for (int k = 0; k < 3; ++k)
      rec.push_back(
          pooled(forward(params, s.clip_features, s.negative_ids[k], false,
                         &trunk)
                     .saliency));
    rec.push_back(pooled(
        forward(params, s.clip_features, easy_ids, false, &trunk).saliency));
    records.push_back(std::move(rec));
  }
  SplitMetrics m;
  m.r1_at_05 = recall_at(preds, gts, 1, 0.5);
  m.r1_at_07 = recall_at(preds, gts, 1, 0.7);
  m.mean_iou = mean_iou(preds, gts);
  m.ordering_accuracy = ordering_accuracy(records);
  m.hierarchy_violation_rate = hierarchy_violation_rate(records);
  return m;
}

std::map<Split, SplitMetrics> evaluate_all(const ModelParams& params,
                                           const ToyDataset& data,
                                           const LossSettings& cfg) {
  std::map<Split, SplitMetrics> out;
  for (const auto& [split, samples] : data.splits)
    if (!samples.empty()) out[split] = evaluate_split(params, samples, cfg);
  return out;
}

TrainResult train(const TrainConfig& cfg, const ToyDataset& data) {
  auto trainit = data.splits.find(Split::train);
  require(trainit != data.splits.end() && !trainit->second.empty(),
          Errc::config_error, "train: dataset has no train split");
  const std::vector<SampleInput>& tr = trainit->second;
  require(cfg.epochs >= 1, Errc::config_error, "train: epochs must be >= 1");
  require(cfg.batch_size >= 1, Errc::config_error,
          "train: batch_size must be >= 1");
  require(cfg.lr >= 0.0 && std::isfinite(cfg.lr), Errc::config_error,
          "train: bad learning rate");
  require(cfg.clip_norm > 0.0, Errc::config_error,
          "train: clip_norm must be positive");
  require(cfg.eval_every >= 0, Errc::config_error,
          "train: eval_every must be >= 0");

  ModelConfig mc = cfg.model;
  if (mc.vocab_size == 0) mc.vocab_size = data.vocab.size();
  require(mc.vocab_size == data.vocab.size(), Errc::shape_mismatch,
          "train: model vocab_size does not match the dataset");
  require(mc.d_v == static_cast<int>(tr[0].clip_features[0].size()),
          Errc::shape_mismatch, "train: model d_v does not match features");

  ModelParams params = init_params(mc, cfg.seed);
  Rng root(cfg.seed);

  std::ofstream trace;
  if (!cfg.trace_path.empty()) {
    trace.open(cfg.trace_path, std::ios::binary | std::ios::trunc);
    require(trace.good(), Errc::io_failure,
            "train: cannot open trace file '" + cfg.trace_path + "'");
  }

  TrainResult res;
  const std::size_t n = tr.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  auto save_last_good = [&](const ModelParams& good) {
    if (!cfg.checkpoint_path.empty()) save_checkpoint(good, cfg.checkpoint_path);
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng er = root.fork(std::uint64_t(epoch) + 1);
    er.shuffle(order);

    double ep_total = 0.0;
    std::map<std::string, double> ep_terms;
    double norm_sum = 0.0;
    int batches = 0;
    bool clipped = false;

    for (std::size_t b0 = 0; b0 < n; b0 += std::size_t(cfg.batch_size)) {
      const std::size_t bsz = std::min<std::size_t>(cfg.batch_size, n - b0);
      std::vector<BatchItem> items(bsz);
      for (std::size_t k = 0; k < bsz; ++k) {
        const std::size_t i = order[b0 + k];
        std::size_t j = i;
        if (bsz > 1) {
          std::size_t pick = er.below(bsz - 1);
          if (pick >= k) ++pick;
          j = order[b0 + pick];
        } else if (n > 1) {
          // Lone trailing sample: draw the easy negative from the whole
          // split instead of the batch.
          j = er.below(n - 1);
          if (j >= i) ++j;
        }
        items[k] = BatchItem{&tr[i], &tr[j].positive_ids};
      }

      BatchGrads bg;
      try {
        bg = backward(params, items, cfg.loss);
      } catch (const Error& e) {
        if (e.code() == Errc::non_finite) {
          save_last_good(params);
          throw Error(Errc::diverged_loss,
                      std::string("train: diverged at epoch ") +
                          std::to_string(epoch) + " (" + e.what() + ")");
        }
        throw;
      }

      double sq = 0.0;
      for_each_array(bg.grads, [&](const char*, std::vector<double>& a) {
        sq += simd::dot(a.data(), a.data(), a.size());
      });
      const double norm = std::sqrt(sq);
      norm_sum += norm;
      ++batches;
      double step = cfg.lr;
      if (norm > cfg.clip_norm) {
        step *= cfg.clip_norm / norm;
        clipped = true;
      }
      zip_arrays(params, bg.grads,
                 [&](std::vector<double>& p, const std::vector<double>& g) {
                   simd::axpy(-step, g.data(), p.data(), p.size());
                 });

      ep_total += bg.mean_report.total * double(bsz);
      for (const auto& [k, v] : bg.mean_report.terms)
        ep_terms[k] += v * double(bsz);
    }

    ep_total /= double(n);
    for (auto& [k, v] : ep_terms) v /= double(n);

    json rec;
    rec["epoch"] = epoch;
    rec["loss"] = ep_total;
    rec["terms"] = ep_terms;
    rec["grad_norm"] = norm_sum / double(batches);
    rec["clipped"] = clipped;

    const bool last = epoch == cfg.epochs - 1;
    if (last || (cfg.eval_every > 0 && epoch % cfg.eval_every == 0)) {
      std::map<Split, SplitMetrics> mets;
      try {
        mets = evaluate_all(params, data, cfg.loss);
      } catch (const Error& e) {
        if (e.code() == Errc::non_finite) {
          save_last_good(params);
          throw Error(Errc::diverged_loss,
                      std::string("train: diverged at epoch ") +
                          std::to_string(epoch) + " (" + e.what() + ")");
        }
        throw;
      }
      rec["metrics"] = metrics_json(mets);
      if (last) res.final_metrics = std::move(mets);
    }

    res.trace.push_back(rec.dump());
    if (trace.is_open()) {
      trace << res.trace.back() << "\n";
      trace.flush();
      require(trace.good(), Errc::io_failure, "train: trace write failed");
    }
  }

  if (!cfg.checkpoint_path.empty()) save_checkpoint(params, cfg.checkpoint_path);
  res.params = std::move(params);
  return res;
}

}  // namespace shine
