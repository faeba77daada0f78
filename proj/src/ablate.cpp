#include "shine/ablate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>
#include <utility>

#include "json.hpp"
#include "shine/errors.hpp"
#include "shine/rng.hpp"

namespace shine {

namespace {

using nlohmann::json;

json loss_json(const LossSettings& l) {
  json j;
  j["base"] = {{"lambda_l1", l.base.lambda_l1},
               {"lambda_giou", l.base.lambda_giou},
               {"lambda_cls", l.base.lambda_cls},
               {"lambda_neg", l.base.lambda_neg},
               {"lambda_cont", l.base.lambda_cont},
               {"tau", l.base.tau},
               {"max_rank", l.base.max_rank}};
  j["coarse"] = {{"h1", l.coarse.h1},
                 {"h2", l.coarse.h2},
                 {"q", l.coarse.q},
                 {"use_intra", l.coarse.use_intra},
                 {"use_inter", l.coarse.use_inter}};
  j["fine"] = {{"margins", l.fine.margins},
               {"mode", l.fine.mode == FineMode::relative ? "relative"
                                                          : "absolute"},
               {"detach_observation", l.fine.detach_observation},
               {"active", l.fine.active}};
  j["alpha"] = l.alpha;
  j["beta"] = l.beta;
  j["use_coarse"] = l.use_coarse;
  j["use_fine"] = l.use_fine;
  j["replace_saliency"] = l.replace_saliency;
  return j;
}

json metrics_json(const SplitMetrics& m) {
  return {{"r1_at_0.5", m.r1_at_05},
          {"r1_at_0.7", m.r1_at_07},
          {"mean_iou", m.mean_iou},
          {"ordering_accuracy", m.ordering_accuracy},
          {"hierarchy_violation_rate", m.hierarchy_violation_rate}};
}

json splits_json(const std::map<Split, SplitMetrics>& splits) {
  json out = json::object();
  for (const auto& [split, m] : splits) out[split_name(split)] = metrics_json(m);
  return out;
}

std::array<double, 5> metric_values(const SplitMetrics& m) {
  return {m.r1_at_05, m.r1_at_07, m.mean_iou, m.ordering_accuracy,
          m.hierarchy_violation_rate};
}

SplitMetrics metrics_from(const std::array<double, 5>& v) {
  SplitMetrics m;
  m.r1_at_05 = v[0];
  m.r1_at_07 = v[1];
  m.mean_iou = v[2];
  m.ordering_accuracy = v[3];
  m.hierarchy_violation_rate = v[4];
  return m;
}

void aggregate(CellResult& cell) {
  if (cell.runs.empty()) return;
  const double n = static_cast<double>(cell.runs.size());
  for (const auto& [split, first] : cell.runs.front().splits) {
    (void)first;
    std::array<double, 5> sum{}, sumsq{};
    for (const EvalReport& rep : cell.runs) {
      const auto v = metric_values(rep.splits.at(split));
      for (int i = 0; i < 5; ++i) {
        sum[i] += v[i];
        sumsq[i] += v[i] * v[i];
      }
    }
    std::array<double, 5> mean{}, sd{};
    for (int i = 0; i < 5; ++i) {
      mean[i] = sum[i] / n;
      const double var = std::max(0.0, sumsq[i] / n - mean[i] * mean[i]);
      sd[i] = std::sqrt(var);
    }
    cell.mean[split] = metrics_from(mean);
    cell.stddev[split] = metrics_from(sd);
  }
}

std::string fmt(const char* spec, double a, double b = 0.0) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, a, b);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string loss_fingerprint(const LossSettings& loss, std::uint64_t seed) {
  const std::string canon =
      loss_json(loss).dump() + "#seed=" + std::to_string(seed);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canon)));
  return buf;
}

EvalReport make_report(const ModelParams& params, const ToyDataset& data,
                       const LossSettings& loss, std::uint64_t seed) {
  EvalReport rep;
  rep.splits = evaluate_all(params, data, loss);
  rep.seed = seed;
  rep.fingerprint = loss_fingerprint(loss, seed);
  return rep;
}

bool AblationTable::complete() const {
  return std::none_of(cells.begin(), cells.end(),
                      [](const CellResult& c) { return c.failed; });
}

std::string AblationTable::to_json() const {
  json j;
  j["seeds"] = seeds;
  json rows = json::array();
  for (const CellResult& cell : cells) {
    json row;
    row["name"] = cell.name;
    row["failed"] = cell.failed;
    row["error"] = cell.error;
    json runs = json::array();
    for (const EvalReport& rep : cell.runs) {
      runs.push_back({{"seed", rep.seed},
                      {"fingerprint", rep.fingerprint},
                      {"splits", splits_json(rep.splits)}});
    }
    row["runs"] = std::move(runs);
    row["mean"] = splits_json(cell.mean);
    row["std"] = splits_json(cell.stddev);
    rows.push_back(std::move(row));
  }
  j["cells"] = std::move(rows);
  return j.dump(2);
}

std::string AblationTable::render(Split focus) const {
  std::size_t name_w = 4;
  for (const CellResult& c : cells) name_w = std::max(name_w, c.name.size());
  name_w += 2;

  std::ostringstream out;
  const char* heads[5] = {"R1@0.5", "R1@0.7", "mIoU", "OrdAcc", "HViol"};
  std::string head = "cell";
  head.resize(name_w, ' ');
  out << head;
  for (const char* h : heads) {
    std::string col(h);
    col.resize(17, ' ');
    out << col;
  }
  out << "\n";
  for (const CellResult& c : cells) {
    std::string name = c.name;
    name.resize(name_w, ' ');
    out << name;
    if (c.failed) {
      out << "FAILED: " << c.error;
    } else {
      const auto mit = c.mean.find(focus);
      const auto sit = c.stddev.find(focus);
      if (mit == c.mean.end() || sit == c.stddev.end()) {
        out << "-";
      } else {
        const auto m = metric_values(mit->second);
        const auto s = metric_values(sit->second);
        for (int i = 0; i < 5; ++i) {
          std::string col = fmt("%.4f+-%.4f", m[i], s[i]);
          col.resize(17, ' ');
          out << col;
        }
      }
    }
    out << "\n";
  }
  return out.str();
}

std::vector<AblationCell> coarse_grid(const LossSettings& defaults) {
  LossSettings off = defaults;
  off.use_coarse = false;
  off.use_fine = false;
  off.replace_saliency = false;

  std::vector<AblationCell> rows;
  rows.push_back({"base", off});

  AblationCell intra{"base+intra*", off};
  intra.loss.use_coarse = true;
  intra.loss.coarse.use_intra = true;
  intra.loss.coarse.use_inter = false;
  intra.loss.replace_saliency = true;
  rows.push_back(std::move(intra));

  AblationCell inter{"base+inter", off};
  inter.loss.use_coarse = true;
  inter.loss.coarse.use_intra = false;
  inter.loss.coarse.use_inter = true;
  rows.push_back(std::move(inter));

  AblationCell both{"base+intra*+inter", off};
  both.loss.use_coarse = true;
  both.loss.coarse.use_intra = true;
  both.loss.coarse.use_inter = true;
  both.loss.replace_saliency = true;
  rows.push_back(std::move(both));
  return rows;
}

std::vector<AblationCell> fine_grid(FineMode mode,
                                    const LossSettings& defaults) {
  LossSettings off = defaults;
  off.use_coarse = false;
  off.use_fine = false;
  off.replace_saliency = false;
  off.fine.mode = mode;
  const std::string tag = mode == FineMode::relative ? " [rel]" : " [abs]";

  auto make = [&](const std::string& name, std::array<bool, 4> active,
                  bool with_coarse) {
    AblationCell c;
    c.name = name + tag;
    c.loss = off;
    c.loss.fine.active = active;
    c.loss.use_fine =
        std::any_of(active.begin(), active.end(), [](bool b) { return b; });
    c.loss.use_coarse = with_coarse;
    return c;
  };

  return {
      make("base", {false, false, false, false}, false),
      make("base+fr1", {true, false, false, false}, false),
      make("base+fr1,2", {true, true, false, false}, false),
      make("base+fr1,2,3", {true, true, true, false}, false),
      make("base+fr1,2,3,4", {true, true, true, true}, false),
      make("base+fr1,2+cr", {true, true, false, false}, true),
      make("base+fr1,2,3+cr", {true, true, true, false}, true),
      make("base+fr1,2,4+cr", {true, true, false, true}, true),
      make("base+fr1,2,3,4+cr", {true, true, true, true}, true),
  };
}

std::vector<AblationCell> default_grid(const LossSettings& defaults) {
  std::vector<AblationCell> grid = coarse_grid(defaults);
  for (FineMode mode : {FineMode::relative, FineMode::absolute}) {
    for (AblationCell& c : fine_grid(mode, defaults)) {
      if (!c.loss.use_fine && !c.loss.use_coarse) continue;  // base again
      grid.push_back(std::move(c));
    }
  }
  return grid;
}

AblationTable ablate(const std::vector<AblationCell>& grid,
                     const ToyDataset& data, const TrainConfig& base,
                     const std::vector<std::uint64_t>& seeds, int workers) {
  if (grid.empty()) throw Error(Errc::empty_grid, "ablate: empty grid");
  if (seeds.empty())
    throw Error(Errc::config_error, "ablate: need at least one seed");
  if (workers < 1)
    throw Error(Errc::config_error, "ablate: workers must be >= 1");

  AblationTable table;
  table.grid = grid;
  table.seeds = seeds;
  table.cells.assign(grid.size(), CellResult{});

  auto run_cell = [&](std::size_t ci) {
    CellResult& cell = table.cells[ci];
    cell.name = grid[ci].name;
    try {
      for (std::uint64_t seed : seeds) {
        TrainConfig tc = base;
        tc.loss = grid[ci].loss;
        tc.seed = seed;
        tc.trace_path.clear();
        tc.checkpoint_path.clear();
        TrainResult res = train(tc, data);
        EvalReport rep;
        rep.splits = std::move(res.final_metrics);
        rep.seed = seed;
        rep.fingerprint = loss_fingerprint(grid[ci].loss, seed);
        cell.runs.push_back(std::move(rep));
      }
      aggregate(cell);
    } catch (const std::exception& e) {
      cell.failed = true;
      cell.error = e.what();
      cell.runs.clear();
      cell.mean.clear();
      cell.stddev.clear();
    }
  };

  const std::size_t n_workers =
      std::min<std::size_t>(static_cast<std::size_t>(workers), grid.size());
  if (n_workers <= 1) {
    for (std::size_t ci = 0; ci < grid.size(); ++ci) run_cell(ci);
  } else {
    std::atomic<std::size_t> cursor{0};
    std::vector<std::thread> pool;
    pool.reserve(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t ci = cursor.fetch_add(1); ci < grid.size();
             ci = cursor.fetch_add(1)) {
          run_cell(ci);
        }
      });
    }
    for (std::thread& t : pool) t.join();
  }
  return table;
}

SaliencyPlotData saliency_tracks(const ModelParams& params,
                                 const SampleInput& sample,
                                 const std::vector<int>& easy_ids) {
  SaliencyPlotData d;
  d.query_id = sample.query_id;
  d.span = sample.span;
  auto squashed = [&](const std::vector<int>& ids) {
    return forward(params, sample.clip_features, ids, false)
        .saliency.squashed;
  };
  d.tracks[0] = squashed(sample.positive_ids);
  for (int k = 0; k < 3; ++k) d.tracks[k + 1] = squashed(sample.negative_ids[k]);
  d.tracks[4] = squashed(easy_ids);
  return d;
}

std::string plot_data_json(const SaliencyPlotData& data) {
  json j;
  j["query_id"] = data.query_id;
  j["span"] = {{"begin", data.span.begin}, {"end", data.span.end}};
  j["clips"] = data.tracks[0].size();
  json tracks = json::object();
  for (int i = 0; i < 5; ++i) tracks[kPlotRoles[i]] = data.tracks[i];
  j["tracks"] = std::move(tracks);
  return j.dump(2);
}

std::string render_svg(const SaliencyPlotData& data) {
  const double width = 640.0, height = 340.0;
  const double xl = 50.0, xr = 500.0, yt = 30.0, yb = 300.0;
  const int t_clips = static_cast<int>(data.tracks[0].size());
  const char* colors[5] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                           "#7f7f7f"};

  auto x_of = [&](double t) {
    return xl + (t_clips > 0 ? (t / t_clips) * (xr - xl) : 0.0);
  };
  auto y_of = [&](double v) { return yb - v * (yb - yt); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
      << height << "\">\n";
  svg << "  <rect width=\"" << width << "\" height=\"" << height
      << "\" fill=\"white\"/>\n";
  svg << "  <text x=\"" << xl << "\" y=\"18\" font-family=\"sans-serif\" "
         "font-size=\"13\">saliency by clip, query "
      << xml_escape(data.query_id) << "</text>\n";

  // ground-truth span band
  svg << "  <rect x=\"" << fmt("%.2f", x_of(data.span.begin)) << "\" y=\""
      << yt << "\" width=\""
      << fmt("%.2f", x_of(data.span.end) - x_of(data.span.begin))
      << "\" height=\"" << yb - yt << "\" fill=\"#dddddd\"/>\n";

  // axes and ticks
  svg << "  <line x1=\"" << xl << "\" y1=\"" << yb << "\" x2=\"" << xr
      << "\" y2=\"" << yb << "\" stroke=\"black\"/>\n";
  svg << "  <line x1=\"" << xl << "\" y1=\"" << yt << "\" x2=\"" << xl
      << "\" y2=\"" << yb << "\" stroke=\"black\"/>\n";
  for (double tick : {0.0, 0.5, 1.0}) {
    svg << "  <text x=\"" << xl - 34 << "\" y=\""
        << fmt("%.2f", y_of(tick) + 4) << "\" font-family=\"sans-serif\" "
        << "font-size=\"11\">" << fmt("%.1f", tick) << "</text>\n";
  }
  svg << "  <text x=\"" << (xl + xr) / 2 << "\" y=\"" << yb + 26
      << "\" font-family=\"sans-serif\" font-size=\"11\">clip</text>\n";

  for (int i = 0; i < 5; ++i) {
    svg << "  <polyline fill=\"none\" stroke=\"" << colors[i]
        << "\" stroke-width=\"1.5\" points=\"";
    for (int t = 0; t < t_clips; ++t) {
      if (t) svg << " ";
      svg << fmt("%.2f", x_of(t + 0.5)) << "," << fmt("%.2f", y_of(data.tracks[i][t]));
    }
    svg << "\"/>\n";
    const double ly = yt + 16.0 * i;
    svg << "  <line x1=\"" << xr + 12 << "\" y1=\"" << ly << "\" x2=\""
        << xr + 34 << "\" y2=\"" << ly << "\" stroke=\"" << colors[i]
        << "\" stroke-width=\"2\"/>\n";
    svg << "  <text x=\"" << xr + 40 << "\" y=\"" << ly + 4
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << kPlotRoles[i]
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace shine
