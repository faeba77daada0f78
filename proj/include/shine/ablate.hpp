#pragma once
// Ablation harness: trains a grid of loss configurations over a set of
// seeds, aggregates the evaluation metrics per cell, and renders the
// result as JSON and as a text table. Also owns the saliency plot-data
// format consumed by the CLI plot command.

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "shine/toymodel.hpp"

namespace shine {

struct EvalReport {
  std::map<Split, SplitMetrics> splits;
  std::string fingerprint;  // hash of the loss configuration + seed
  std::uint64_t seed = 0;
};

// 16 hex digits, stable across runs and platforms; two reports share a
// fingerprint only when both the loss configuration and seed agree.
std::string loss_fingerprint(const LossSettings& loss, std::uint64_t seed);

EvalReport make_report(const ModelParams& params, const ToyDataset& data,
                       const LossSettings& loss, std::uint64_t seed);

struct AblationCell {
  std::string name;  // table row label
  LossSettings loss;
};

struct CellResult {
  std::string name;
  bool failed = false;
  std::string error;             // categorized message when failed
  std::vector<EvalReport> runs;  // one per seed, seed order
  std::map<Split, SplitMetrics> mean;
  std::map<Split, SplitMetrics> stddev;  // population std over seeds
};

struct AblationTable {
  std::vector<AblationCell> grid;
  std::vector<std::uint64_t> seeds;
  std::vector<CellResult> cells;  // grid order

  bool complete() const;  // no failed cells
  std::string to_json() const;
  // One row per cell: mean +- std of the focus split's metrics.
  std::string render(Split focus) const;
};

// Rows mirroring the coarse-ranking ablation: plain base, the intra
// hinge as a replacement for the base saliency term, the inter hinge on
// top of base, and both hinges together.
std::vector<AblationCell> coarse_grid(const LossSettings& defaults = {});

// Rows mirroring the fine-ranking ablation in one distance mode: base,
// the four constraint prefixes and selected subsets, each with and
// without the coarse term.
std::vector<AblationCell> fine_grid(FineMode mode,
                                    const LossSettings& defaults = {});

// coarse_grid + fine_grid in both modes, deduplicated row names.
std::vector<AblationCell> default_grid(const LossSettings& defaults = {});

// Trains every cell on every seed. A training failure marks only that
// cell as failed; the rest of the grid still runs. Cells execute on up
// to `workers` threads; results are keyed by grid position, so the
// output is independent of scheduling. The base config's trace and
// checkpoint paths are ignored. Throws EmptyGrid on an empty grid and
// ConfigError on empty seeds.
AblationTable ablate(const std::vector<AblationCell>& grid,
                     const ToyDataset& data, const TrainConfig& base,
                     const std::vector<std::uint64_t>& seeds,
                     int workers = 1);

// Per-clip squashed saliency for the five query roles of one sample.
struct SaliencyPlotData {
  std::string query_id;
  SpanClips span;
  std::array<std::vector<double>, 5> tracks;  // positive, hn1..hn3, easy
};

inline constexpr std::array<const char*, 5> kPlotRoles = {
    "positive", "hn1", "hn2", "hn3", "easy"};

SaliencyPlotData saliency_tracks(const ModelParams& params,
                                 const SampleInput& sample,
                                 const std::vector<int>& easy_ids);

std::string plot_data_json(const SaliencyPlotData& data);

// Minimal standalone SVG: one polyline per role over the clip axis with
// the ground-truth span shaded.
std::string render_svg(const SaliencyPlotData& data);

}  // namespace shine
