#pragma once
// Flat key=value run configuration shared by every CLI subcommand.
// Precedence is defaults < config file < explicit overrides; unknown
// keys are rejected rather than ignored. The canonical dump doubles as
// the fingerprint input, so identical effective configs land in
// identical run directories.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "shine/chat_client.hpp"
#include "shine/negforge.hpp"
#include "shine/synthgen.hpp"
#include "shine/toymodel.hpp"

namespace shine {

struct RunConfig {
  SynthConfig synth;
  std::uint64_t synth_seed = 1;

  ForgeConfig forge;  // forge.use_llm is set through the forge.filler key
  HttpChatOptions llm;

  ModelConfig model;  // d_v tracks synth.feature_dim at dataset build time
  LossSettings loss;

  double train_lr = 0.25;
  int train_epochs = 30;
  int train_batch = 32;
  double train_clip_norm = 10.0;
  std::uint64_t train_seed = 1;
  int train_eval_every = 1;

  std::vector<std::uint64_t> seeds = {1, 2, 3};
  int ablate_workers = 1;
  std::string ablate_grid = "default";  // default | coarse | fine_rel | fine_abs

  std::string out_dir = "runs";
};

// Assigns one key. Throws ConfigError for unknown keys or bad values.
void apply_kv(RunConfig& rc, const std::string& key, const std::string& value);

// Every key with its canonical value rendering, sorted by key.
std::map<std::string, std::string> dump_kv(const RunConfig& rc);

// "key = value" lines of dump_kv.
std::string to_canonical(const RunConfig& rc);

// Parses a flat config file: one key = value per line, '#' comments and
// blank lines allowed. Throws ConfigError when the file is missing or a
// line does not parse.
void load_config_file(RunConfig& rc, const std::string& path);

// 16 hex digits over every key except out.dir, which only chooses where
// the run directory lives.
std::string config_fingerprint(const RunConfig& rc);

// out_dir / fingerprint
std::string run_dir(const RunConfig& rc);

}  // namespace shine
