#include "cli_main.hpp"

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "shine/ablate.hpp"
#include "shine/chat_client.hpp"
#include "shine/corpus.hpp"
#include "shine/errors.hpp"
#include "shine/negforge.hpp"
#include "shine/runconfig.hpp"
#include "shine/synthgen.hpp"
#include "shine/tagger.hpp"
#include "shine/toymodel.hpp"

namespace shine {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Plumbing paths; deliberately outside RunConfig so they never touch the
// run fingerprint.
struct PathOpts {
  std::string corpus_dir;
  std::string dictionary;
  std::string negatives;
  std::string checkpoint;
  std::string sample_id;
};

constexpr const char* kDefaultPromptTemplate =
    "Rewrite the masked video query by choosing one replacement word per "
    "slot.\n"
    "Masked query: {{masked_query}}\n"
    "Candidates per slot:\n{{candidates}}\n"
    "Answer with one line per slot, formatted exactly as \"[MASKi]: word\".";

std::string iso_now() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  out.flush();
  if (!out.good())
    throw Error(Errc::io_failure, "cannot write '" + path + "'");
}

// Creates the fingerprinted run directory and records the effective
// configuration inside it, so every artifact is self-describing.
std::string ensure_run_dir(const RunConfig& rc) {
  const std::string dir = run_dir(rc);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw Error(Errc::io_failure, "cannot create run dir '" + dir + "'");
  write_text(dir + "/effective.cfg", to_canonical(rc));
  return dir;
}

json metrics_json(const SplitMetrics& m) {
  return json{{"r1_at_05", m.r1_at_05},
              {"r1_at_07", m.r1_at_07},
              {"mean_iou", m.mean_iou},
              {"ordering_accuracy", m.ordering_accuracy},
              {"hierarchy_violation_rate", m.hierarchy_violation_rate}};
}

json splits_json(const std::map<Split, SplitMetrics>& splits) {
  json out = json::object();
  for (const auto& [split, m] : splits) out[split_name(split)] = metrics_json(m);
  return out;
}

void print_metrics(const std::map<Split, SplitMetrics>& splits) {
  std::printf("%-18s %8s %8s %8s %8s %8s\n", "split", "R1@0.5", "R1@0.7",
              "mIoU", "OrdAcc", "HViol");
  for (const auto& [split, m] : splits)
    std::printf("%-18s %8.4f %8.4f %8.4f %8.4f %8.4f\n", split_name(split),
                m.r1_at_05, m.r1_at_07, m.mean_iou, m.ordering_accuracy,
                m.hierarchy_violation_rate);
}

// The corpus is a pure function of the synth settings, so a run directory
// that lacks one gets it materialized in place; an explicit --corpus
// directory must already hold the files.
SynthCorpus corpus_for(const RunConfig& rc, const PathOpts& paths) {
  if (!paths.corpus_dir.empty()) return load_corpus(paths.corpus_dir);
  const std::string dir = ensure_run_dir(rc);
  if (!fs::exists(dir + "/sidecar.json")) {
    const SynthCorpus corpus = gen_corpus(rc.synth, rc.synth_seed);
    save_corpus(corpus, dir);
    std::fprintf(stderr, "note: materialized corpus in %s\n", dir.c_str());
    return corpus;
  }
  return load_corpus(dir);
}

std::vector<TaggedQuery> all_queries(const SynthCorpus& corpus) {
  std::vector<TaggedQuery> queries;
  for (Split split : {Split::train, Split::test_trivial,
                      Split::novel_composition, Split::novel_word}) {
    auto part = rendered_queries(corpus, split);
    queries.insert(queries.end(), std::make_move_iterator(part.begin()),
                   std::make_move_iterator(part.end()));
  }
  return queries;
}

std::string dictionary_path(const RunConfig& rc, const PathOpts& paths) {
  return paths.dictionary.empty() ? run_dir(rc) + "/dictionary.tsv"
                                  : paths.dictionary;
}

std::string negatives_path(const RunConfig& rc, const PathOpts& paths) {
  return paths.negatives.empty() ? run_dir(rc) + "/negatives.jsonl"
                                 : paths.negatives;
}

ToyDataset dataset_for(const RunConfig& rc, const SynthCorpus& corpus,
                       const PathOpts& paths) {
  const std::string neg_path = negatives_path(rc, paths);
  std::vector<NegativeRecord> records;
  if (fs::exists(neg_path)) {
    records = load_negatives(neg_path);
  } else if (rc.forge.use_llm) {
    // Never hit the endpoint implicitly; llm negatives are forged only by
    // an explicit `forge`.
    throw Error(Errc::missing_file,
                "'" + neg_path + "' not found; run the forge command first");
  } else {
    ForgeConfig fc = rc.forge;
    if (fc.created_at.empty()) fc.created_at = iso_now();
    PrimitiveDictionary dict =
        build_dictionary(rendered_queries(corpus, Split::train));
    dict.source_split = "train";
    records = forge_negatives(all_queries(corpus), dict, fc, nullptr, {});
    ensure_run_dir(rc);
    save_negatives(records, neg_path);
    std::fprintf(stderr, "note: forged lexicon negatives into %s\n",
                 neg_path.c_str());
  }
  const Filler pipeline = rc.forge.use_llm ? Filler::llm : Filler::lexicon;
  const auto by_key = index_negatives(records, pipeline);
  const FeatureSpace space =
      make_feature_space(corpus.vocab, corpus.cfg.feature_dim, corpus.seed);
  return build_dataset(corpus, space, by_key);
}

// Model width follows the corpus; vocab size is filled in by train().
TrainConfig train_config(const RunConfig& rc, const SynthCorpus& corpus) {
  TrainConfig tc;
  tc.model = rc.model;
  tc.model.d_v = corpus.cfg.feature_dim;
  tc.model.vocab_size = 0;
  tc.loss = rc.loss;
  tc.epochs = rc.train_epochs;
  tc.lr = rc.train_lr;
  tc.batch_size = rc.train_batch;
  tc.clip_norm = rc.train_clip_norm;
  tc.seed = rc.train_seed;
  tc.eval_every = rc.train_eval_every;
  return tc;
}

int cmd_synth(const RunConfig& rc) {
  const SynthCorpus corpus = gen_corpus(rc.synth, rc.synth_seed);
  const std::string dir = ensure_run_dir(rc);
  save_corpus(corpus, dir);
  std::map<Split, std::size_t> counts;
  for (const SynthSample& s : corpus.samples) ++counts[s.split];
  std::printf("synth: %zu samples -> %s\n", corpus.samples.size(),
              dir.c_str());
  for (const auto& [split, n] : counts)
    std::printf("  %-18s %zu\n", split_name(split), n);
  return 0;
}

int cmd_dict(const RunConfig& rc, const PathOpts& paths) {
  const SynthCorpus corpus = corpus_for(rc, paths);
  // Held-out splits stay out of the dictionary so novel words cannot leak
  // into forged negatives.
  PrimitiveDictionary dict =
      build_dictionary(rendered_queries(corpus, Split::train));
  dict.source_split = "train";
  ensure_run_dir(rc);
  const std::string path = dictionary_path(rc, paths);
  save_dictionary(dict, path);
  std::size_t words = 0;
  for (const auto& per_class : dict.entries) words += per_class.size();
  std::printf("dict: %zu words over %zu classes -> %s\n", words,
              dict.entries.size(), path.c_str());
  return 0;
}

int cmd_forge(const RunConfig& rc, const PathOpts& paths) {
  const SynthCorpus corpus = corpus_for(rc, paths);
  const std::vector<TaggedQuery> queries = all_queries(corpus);
  const PrimitiveDictionary dict = load_dictionary(dictionary_path(rc, paths));
  const std::string dir = ensure_run_dir(rc);

  const std::string neg_path = negatives_path(rc, paths);
  std::vector<NegativeRecord> cache;
  if (fs::exists(neg_path)) cache = load_negatives(neg_path);

  ForgeConfig fc = rc.forge;
  if (fc.created_at.empty()) fc.created_at = iso_now();
  std::unique_ptr<HttpChatClient> endpoint;
  if (fc.use_llm) {
    if (rc.llm.base_url.empty())
      throw Error(Errc::config_error,
                  "forge.filler=llm requires llm.endpoint");
    if (fc.prompt.template_text.empty())
      fc.prompt.template_text = kDefaultPromptTemplate;
    endpoint = std::make_unique<HttpChatClient>(rc.llm);
  }

  std::size_t fresh = 0;
  const auto records =
      forge_negatives(queries, dict, fc, endpoint.get(), cache,
                      [&fresh](const NegativeRecord&) { ++fresh; });
  std::size_t fallbacks = 0;
  for (const NegativeRecord& rec : records)
    if (rec.llm_fallback) ++fallbacks;
  save_negatives(records, neg_path);

  const json stats = {{"records", records.size()},
                      {"fresh", fresh},
                      {"cached", records.size() - fresh},
                      {"llm_fallbacks", fallbacks},
                      {"created_at", fc.created_at}};
  write_text(dir + "/forge_stats.json", stats.dump(2) + "\n");
  std::printf("forge: %zu records (%zu fresh, %zu cached, %zu fallbacks) -> %s\n",
              records.size(), fresh, records.size() - fresh, fallbacks,
              neg_path.c_str());
  return 0;
}

int cmd_train(const RunConfig& rc, const PathOpts& paths) {
  const SynthCorpus corpus = corpus_for(rc, paths);
  const ToyDataset data = dataset_for(rc, corpus, paths);
  const std::string dir = ensure_run_dir(rc);

  TrainConfig tc = train_config(rc, corpus);
  tc.trace_path = dir + "/trace.jsonl";
  tc.checkpoint_path =
      paths.checkpoint.empty() ? dir + "/model.json" : paths.checkpoint;

  const TrainResult result = train(tc, data);
  const json report = {{"fingerprint", loss_fingerprint(tc.loss, tc.seed)},
                       {"seed", tc.seed},
                       {"splits", splits_json(result.final_metrics)}};
  write_text(dir + "/metrics.json", report.dump(2) + "\n");
  print_metrics(result.final_metrics);
  std::printf("train: checkpoint -> %s\n", tc.checkpoint_path.c_str());
  return 0;
}

int cmd_eval(const RunConfig& rc, const PathOpts& paths) {
  const SynthCorpus corpus = corpus_for(rc, paths);
  const ToyDataset data = dataset_for(rc, corpus, paths);
  const std::string dir = ensure_run_dir(rc);

  const std::string ckpt =
      paths.checkpoint.empty() ? dir + "/model.json" : paths.checkpoint;
  const ModelParams params = load_checkpoint(ckpt);
  const EvalReport report = make_report(params, data, rc.loss, rc.train_seed);
  const json out = {{"fingerprint", report.fingerprint},
                    {"seed", report.seed},
                    {"splits", splits_json(report.splits)}};
  write_text(dir + "/eval.json", out.dump(2) + "\n");
  print_metrics(report.splits);
  return 0;
}

int cmd_ablate(const RunConfig& rc, const PathOpts& paths) {
  const SynthCorpus corpus = corpus_for(rc, paths);
  const ToyDataset data = dataset_for(rc, corpus, paths);
  const std::string dir = ensure_run_dir(rc);

  std::vector<AblationCell> grid;
  if (rc.ablate_grid == "coarse")
    grid = coarse_grid(rc.loss);
  else if (rc.ablate_grid == "fine_rel")
    grid = fine_grid(FineMode::relative, rc.loss);
  else if (rc.ablate_grid == "fine_abs")
    grid = fine_grid(FineMode::absolute, rc.loss);
  else
    grid = default_grid(rc.loss);

  const AblationTable table =
      ablate(grid, data, train_config(rc, corpus), rc.seeds,
             rc.ablate_workers);
  write_text(dir + "/ablation.json", table.to_json() + "\n");

  std::string text;
  for (Split split : {Split::train, Split::test_trivial,
                      Split::novel_composition, Split::novel_word}) {
    text += std::string("== ") + split_name(split) + " ==\n";
    text += table.render(split);
    text += "\n";
  }
  write_text(dir + "/ablation.txt", text);

  std::size_t failed = 0;
  for (const CellResult& cell : table.cells)
    if (cell.failed) ++failed;
  std::printf("%s", table.render(Split::novel_composition).c_str());
  std::printf("ablate: %zu cells, %zu failed -> %s\n", table.cells.size(),
              failed, dir.c_str());
  return failed == 0 ? 0 : 1;
}

int cmd_plot(const RunConfig& rc, const PathOpts& paths) {
  const SynthCorpus corpus = corpus_for(rc, paths);
  const ToyDataset data = dataset_for(rc, corpus, paths);
  const std::string dir = ensure_run_dir(rc);

  const std::string ckpt =
      paths.checkpoint.empty() ? dir + "/model.json" : paths.checkpoint;
  const ModelParams params = load_checkpoint(ckpt);

  const SampleInput* sample = nullptr;
  const std::vector<int>* easy = nullptr;
  for (const auto& [split, samples] : data.splits) {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (samples[i].query_id != paths.sample_id) continue;
      sample = &samples[i];
      // Same convention as evaluation: the next sample in the split.
      easy = &samples[(i + 1) % samples.size()].positive_ids;
      break;
    }
    if (sample) break;
  }
  if (!sample)
    throw Error(Errc::config_error,
                "plot: unknown sample id '" + paths.sample_id + "'");

  const SaliencyPlotData tracks = saliency_tracks(params, *sample, *easy);
  const std::string base = dir + "/plot_" + paths.sample_id;
  write_text(base + ".json", plot_data_json(tracks) + "\n");
  write_text(base + ".svg", render_svg(tracks));
  std::printf("plot: %s.{json,svg}\n", base.c_str());
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"desk-scale laboratory for saliency-aware hierarchical "
               "negative ranking"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> set_pairs;
  std::vector<std::pair<std::string, std::string>> named;
  PathOpts paths;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path,
                    "flat key = value configuration file");
    cmd->add_option("--set", set_pairs,
                    "override one key, e.g. --set loss.q=8 (repeatable)")
        ->take_all();
    cmd->add_option("--corpus", paths.corpus_dir,
                    "read the corpus from this directory instead of the "
                    "run directory");
    return cmd;
  };
  // Named flags bind to the same keys as --set but win over it.
  auto bind = [&](CLI::App* cmd, const std::string& flag,
                  const std::string& key, const std::string& help) {
    cmd->add_option_function<std::string>(
        flag,
        [&named, key](const std::string& value) {
          named.emplace_back(key, value);
        },
        help);
  };

  CLI::App* synth = add_common(
      app.add_subcommand("synth", "generate and save the synthetic corpus"));
  bind(synth, "--seed", "synth.seed", "corpus generator seed");
  bind(synth, "--clips", "synth.clips", "clips per video");

  CLI::App* dict = add_common(app.add_subcommand(
      "dict", "build the primitive dictionary from the train split"));
  dict->add_option("--dictionary", paths.dictionary,
                   "dictionary output path");

  CLI::App* forge = add_common(app.add_subcommand(
      "forge", "forge the hn1..hn3 hierarchy for every query"));
  forge->add_option("--dictionary", paths.dictionary,
                    "dictionary input path");
  forge->add_option("--negatives", paths.negatives,
                    "negatives cache/output path");
  bind(forge, "--filler", "forge.filler", "lexicon or llm");
  bind(forge, "--forge-seed", "forge.seed", "filler seed");

  CLI::App* train_cmd = add_common(
      app.add_subcommand("train", "train the toy grounding model"));
  train_cmd->add_option("--negatives", paths.negatives,
                        "negatives input path");
  train_cmd->add_option("--checkpoint", paths.checkpoint,
                        "checkpoint output path");
  bind(train_cmd, "--lr", "train.lr", "learning rate");
  bind(train_cmd, "--epochs", "train.epochs", "training epochs");
  bind(train_cmd, "--train-seed", "train.seed", "training seed");

  CLI::App* eval_cmd = add_common(
      app.add_subcommand("eval", "evaluate a checkpoint on all splits"));
  eval_cmd->add_option("--negatives", paths.negatives,
                       "negatives input path");
  eval_cmd->add_option("--checkpoint", paths.checkpoint,
                       "checkpoint input path");

  CLI::App* ablate_cmd = add_common(app.add_subcommand(
      "ablate", "train and evaluate an ablation grid over seeds"));
  ablate_cmd->add_option("--negatives", paths.negatives,
                         "negatives input path");
  bind(ablate_cmd, "--grid", "ablate.grid",
       "coarse, fine_rel, fine_abs, or default");
  bind(ablate_cmd, "--workers", "ablate.workers", "parallel cells");

  CLI::App* plot = add_common(app.add_subcommand(
      "plot", "dump saliency tracks for one query as JSON and SVG"));
  plot->add_option("--negatives", paths.negatives, "negatives input path");
  plot->add_option("--checkpoint", paths.checkpoint,
                   "checkpoint input path");
  plot->add_option("--sample", paths.sample_id, "query id to plot")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    RunConfig rc;
    if (!config_path.empty()) load_config_file(rc, config_path);
    for (const std::string& pair : set_pairs) {
      const auto eq = pair.find('=');
      if (eq == std::string::npos)
        throw Error(Errc::config_error,
                    "--set expects key=value, got '" + pair + "'");
      apply_kv(rc, pair.substr(0, eq), pair.substr(eq + 1));
    }
    for (const auto& [key, value] : named) apply_kv(rc, key, value);

    if (synth->parsed()) return cmd_synth(rc);
    if (dict->parsed()) return cmd_dict(rc, paths);
    if (forge->parsed()) return cmd_forge(rc, paths);
    if (train_cmd->parsed()) return cmd_train(rc, paths);
    if (eval_cmd->parsed()) return cmd_eval(rc, paths);
    if (ablate_cmd->parsed()) return cmd_ablate(rc, paths);
    if (plot->parsed()) return cmd_plot(rc, paths);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

}  // namespace shine
