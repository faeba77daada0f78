#include "shine/runconfig.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "json.hpp"
#include "shine/errors.hpp"
#include "shine/rng.hpp"

namespace shine {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& key, const std::string& value,
                      const char* want) {
  throw Error(Errc::config_error, "config key '" + key + "': expected " +
                                      want + ", got '" + value + "'");
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad(key, v, "a boolean");
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(x)) bad(key, v, "a finite number");
    return x;
  } catch (const std::logic_error&) {
    bad(key, v, "a finite number");
  }
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long x = std::stol(v, &used);
    if (used != v.size()) bad(key, v, "an integer");
    return static_cast<int>(x);
  } catch (const std::logic_error&) {
    bad(key, v, "an integer");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const unsigned long long x = std::stoull(v, &used);
    if (used != v.size() || (!v.empty() && v[0] == '-')) bad(key, v, "a seed");
    return x;
  } catch (const std::logic_error&) {
    bad(key, v, "a seed");
  }
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> parts;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(trim(item));
  return parts;
}

// Canonical value renderings; doubles use the shortest round-trip form.
std::string render(double v) { return json(v).dump(); }
std::string render(bool v) { return v ? "true" : "false"; }
std::string render(int v) { return std::to_string(v); }
std::string render(std::uint64_t v) { return std::to_string(v); }

template <class T, std::size_t N>
std::string render_list(const std::array<T, N>& a) {
  std::string out;
  for (std::size_t i = 0; i < N; ++i) {
    if (i) out += ",";
    out += render(a[i]);
  }
  return out;
}

std::string render_seeds(const std::vector<std::uint64_t>& seeds) {
  std::string out;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(seeds[i]);
  }
  return out;
}

}  // namespace

void apply_kv(RunConfig& rc, const std::string& raw_key,
              const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string v = trim(raw_value);
  using Setter = std::function<void()>;
  // Dispatch table keyed by the full namespaced name.
  const std::map<std::string, Setter> table = {
      {"synth.vocab_per_class",
       [&] { rc.synth.vocab_per_class = parse_int(key, v); }},
      {"synth.n_train", [&] { rc.synth.n_train = parse_int(key, v); }},
      {"synth.n_per_test_split",
       [&] { rc.synth.n_per_test_split = parse_int(key, v); }},
      {"synth.clips", [&] { rc.synth.clips = parse_int(key, v); }},
      {"synth.feature_dim", [&] { rc.synth.feature_dim = parse_int(key, v); }},
      {"synth.noise_sigma",
       [&] { rc.synth.noise_sigma = parse_double(key, v); }},
      {"synth.holdout_fraction",
       [&] { rc.synth.holdout_fraction = parse_double(key, v); }},
      {"synth.n_distractors",
       [&] { rc.synth.n_distractors = parse_int(key, v); }},
      {"synth.clip_len_s", [&] { rc.synth.clip_len_s = parse_double(key, v); }},
      {"synth.seed", [&] { rc.synth_seed = parse_u64(key, v); }},

      {"forge.ratios",
       [&] {
         const auto parts = split_list(v);
         if (parts.size() != 3) bad(key, v, "three ratios");
         for (int i = 0; i < 3; ++i)
           rc.forge.ratios[i] = parse_double(key, parts[i]);
       }},
      {"forge.filler",
       [&] {
         if (v == "lexicon")
           rc.forge.use_llm = false;
         else if (v == "llm")
           rc.forge.use_llm = true;
         else
           bad(key, v, "'lexicon' or 'llm'");
       }},
      {"forge.frequency_weighted",
       [&] { rc.forge.frequency_weighted = parse_bool(key, v); }},
      {"forge.seed", [&] { rc.forge.seed = parse_u64(key, v); }},
      {"forge.in_flight", [&] { rc.forge.in_flight = parse_int(key, v); }},

      {"llm.endpoint", [&] { rc.llm.base_url = v; }},
      {"llm.model", [&] { rc.llm.model = v; }},
      {"llm.subset_size",
       [&] { rc.forge.prompt.dict_subset_size = parse_int(key, v); }},
      {"llm.temperature",
       [&] { rc.forge.prompt.temperature = parse_double(key, v); }},
      {"llm.max_retries",
       [&] { rc.forge.prompt.max_retries = parse_int(key, v); }},
      {"llm.timeout_s", [&] { rc.llm.timeout_s = parse_int(key, v); }},
      {"llm.max_attempts", [&] { rc.llm.max_attempts = parse_int(key, v); }},
      {"llm.backoff_ms", [&] { rc.llm.backoff_ms = parse_int(key, v); }},

      {"model.d_e", [&] { rc.model.d_e = parse_int(key, v); }},
      {"model.d_h", [&] { rc.model.d_h = parse_int(key, v); }},
      {"model.n_queries", [&] { rc.model.n_queries = parse_int(key, v); }},

      {"loss.lambda_l1",
       [&] { rc.loss.base.lambda_l1 = parse_double(key, v); }},
      {"loss.lambda_giou",
       [&] { rc.loss.base.lambda_giou = parse_double(key, v); }},
      {"loss.lambda_cls",
       [&] { rc.loss.base.lambda_cls = parse_double(key, v); }},
      {"loss.lambda_neg",
       [&] { rc.loss.base.lambda_neg = parse_double(key, v); }},
      {"loss.lambda_cont",
       [&] { rc.loss.base.lambda_cont = parse_double(key, v); }},
      {"loss.tau", [&] { rc.loss.base.tau = parse_double(key, v); }},
      {"loss.max_rank", [&] { rc.loss.base.max_rank = parse_int(key, v); }},
      {"loss.h1", [&] { rc.loss.coarse.h1 = parse_double(key, v); }},
      {"loss.h2", [&] { rc.loss.coarse.h2 = parse_double(key, v); }},
      {"loss.q", [&] { rc.loss.coarse.q = parse_int(key, v); }},
      {"loss.use_intra",
       [&] { rc.loss.coarse.use_intra = parse_bool(key, v); }},
      {"loss.use_inter",
       [&] { rc.loss.coarse.use_inter = parse_bool(key, v); }},
      {"loss.margins",
       [&] {
         const auto parts = split_list(v);
         if (parts.size() != 4) bad(key, v, "four margins");
         for (int i = 0; i < 4; ++i)
           rc.loss.fine.margins[i] = parse_double(key, parts[i]);
       }},
      {"loss.mode",
       [&] {
         if (v == "relative")
           rc.loss.fine.mode = FineMode::relative;
         else if (v == "absolute")
           rc.loss.fine.mode = FineMode::absolute;
         else
           bad(key, v, "'relative' or 'absolute'");
       }},
      {"loss.detach_observation",
       [&] { rc.loss.fine.detach_observation = parse_bool(key, v); }},
      {"loss.active",
       [&] {
         const auto parts = split_list(v);
         if (parts.size() != 4) bad(key, v, "four booleans");
         for (int i = 0; i < 4; ++i)
           rc.loss.fine.active[i] = parse_bool(key, parts[i]);
       }},
      {"loss.alpha", [&] { rc.loss.alpha = parse_double(key, v); }},
      {"loss.beta", [&] { rc.loss.beta = parse_double(key, v); }},
      {"loss.use_coarse", [&] { rc.loss.use_coarse = parse_bool(key, v); }},
      {"loss.use_fine", [&] { rc.loss.use_fine = parse_bool(key, v); }},
      {"loss.replace_saliency",
       [&] { rc.loss.replace_saliency = parse_bool(key, v); }},

      {"train.lr", [&] { rc.train_lr = parse_double(key, v); }},
      {"train.epochs", [&] { rc.train_epochs = parse_int(key, v); }},
      {"train.batch", [&] { rc.train_batch = parse_int(key, v); }},
      {"train.clip_norm", [&] { rc.train_clip_norm = parse_double(key, v); }},
      {"train.seed", [&] { rc.train_seed = parse_u64(key, v); }},
      {"train.eval_every", [&] { rc.train_eval_every = parse_int(key, v); }},

      {"seeds",
       [&] {
         const auto parts = split_list(v);
         if (parts.empty()) bad(key, v, "at least one seed");
         rc.seeds.clear();
         for (const auto& p : parts) rc.seeds.push_back(parse_u64(key, p));
       }},
      {"ablate.workers", [&] { rc.ablate_workers = parse_int(key, v); }},
      {"ablate.grid",
       [&] {
         if (v != "default" && v != "coarse" && v != "fine_rel" &&
             v != "fine_abs")
           bad(key, v, "one of default|coarse|fine_rel|fine_abs");
         rc.ablate_grid = v;
       }},
      {"out.dir",
       [&] {
         if (v.empty()) bad(key, v, "a directory path");
         rc.out_dir = v;
       }},
  };

  const auto it = table.find(key);
  if (it == table.end())
    throw Error(Errc::config_error, "unknown config key '" + key + "'");
  it->second();
}

std::map<std::string, std::string> dump_kv(const RunConfig& rc) {
  std::map<std::string, std::string> kv;
  kv["synth.vocab_per_class"] = render(rc.synth.vocab_per_class);
  kv["synth.n_train"] = render(rc.synth.n_train);
  kv["synth.n_per_test_split"] = render(rc.synth.n_per_test_split);
  kv["synth.clips"] = render(rc.synth.clips);
  kv["synth.feature_dim"] = render(rc.synth.feature_dim);
  kv["synth.noise_sigma"] = render(rc.synth.noise_sigma);
  kv["synth.holdout_fraction"] = render(rc.synth.holdout_fraction);
  kv["synth.n_distractors"] = render(rc.synth.n_distractors);
  kv["synth.clip_len_s"] = render(rc.synth.clip_len_s);
  kv["synth.seed"] = render(rc.synth_seed);

  kv["forge.ratios"] = render_list(rc.forge.ratios);
  kv["forge.filler"] = rc.forge.use_llm ? "llm" : "lexicon";
  kv["forge.frequency_weighted"] = render(rc.forge.frequency_weighted);
  kv["forge.seed"] = render(rc.forge.seed);
  kv["forge.in_flight"] = render(rc.forge.in_flight);

  kv["llm.endpoint"] = rc.llm.base_url;
  kv["llm.model"] = rc.llm.model;
  kv["llm.subset_size"] = render(rc.forge.prompt.dict_subset_size);
  kv["llm.temperature"] = render(rc.forge.prompt.temperature);
  kv["llm.max_retries"] = render(rc.forge.prompt.max_retries);
  kv["llm.timeout_s"] = render(rc.llm.timeout_s);
  kv["llm.max_attempts"] = render(rc.llm.max_attempts);
  kv["llm.backoff_ms"] = render(rc.llm.backoff_ms);

  kv["model.d_e"] = render(rc.model.d_e);
  kv["model.d_h"] = render(rc.model.d_h);
  kv["model.n_queries"] = render(rc.model.n_queries);

  kv["loss.lambda_l1"] = render(rc.loss.base.lambda_l1);
  kv["loss.lambda_giou"] = render(rc.loss.base.lambda_giou);
  kv["loss.lambda_cls"] = render(rc.loss.base.lambda_cls);
  kv["loss.lambda_neg"] = render(rc.loss.base.lambda_neg);
  kv["loss.lambda_cont"] = render(rc.loss.base.lambda_cont);
  kv["loss.tau"] = render(rc.loss.base.tau);
  kv["loss.max_rank"] = render(rc.loss.base.max_rank);
  kv["loss.h1"] = render(rc.loss.coarse.h1);
  kv["loss.h2"] = render(rc.loss.coarse.h2);
  kv["loss.q"] = render(rc.loss.coarse.q);
  kv["loss.use_intra"] = render(rc.loss.coarse.use_intra);
  kv["loss.use_inter"] = render(rc.loss.coarse.use_inter);
  kv["loss.margins"] = render_list(rc.loss.fine.margins);
  kv["loss.mode"] =
      rc.loss.fine.mode == FineMode::relative ? "relative" : "absolute";
  kv["loss.detach_observation"] = render(rc.loss.fine.detach_observation);
  kv["loss.active"] = render_list(rc.loss.fine.active);
  kv["loss.alpha"] = render(rc.loss.alpha);
  kv["loss.beta"] = render(rc.loss.beta);
  kv["loss.use_coarse"] = render(rc.loss.use_coarse);
  kv["loss.use_fine"] = render(rc.loss.use_fine);
  kv["loss.replace_saliency"] = render(rc.loss.replace_saliency);

  kv["train.lr"] = render(rc.train_lr);
  kv["train.epochs"] = render(rc.train_epochs);
  kv["train.batch"] = render(rc.train_batch);
  kv["train.clip_norm"] = render(rc.train_clip_norm);
  kv["train.seed"] = render(rc.train_seed);
  kv["train.eval_every"] = render(rc.train_eval_every);

  kv["seeds"] = render_seeds(rc.seeds);
  kv["ablate.workers"] = render(rc.ablate_workers);
  kv["ablate.grid"] = rc.ablate_grid;
  kv["out.dir"] = rc.out_dir;
  return kv;
}

std::string to_canonical(const RunConfig& rc) {
  std::string out;
  for (const auto& [k, v] : dump_kv(rc)) out += k + " = " + v + "\n";
  return out;
}

void load_config_file(RunConfig& rc, const std::string& path) {
  std::ifstream in(path);
  if (!in.good())
    throw Error(Errc::config_error, "config file not found: '" + path + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw Error(Errc::config_error,
                  "config file '" + path + "' line " + std::to_string(lineno) +
                      ": expected key = value");
    apply_kv(rc, stripped.substr(0, eq), stripped.substr(eq + 1));
  }
}

std::string config_fingerprint(const RunConfig& rc) {
  std::string canon;
  for (const auto& [k, v] : dump_kv(rc)) {
    if (k == "out.dir") continue;
    canon += k + "=" + v + "\n";
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canon)));
  return buf;
}

std::string run_dir(const RunConfig& rc) {
  return rc.out_dir + "/" + config_fingerprint(rc);
}

}  // namespace shine
