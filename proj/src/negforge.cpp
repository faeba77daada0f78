#include "shine/negforge.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "shine/rng.hpp"

namespace shine {

namespace {

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

int count_slot(const std::string& text, const std::string& slot) {
  int n = 0;
  for (auto pos = text.find(slot); pos != std::string::npos;
       pos = text.find(slot, pos + slot.size()))
    ++n;
  return n;
}

std::string replace_slot(std::string text, const std::string& slot,
                         const std::string& value) {
  auto pos = text.find(slot);
  text.replace(pos, slot.size(), value);
  return text;
}

std::string slot_tag(int i) { return "[MASK" + std::to_string(i + 1) + "]"; }

// One "[MASKi]: word" line per slot; lines without a slot tag are ignored.
std::optional<std::vector<std::string>> parse_slot_reply(
    const std::string& reply, int n_slots) {
  std::vector<std::string> words(static_cast<std::size_t>(n_slots));
  std::vector<bool> got(static_cast<std::size_t>(n_slots), false);
  std::istringstream in(reply);
  std::string line;
  while (std::getline(in, line)) {
    for (int i = 0; i < n_slots; ++i) {
      const std::string tag = slot_tag(i);
      auto pos = line.find(tag);
      if (pos == std::string::npos) continue;
      auto rest = line.substr(pos + tag.size());
      auto toks = tokenize(rest);
      if (toks.size() != 1) return std::nullopt;
      if (got[static_cast<std::size_t>(i)]) return std::nullopt;
      words[static_cast<std::size_t>(i)] = toks[0];
      got[static_cast<std::size_t>(i)] = true;
    }
  }
  for (bool g : got)
    if (!g) return std::nullopt;
  return words;
}

}  // namespace

void validate_prompt_template(const std::string& template_text) {
  for (const char* slot : {kSlotMaskedQuery, kSlotCandidates}) {
    int n = count_slot(template_text, slot);
    if (n != 1)
      throw Error(Errc::config_error,
                  std::string("prompt template must contain ") + slot +
                      " exactly once, found " + std::to_string(n));
  }
}

MaskPlan plan_masks(const TaggedQuery& q, double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0))
    throw Error(Errc::bad_ratios,
                "mask ratio must lie in (0,1), got " + std::to_string(ratio));

  // Maskable primitives in importance order, subject excluded.
  std::vector<std::pair<int, int>> order;  // (class, token position)
  for (int c = 0; c < kNumPrimClasses; ++c)
    for (int t = 0; t < q.size(); ++t) {
      if (q.tags[static_cast<std::size_t>(t)] != static_cast<Prim>(c))
        continue;
      if (q.subject_index && *q.subject_index == t) continue;
      order.emplace_back(c, t);
    }

  MaskPlan plan;
  plan.query_id = q.query_id;
  plan.ratio = ratio;

  if (order.empty()) {
    if (!q.subject_index)
      throw Error(Errc::no_primitives,
                  "query '" + q.query_id + "' has no primitive tokens");
    plan.masked_positions.push_back(*q.subject_index);
    plan.masked_classes.push_back(Prim::NOUN);
    return plan;
  }

  const auto p = static_cast<double>(order.size());
  auto count = static_cast<std::size_t>(
      std::max(1.0, std::floor(ratio * p + 0.5)));  // half-up
  count = std::min(count, order.size());
  for (std::size_t i = 0; i < count; ++i) {
    plan.masked_positions.push_back(order[i].second);
    plan.masked_classes.push_back(static_cast<Prim>(order[i].first));
  }
  return plan;
}

std::array<MaskPlan, 3> build_hierarchy(const TaggedQuery& q,
                                        const std::array<double, 3>& ratios) {
  for (double r : ratios)
    if (!(r > 0.0 && r < 1.0))
      throw Error(Errc::bad_ratios,
                  "mask ratios must lie in (0,1), got " + std::to_string(r));
  if (!(ratios[0] < ratios[1] && ratios[1] < ratios[2]))
    throw Error(Errc::bad_ratios, "mask ratios must be strictly increasing");
  return {plan_masks(q, ratios[0]), plan_masks(q, ratios[1]),
          plan_masks(q, ratios[2])};
}

NegativeRecord fill_lexicon(const MaskPlan& plan, const TaggedQuery& q,
                            const PrimitiveDictionary& dict,
                            std::uint64_t seed, NegLevel level,
                            bool frequency_weighted) {
  Rng rng(seed);
  auto tokens = q.tokens;
  for (std::size_t i = 0; i < plan.masked_positions.size(); ++i) {
    const auto pos = static_cast<std::size_t>(plan.masked_positions[i]);
    const Prim cls = plan.masked_classes[i];
    const std::string& original = q.tokens[pos];

    std::vector<std::pair<std::string, int>> candidates;
    for (const auto& [word, count] : dict.for_class(cls))
      if (word != original) candidates.emplace_back(word, count);
    if (candidates.empty())
      throw Error(Errc::exhausted_class,
                  std::string("no replacement candidates for class ") +
                      prim_name(cls) + " (original '" + original + "')");

    std::size_t pick = 0;
    long long total = 0;
    if (frequency_weighted)
      for (const auto& [word, count] : candidates) total += count;
    if (frequency_weighted && total > 0) {
      auto r = static_cast<long long>(
          rng.below(static_cast<std::uint64_t>(total)));
      while (r >= candidates[pick].second) r -= candidates[pick++].second;
    } else {
      pick = static_cast<std::size_t>(rng.below(candidates.size()));
    }
    tokens[pos] = candidates[pick].first;
  }

  NegativeRecord rec;
  rec.query_id = plan.query_id;
  rec.level = level;
  rec.masked_positions = plan.masked_positions;
  rec.negative_text = join_tokens(tokens);
  rec.filler = Filler::lexicon;
  return rec;
}

NegativeRecord fill_llm(const MaskPlan& plan, const TaggedQuery& q,
                        const PrimitiveDictionary& dict,
                        const PromptConfig& cfg, ChatClient& endpoint,
                        std::uint64_t seed, NegLevel level) {
  validate_prompt_template(cfg.template_text);
  const int n_slots = static_cast<int>(plan.masked_positions.size());

  // Originals per class, so no slot can be offered its own word back.
  std::array<std::vector<std::string>, kNumPrimClasses> originals;
  for (std::size_t i = 0; i < plan.masked_positions.size(); ++i)
    originals[static_cast<std::size_t>(plan.masked_classes[i])].push_back(
        q.tokens[static_cast<std::size_t>(plan.masked_positions[i])]);

  // Seeded random subset per masked class.
  Rng rng(seed);
  std::array<std::vector<std::string>, kNumPrimClasses> subset;
  for (int c = 0; c < kNumPrimClasses; ++c) {
    if (originals[static_cast<std::size_t>(c)].empty()) continue;
    std::vector<std::string> pool;
    for (const auto& [word, count] : dict.for_class(static_cast<Prim>(c))) {
      const auto& orig = originals[static_cast<std::size_t>(c)];
      if (std::find(orig.begin(), orig.end(), word) == orig.end())
        pool.push_back(word);
    }
    if (pool.empty())
      throw Error(Errc::exhausted_class,
                  std::string("no candidate words for class ") +
                      prim_name(static_cast<Prim>(c)));
    rng.shuffle(pool);
    if (pool.size() > static_cast<std::size_t>(cfg.dict_subset_size))
      pool.resize(static_cast<std::size_t>(cfg.dict_subset_size));
    subset[static_cast<std::size_t>(c)] = std::move(pool);
  }

  auto masked_tokens = q.tokens;
  for (int i = 0; i < n_slots; ++i)
    masked_tokens[static_cast<std::size_t>(plan.masked_positions
                                               [static_cast<std::size_t>(i)])] =
        slot_tag(i);

  std::string candidates_block;
  for (int i = 0; i < n_slots; ++i) {
    const Prim cls = plan.masked_classes[static_cast<std::size_t>(i)];
    candidates_block += slot_tag(i);
    candidates_block += " (";
    candidates_block += prim_name(cls);
    candidates_block += "): ";
    const auto& words = subset[static_cast<std::size_t>(cls)];
    for (std::size_t w = 0; w < words.size(); ++w) {
      if (w) candidates_block += ", ";
      candidates_block += words[w];
    }
    candidates_block += '\n';
  }
  if (!candidates_block.empty()) candidates_block.pop_back();

  std::string prompt = replace_slot(cfg.template_text, kSlotMaskedQuery,
                                    join_tokens(masked_tokens));
  prompt = replace_slot(prompt, kSlotCandidates, candidates_block);
  const std::vector<ChatMessage> messages = {{"user", prompt}};

  const int attempts = 1 + std::max(0, cfg.max_retries);
  for (int attempt = 0; attempt < attempts; ++attempt) {
    std::string reply;
    try {
      reply = endpoint.complete(messages, cfg.temperature);
    } catch (const Error& e) {
      if (e.code() == Errc::parse_failure) continue;  // garbled, retry
      throw;                                          // auth / unreachable
    }
    auto words = parse_slot_reply(reply, n_slots);
    if (!words) continue;
    bool in_subset = true;
    for (int i = 0; i < n_slots && in_subset; ++i) {
      const auto& allowed = subset[static_cast<std::size_t>(
          plan.masked_classes[static_cast<std::size_t>(i)])];
      in_subset = std::find(allowed.begin(), allowed.end(),
                            (*words)[static_cast<std::size_t>(i)]) !=
                  allowed.end();
    }
    if (!in_subset) continue;

    auto tokens = q.tokens;
    for (int i = 0; i < n_slots; ++i)
      tokens[static_cast<std::size_t>(
          plan.masked_positions[static_cast<std::size_t>(i)])] =
          (*words)[static_cast<std::size_t>(i)];
    NegativeRecord rec;
    rec.query_id = plan.query_id;
    rec.level = level;
    rec.masked_positions = plan.masked_positions;
    rec.negative_text = join_tokens(tokens);
    rec.filler = Filler::llm;
    rec.model_id = endpoint.model_id();
    return rec;
  }

  NegativeRecord rec = fill_lexicon(plan, q, dict, seed, level);
  rec.llm_fallback = true;
  rec.model_id = endpoint.model_id();
  return rec;
}

std::string sample_easy_negative(const std::vector<std::string>& batch,
                                 std::size_t index, std::uint64_t seed) {
  if (batch.size() < 2)
    throw Error(Errc::batch_too_small,
                "easy-negative sampling needs a batch of at least 2, got " +
                    std::to_string(batch.size()));
  if (index >= batch.size())
    throw Error(Errc::batch_too_small,
                "batch index " + std::to_string(index) + " out of range");
  Rng rng(seed);
  auto j = static_cast<std::size_t>(rng.below(batch.size() - 1));
  if (j >= index) ++j;
  return batch[j];
}

std::string negative_key(const std::string& query_id, NegLevel level) {
  return query_id + '\x1f' + level_name(level);
}

bool from_pipeline(const NegativeRecord& rec, Filler pipeline) {
  if (pipeline == Filler::llm)
    return rec.filler == Filler::llm || rec.llm_fallback;
  return rec.filler == Filler::lexicon && !rec.llm_fallback;
}

std::map<std::string, NegativeRecord> index_negatives(
    const std::vector<NegativeRecord>& records, Filler pipeline) {
  std::map<std::string, NegativeRecord> out;
  for (const auto& rec : records)
    if (from_pipeline(rec, pipeline))
      out[negative_key(rec.query_id, rec.level)] = rec;
  return out;
}

namespace {

constexpr NegLevel kLevels[3] = {NegLevel::hn1, NegLevel::hn2, NegLevel::hn3};

std::uint64_t record_seed(const ForgeConfig& cfg, const std::string& query_id,
                          NegLevel level) {
  return cfg.seed ^ fnv1a64(query_id) ^
         (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(level));
}

}  // namespace

std::vector<NegativeRecord> forge_negatives(
    const std::vector<TaggedQuery>& queries, const PrimitiveDictionary& dict,
    const ForgeConfig& cfg, ChatClient* endpoint,
    const std::vector<NegativeRecord>& cache,
    const std::function<void(const NegativeRecord&)>& on_record) {
  if (cfg.use_llm) {
    if (endpoint == nullptr)
      throw Error(Errc::config_error, "llm filling requires a chat endpoint");
    validate_prompt_template(cfg.prompt.template_text);
  }

  const Filler pipeline = cfg.use_llm ? Filler::llm : Filler::lexicon;
  const auto cached = index_negatives(cache, pipeline);

  std::vector<NegativeRecord> out(queries.size() * 3);
  std::mutex mu;  // serializes the writer and error capture
  std::exception_ptr first_error;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};

  auto work = [&]() {
    while (!stop.load()) {
      const std::size_t qi = next.fetch_add(1);
      if (qi >= queries.size()) return;
      try {
        const TaggedQuery& q = queries[qi];
        const auto plans = build_hierarchy(q, cfg.ratios);
        for (int li = 0; li < 3; ++li) {
          const NegLevel level = kLevels[li];
          NegativeRecord rec;
          auto hit = cached.find(negative_key(q.query_id, level));
          if (hit != cached.end()) {
            rec = hit->second;
          } else {
            const auto seed = record_seed(cfg, q.query_id, level);
            rec = cfg.use_llm
                      ? fill_llm(plans[static_cast<std::size_t>(li)], q, dict,
                                 cfg.prompt, *endpoint, seed, level)
                      : fill_lexicon(plans[static_cast<std::size_t>(li)], q,
                                     dict, seed, level,
                                     cfg.frequency_weighted);
            if (!cfg.created_at.empty()) rec.created_at = cfg.created_at;
            if (on_record) {
              std::lock_guard<std::mutex> lock(mu);
              on_record(rec);
            }
          }
          out[qi * 3 + static_cast<std::size_t>(li)] = std::move(rec);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!first_error) first_error = std::current_exception();
        stop.store(true);
        return;
      }
    }
  };

  const int n_workers =
      cfg.use_llm
          ? std::max(1, std::min(cfg.in_flight,
                                 static_cast<int>(queries.size())))
          : 1;
  if (n_workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_workers));
    for (int i = 0; i < n_workers; ++i) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

}  // namespace shine
