#pragma once
// Hierarchical hard-negative construction: progressive mask plans over a
// query's primitive tokens, filled either from the primitive dictionary or
// through a chat endpoint, plus in-batch easy-negative sampling.

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "shine/chat_client.hpp"
#include "shine/corpus.hpp"
#include "shine/errors.hpp"
#include "shine/tagger.hpp"

namespace shine {

struct MaskPlan {
  std::string query_id;
  double ratio = 0.0;
  // Selection order: VERB -> NOUN -> ADJ -> PREP -> ADV, left to right
  // within a class, subject excluded until nothing else remains. Plans for
  // increasing ratios are therefore prefixes of one another.
  std::vector<int> masked_positions;
  std::vector<Prim> masked_classes;  // parallel to masked_positions
};

struct PromptConfig {
  std::string template_text;  // must contain each slot exactly once
  int dict_subset_size = 20;
  double temperature = 0.7;
  int max_retries = 2;
};

inline constexpr const char* kSlotMaskedQuery = "{{masked_query}}";
inline constexpr const char* kSlotCandidates = "{{candidates}}";

// Throws ConfigError unless both slots appear exactly once.
void validate_prompt_template(const std::string& template_text);

// Mask count is max(1, round(ratio * P)) with half-up rounding, P = number
// of maskable primitives (subject excluded). Throws NoPrimitives when the
// query has no primitive token at all, BadRatios for ratio outside (0,1).
MaskPlan plan_masks(const TaggedQuery& q, double ratio);

// Three nested plans; ratios must be strictly increasing, each in (0,1).
std::array<MaskPlan, 3> build_hierarchy(const TaggedQuery& q,
                                        const std::array<double, 3>& ratios);

// Replaces each masked token with a same-class dictionary word different
// from the original, drawn with a seeded generator (uniform by default,
// count-weighted behind the flag). Throws ExhaustedClass when a masked
// class has no alternative. created_at is left empty; the orchestrator
// stamps it.
NegativeRecord fill_lexicon(const MaskPlan& plan, const TaggedQuery& q,
                            const PrimitiveDictionary& dict,
                            std::uint64_t seed, NegLevel level = NegLevel::hn1,
                            bool frequency_weighted = false);

// One chat call per plan. The prompt shows the masked query with numbered
// [MASKi] slots and, per masked class, a seeded random dictionary subset of
// cfg.dict_subset_size words (originals excluded). The reply must contain
// one "[MASKi]: word" line per slot with the word taken from that subset;
// otherwise the call is retried up to cfg.max_retries times and then falls
// back to fill_lexicon with llm_fallback set. AuthFailure and
// EndpointUnreachable propagate.
NegativeRecord fill_llm(const MaskPlan& plan, const TaggedQuery& q,
                        const PrimitiveDictionary& dict,
                        const PromptConfig& cfg, ChatClient& endpoint,
                        std::uint64_t seed, NegLevel level = NegLevel::hn1);

// Uniform over the batch minus the element at `index`; seeded-deterministic.
// Throws BatchTooSmall for batches of fewer than two queries.
std::string sample_easy_negative(const std::vector<std::string>& batch,
                                 std::size_t index, std::uint64_t seed);

struct NegativeHierarchy {
  TaggedQuery positive;
  std::array<NegativeRecord, 3> hn;  // hn1, hn2, hn3
  std::string easy_query_id;
};

struct ForgeConfig {
  std::array<double, 3> ratios = {0.25, 0.50, 0.75};
  bool use_llm = false;
  bool frequency_weighted = false;
  PromptConfig prompt;
  std::uint64_t seed = 7;
  int in_flight = 4;       // bound on concurrent chat requests
  std::string created_at;  // stamped onto fresh records when non-empty
};

// Builds hn1..hn3 for every query. The cache is consulted before any
// endpoint call; fresh records are handed to on_record (serialized, may be
// null) as they are produced. The returned list is in (query, level) order
// regardless of completion order. endpoint may be null when use_llm is off.
std::vector<NegativeRecord> forge_negatives(
    const std::vector<TaggedQuery>& queries, const PrimitiveDictionary& dict,
    const ForgeConfig& cfg, ChatClient* endpoint,
    const std::vector<NegativeRecord>& cache,
    const std::function<void(const NegativeRecord&)>& on_record = nullptr);

std::string negative_key(const std::string& query_id, NegLevel level);

// True when the record came out of the given pipeline: the llm pipeline
// also owns its lexicon-fallback records.
bool from_pipeline(const NegativeRecord& rec, Filler pipeline);

// negative_key -> record, restricted to one pipeline's records.
std::map<std::string, NegativeRecord> index_negatives(
    const std::vector<NegativeRecord>& records, Filler pipeline);

}  // namespace shine
