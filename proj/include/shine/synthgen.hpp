#pragma once
// Synthetic compositional grounding corpus with a known semantic oracle.
// Every query renders from the fixed template
//   "person <adverb> <verb> the <adjective> <object_noun> <preposition>
//    the <second_noun>"
// so tags are exact by construction. Clip features are per-word embeddings
// averaged per event plus Gaussian noise: a scorer has to bind primitives
// to features before the ordering metrics can move.

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "shine/corpus.hpp"
#include "shine/errors.hpp"
#include "shine/tagger.hpp"

namespace shine {

// Indices into the per-class vocabularies; both noun slots index the NOUN
// list.
struct EventTuple {
  int verb = 0;
  int object_noun = 0;
  int adjective = 0;
  int preposition = 0;
  int second_noun = 0;
  int adverb = 0;

  bool operator==(const EventTuple&) const = default;
};

// Word lists indexed by Prim value (VERB..ADV).
struct SynthVocab {
  std::array<std::vector<std::string>, 5> words;
};

struct SynthConfig {
  int vocab_per_class = 12;
  int n_train = 500;
  int n_per_test_split = 100;
  int clips = 32;        // T
  int feature_dim = 32;  // d_v
  double noise_sigma = 0.3;
  double holdout_fraction = 0.15;
  int n_distractors = 2;
  double clip_len_s = 1.0;
};

struct SynthSample {
  std::string query_id;  // doubles as the video id
  Split split = Split::train;
  EventTuple event;
  std::vector<EventTuple> distractors;
  SpanClips span;  // clip indices
  std::uint64_t feature_seed = 0;
};

struct SynthCorpus {
  SynthConfig cfg;
  std::uint64_t seed = 0;
  SynthVocab vocab;
  std::array<std::vector<int>, 5> held_words;   // absent from train, sorted
  std::vector<std::pair<int, int>> held_pairs;  // (verb, object_noun), sorted
  std::vector<SynthSample> samples;  // train, trivial, composition, word
};

// Deterministic in (cfg, seed); per-sample state is derived from the
// sample id so generation order is immaterial.
SynthCorpus gen_corpus(const SynthConfig& cfg, std::uint64_t seed);

// Oracle similarity over the five primitive classes. weights (indexed by
// Prim, summing to 1) distribute uniformly over a class's slots, so each
// noun slot carries half the NOUN weight.
double semantic_overlap(const EventTuple& a, const EventTuple& b,
                        const std::array<double, 5>& weights);

inline constexpr std::array<double, 5> kEqualClassWeights = {0.2, 0.2, 0.2,
                                                             0.2, 0.2};

TaggedQuery render_query(const SynthVocab& vocab, const EventTuple& event,
                         const std::string& query_id);

// Inverse of render_query on the token level. Replacement words outside the
// vocabulary map to slot index -1; a query that does not fit the template
// shape is rejected.
EventTuple tuple_from_tokens(const SynthVocab& vocab,
                             const std::vector<std::string>& tokens);

// Token position of each primitive slot in the rendered template.
inline constexpr int kSlotAdverb = 1;
inline constexpr int kSlotVerb = 2;
inline constexpr int kSlotAdjective = 4;
inline constexpr int kSlotObjectNoun = 5;
inline constexpr int kSlotPreposition = 6;
inline constexpr int kSlotSecondNoun = 8;

Annotation to_annotation(const SynthCorpus& corpus, const SynthSample& s);

std::vector<TaggedQuery> rendered_queries(const SynthCorpus& corpus,
                                          Split split);

// Fixed per-word embeddings derived from the corpus seed.
struct FeatureSpace {
  int dim = 0;
  std::array<std::vector<std::vector<double>>, 5> emb;  // [class][word][dim]
};

FeatureSpace make_feature_space(const SynthVocab& vocab, int dim,
                                std::uint64_t seed);

std::vector<double> event_embedding(const FeatureSpace& space,
                                    const EventTuple& event);

// T x dim matrix regenerated from the sample's feature seed: event
// embedding inside the span, a distractor embedding outside, noise added
// everywhere.
std::vector<std::vector<double>> sample_features(const FeatureSpace& space,
                                                 const SynthSample& s,
                                                 const SynthConfig& cfg);

// Writes annotations.jsonl plus sidecar.json into dir; loading the pair
// reconstructs the corpus exactly (features stay seed-derived).
void save_corpus(const SynthCorpus& corpus, const std::string& dir);
SynthCorpus load_corpus(const std::string& dir);

}  // namespace shine
