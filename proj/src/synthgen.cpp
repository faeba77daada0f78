#include "shine/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "shine/rng.hpp"

namespace shine {

namespace {

using nlohmann::json;

constexpr std::uint64_t kFeatureSalt = 0x8F1BBCDC2C6B5A6DULL;
constexpr std::uint64_t kSampleSalt = 0x243F6A8885A308D3ULL;
constexpr std::uint64_t kEmbedSalt = 0x13198A2E03707344ULL;
constexpr std::uint64_t kVocabSalt = 0xA4093822299F31D0ULL;

std::array<int, 6> slot_positions() {
  return {kSlotAdverb, kSlotVerb, kSlotAdjective,
          kSlotObjectNoun, kSlotPreposition, kSlotSecondNoun};
}

// Slot order used throughout: the EventTuple field order.
std::array<int, 6> tuple_fields(const EventTuple& e) {
  return {e.verb, e.object_noun, e.adjective,
          e.preposition, e.second_noun, e.adverb};
}

std::string make_pseudoword(Rng& rng, int syllables) {
  static constexpr char kConsonants[] = "bdfgklmnprstvz";
  static constexpr char kVowels[] = "aeiou";
  std::string w;
  for (int s = 0; s < syllables; ++s) {
    w += kConsonants[rng.below(sizeof(kConsonants) - 1)];
    w += kVowels[rng.below(sizeof(kVowels) - 1)];
  }
  return w;
}

std::string format_id(int n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "synth-%06d", n);
  return buf;
}

int draw_from(Rng& rng, const std::vector<int>& pool) {
  return pool[rng.below(pool.size())];
}

json tuple_json(const EventTuple& e) {
  return json::array({e.verb, e.object_noun, e.adjective, e.preposition,
                      e.second_noun, e.adverb});
}

EventTuple tuple_from_json(const json& j) {
  if (!j.is_array() || j.size() != 6) {
    throw Error(Errc::malformed_record, "event tuple must have 6 indices");
  }
  EventTuple e;
  e.verb = j[0].get<int>();
  e.object_noun = j[1].get<int>();
  e.adjective = j[2].get<int>();
  e.preposition = j[3].get<int>();
  e.second_noun = j[4].get<int>();
  e.adverb = j[5].get<int>();
  return e;
}

}  // namespace

double semantic_overlap(const EventTuple& a, const EventTuple& b,
                        const std::array<double, 5>& weights) {
  double sum = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw Error(Errc::bad_weights, "negative class weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw Error(Errc::bad_weights, "class weights must sum to 1");
  }
  const double wv = weights[static_cast<int>(Prim::VERB)];
  const double wn = weights[static_cast<int>(Prim::NOUN)];
  const double wa = weights[static_cast<int>(Prim::ADJ)];
  const double wp = weights[static_cast<int>(Prim::PREP)];
  const double wd = weights[static_cast<int>(Prim::ADV)];
  double s = 0.0;
  if (a.verb == b.verb) s += wv;
  if (a.object_noun == b.object_noun) s += wn * 0.5;
  if (a.second_noun == b.second_noun) s += wn * 0.5;
  if (a.adjective == b.adjective) s += wa;
  if (a.preposition == b.preposition) s += wp;
  if (a.adverb == b.adverb) s += wd;
  return s;
}

TaggedQuery render_query(const SynthVocab& vocab, const EventTuple& event,
                         const std::string& query_id) {
  auto word = [&](Prim c, int idx) -> const std::string& {
    const auto& list = vocab.words[static_cast<int>(c)];
    if (idx < 0 || idx >= static_cast<int>(list.size())) {
      throw Error(Errc::unknown_token,
                  "vocabulary index out of range for " +
                      std::string(prim_name(c)));
    }
    return list[static_cast<std::size_t>(idx)];
  };
  TaggedQuery q;
  q.query_id = query_id;
  q.tokens = {"person",
              word(Prim::ADV, event.adverb),
              word(Prim::VERB, event.verb),
              "the",
              word(Prim::ADJ, event.adjective),
              word(Prim::NOUN, event.object_noun),
              word(Prim::PREP, event.preposition),
              "the",
              word(Prim::NOUN, event.second_noun)};
  q.tags = {Prim::NOUN, Prim::ADV, Prim::VERB, Prim::OTHER, Prim::ADJ,
            Prim::NOUN, Prim::PREP, Prim::OTHER, Prim::NOUN};
  q.subject_index = 0;
  return q;
}

EventTuple tuple_from_tokens(const SynthVocab& vocab,
                             const std::vector<std::string>& tokens) {
  if (tokens.size() != 9 || tokens[0] != "person" || tokens[3] != "the" ||
      tokens[7] != "the") {
    throw Error(Errc::malformed_record,
                "query does not fit the synthetic template");
  }
  auto find = [&](Prim c, const std::string& w) {
    const auto& list = vocab.words[static_cast<int>(c)];
    auto it = std::find(list.begin(), list.end(), w);
    return it == list.end() ? -1 : static_cast<int>(it - list.begin());
  };
  EventTuple e;
  e.adverb = find(Prim::ADV, tokens[kSlotAdverb]);
  e.verb = find(Prim::VERB, tokens[kSlotVerb]);
  e.adjective = find(Prim::ADJ, tokens[kSlotAdjective]);
  e.object_noun = find(Prim::NOUN, tokens[kSlotObjectNoun]);
  e.preposition = find(Prim::PREP, tokens[kSlotPreposition]);
  e.second_noun = find(Prim::NOUN, tokens[kSlotSecondNoun]);
  return e;
}

SynthCorpus gen_corpus(const SynthConfig& cfg, std::uint64_t seed) {
  if (cfg.vocab_per_class < 4) {
    throw Error(Errc::insufficient_vocab,
                "need at least 4 words per class, got " +
                    std::to_string(cfg.vocab_per_class));
  }
  if (cfg.holdout_fraction <= 0.0 || cfg.holdout_fraction >= 0.5) {
    throw Error(Errc::config_error, "holdout fraction must be in (0, 0.5)");
  }
  if (cfg.clips < 2 || cfg.feature_dim < 1 || cfg.n_train < 1 ||
      cfg.n_per_test_split < 1 || cfg.n_distractors < 1 ||
      cfg.noise_sigma < 0.0 || cfg.clip_len_s <= 0.0) {
    throw Error(Errc::config_error, "invalid synthetic corpus configuration");
  }

  SynthCorpus corpus;
  corpus.cfg = cfg;
  corpus.seed = seed;

  // Globally unique pseudowords, 5 classes.
  Rng vocab_rng(seed ^ kVocabSalt);
  std::set<std::string> taken = {"person", "the"};
  for (auto& list : corpus.vocab.words) {
    list.reserve(static_cast<std::size_t>(cfg.vocab_per_class));
    while (static_cast<int>(list.size()) < cfg.vocab_per_class) {
      std::string w = make_pseudoword(vocab_rng, 2);
      if (taken.insert(w).second) list.push_back(w);
    }
  }

  // Held-out words per class and held-out (verb, object_noun) pairs.
  std::array<std::vector<int>, 5> train_words;
  for (int c = 0; c < 5; ++c) {
    int n_held = std::max(
        1, static_cast<int>(cfg.holdout_fraction * cfg.vocab_per_class));
    std::vector<int> idx(static_cast<std::size_t>(cfg.vocab_per_class));
    for (int i = 0; i < cfg.vocab_per_class; ++i) idx[i] = i;
    Rng held_rng = vocab_rng.fork(static_cast<std::uint64_t>(c) + 101);
    held_rng.shuffle(idx);
    corpus.held_words[c].assign(idx.begin(), idx.begin() + n_held);
    std::sort(corpus.held_words[c].begin(), corpus.held_words[c].end());
    for (int i = 0; i < cfg.vocab_per_class; ++i) {
      if (!std::binary_search(corpus.held_words[c].begin(),
                              corpus.held_words[c].end(), i)) {
        train_words[c].push_back(i);
      }
    }
  }

  const auto& tverbs = train_words[static_cast<int>(Prim::VERB)];
  const auto& tnouns = train_words[static_cast<int>(Prim::NOUN)];
  std::vector<std::pair<int, int>> all_pairs;
  for (int v : tverbs) {
    for (int o : tnouns) all_pairs.emplace_back(v, o);
  }
  int n_held_pairs = std::max(
      1, static_cast<int>(cfg.holdout_fraction * all_pairs.size()));
  Rng pair_rng = vocab_rng.fork(977);
  pair_rng.shuffle(all_pairs);
  corpus.held_pairs.assign(all_pairs.begin(), all_pairs.begin() + n_held_pairs);
  std::sort(corpus.held_pairs.begin(), corpus.held_pairs.end());

  auto pair_held = [&](int v, int o) {
    return std::binary_search(corpus.held_pairs.begin(),
                              corpus.held_pairs.end(), std::make_pair(v, o));
  };

  auto draw_train_event = [&](Rng& rng) {
    EventTuple e;
    do {
      e.verb = draw_from(rng, train_words[static_cast<int>(Prim::VERB)]);
      e.object_noun = draw_from(rng, train_words[static_cast<int>(Prim::NOUN)]);
    } while (pair_held(e.verb, e.object_noun));
    e.second_noun = draw_from(rng, train_words[static_cast<int>(Prim::NOUN)]);
    e.adjective = draw_from(rng, train_words[static_cast<int>(Prim::ADJ)]);
    e.preposition = draw_from(rng, train_words[static_cast<int>(Prim::PREP)]);
    e.adverb = draw_from(rng, train_words[static_cast<int>(Prim::ADV)]);
    return e;
  };

  struct SplitPlan {
    Split split;
    int count;
  };
  const SplitPlan plan[4] = {{Split::train, cfg.n_train},
                             {Split::test_trivial, cfg.n_per_test_split},
                             {Split::novel_composition, cfg.n_per_test_split},
                             {Split::novel_word, cfg.n_per_test_split}};

  int counter = 0;
  for (const auto& [split, count] : plan) {
    for (int i = 0; i < count; ++i, ++counter) {
      SynthSample s;
      s.query_id = format_id(counter);
      s.split = split;
      std::uint64_t sample_seed =
          seed ^ fnv1a64(s.query_id) ^ kSampleSalt;
      Rng rng(sample_seed);

      switch (split) {
        case Split::train:
        case Split::test_trivial:
          s.event = draw_train_event(rng);
          break;
        case Split::novel_composition: {
          s.event = draw_train_event(rng);
          auto [v, o] = corpus.held_pairs[rng.below(corpus.held_pairs.size())];
          s.event.verb = v;
          s.event.object_noun = o;
          break;
        }
        case Split::novel_word: {
          s.event = draw_train_event(rng);
          int c = static_cast<int>(rng.below(5));
          const auto& held = corpus.held_words[c];
          int w = held[rng.below(held.size())];
          switch (static_cast<Prim>(c)) {
            case Prim::VERB:
              s.event.verb = w;
              break;
            case Prim::NOUN:
              if (rng.below(2) == 0) {
                s.event.object_noun = w;
              } else {
                s.event.second_noun = w;
              }
              break;
            case Prim::ADJ:
              s.event.adjective = w;
              break;
            case Prim::PREP:
              s.event.preposition = w;
              break;
            case Prim::ADV:
              s.event.adverb = w;
              break;
            default:
              break;
          }
          break;
        }
      }

      for (int d = 0; d < cfg.n_distractors; ++d) {
        EventTuple t;
        do {
          t = draw_train_event(rng);
          // Near-duplicates of the event would blur the in/out-of-span
          // contrast the features are supposed to carry.
        } while (semantic_overlap(s.event, t, kEqualClassWeights) > 0.5);
        s.distractors.push_back(t);
      }

      // The span is a function of the event so localization is learnable
      // from the query alone: the verb places the center, the adverb sets
      // the width, and a one-clip jitter keeps spans off a rigid lattice.
      const int n_verb =
          static_cast<int>(corpus.vocab.words[int(Prim::VERB)].size());
      const int n_adv =
          static_cast<int>(corpus.vocab.words[int(Prim::ADV)].size());
      const int max_len = std::max(2, cfg.clips / 2);
      int len = 2 + static_cast<int>(std::lround(
                        (max_len - 2) *
                        (double(s.event.adverb) / std::max(1, n_adv - 1))));
      len = std::min(len, cfg.clips - 1);
      const double center = (s.event.verb + 0.5) / n_verb * cfg.clips;
      const int jitter = static_cast<int>(rng.below(3)) - 1;
      int start = static_cast<int>(std::lround(center - 0.5 * len)) + jitter;
      start = std::clamp(start, 0, cfg.clips - len);
      s.span = {start, start + len};
      s.feature_seed = sample_seed ^ kFeatureSalt;
      corpus.samples.push_back(std::move(s));
    }
  }
  return corpus;
}

Annotation to_annotation(const SynthCorpus& corpus, const SynthSample& s) {
  Annotation a;
  a.video_id = s.query_id;
  a.duration_s = corpus.cfg.clips * corpus.cfg.clip_len_s;
  a.span = clips_to_span(s.span, corpus.cfg.clip_len_s);
  a.query_text = render_query(corpus.vocab, s.event, s.query_id).text();
  a.split = s.split;
  return a;
}

std::vector<TaggedQuery> rendered_queries(const SynthCorpus& corpus,
                                          Split split) {
  std::vector<TaggedQuery> out;
  for (const auto& s : corpus.samples) {
    if (s.split == split) {
      out.push_back(render_query(corpus.vocab, s.event, s.query_id));
    }
  }
  return out;
}

FeatureSpace make_feature_space(const SynthVocab& vocab, int dim,
                                std::uint64_t seed) {
  if (dim < 1) throw Error(Errc::config_error, "feature dim must be >= 1");
  FeatureSpace space;
  space.dim = dim;
  Rng rng(seed ^ kEmbedSalt);
  for (int c = 0; c < 5; ++c) {
    space.emb[c].resize(vocab.words[c].size());
    for (auto& e : space.emb[c]) {
      e.resize(static_cast<std::size_t>(dim));
      for (double& x : e) x = rng.normal();
    }
  }
  return space;
}

std::vector<double> event_embedding(const FeatureSpace& space,
                                    const EventTuple& event) {
  auto vec = [&](Prim c, int idx) -> const std::vector<double>* {
    const auto& list = space.emb[static_cast<int>(c)];
    if (idx < 0 || idx >= static_cast<int>(list.size())) {
      throw Error(Errc::unknown_token, "embedding index out of range");
    }
    return &list[static_cast<std::size_t>(idx)];
  };
  std::vector<double> out(static_cast<std::size_t>(space.dim), 0.0);
  const std::vector<double>* parts[6] = {
      vec(Prim::VERB, event.verb),       vec(Prim::NOUN, event.object_noun),
      vec(Prim::ADJ, event.adjective),   vec(Prim::PREP, event.preposition),
      vec(Prim::NOUN, event.second_noun), vec(Prim::ADV, event.adverb)};
  for (const auto* p : parts) {
    for (int d = 0; d < space.dim; ++d) out[d] += (*p)[d];
  }
  for (double& x : out) x /= 6.0;
  return out;
}

std::vector<std::vector<double>> sample_features(const FeatureSpace& space,
                                                 const SynthSample& s,
                                                 const SynthConfig& cfg) {
  if (space.dim != cfg.feature_dim) {
    throw Error(Errc::shape_mismatch, "feature space dim mismatch");
  }
  std::vector<double> event_emb = event_embedding(space, s.event);
  std::vector<std::vector<double>> dist_embs;
  for (const auto& d : s.distractors) {
    dist_embs.push_back(event_embedding(space, d));
  }
  if (dist_embs.empty()) {
    throw Error(Errc::config_error, "sample has no distractors");
  }

  Rng rng(s.feature_seed);
  std::vector<std::vector<double>> x(static_cast<std::size_t>(cfg.clips));
  for (int t = 0; t < cfg.clips; ++t) {
    const std::vector<double>* base = &event_emb;
    if (!s.span.contains(t)) {
      base = &dist_embs[rng.below(dist_embs.size())];
    }
    x[t].resize(static_cast<std::size_t>(cfg.feature_dim));
    for (int d = 0; d < cfg.feature_dim; ++d) {
      x[t][d] = (*base)[d] + cfg.noise_sigma * rng.normal();
    }
  }
  return x;
}

void save_corpus(const SynthCorpus& corpus, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::vector<Annotation> annos;
  annos.reserve(corpus.samples.size());
  for (const auto& s : corpus.samples) {
    annos.push_back(to_annotation(corpus, s));
  }
  save_annotations(annos, dir + "/annotations.jsonl");

  json j;
  j["seed"] = corpus.seed;
  j["config"] = {{"vocab_per_class", corpus.cfg.vocab_per_class},
                 {"n_train", corpus.cfg.n_train},
                 {"n_per_test_split", corpus.cfg.n_per_test_split},
                 {"clips", corpus.cfg.clips},
                 {"feature_dim", corpus.cfg.feature_dim},
                 {"noise_sigma", corpus.cfg.noise_sigma},
                 {"holdout_fraction", corpus.cfg.holdout_fraction},
                 {"n_distractors", corpus.cfg.n_distractors},
                 {"clip_len_s", corpus.cfg.clip_len_s}};
  json vocab = json::object();
  json held = json::object();
  for (int c = 0; c < 5; ++c) {
    const char* name = prim_name(static_cast<Prim>(c));
    vocab[name] = corpus.vocab.words[c];
    held[name] = corpus.held_words[c];
  }
  j["vocab"] = vocab;
  j["held_words"] = held;
  j["held_pairs"] = corpus.held_pairs;
  json samples = json::array();
  for (const auto& s : corpus.samples) {
    samples.push_back({{"query_id", s.query_id},
                       {"split", split_name(s.split)},
                       {"event", tuple_json(s.event)},
                       {"distractors",
                        [&] {
                          json a = json::array();
                          for (const auto& d : s.distractors) {
                            a.push_back(tuple_json(d));
                          }
                          return a;
                        }()},
                       {"span", {s.span.begin, s.span.end}},
                       {"feature_seed", s.feature_seed}});
  }
  j["samples"] = samples;

  std::ofstream out(dir + "/sidecar.json", std::ios::binary);
  if (!out) throw Error(Errc::io_failure, "cannot write " + dir);
  out << j.dump(2) << "\n";
}

SynthCorpus load_corpus(const std::string& dir) {
  std::ifstream in(dir + "/sidecar.json", std::ios::binary);
  if (!in) {
    throw Error(Errc::missing_file, dir + "/sidecar.json not found");
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(Errc::malformed_record,
                std::string("sidecar parse failure: ") + e.what());
  }

  SynthCorpus corpus;
  try {
    corpus.seed = j.at("seed").get<std::uint64_t>();
    const json& c = j.at("config");
    corpus.cfg.vocab_per_class = c.at("vocab_per_class").get<int>();
    corpus.cfg.n_train = c.at("n_train").get<int>();
    corpus.cfg.n_per_test_split = c.at("n_per_test_split").get<int>();
    corpus.cfg.clips = c.at("clips").get<int>();
    corpus.cfg.feature_dim = c.at("feature_dim").get<int>();
    corpus.cfg.noise_sigma = c.at("noise_sigma").get<double>();
    corpus.cfg.holdout_fraction = c.at("holdout_fraction").get<double>();
    corpus.cfg.n_distractors = c.at("n_distractors").get<int>();
    corpus.cfg.clip_len_s = c.at("clip_len_s").get<double>();
    for (int cls = 0; cls < 5; ++cls) {
      const char* name = prim_name(static_cast<Prim>(cls));
      corpus.vocab.words[cls] =
          j.at("vocab").at(name).get<std::vector<std::string>>();
      corpus.held_words[cls] =
          j.at("held_words").at(name).get<std::vector<int>>();
    }
    corpus.held_pairs =
        j.at("held_pairs").get<std::vector<std::pair<int, int>>>();
    for (const json& sj : j.at("samples")) {
      SynthSample s;
      s.query_id = sj.at("query_id").get<std::string>();
      auto split = parse_split(sj.at("split").get<std::string>());
      if (!split) {
        throw Error(Errc::malformed_record,
                    "unknown split in sidecar for " + s.query_id);
      }
      s.split = *split;
      s.event = tuple_from_json(sj.at("event"));
      for (const json& dj : sj.at("distractors")) {
        s.distractors.push_back(tuple_from_json(dj));
      }
      s.span.begin = sj.at("span")[0].get<int>();
      s.span.end = sj.at("span")[1].get<int>();
      s.feature_seed = sj.at("feature_seed").get<std::uint64_t>();
      corpus.samples.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::malformed_record,
                std::string("sidecar field failure: ") + e.what());
  }
  return corpus;
}

}  // namespace shine
