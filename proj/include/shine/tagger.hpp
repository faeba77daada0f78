#pragma once
// Primitive-class tagging of query tokens and the training-set primitive
// dictionary built from them.
//
// The tagger is a bundled lexicon (word -> most frequent primitive class,
// data/lexicon.tsv, one "word<TAB>CLASS" per line) plus deterministic
// fallbacks for unknown words: a closed-class preposition list, "-ly" ->
// ADV, and "-ing"/"-ed" -> VERB when the stem is a known verb. Everything
// else is OTHER.

#include <array>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "shine/errors.hpp"

namespace shine {

enum class Prim { VERB = 0, NOUN = 1, ADJ = 2, PREP = 3, ADV = 4, OTHER = 5 };

inline constexpr int kNumPrimClasses = 5;  // OTHER excluded

const char* prim_name(Prim p);
std::optional<Prim> parse_prim(const std::string& s);

struct TaggedQuery {
  std::string query_id;
  std::vector<std::string> tokens;
  std::vector<Prim> tags;
  std::optional<int> subject_index;

  int size() const { return static_cast<int>(tokens.size()); }
  std::string text() const;
};

class TagLexicon {
 public:
  static TagLexicon load(const std::string& path);
  static TagLexicon from_entries(
      const std::vector<std::pair<std::string, Prim>>& entries);

  void add(const std::string& word, Prim cls);
  std::optional<Prim> lookup(const std::string& word) const;
  bool is_verb(const std::string& word) const;
  std::size_t size() const { return table_.size(); }

 private:
  std::map<std::string, Prim> table_;
};

// Lowercases, strips surrounding punctuation, collapses whitespace.
std::vector<std::string> tokenize(const std::string& text);

// Tags every token; subject_index is the first NOUN preceding the first
// VERB when both exist. Throws EmptyQuery when no tokens survive
// normalization.
TaggedQuery tag_query(const std::string& text, const TagLexicon& lex);

// Per-class multiset of primitive words with occurrence counts. OTHER is
// never stored. Entries are kept sorted by (descending count, word) so two
// builds over the same corpus serialize identically.
struct PrimitiveDictionary {
  std::array<std::vector<std::pair<std::string, int>>, kNumPrimClasses> entries;
  std::string source_split;

  const std::vector<std::pair<std::string, int>>& for_class(Prim p) const;
  int total_count() const;
};

PrimitiveDictionary build_dictionary(const std::vector<TaggedQuery>& queries);

void save_dictionary(const PrimitiveDictionary& dict, const std::string& path);
PrimitiveDictionary load_dictionary(const std::string& path);

}  // namespace shine
