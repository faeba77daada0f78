#include "shine/tagger.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace shine {

const char* prim_name(Prim p) {
  switch (p) {
    case Prim::VERB: return "VERB";
    case Prim::NOUN: return "NOUN";
    case Prim::ADJ: return "ADJ";
    case Prim::PREP: return "PREP";
    case Prim::ADV: return "ADV";
    case Prim::OTHER: return "OTHER";
  }
  return "OTHER";
}

std::optional<Prim> parse_prim(const std::string& s) {
  if (s == "VERB") return Prim::VERB;
  if (s == "NOUN") return Prim::NOUN;
  if (s == "ADJ") return Prim::ADJ;
  if (s == "PREP") return Prim::PREP;
  if (s == "ADV") return Prim::ADV;
  if (s == "OTHER") return Prim::OTHER;
  return std::nullopt;
}

std::string TaggedQuery::text() const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

TagLexicon TagLexicon::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::missing_file, path);
  TagLexicon lex;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw Error(Errc::malformed_record,
                  "lexicon line " + std::to_string(line_no) + ": no tab");
    std::string word = line.substr(0, tab);
    auto cls = parse_prim(line.substr(tab + 1));
    if (word.empty() || !cls)
      throw Error(Errc::malformed_record,
                  "lexicon line " + std::to_string(line_no));
    lex.add(word, *cls);
  }
  return lex;
}

TagLexicon TagLexicon::from_entries(
    const std::vector<std::pair<std::string, Prim>>& entries) {
  TagLexicon lex;
  for (const auto& [w, c] : entries) lex.add(w, c);
  return lex;
}

void TagLexicon::add(const std::string& word, Prim cls) { table_[word] = cls; }

std::optional<Prim> TagLexicon::lookup(const std::string& word) const {
  auto it = table_.find(word);
  if (it == table_.end()) return std::nullopt;
  return it->second;
}

bool TagLexicon::is_verb(const std::string& word) const {
  auto t = lookup(word);
  return t && *t == Prim::VERB;
}

namespace {

// Closed-class prepositions recognized even when absent from the lexicon.
const std::set<std::string>& preposition_list() {
  static const std::set<std::string> kPreps = {
      "in",     "on",     "at",     "under",  "over",    "above",  "below",
      "behind", "beside", "near",   "into",   "onto",    "from",   "with",
      "without", "through", "against", "toward", "towards", "across",
      "inside", "outside", "between", "beneath", "off", "down", "up",
      "along", "around", "by"};
  return kPreps;
}

std::string strip_token(const std::string& raw) {
  std::size_t b = 0, e = raw.size();
  auto is_punct = [](unsigned char c) {
    return std::ispunct(c) && c != '-' && c != '\'';
  };
  while (b < e && is_punct(raw[b])) ++b;
  while (e > b && is_punct(raw[e - 1])) --e;
  std::string out = raw.substr(b, e - b);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() > suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// "-ing"/"-ed" map to VERB only when a known verb stem matches; covers
// doubling ("putting" -> put) and e-restoration ("taking" -> take).
bool verb_by_suffix(const std::string& word, const std::string& suffix,
                    const TagLexicon& lex) {
  if (!ends_with(word, suffix)) return false;
  std::string stem = word.substr(0, word.size() - suffix.size());
  if (stem.empty()) return false;
  if (lex.is_verb(stem) || lex.is_verb(stem + "e")) return true;
  if (stem.size() >= 2 && stem[stem.size() - 1] == stem[stem.size() - 2] &&
      lex.is_verb(stem.substr(0, stem.size() - 1)))
    return true;
  return false;
}

Prim tag_word(const std::string& word, const TagLexicon& lex) {
  if (auto hit = lex.lookup(word)) return *hit;
  if (preposition_list().count(word)) return Prim::PREP;
  if (ends_with(word, "ly")) return Prim::ADV;
  if (verb_by_suffix(word, "ing", lex) || verb_by_suffix(word, "ed", lex))
    return Prim::VERB;
  return Prim::OTHER;
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string raw;
  while (is >> raw) {
    std::string tok = strip_token(raw);
    if (!tok.empty()) out.push_back(std::move(tok));
  }
  return out;
}

TaggedQuery tag_query(const std::string& text, const TagLexicon& lex) {
  TaggedQuery q;
  q.tokens = tokenize(text);
  if (q.tokens.empty()) throw Error(Errc::empty_query, "no tokens");
  q.tags.reserve(q.tokens.size());
  for (const auto& tok : q.tokens) q.tags.push_back(tag_word(tok, lex));

  int first_verb = -1;
  for (int i = 0; i < q.size(); ++i)
    if (q.tags[i] == Prim::VERB) {
      first_verb = i;
      break;
    }
  if (first_verb >= 0) {
    for (int i = 0; i < first_verb; ++i)
      if (q.tags[i] == Prim::NOUN) {
        q.subject_index = i;
        break;
      }
  }
  return q;
}

const std::vector<std::pair<std::string, int>>& PrimitiveDictionary::for_class(
    Prim p) const {
  return entries.at(static_cast<std::size_t>(p));
}

int PrimitiveDictionary::total_count() const {
  int total = 0;
  for (const auto& cls : entries)
    for (const auto& [w, c] : cls) total += c;
  return total;
}

PrimitiveDictionary build_dictionary(const std::vector<TaggedQuery>& queries) {
  if (queries.empty()) throw Error(Errc::empty_corpus, "no tagged queries");
  std::array<std::map<std::string, int>, kNumPrimClasses> counts;
  for (const auto& q : queries) {
    for (int i = 0; i < q.size(); ++i) {
      if (q.tags[i] == Prim::OTHER) continue;
      counts[static_cast<std::size_t>(q.tags[i])][q.tokens[i]] += 1;
    }
  }
  PrimitiveDictionary dict;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    auto& out = dict.entries[c];
    out.assign(counts[c].begin(), counts[c].end());
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
  }
  return dict;
}

void save_dictionary(const PrimitiveDictionary& dict, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::io_failure, "cannot write " + path);
  out << "# primitive dictionary";
  if (!dict.source_split.empty()) out << " (split: " << dict.source_split << ")";
  out << "\n";
  for (int c = 0; c < kNumPrimClasses; ++c) {
    for (const auto& [word, count] : dict.entries[c])
      out << prim_name(static_cast<Prim>(c)) << "\t" << word << "\t" << count
          << "\n";
  }
  if (!out) throw Error(Errc::io_failure, "write failed on " + path);
}

PrimitiveDictionary load_dictionary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::missing_file, path);
  PrimitiveDictionary dict;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto pos = line.find("split: ");
      if (pos != std::string::npos) {
        std::string s = line.substr(pos + 7);
        if (!s.empty() && s.back() == ')') s.pop_back();
        dict.source_split = s;
      }
      continue;
    }
    std::istringstream is(line);
    std::string cls_s, word;
    int count = 0;
    if (!(std::getline(is, cls_s, '\t') && std::getline(is, word, '\t') &&
          (is >> count)))
      throw Error(Errc::malformed_record,
                  "dictionary line " + std::to_string(line_no));
    auto cls = parse_prim(cls_s);
    if (!cls || *cls == Prim::OTHER || count < 1)
      throw Error(Errc::malformed_record,
                  "dictionary line " + std::to_string(line_no));
    dict.entries[static_cast<std::size_t>(*cls)].emplace_back(word, count);
  }
  return dict;
}

}  // namespace shine
