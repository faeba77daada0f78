#pragma once
// Grounding annotations, negative-query cache records, and their
// line-delimited JSON persistence.
//
// Annotation file: one JSON object per line with keys
//   video_id, duration_s, span (two-element array, seconds), query, split
// Negative cache file: one JSON object per line with keys
//   query_id, level, masked_positions, text, filler, model_id
// plus created_at and llm_fallback when set. Both formats have byte-exact
// samples in the README.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "shine/errors.hpp"

namespace shine {

// Temporal interval. Units depend on context: seconds for annotations,
// normalized [0,1] for model spans.
struct MomentSpan {
  double start = 0.0;
  double end = 0.0;
  double length() const { return end - start; }
};

struct CenterWidth {
  double center = 0.0;
  double width = 0.0;
};

inline CenterWidth to_center_width(const MomentSpan& s) {
  return {(s.start + s.end) * 0.5, s.end - s.start};
}
inline MomentSpan from_center_width(const CenterWidth& cw) {
  return {cw.center - cw.width * 0.5, cw.center + cw.width * 0.5};
}

// Half-open run of clip indices [begin, end).
struct SpanClips {
  int begin = 0;
  int end = 0;
  int count() const { return end - begin; }
  bool contains(int i) const { return i >= begin && i < end; }
};

// Clip i (length clip_len) lies inside the span iff its center
// (i + 0.5) * clip_len falls in [start, end). Clamped to [0, T).
SpanClips span_to_clips(const MomentSpan& span_s, double clip_len, int T);
MomentSpan clips_to_span(const SpanClips& clips, double clip_len);

enum class Split { train, test_trivial, novel_composition, novel_word };

const char* split_name(Split s);
std::optional<Split> parse_split(const std::string& s);

struct Annotation {
  std::string video_id;
  double duration_s = 0.0;
  MomentSpan span;  // seconds
  std::string query_text;
  Split split = Split::train;
};

enum class NegLevel { hn1 = 1, hn2 = 2, hn3 = 3 };
const char* level_name(NegLevel l);
std::optional<NegLevel> parse_level(const std::string& s);

enum class Filler { lexicon, llm };
const char* filler_name(Filler f);

struct NegativeRecord {
  std::string query_id;
  NegLevel level = NegLevel::hn1;
  std::vector<int> masked_positions;
  std::string negative_text;
  Filler filler = Filler::lexicon;
  std::string model_id;    // empty when not applicable
  std::string created_at;  // ISO-8601 UTC, empty allowed
  bool llm_fallback = false;
};

// Fail-fast loaders: the first malformed line rejects the whole file.
std::vector<Annotation> load_annotations(const std::string& path);
std::size_t save_annotations(const std::vector<Annotation>& annos,
                             const std::string& path);

std::vector<NegativeRecord> load_negatives(const std::string& path);

// Returns the number of records actually written. With append=true the
// existing file is kept and records whose (query_id, level, filler) key is
// already present are dropped; in strict mode such a collision throws
// DuplicateKey instead.
std::size_t save_negatives(const std::vector<NegativeRecord>& records,
                           const std::string& path, bool append = false,
                           bool strict = false);

}  // namespace shine
