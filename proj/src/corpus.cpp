#include "shine/corpus.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace shine {

using nlohmann::json;

const char* errc_name(Errc c) {
  switch (c) {
    case Errc::missing_file: return "MissingFile";
    case Errc::malformed_record: return "MalformedRecord";
    case Errc::span_out_of_range: return "SpanOutOfRange";
    case Errc::io_failure: return "IoFailure";
    case Errc::duplicate_key: return "DuplicateKey";
    case Errc::empty_query: return "EmptyQuery";
    case Errc::empty_corpus: return "EmptyCorpus";
    case Errc::no_primitives: return "NoPrimitives";
    case Errc::bad_ratios: return "BadRatios";
    case Errc::exhausted_class: return "ExhaustedClass";
    case Errc::batch_too_small: return "BatchTooSmall";
    case Errc::endpoint_unreachable: return "EndpointUnreachable";
    case Errc::auth_failure: return "AuthFailure";
    case Errc::parse_failure: return "ParseFailure";
    case Errc::empty_span: return "EmptySpan";
    case Errc::no_outside_clips: return "NoOutsideClips";
    case Errc::length_mismatch: return "LengthMismatch";
    case Errc::degenerate_span: return "DegenerateSpan";
    case Errc::non_finite: return "NonFiniteTerm";
    case Errc::shape_mismatch: return "ShapeMismatch";
    case Errc::unknown_token: return "UnknownToken";
    case Errc::insufficient_vocab: return "InsufficientVocab";
    case Errc::bad_weights: return "BadWeights";
    case Errc::empty_predictions: return "EmptyPredictions";
    case Errc::missing_track: return "MissingTrack";
    case Errc::empty_matrix: return "EmptyMatrix";
    case Errc::empty_grid: return "EmptyGrid";
    case Errc::diverged_loss: return "DivergedLoss";
    case Errc::config_error: return "ConfigError";
  }
  return "Error";
}

SpanClips span_to_clips(const MomentSpan& span_s, double clip_len, int T) {
  if (clip_len <= 0.0) throw Error(Errc::config_error, "clip_len must be > 0");
  int begin = -1, end = -1;
  for (int i = 0; i < T; ++i) {
    double center = (i + 0.5) * clip_len;
    if (center >= span_s.start && center < span_s.end) {
      if (begin < 0) begin = i;
      end = i + 1;
    }
  }
  if (begin < 0) return {0, 0};
  return {begin, end};
}

MomentSpan clips_to_span(const SpanClips& clips, double clip_len) {
  return {clips.begin * clip_len, clips.end * clip_len};
}

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::test_trivial: return "test_trivial";
    case Split::novel_composition: return "novel_composition";
    case Split::novel_word: return "novel_word";
  }
  return "train";
}

std::optional<Split> parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test_trivial") return Split::test_trivial;
  if (s == "novel_composition") return Split::novel_composition;
  if (s == "novel_word") return Split::novel_word;
  return std::nullopt;
}

const char* level_name(NegLevel l) {
  switch (l) {
    case NegLevel::hn1: return "hn1";
    case NegLevel::hn2: return "hn2";
    case NegLevel::hn3: return "hn3";
  }
  return "hn1";
}

std::optional<NegLevel> parse_level(const std::string& s) {
  if (s == "hn1") return NegLevel::hn1;
  if (s == "hn2") return NegLevel::hn2;
  if (s == "hn3") return NegLevel::hn3;
  return std::nullopt;
}

const char* filler_name(Filler f) {
  return f == Filler::lexicon ? "lexicon" : "llm";
}

namespace {

[[noreturn]] void malformed(std::size_t line_no, const std::string& reason) {
  std::ostringstream os;
  os << "line " << line_no << ": " << reason;
  throw Error(Errc::malformed_record, os.str());
}

json parse_line(const std::string& line, std::size_t line_no) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) malformed(line_no, "not a JSON object");
  return j;
}

std::ifstream open_for_read(const std::string& path) {
  if (!std::filesystem::exists(path))
    throw Error(Errc::missing_file, path);
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_failure, "cannot open " + path);
  return in;
}

}  // namespace

std::vector<Annotation> load_annotations(const std::string& path) {
  std::ifstream in = open_for_read(path);
  std::vector<Annotation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = parse_line(line, line_no);
    Annotation a;
    try {
      a.video_id = j.at("video_id").get<std::string>();
      a.duration_s = j.at("duration_s").get<double>();
      auto span = j.at("span");
      if (!span.is_array() || span.size() != 2)
        malformed(line_no, "span must be a two-element array");
      a.span.start = span[0].get<double>();
      a.span.end = span[1].get<double>();
      a.query_text = j.at("query").get<std::string>();
      auto split = parse_split(j.at("split").get<std::string>());
      if (!split) malformed(line_no, "unknown split");
      a.split = *split;
    } catch (const json::exception& e) {
      malformed(line_no, e.what());
    }
    if (a.duration_s <= 0.0)
      malformed(line_no, "duration_s must be > 0");
    if (a.query_text.empty()) malformed(line_no, "empty query");
    if (!(a.span.start >= 0.0 && a.span.start < a.span.end &&
          a.span.end <= a.duration_s)) {
      std::ostringstream os;
      os << "line " << line_no << ": span [" << a.span.start << ", "
         << a.span.end << "] outside [0, " << a.duration_s << "]";
      throw Error(Errc::span_out_of_range, os.str());
    }
    out.push_back(std::move(a));
  }
  return out;
}

namespace {

json annotation_to_json(const Annotation& a) {
  return json{{"video_id", a.video_id},
              {"duration_s", a.duration_s},
              {"span", {a.span.start, a.span.end}},
              {"query", a.query_text},
              {"split", split_name(a.split)}};
}

json negative_to_json(const NegativeRecord& r) {
  json j{{"query_id", r.query_id},
         {"level", level_name(r.level)},
         {"masked_positions", r.masked_positions},
         {"text", r.negative_text},
         {"filler", filler_name(r.filler)},
         {"model_id", r.model_id}};
  if (!r.created_at.empty()) j["created_at"] = r.created_at;
  if (r.llm_fallback) j["llm_fallback"] = true;
  return j;
}

NegativeRecord negative_from_json(const json& j, std::size_t line_no) {
  NegativeRecord r;
  try {
    r.query_id = j.at("query_id").get<std::string>();
    auto level = parse_level(j.at("level").get<std::string>());
    if (!level) malformed(line_no, "unknown level");
    r.level = *level;
    r.masked_positions = j.at("masked_positions").get<std::vector<int>>();
    r.negative_text = j.at("text").get<std::string>();
    std::string filler = j.at("filler").get<std::string>();
    if (filler == "lexicon")
      r.filler = Filler::lexicon;
    else if (filler == "llm")
      r.filler = Filler::llm;
    else
      malformed(line_no, "unknown filler");
    r.model_id = j.value("model_id", std::string());
    r.created_at = j.value("created_at", std::string());
    r.llm_fallback = j.value("llm_fallback", false);
  } catch (const json::exception& e) {
    malformed(line_no, e.what());
  }
  return r;
}

std::string dedup_key(const NegativeRecord& r) {
  return r.query_id + "\x1f" + level_name(r.level) + "\x1f" +
         filler_name(r.filler);
}

}  // namespace

std::size_t save_annotations(const std::vector<Annotation>& annos,
                             const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::io_failure, "cannot write " + path);
  for (const auto& a : annos) out << annotation_to_json(a).dump() << "\n";
  if (!out) throw Error(Errc::io_failure, "write failed on " + path);
  return annos.size();
}

std::vector<NegativeRecord> load_negatives(const std::string& path) {
  std::ifstream in = open_for_read(path);
  std::vector<NegativeRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    out.push_back(negative_from_json(parse_line(line, line_no), line_no));
  }
  return out;
}

std::size_t save_negatives(const std::vector<NegativeRecord>& records,
                           const std::string& path, bool append, bool strict) {
  std::set<std::string> seen;
  if (append && std::filesystem::exists(path)) {
    for (const auto& r : load_negatives(path)) seen.insert(dedup_key(r));
  }
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw Error(Errc::io_failure, "cannot write " + path);
  std::size_t written = 0;
  for (const auto& r : records) {
    auto [it, fresh] = seen.insert(dedup_key(r));
    if (!fresh) {
      if (strict)
        throw Error(Errc::duplicate_key,
                    "(" + r.query_id + ", " + level_name(r.level) + ", " +
                        filler_name(r.filler) + ")");
      continue;
    }
    out << negative_to_json(r).dump() << "\n";
    ++written;
  }
  if (!out) throw Error(Errc::io_failure, "write failed on " + path);
  return written;
}

}  // namespace shine
