#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>

#include "doctest.h"
#include "shine/corpus.hpp"

using namespace shine;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("shine_corpus_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

Annotation make_anno(const std::string& vid, double dur, double s, double e,
                     const std::string& q, Split split) {
  Annotation a;
  a.video_id = vid;
  a.duration_s = dur;
  a.span = {s, e};
  a.query_text = q;
  a.split = split;
  return a;
}

}  // namespace

TEST_CASE("center-width conversion round-trips") {
  MomentSpan s{2.0, 6.0};
  auto cw = to_center_width(s);
  CHECK(cw.center == doctest::Approx(4.0));
  CHECK(cw.width == doctest::Approx(4.0));
  auto back = from_center_width(cw);
  CHECK(back.start == doctest::Approx(2.0));
  CHECK(back.end == doctest::Approx(6.0));
}

TEST_CASE("span_to_clips uses clip centers and half-open bounds") {
  // Centers at 0.5, 1.5, 2.5, 3.5 for clip_len = 1.
  CHECK(span_to_clips({1.0, 3.0}, 1.0, 4).begin == 1);
  CHECK(span_to_clips({1.0, 3.0}, 1.0, 4).end == 3);
  // Span covering nothing: center 0.5 not in [0, 0.4).
  CHECK(span_to_clips({0.0, 0.4}, 1.0, 4).count() == 0);
  // Full cover.
  auto all = span_to_clips({0.0, 4.0}, 1.0, 4);
  CHECK(all.begin == 0);
  CHECK(all.end == 4);
  // End is exclusive: center 2.5 not in [0, 2.5).
  CHECK(span_to_clips({0.0, 2.5}, 1.0, 4).end == 2);
  // Span beyond T clamps.
  auto clamped = span_to_clips({3.0, 99.0}, 1.0, 4);
  CHECK(clamped.begin == 3);
  CHECK(clamped.end == 4);

  CHECK_THROWS_AS(span_to_clips({0.0, 1.0}, 0.0, 4), Error);
}

TEST_CASE("clips_to_span is the left inverse on aligned spans") {
  SpanClips c{2, 5};
  auto span = clips_to_span(c, 0.5);
  CHECK(span.start == doctest::Approx(1.0));
  CHECK(span.end == doctest::Approx(2.5));
  auto back = span_to_clips(span, 0.5, 8);
  CHECK(back.begin == c.begin);
  CHECK(back.end == c.end);
}

TEST_CASE("split and level names round-trip") {
  for (Split s : {Split::train, Split::test_trivial, Split::novel_composition,
                  Split::novel_word})
    CHECK(parse_split(split_name(s)) == s);
  CHECK(!parse_split("validation").has_value());
  for (NegLevel l : {NegLevel::hn1, NegLevel::hn2, NegLevel::hn3})
    CHECK(parse_level(level_name(l)) == l);
  CHECK(!parse_level("hn4").has_value());
}

TEST_CASE("annotations survive a save/load round-trip") {
  TempDir tmp;
  std::vector<Annotation> annos = {
      make_anno("v1", 30.0, 2.5, 11.0, "person opens the door", Split::train),
      make_anno("v2", 12.0, 0.0, 12.0, "person sits", Split::novel_word),
  };
  auto path = tmp.file("annos.jsonl");
  CHECK(save_annotations(annos, path) == 2);
  auto loaded = load_annotations(path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].video_id == "v1");
  CHECK(loaded[0].duration_s == doctest::Approx(30.0));
  CHECK(loaded[0].span.start == doctest::Approx(2.5));
  CHECK(loaded[0].span.end == doctest::Approx(11.0));
  CHECK(loaded[0].query_text == "person opens the door");
  CHECK(loaded[0].split == Split::train);
  CHECK(loaded[1].split == Split::novel_word);
}

TEST_CASE("annotation loader fails fast with a line number") {
  TempDir tmp;
  auto path = tmp.file("bad.jsonl");

  SUBCASE("missing file") {
    CHECK_THROWS_WITH_AS(load_annotations(tmp.file("nope.jsonl")),
                         doctest::Contains("nope.jsonl"), Error);
  }
  SUBCASE("broken json") {
    write_text(path, "{\"video_id\": \"v1\",\n");
    try {
      load_annotations(path);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::malformed_record);
      CHECK(std::string(e.what()).find("line 1") != std::string::npos);
    }
  }
  SUBCASE("span outside duration") {
    write_text(path,
               R"({"video_id":"v","duration_s":10.0,"span":[2.0,11.0],)"
               R"("query":"q","split":"train"})"
               "\n");
    try {
      load_annotations(path);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::span_out_of_range);
    }
  }
  SUBCASE("inverted span") {
    write_text(path,
               R"({"video_id":"v","duration_s":10.0,"span":[5.0,2.0],)"
               R"("query":"q","split":"train"})"
               "\n");
    CHECK_THROWS_AS(load_annotations(path), Error);
  }
  SUBCASE("empty query") {
    write_text(path,
               R"({"video_id":"v","duration_s":10.0,"span":[1.0,2.0],)"
               R"("query":"","split":"train"})"
               "\n");
    CHECK_THROWS_AS(load_annotations(path), Error);
  }
  SUBCASE("second line is the broken one") {
    write_text(path,
               R"({"video_id":"v","duration_s":10.0,"span":[1.0,2.0],)"
               R"("query":"q","split":"train"})"
               "\nnot json\n");
    try {
      load_annotations(path);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }
}

TEST_CASE("negative records round-trip with optional fields") {
  TempDir tmp;
  NegativeRecord r1;
  r1.query_id = "q0001";
  r1.level = NegLevel::hn2;
  r1.masked_positions = {2, 4};
  r1.negative_text = "person quickly takes the red box";
  r1.filler = Filler::llm;
  r1.model_id = "test-model";
  r1.created_at = "2026-01-05T12:00:00Z";

  NegativeRecord r2;
  r2.query_id = "q0002";
  r2.level = NegLevel::hn1;
  r2.masked_positions = {2};
  r2.negative_text = "person slowly opens the red box";
  r2.filler = Filler::lexicon;
  r2.llm_fallback = true;

  auto path = tmp.file("negs.jsonl");
  CHECK(save_negatives({r1, r2}, path) == 2);
  auto loaded = load_negatives(path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].query_id == "q0001");
  CHECK(loaded[0].level == NegLevel::hn2);
  CHECK(loaded[0].masked_positions == std::vector<int>{2, 4});
  CHECK(loaded[0].filler == Filler::llm);
  CHECK(loaded[0].model_id == "test-model");
  CHECK(loaded[0].created_at == "2026-01-05T12:00:00Z");
  CHECK(!loaded[0].llm_fallback);
  CHECK(loaded[1].llm_fallback);
  CHECK(loaded[1].model_id.empty());
  CHECK(loaded[1].created_at.empty());
}

TEST_CASE("save_negatives dedupes on (query, level, filler)") {
  TempDir tmp;
  NegativeRecord r;
  r.query_id = "q1";
  r.level = NegLevel::hn1;
  r.masked_positions = {1};
  r.negative_text = "a";
  r.filler = Filler::lexicon;

  auto dup = r;
  dup.negative_text = "b";

  auto path = tmp.file("negs.jsonl");
  SUBCASE("within one batch") {
    CHECK(save_negatives({r, dup}, path) == 1);
    CHECK(load_negatives(path).size() == 1);
    CHECK(load_negatives(path)[0].negative_text == "a");
  }
  SUBCASE("across append calls") {
    CHECK(save_negatives({r}, path) == 1);
    CHECK(save_negatives({dup}, path, /*append=*/true) == 0);
    CHECK(load_negatives(path).size() == 1);
  }
  SUBCASE("different level is not a duplicate") {
    auto other = r;
    other.level = NegLevel::hn3;
    CHECK(save_negatives({r, other}, path) == 2);
  }
  SUBCASE("different filler is not a duplicate") {
    auto other = r;
    other.filler = Filler::llm;
    CHECK(save_negatives({r, other}, path) == 2);
  }
  SUBCASE("strict mode throws on the collision") {
    try {
      save_negatives({r, dup}, path, false, /*strict=*/true);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::duplicate_key);
    }
  }
}

TEST_CASE("truncate overwrite replaces earlier content") {
  TempDir tmp;
  NegativeRecord r;
  r.query_id = "q1";
  r.level = NegLevel::hn1;
  r.negative_text = "old";
  auto path = tmp.file("negs.jsonl");
  save_negatives({r}, path);
  r.negative_text = "new";
  save_negatives({r}, path);  // append = false
  auto loaded = load_negatives(path);
  REQUIRE(loaded.size() == 1);
  CHECK(loaded[0].negative_text == "new");
}
