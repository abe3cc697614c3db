#include <fstream>

#include "doctest.h"
#include "memessl/corpus.hpp"
#include "memessl/util.hpp"
#include "test_support.hpp"

using namespace memessl;
using memessl::testing::block;
using memessl::testing::labeled;
using memessl::testing::TempDir;

TEST_CASE("ingest parses Hateful Memes lines and counts by source") {
  const std::string text =
      "{\"id\": 42953, \"img\": \"img/42953.png\", \"label\": 0, \"text\": \"its their character not their color\"}\n"
      "\n"
      "{\"id\": 23058, \"img\": \"img/23058.png\", \"label\": 1, \"text\": \"don't be afraid\"}\n";
  const IngestResult r = ingest_metadata_text(text, true);
  CHECK(r.errors.empty());
  REQUIRE(r.set.size() == 2);
  CHECK(r.set.records()[0].id == 42953);
  CHECK(r.set.records()[1].label == 1);
  CHECK(r.set.ledger().count(Source::hm_train) == 2);
  CHECK(r.set.ledger().total == 2);
}

TEST_CASE("malformed lines are reported with line numbers and skipped") {
  const std::string text =
      "{\"id\": 1, \"img\": \"a\", \"label\": 0, \"text\": \"x\"}\n"
      "not json\n"
      "{\"img\": \"b\", \"label\": 0, \"text\": \"y\"}\n"
      "{\"id\": 2, \"img\": \"c\", \"label\": 3, \"text\": \"z\"}\n"
      "{\"id\": 4, \"img\": \"d\", \"label\": 1, \"text\": \"w\"}\n";
  const IngestResult r = ingest_metadata_text(text, true);
  CHECK(r.set.size() == 2);
  REQUIRE(r.errors.size() == 3);
  CHECK(r.errors[0].line == 2);
  CHECK(r.errors[1].line == 3);
  CHECK(r.errors[2].line == 4);
}

TEST_CASE("duplicate ids and missing labels throw") {
  const std::string dup =
      "{\"id\": 7, \"img\": \"a\", \"label\": 0, \"text\": \"x\"}\n"
      "{\"id\": 7, \"img\": \"b\", \"label\": 1, \"text\": \"y\"}\n";
  try {
    (void)ingest_metadata_text(dup, true);
    FAIL("expected an error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find('7') != std::string::npos);
  }
  const std::string unlabeled = "{\"id\": 8, \"img\": \"a\", \"text\": \"x\"}\n";
  CHECK_THROWS_AS((void)ingest_metadata_text(unlabeled, true), Error);
  CHECK(ingest_metadata_text(unlabeled, false).set.size() == 1);
}

TEST_CASE("missing file throws") {
  CHECK_THROWS_AS((void)ingest_metadata("/nonexistent/none.jsonl", true), Error);
}

TEST_CASE("jsonl round trip preserves every field") {
  TempDir dir;
  MemeRecord a = labeled(5, 1, Source::hm_dev_seen, "hello world");
  a.category = Category::benign_text_confounder;
  MemeRecord b = labeled(6, 0, Source::pseudo, "bye");
  b.confidence = 0.001;
  MemeRecord c;
  c.id = 9;
  c.img = "img/9.bin";
  c.text = "pool";
  c.source = Source::memotion_pool;
  const RecordSet set("s", {a, b, c});
  write_metadata(set, dir / "s.jsonl");
  const IngestResult r = ingest_metadata(dir / "s.jsonl", false);
  CHECK(r.errors.empty());
  CHECK(r.set.records() == set.records());
  CHECK(record_from_json_line(to_jsonl_line(a)) == a);
}

TEST_CASE("record invariants: binary labels, confidence iff pseudo") {
  MemeRecord p = labeled(1, 1, Source::pseudo);
  CHECK_THROWS_AS(RecordSet("x", {p}), Error);
  p.confidence = 0.999;
  CHECK_NOTHROW(RecordSet("x", {p}));
  MemeRecord q = labeled(2, 1);
  q.confidence = 0.5;
  CHECK_THROWS_AS(RecordSet("x", {q}), Error);
  MemeRecord bad = labeled(3, 2);
  CHECK_THROWS_AS(RecordSet("x", {bad}), Error);
}

TEST_CASE("text validation rejects empty and 'none' captions") {
  CHECK(is_irregular_text(""));
  CHECK(is_irregular_text("   "));
  CHECK(is_irregular_text("None"));
  CHECK(is_irregular_text(" NONE \t"));
  CHECK_FALSE(is_irregular_text("none of that"));
  CHECK_FALSE(is_irregular_text("ok"));
  std::vector<MemeRecord> v;
  for (int i = 0; i < 10; ++i) v.push_back(labeled(i, 0, Source::memotion_pool, i < 3 ? "none" : "text"));
  const TextValidation tv = validate_text(RecordSet("pool", v));
  CHECK(tv.kept.size() == 7);
  CHECK(tv.rejected.size() == 3);
  CHECK(tv.kept.size() + tv.rejected.size() == 10);
}

TEST_CASE("merge appends, audits components and is identity on empty additions") {
  const RecordSet a = block("a", 1, 5, Source::hm_train);
  const RecordSet b = block("b", 100, 3, Source::memotion_manual);
  const RecordSet m = merge(a, b, MergePolicy::error_on_dup, "m");
  CHECK(m.size() == 8);
  CHECK(m.ledger().count(Source::hm_train) == 5);
  CHECK(m.ledger().count(Source::memotion_manual) == 3);
  REQUIRE(m.ledger().components.size() == 2);
  CHECK(m.ledger().components[1] == std::pair<std::string, std::size_t>{"b", 3});
  const RecordSet same = merge(a, RecordSet(), MergePolicy::error_on_dup);
  CHECK(same.records() == a.records());
  CHECK(same.ledger() == a.ledger());
}

TEST_CASE("merge collisions: error or replace in place") {
  const RecordSet a = block("a", 1, 5, Source::hm_train);
  std::vector<MemeRecord> add{labeled(3, 1, Source::memotion_manual, "new"), labeled(9, 0, Source::memotion_manual)};
  const RecordSet b("b", add);
  CHECK_THROWS_AS((void)merge(a, b, MergePolicy::error_on_dup), Error);
  const RecordSet r = merge(a, b, MergePolicy::replace_on_dup);
  CHECK(r.size() == 6);
  CHECK(r.ledger().replaced == 1);
  CHECK(r.records()[2].text == "new");
  CHECK(r.records()[5].id == 9);
}

TEST_CASE("training metadata composition at full scale") {
  const RecordSet hm = block("hm_train", 1, 8500, Source::hm_train);
  const RecordSet dev = block("dev_remainder", 20000, 100, Source::hm_dev_seen);
  const RecordSet man = block("manual", 30000, 328, Source::memotion_manual);
  const RecordSet t = compose_training_metadata(hm, dev, man);
  CHECK(t.size() == 8928);
  CHECK(t.ledger().count(Source::hm_train) == 8500);
  CHECK(t.ledger().count(Source::hm_dev_seen) == 100);
  CHECK(t.ledger().count(Source::memotion_manual) == 328);
  const RecordSet clash = block("manual", 8400, 328, Source::memotion_manual);
  CHECK_THROWS_AS((void)compose_training_metadata(hm, dev, clash), Error);
}
