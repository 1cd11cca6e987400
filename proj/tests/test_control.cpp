#include <doctest.h>

#include "ctrlgen/control.hpp"
#include "ctrlgen/util.hpp"

using namespace ctrlgen;

namespace {
using Toks = std::vector<std::string>;
}

TEST_CASE("length value ignores markers") {
  CHECK(length_value(Toks{"a", "b", "c"}) == 3);
  CHECK(length_value(Toks{kBosTok, "a", "b", kEosTok, kPadTok}) == 2);
  CHECK(length_value(Toks{}) == 0);
}

TEST_CASE("round_half_up rounds .5 away from the floor") {
  CHECK(round_half_up(2.5) == 3);
  CHECK(round_half_up(2.4999) == 2);
  CHECK(round_half_up(0.0) == 0);
  CHECK(round_half_up(9.5) == 10);
}

TEST_CASE("jaccard edit distance on known sets") {
  CHECK(jaccard_edit(Toks{"a", "b", "c"}, Toks{"a", "b", "d"}) == 5);  // overlap 2 of 4
  CHECK(jaccard_edit(Toks{"a", "b"}, Toks{"a", "b"}) == 0);
  CHECK(jaccard_edit(Toks{"a", "b"}, Toks{"c", "d"}) == 10);
  CHECK(jaccard_edit(Toks{"a", "b"}, Toks{}) == 10);
  // Duplicates collapse into sets before measuring.
  CHECK(jaccard_edit(Toks{"a", "a", "b"}, Toks{"b", "b", "a"}) == 0);
  CHECK(jaccard_edit(Toks{kBosTok, "a", kEosTok}, Toks{"a", kEosTok}) == 0);
  CHECK_THROWS_AS(jaccard_edit(Toks{}, Toks{"a"}), DataError);
  CHECK_THROWS_AS(jaccard_edit(Toks{kBosTok}, Toks{"a"}), DataError);
}

TEST_CASE("length tracker counts as it consumes") {
  auto t = ControlTracker<std::string>::length_tracker();
  CHECK(t.value() == 0);
  CHECK(t.step("a") == 1);
  CHECK(t.step(kEosTok) == 1);
  CHECK(t.step("b") == 2);
}

TEST_CASE("edit tracker equals batch recomputation on every prefix") {
  Rng rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const int ns = 1 + static_cast<int>(uniform_int(rng, 0, 7));
    const int nt = static_cast<int>(uniform_int(rng, 0, 9));
    Toks source, target;
    for (int i = 0; i < ns; ++i) source.push_back(std::string(1, static_cast<char>('a' + uniform_int(rng, 0, 11))));
    for (int i = 0; i < nt; ++i) target.push_back(std::string(1, static_cast<char>('a' + uniform_int(rng, 0, 11))));

    auto tracker = ControlTracker<std::string>::edit_tracker(source);
    Toks prefix;
    CHECK(tracker.value() == 10);  // empty output is maximally distant
    for (const auto& tok : target) {
      const int incremental = tracker.step(tok);
      prefix.push_back(tok);
      const int batch = jaccard_edit(source, prefix);
      REQUIRE(incremental == batch);
      CHECK(incremental >= 0);
      CHECK(incremental <= 10);
    }
  }
}

TEST_CASE("sentiment has no tracker") {
  CHECK_THROWS_AS(ControlTracker<std::string>::make(ControlKind::sentiment), DataError);
}

TEST_CASE("lexicon scorer averages, rounds, and clamps") {
  LexiconScorer scorer({{"great", 5}, {"good", 4}, {"bad", 2}, {"awful", 1}});
  CHECK(scorer.score({"great", "movie"}) == 5);
  CHECK(scorer.score({"good", "bad"}) == 3);          // mean 3.0
  CHECK(scorer.score({"great", "good", "bad"}) == 4); // mean 3.67 -> 4
  CHECK(scorer.score({"nothing", "scored", "here"}) == 3);
  CHECK(scorer.score({kBosTok, "awful", kEosTok}) == 1);
}

TEST_CASE("control kind names round-trip") {
  for (ControlKind k : {ControlKind::length, ControlKind::edit, ControlKind::sentiment})
    CHECK(parse_control_kind(control_kind_name(k)) == k);
  CHECK_THROWS_AS(parse_control_kind("volume"), ConfigError);
}
