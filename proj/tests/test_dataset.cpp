// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <random>
#include <sstream>

#include "scgpt/dataset.hpp"

using namespace scgpt;

namespace {

Example ex(const std::string& domain, const std::string& intent, std::vector<SlotValuePair> pairs,
           const std::string& response = "r") {
  return {{{{intent, std::move(pairs), std::nullopt}}}, response, domain};
}

Corpus corpus_of(std::vector<Example> xs) {
  Corpus c;
  c.name = "toy";
  c.examples = std::move(xs);
  return c;
}

}  // namespace

TEST(Ingest, ThreeLines) {
  std::istringstream is(
      R"({"domain":"hotel","response":"the hilton is in the center","acts":[{"intent":"confirm","slots":[{"name":"name","value":"Hilton"},{"name":"area","value":"center"}]}]})"
      "\n"
      R"({"domain":"hotel","response":"bye","acts":[{"intent":"bye","slots":[]}]})"
      "\n\n"
      R"({"domain":"taxi","response":"ok","acts":[{"intent":"inform"}]})"
      "\n");
  const auto c = ingest(is, "jsonl_v1", "t");
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(linearize(c.examples[0].acts), "confirm ( name = Hilton ; area = center )");
  EXPECT_EQ(c.examples[0].acts.acts[0].domain, "hotel");
  EXPECT_EQ(c.domains(), (std::vector<std::string>{"hotel", "taxi"}));
}

TEST(Ingest, MissingResponseNamesLine) {
  std::istringstream is(
      R"({"domain":"hotel","response":"x","acts":[{"intent":"bye"}]})"
      "\n"
      R"({"domain":"hotel","acts":[{"intent":"bye"}]})"
      "\n");
  try {
    ingest(is, "jsonl_v1", "t");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), 2u);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("response"), std::string::npos);
  }
}

TEST(Ingest, EmptyAndErrors) {
  std::istringstream empty("");
  EXPECT_TRUE(ingest(empty, "jsonl_v1", "t").empty());
  std::istringstream any("x\n");
  EXPECT_THROW(ingest(any, "csv", "t"), InvalidArgument);
  std::istringstream bad_json("{not json\n");
  EXPECT_THROW(ingest(bad_json, "jsonl_v1", "t"), ParseError);
  std::istringstream bad_slot(R"({"domain":"d","response":"x","acts":[{"intent":"inform","slots":[{"name":"Bad Name","value":"v"}]}]})");
  EXPECT_THROW(ingest(bad_slot, "jsonl_v1", "t"), ParseError);
  EXPECT_THROW(ingest("/nonexistent/file.jsonl"), IoError);
}

TEST(Ingest, ScgptTxt) {
  std::istringstream is("inform ( name = hilton ) & the hilton .\nbye ( ) & goodbye\n");
  const auto c = ingest(is, "scgpt_txt", "t", "hotel");
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c.examples[0].response, "the hilton .");
  EXPECT_EQ(c.examples[1].domain, "hotel");
  std::istringstream bad("inform ( name = hilton ) the hilton\n");
  EXPECT_THROW(ingest(bad, "scgpt_txt", "t", "hotel"), ParseError);
}

TEST(Ingest, JsonlRoundTripPreservesStats) {
  auto c = corpus_of({ex("hotel", "inform", {{"name", "a b"}, {"area", "north"}}, "a b is north"),
                      ex("hotel", "request", {{"area", "?"}}, "which area ?"),
                      ex("taxi", "inform", {{"car", "red"}}, "a red car")});
  std::stringstream ss;
  write_jsonl(c, ss);
  const auto back = ingest(ss, "jsonl_v1", "toy");
  ASSERT_EQ(back.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_EQ(back.examples[i].response, c.examples[i].response);
    EXPECT_EQ(linearize(back.examples[i].acts), linearize(c.examples[i].acts));
  }
  EXPECT_EQ(stats(back, back), stats(c, c));
}

TEST(PlainText, NonBlankLines) {
  std::istringstream is("first line\n\n  second  \n");
  const auto c = from_plain_text(is, "p");
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c.examples[1].response, "second");
  EXPECT_TRUE(c.examples[0].acts.acts.empty());
}

TEST(FewShot, DefaultK) {
  const auto k = default_k_per_domain({"restaurant", "taxi", "hotel"});
  EXPECT_EQ(k.at("restaurant"), 50u);
  EXPECT_EQ(k.at("taxi"), 40u);
  EXPECT_EQ(k.at("hotel"), 50u);
}

TEST(FewShot, ThreeGroupsKTwo) {
  const auto c = corpus_of({ex("hotel", "inform", {{"name", "a"}}), ex("hotel", "inform", {{"name", "b"}}),
                            ex("hotel", "request", {{"area", "?"}}), ex("hotel", "bye", {})});
  // inform(name) has two utterances; only the first is kept.
  const auto s = build_fewshot(c, {{"hotel", 2}}, 1);
  EXPECT_EQ(s.train.size(), 2u);
  EXPECT_EQ(s.test.size(), 1u);
  EXPECT_EQ(overlap_pct(s.train, s.test), 0.0);
  for (const auto& e : s.train.examples) EXPECT_NE(e.acts.acts[0].pairs.empty() ? "" : e.acts.acts[0].pairs[0].value, "b");
  for (const auto& e : s.test.examples) EXPECT_NE(e.acts.acts[0].pairs.empty() ? "" : e.acts.acts[0].pairs[0].value, "b");
}

TEST(FewShot, Errors) {
  const auto c = corpus_of({ex("hotel", "inform", {{"name", "a"}}), ex("hotel", "bye", {})});
  EXPECT_THROW(build_fewshot(c, {{"hotel", 3}}, 1), InsufficientGroupsError);
  EXPECT_THROW(build_fewshot(c, {{"taxi", 1}}, 1), InsufficientGroupsError);
}

TEST(FewShot, DropsCrossDomainActs) {
  const auto c = corpus_of({ex("hotel", "bye", {}), ex("taxi", "bye", {}), ex("hotel", "inform", {{"name", "a"}}),
                            ex("taxi", "inform", {{"car", "x"}})});
  const auto s = build_fewshot(c, {{"hotel", 1}, {"taxi", 1}}, 4);
  EXPECT_EQ(s.train.size(), 2u);
  EXPECT_TRUE(s.test.empty());
  for (const auto& e : s.train.examples) EXPECT_NE(e.acts.acts[0].intent, "bye");
}

TEST(FewShot, DeterministicAndDisjointProperty) {
  std::mt19937_64 rng(3);
  const std::vector<std::string> intents = {"inform", "request", "confirm", "recommend"};
  const std::vector<std::string> slots = {"name", "area", "price", "phone", "stars"};
  std::vector<Example> xs;
  for (int i = 0; i < 300; ++i) {
    std::vector<SlotValuePair> pairs;
    for (const auto& s : slots)
      if (rng() % 2) pairs.push_back({s, "v" + std::to_string(rng() % 10)});
    xs.push_back(ex(rng() % 2 ? "hotel" : "attraction", intents[rng() % intents.size()], pairs));
  }
  const auto c = corpus_of(xs);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto a = build_fewshot(c, {{"hotel", 10}, {"attraction", 12}}, seed);
    const auto b = build_fewshot(c, {{"hotel", 10}, {"attraction", 12}}, seed);
    EXPECT_EQ(a.train.examples, b.train.examples);
    EXPECT_EQ(a.test.examples, b.test.examples);
    EXPECT_EQ(a.train.size(), 22u);
    EXPECT_EQ(overlap_pct(a.train, a.test), 0.0);
  }
}

TEST(Overlap, Examples) {
  const auto k = [](const std::string& intent) { return ex("d", intent, {}); };
  const auto train = corpus_of({k("a"), k("b")});
  const auto test = corpus_of({k("a"), k("c"), k("d")});
  EXPECT_NEAR(overlap_pct(train, test), 100.0 / 3.0, 1e-12);
  EXPECT_EQ(overlap_pct(test, test), 100.0);
  EXPECT_EQ(overlap_pct(corpus_of({k("x")}), test), 0.0);
  EXPECT_THROW(overlap_pct(train, Corpus{}), EmptyCorpusError);
}

TEST(Overlap, MonotoneInTrain) {
  std::mt19937_64 rng(6);
  std::vector<Example> test, pool;
  for (int i = 0; i < 20; ++i) test.push_back(ex("d", "i" + std::to_string(rng() % 12), {}));
  for (int i = 0; i < 30; ++i) pool.push_back(ex("d", "i" + std::to_string(rng() % 15), {}));
  Corpus train;
  double prev = 0;
  for (const auto& e : pool) {
    train.examples.push_back(e);
    const double cur = overlap_pct(train, corpus_of(test));
    ASSERT_GE(cur, prev);
    prev = cur;
  }
}

TEST(Stats, SingleExample) {
  const auto s = stats(corpus_of({ex("d", "inform", {{"name", "x"}})}), Corpus{});
  EXPECT_EQ(s.n_intents, 1u);
  EXPECT_EQ(s.n_slots, 1u);
  EXPECT_EQ(s.avg_das_per_instance, 1.0);
  EXPECT_EQ(s.n_test, 0u);
}

TEST(Stats, ToyCorpusMatchesRecount) {
  auto multi = ex("d", "inform", {{"name", "x"}});
  multi.acts.acts.push_back({"request", {{"area", "?"}}, std::nullopt});
  const auto train = corpus_of({ex("d", "inform", {{"name", "x"}}), multi, ex("d", "bye", {})});
  const auto test = corpus_of({ex("d", "inform", {{"name", "y"}}), ex("d", "inform", {{"price", "cheap"}}),
                               ex("d", "confirm", {{"name", "x"}, {"area", "north"}})});
  const auto s = stats(train, test);
  // Intents: inform, request, bye, confirm. Slots: name, area, price.
  EXPECT_EQ(s.n_intents, 4u);
  EXPECT_EQ(s.n_slots, 3u);
  EXPECT_EQ(s.n_train_das, 3u);
  EXPECT_EQ(s.n_test_das, 3u);
  EXPECT_NEAR(s.overlap_pct, 100.0 / 3.0, 1e-12);
  EXPECT_NEAR(s.avg_das_per_instance, 7.0 / 6.0, 1e-12);
  const auto table = render_stats_table({{"Toy", s}});
  EXPECT_NE(table.find("Overlap Percentage"), std::string::npos);
  EXPECT_NE(table.find("33.33%"), std::string::npos);
}

TEST(Stats, PublishedRestaurantFiles) {
  const char* dir = std::getenv("SCGPT_FEWSHOTWOZ_DIR");
  if (!dir) GTEST_SKIP() << "SCGPT_FEWSHOTWOZ_DIR not set";
  const std::string base = std::string(dir) + "/restaurant/";
  const auto train = ingest(base + "train.txt", "scgpt_txt", "restaurant");
  const auto test = ingest(base + "test.txt", "scgpt_txt", "restaurant");
  const auto s = stats(train, test);
  EXPECT_EQ(s.n_intents, 9u);
  EXPECT_EQ(s.n_slots, 21u);
  EXPECT_EQ(s.n_train_das, 50u);
  EXPECT_EQ(s.n_test_das, 129u);
  EXPECT_NEAR(s.overlap_pct, 35.56, 0.005);
}
