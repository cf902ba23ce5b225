#include <gtest/gtest.h>

#include <sstream>

#include "test_support.hpp"
#include "tscan/corpus.hpp"

using namespace tscan;

namespace {

Corpus parse(const std::string& text) {
  std::istringstream in(text);
  return parse_corpus(in);
}

std::string record(const std::string& id, const std::string& dialog, int turn, const std::string& speaker,
                   const std::string& text) {
  return R"({"utterance_id":")" + id + R"(","dialog_id":")" + dialog + R"(","turn":)" + std::to_string(turn) +
         R"(,"speaker":")" + speaker + R"(","text":")" + text + "\"}\n";
}

}  // namespace

TEST(Corpus, MinimalDialog) {
  const auto c = parse(record("a1", "d1", 1, "agent", "hello") + record("u1", "d1", 1, "user", "hi"));
  ASSERT_EQ(c.dialogs.size(), 1u);
  ASSERT_EQ(c.dialogs[0].turns.size(), 1u);
  EXPECT_EQ(c.dialogs[0].turns[0].agent.text, "hello");
  ASSERT_TRUE(c.dialogs[0].turns[0].user.has_value());
  EXPECT_EQ(c.dialogs[0].turns[0].user->utterance_id, "u1");
}

TEST(Corpus, EmptyFileIsAnError) {
  try {
    parse("");
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "empty corpus");
  }
}

TEST(Corpus, DuplicateIdIsNamed) {
  const auto line = record("a1", "d1", 1, "agent", "hello");
  try {
    parse(line + line);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("a1"), std::string::npos);
  }
}

TEST(Corpus, UserWithoutAgentRejected) {
  EXPECT_THROW(parse(record("u1", "d1", 1, "user", "hi")), Error);
}

TEST(Corpus, MalformedLineReportsLineNumber) {
  try {
    parse(record("a1", "d1", 1, "agent", "hello") + "{not json\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(Corpus, SchemaIsExact) {
  EXPECT_THROW(parse(R"({"utterance_id":"a","dialog_id":"d","turn":1,"speaker":"agent"})" "\n"), Error);
  EXPECT_THROW(parse(R"({"utterance_id":"a","dialog_id":"d","turn":1,"speaker":"agent","text":"x","extra":1})" "\n"),
               Error);
  EXPECT_THROW(parse(record("a", "d", 0, "agent", "x")), Error);
  EXPECT_THROW(parse(record("a", "d", 1, "bot", "x")), Error);
  EXPECT_THROW(parse(R"({"utterance_id":"a","dialog_id":"d","turn":"1","speaker":"agent","text":"x"})" "\n"), Error);
}

TEST(Corpus, FinalTurnMayLackUser) {
  const auto c = parse(record("a1", "d1", 1, "agent", "x") + record("u1", "d1", 1, "user", "y") +
                       record("a2", "d1", 2, "agent", "bye"));
  ASSERT_EQ(c.dialogs[0].turns.size(), 2u);
  EXPECT_FALSE(c.dialogs[0].turns[1].user.has_value());
}

TEST(Corpus, MissingUserBeforeFinalTurnRejected) {
  EXPECT_THROW(parse(record("a1", "d1", 1, "agent", "x") + record("a2", "d1", 2, "agent", "y") +
                     record("u2", "d1", 2, "user", "z")),
               Error);
}

TEST(Corpus, TurnsAreOrderedByIndex) {
  const auto c = parse(record("a3", "d1", 3, "agent", "c") + record("a1", "d1", 1, "agent", "a") +
                       record("u1", "d1", 1, "user", "b") + record("u3", "d1", 3, "user", "d"));
  ASSERT_EQ(c.dialogs[0].turns.size(), 2u);
  EXPECT_EQ(c.dialogs[0].turns[0].agent.turn_index, 1);
  EXPECT_EQ(c.dialogs[0].turns[1].agent.turn_index, 3);
}

TEST(Corpus, RoundTripThroughLineFormat) {
  const auto [corpus, truth] = generate_synthetic(testing_support::chain_spec(3, 10, 4));
  std::ostringstream out;
  write_corpus(corpus, out);
  EXPECT_EQ(parse(out.str()), corpus);
}

TEST(Synthetic, SingleStateSharesState) {
  SyntheticSpec spec;
  spec.num_states = 1;
  spec.num_dialogs = 3;
  spec.transition_matrix = {{0.5, 0.5}};
  const auto [corpus, truth] = generate_synthetic(spec);
  EXPECT_EQ(corpus.dialogs.size(), 3u);
  for (const auto& [id, s] : truth.state_of) EXPECT_EQ(s, 0);
  EXPECT_EQ(truth.state_of.size(), corpus.utterance_count());
}

TEST(Synthetic, Deterministic) {
  const auto spec = testing_support::chain_spec(4, 20, 99);
  std::ostringstream a, b;
  write_corpus(generate_synthetic(spec).first, a);
  write_corpus(generate_synthetic(spec).first, b);
  EXPECT_EQ(a.str(), b.str());
}

TEST(Synthetic, DeterministicChainVisitsEveryStateOnce) {
  SyntheticSpec spec;
  spec.num_states = 2;
  spec.num_dialogs = 25;
  spec.seed = 3;
  spec.transition_matrix = {{0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}};
  const auto [corpus, truth] = generate_synthetic(spec);
  for (const auto& d : corpus.dialogs) {
    ASSERT_EQ(d.turns.size(), 2u);
    EXPECT_EQ(truth.state_of.at(d.turns[0].agent.utterance_id), 0);
    EXPECT_EQ(truth.state_of.at(d.turns[0].user->utterance_id), 0);
    EXPECT_EQ(truth.state_of.at(d.turns[1].agent.utterance_id), 1);
    EXPECT_EQ(truth.state_of.at(d.turns[1].user->utterance_id), 1);
  }
}

TEST(Synthetic, DialogInvariantsHold) {
  SyntheticSpec spec;
  spec.num_states = 3;
  spec.num_dialogs = 50;
  spec.templates_per_state = 3;
  spec.slot_vocab_size = 7;
  spec.seed = 11;
  spec.transition_matrix = {{0.1, 0.5, 0.2, 0.2}, {0.3, 0.0, 0.3, 0.4}, {0.0, 0.6, 0.0, 0.4}};
  const auto [corpus, truth] = generate_synthetic(spec);
  // reassembling from the flat records re-runs every invariant check
  std::vector<Utterance> flat;
  for (const auto* u : corpus.utterances()) flat.push_back(*u);
  EXPECT_EQ(assemble_corpus(flat), corpus);
  for (const auto& d : corpus.dialogs) {
    EXPECT_FALSE(d.turns.empty());
    for (std::size_t t = 0; t < d.turns.size(); ++t) EXPECT_EQ(d.turns[t].agent.turn_index, static_cast<int>(t) + 1);
  }
  for (const auto* u : corpus.utterances())
    EXPECT_EQ(u->text.rfind(state_word(truth.state_of.at(u->utterance_id)) + " ", 0), 0u);
}

TEST(Synthetic, RejectsNonStochasticRows) {
  auto spec = testing_support::chain_spec(2, 1, 0);
  spec.transition_matrix[0][1] = 0.9;
  EXPECT_THROW(generate_synthetic(spec), Error);
}

TEST(GroundTruthFile, RoundTrip) {
  const auto dir = testing_support::scratch_dir("truth");
  const auto [corpus, truth] = generate_synthetic(testing_support::chain_spec(3, 5, 1));
  write_ground_truth(truth, corpus, (dir / "t.jsonl").string());
  EXPECT_EQ(load_ground_truth((dir / "t.jsonl").string()), truth);
}
