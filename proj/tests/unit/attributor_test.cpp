#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "scripted_backend.hpp"
#include "tracecause/attributor.hpp"
#include "tracecause/error.hpp"

using namespace tracecause;
using namespace tracecause::testing;

namespace {

std::vector<StepSignature> sigs(const std::string& letters) {
  std::vector<StepSignature> out;
  for (char ch : letters) out.push_back({std::string(1, ch), "act"});
  return out;
}

std::string rule_of(const std::string& text, const FailureCase& c) {
  try {
    parse_attribution(text, c);
  } catch (const GrammarError& e) {
    return e.rule();
  }
  return "accepted";
}

}  // namespace

TEST(NormalizeAction, DropsUrlsDigitsAndCase) {
  EXPECT_EQ(normalize_action("\n  Visit https://x.org/page?id=3 and read Line 12\nmore"), "visit and read line");
  EXPECT_EQ(normalize_action("Run query 17"), normalize_action("run query 18"));
  EXPECT_EQ(normalize_action(std::string(300, 'a')).size(), kActionKeyLength);
}

TEST(LoopGroups, MatchBlockComparisonOracleOnRandomSequences) {
  std::mt19937_64 rng(4242);
  std::size_t groups = 0;
  for (int trial = 0; trial < 5000; ++trial) {
    const int n = static_cast<int>(rng() % 30);
    const int alphabet = 1 + static_cast<int>(rng() % 3);
    std::string letters;
    while (static_cast<int>(letters.size()) < n) {
      // Splice in explicit repeats so long loops occur.
      if (rng() % 4 == 0) {
        std::string unit;
        for (int k = 0; k < 1 + static_cast<int>(rng() % 4); ++k) unit += static_cast<char>('a' + rng() % alphabet);
        for (int r = 0; r < 2 + static_cast<int>(rng() % 3); ++r) letters += unit;
      } else {
        letters += static_cast<char>('a' + rng() % alphabet);
      }
    }
    const auto s = sigs(letters);
    const auto got = detect_loop_groups(s, kMaxLoopPeriod);
    const auto want = brute_loops(s, kMaxLoopPeriod);
    ASSERT_EQ(got.size(), want.size()) << letters;
    for (std::size_t g = 0; g < got.size(); ++g) {
      EXPECT_EQ(got[g].member_step_ids.front(), want[g].start) << letters;
      EXPECT_EQ(got[g].period(), want[g].period) << letters;
      EXPECT_EQ(got[g].occurrence_count, want[g].count) << letters;
      EXPECT_EQ(static_cast<int>(got[g].member_step_ids.size()), want[g].count * want[g].period);
      EXPECT_EQ(got[g].roles.at(got[g].member_step_ids.front()), LoopRole::entry);
      EXPECT_EQ(got[g].roles.at(got[g].member_step_ids.back()), LoopRole::exit);
    }
    groups += got.size();
  }
  EXPECT_GT(groups, 1000u);
}

TEST(LoopGroups, PrefersCoverageThenSmallerPeriod) {
  auto shape = [](const std::string& letters) {
    std::vector<std::pair<int, int>> out;
    for (const auto& g : detect_loop_groups(sigs(letters))) out.emplace_back(g.period(), g.occurrence_count);
    return out;
  };
  EXPECT_EQ(shape("aaaa"), (std::vector<std::pair<int, int>>{{1, 4}}));
  EXPECT_EQ(shape("ababab"), (std::vector<std::pair<int, int>>{{2, 3}}));
  EXPECT_EQ(shape("abcd"), (std::vector<std::pair<int, int>>{}));
  EXPECT_EQ(shape("abcdeabcde"), (std::vector<std::pair<int, int>>{}));
  EXPECT_EQ(shape("aabab"), (std::vector<std::pair<int, int>>{{1, 2}}));
}

TEST(LoopGroups, FixtureLoopIsFound) {
  for (const auto& c : load_fixture_cases()) {
    if (c.case_id != "alg_002") continue;
    const auto groups = detect_loop_groups(c);
    ASSERT_FALSE(groups.empty());
    const auto text = render_loop_groups(groups);
    EXPECT_NE(text.find("Loop Group 1: period"), std::string::npos);
    EXPECT_NE(text.find("entry:"), std::string::npos);
    return;
  }
  FAIL() << "alg_002 fixture missing";
}

TEST(Attribution, ParsesTheThreeLines) {
  const auto c = make_case({"A", "B", "C"});
  const auto out = parse_attribution("**Agent Name:** b\n**Step Number:** 1\n**Reason for Mistake:** wrong  value", c);
  EXPECT_EQ(out.attribution, (Attribution{"B", 1, "wrong value"}));
  EXPECT_TRUE(out.warnings.empty());
  const auto next = parse_attribution("Agent Name: A\nStep Number: 0\nReason for Mistake:\n\nit guessed", c);
  EXPECT_EQ(next.attribution.reason, "it guessed");
  const auto back = attribution_from_json(to_json(out));
  EXPECT_EQ(back.attribution, out.attribution);
}

TEST(Attribution, WarningsForLooseAnswers) {
  const auto c = make_case({"A", "B", "C"});
  EXPECT_EQ(parse_attribution("Agent Name: A\nStep Number: 2 or 1\nReason for Mistake: r", c).warnings.size(), 2u);
}

TEST(Attribution, GrammarErrors) {
  const auto c = make_case({"A", "B", "C"});
  EXPECT_EQ(rule_of("Step Number: 1\nReason for Mistake: r", c), "missing_line");
  EXPECT_EQ(rule_of("Agent Name: A\nReason for Mistake: r", c), "missing_line");
  EXPECT_EQ(rule_of("Agent Name: A\nStep Number: 1", c), "missing_line");
  EXPECT_EQ(rule_of("Agent Name: A\nStep Number: 1\nReason for Mistake:", c), "missing_reason");
  EXPECT_EQ(rule_of("Agent Name: A\nStep Number: the second\nReason for Mistake: r", c), "step_not_integer");
  EXPECT_EQ(rule_of("Agent Name: A\nStep Number: 3\nReason for Mistake: r", c), "step_out_of_range");
  EXPECT_EQ(rule_of("Agent Name: Z\nStep Number: 1\nReason for Mistake: r", c), "unknown_agent");
}

TEST(Attribution, RepairRoundUsesRepairTag) {
  const auto c = make_case({"A", "B", "C"});
  auto backend = std::make_shared<ScriptedBackend>();
  backend->push("attribute", "Agent Name: B\nStep Number: one\nReason for Mistake: r");
  backend->push("attribute_repair", "Agent Name: B\nStep Number: 1\nReason for Mistake: r");
  LlmGateway gw(GatewayMode::live, nullptr, backend);
  CostLedger ledger;
  PhaseContext ctx{gw, ledger, "m"};
  const auto out = attribute(ctx, c, "CANDIDATES", "GRAPH");
  EXPECT_EQ(out.attribution.step_id, 1);
  ASSERT_EQ(backend->seen.size(), 2u);
  EXPECT_NE(backend->seen[0].prompt.find("CANDIDATES"), std::string::npos);
  EXPECT_NE(backend->seen[0].prompt.find("GRAPH"), std::string::npos);
  EXPECT_TRUE(ledger.has_tag("attribute_repair"));
}
