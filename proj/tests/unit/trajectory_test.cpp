#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "tracecause/error.hpp"
#include "tracecause/trajectory.hpp"

using namespace tracecause;
using namespace tracecause::testing;

TEST(Trajectory, LoadsAlgorithmGeneratedCase) {
  const auto c = load_case(fixture_dir() / "cases/algorithm_generated/alg_001.json", Subset::algorithm_generated);
  EXPECT_EQ(c.case_id, "alg_001");
  EXPECT_EQ(c.task_id, "task-gym-0001");
  EXPECT_EQ(c.step_count(), 8);
  ASSERT_TRUE(c.annotation);
  EXPECT_EQ(c.annotation->mistake_agent, "WebSurfing_Expert");
  EXPECT_EQ(c.annotation->mistake_step, 3);
  EXPECT_EQ(c.ground_truth_answer, "CrossFit East River");
}

TEST(Trajectory, HandCraftedRolesLoseTheirSuffix) {
  const auto c = load_case(fixture_dir() / "cases/hand_crafted/hand_001.json", Subset::hand_crafted);
  EXPECT_EQ(c.steps[0].agent_name, "Orchestrator");
  EXPECT_EQ(c.steps[1].agent_name, "Orchestrator");
  EXPECT_EQ(c.steps[2].agent_name, "WebSurfer");
  EXPECT_EQ(agents_of(c), (std::vector<std::string>{"Orchestrator", "WebSurfer"}));
}

TEST(Trajectory, CanonicalRoundTrip) {
  for (const auto& c : load_fixture_cases()) {
    const json doc = to_canonical_json(c);
    const FailureCase back = case_from_json(doc, c.subset, AdapterTable::for_subset(c.subset), "x");
    EXPECT_EQ(to_canonical_json(back), doc);
  }
}

TEST(Trajectory, HistoryRoundTripsAndIsDeterministic) {
  for (const auto& c : load_fixture_cases()) {
    const auto text = serialize_history(c);
    EXPECT_EQ(text, serialize_history(c));
    const auto records = parse_history(text);
    ASSERT_EQ(records.size(), c.steps.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      EXPECT_EQ(records[i].index, static_cast<int>(i));
      EXPECT_EQ(records[i].agent, c.steps[i].agent_name);
      EXPECT_EQ(records[i].content, c.steps[i].content);
    }
  }
}

TEST(Trajectory, RangeSerializationKeepsGlobalIndices) {
  const auto c = load_fixture_cases().front();
  const auto records = parse_history(serialize_history(c, StepRange{2, 4}));
  ASSERT_EQ(records.size(), 3u);
  EXPECT_EQ(records.front().index, 2);
}

TEST(Trajectory, RejectsAnnotationOutsideTrajectory) {
  const std::string doc = R"({"question": "q", "history": [{"name": "A", "content": "x"}],
                              "mistake_agent": "A", "mistake_step": "5"})";
  EXPECT_THROW(parse_case(doc, Subset::algorithm_generated, "bad"), IntegrityError);
}

TEST(Trajectory, RejectsUnknownMistakeAgent) {
  const std::string doc = R"({"question": "q", "history": [{"name": "A", "content": "x"}],
                              "mistake_agent": "B", "mistake_step": 0})";
  EXPECT_THROW(parse_case(doc, Subset::algorithm_generated, "bad"), IntegrityError);
}

TEST(Trajectory, MalformedJsonReportsOffset) {
  try {
    parse_case("{\"question\": ", Subset::algorithm_generated, "bad");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_GT(e.offset(), 0u);
  }
}

TEST(Trajectory, MissingFieldNamesTheField) {
  try {
    parse_case(R"({"history": []})", Subset::algorithm_generated, "bad");
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.field(), "question");
  }
}

TEST(Trajectory, ResolveAgentIgnoresCaseAndSpacing) {
  const auto c = make_case({"WebSurfer", "Orchestrator"});
  EXPECT_EQ(resolve_agent(c, " websurfer "), "WebSurfer");
  EXPECT_FALSE(resolve_agent(c, "Coder"));
  EXPECT_TRUE(agent_acts_in(c, "Orchestrator", {1, 1}));
  EXPECT_FALSE(agent_acts_in(c, "Orchestrator", {0, 0}));
}
