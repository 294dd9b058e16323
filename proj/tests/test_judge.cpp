#include <gtest/gtest.h>

#include "food4all/chat.hpp"
#include "food4all/error.hpp"
#include "food4all/judge.hpp"
#include "food4all/json_schema.hpp"
#include "food4all/table_eval.hpp"

using namespace food4all;

// ---- judge ----

TEST(Judge, PromptCarriesRubricAndPayload) {
  const auto p = build_judge_prompt("food near 94102?", "Oak Pantry, 94102: apple");
  EXPECT_EQ(p.rfind("[System Instruction]\nYou are an expert evaluator", 0), 0u);
  EXPECT_NE(p.find("- Usefulness (U): How well does the answer address the user’s intent?"), std::string::npos);
  EXPECT_NE(p.find("[User Query]\nfood near 94102?\n\n[System Response]\nOak Pantry, 94102: apple\n\n[Output Format]"),
            std::string::npos);
  EXPECT_NE(p.find("\"Justification\": \"<brief rationale>\"\n}\n"), std::string::npos);
  const auto [q, y] = extract_judge_payload(p);
  EXPECT_EQ(q, "food near 94102?");
  EXPECT_EQ(y, "Oak Pantry, 94102: apple");
  EXPECT_THROW(extract_judge_payload("hello"), Error);
}

TEST(Judge, ParsesFencedReply) {
  const auto s = parse_judge_reply(
      "Sure.\n```json\n{\"Usefulness\": 4, \"Completeness\": 5, \"Trustworthiness\": 3, \"Justification\": \"ok\"}\n```");
  EXPECT_EQ(s, (JudgeScore{4, 5, 3, "ok"}));
}

TEST(Judge, RejectsOutOfRangeAndMissingKeys) {
  for (const char* bad : {R"({"Usefulness": 6, "Completeness": 5, "Trustworthiness": 3, "Justification": ""})",
                          R"({"Usefulness": 4, "Completeness": 5, "Justification": ""})",
                          R"({"Usefulness": 4, "Completeness": 5, "Trustworthiness": 3})", "no json", "{oops}"}) {
    try {
      parse_judge_reply(bad);
      FAIL() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kParse);
      EXPECT_EQ(e.detail(), bad);
    }
  }
}

TEST(Judge, AggregateAndCalibrate) {
  const std::vector<JudgeScore> runs{{5, 4, 3, ""}, {3, 4, 5, ""}, {4, 4, 4, ""}};
  const auto s = aggregate_judge(runs);
  EXPECT_DOUBLE_EQ(s.usefulness, 4.0);
  EXPECT_DOUBLE_EQ(s.overall, 4.0);

  const std::vector<double> model{1, 3};
  const auto cal = zscore_calibrate(model, 3.5, 0.5);
  EXPECT_DOUBLE_EQ(cal[0], 3.0);
  EXPECT_DOUBLE_EQ(cal[1], 4.0);
  const std::vector<double> flat{2, 2};
  EXPECT_EQ(zscore_calibrate(flat, 3.5, 0.5), (std::vector<double>{3.5, 3.5}));
}

TEST(Judge, RunsWithConsecutiveSeeds) {
  std::vector<std::uint64_t> seeds;
  FunctionChatBackend backend([&](const ChatRequest& r) {
    seeds.push_back(*r.seed);
    const auto [q, y] = extract_judge_payload(r.messages.at(0).content);
    EXPECT_EQ(q, "q");
    const int u = static_cast<int>(seeds.size()) + 1;
    return ChatResponse{"{\"Usefulness\": " + std::to_string(u) +
                            ", \"Completeness\": 3, \"Trustworthiness\": 3, \"Justification\": \"" + y + "\"}",
                        std::nullopt};
  });
  const auto s = judge_response(backend, "q", "y", 3, 10);
  EXPECT_EQ(seeds, (std::vector<std::uint64_t>{10, 11, 12}));
  EXPECT_DOUBLE_EQ(s.usefulness, 3.0);
}

// ---- json schema ----

TEST(JsonSchema, CommonKeywords) {
  const json schema = json::parse(R"({
    "type": "object",
    "required": ["zip"],
    "additionalProperties": false,
    "properties": {
      "zip": {"type": "string", "minLength": 5},
      "radius": {"type": "number", "minimum": 0, "maximum": 50},
      "tags": {"type": "array", "minItems": 1, "items": {"enum": ["a", "b"]}},
      "mode": {"anyOf": [{"type": "integer"}, {"type": "null"}]}
    }
  })");
  EXPECT_FALSE(validate_schema(schema, json{{"zip", "94102"}, {"radius", 3}, {"tags", {"a"}}, {"mode", nullptr}}));
  EXPECT_EQ(*validate_schema(schema, json::object()), "/: missing required \"zip\"");
  EXPECT_TRUE(validate_schema(schema, json{{"zip", "941"}}));
  EXPECT_TRUE(validate_schema(schema, json{{"zip", "94102"}, {"radius", 51}}));
  EXPECT_TRUE(validate_schema(schema, json{{"zip", "94102"}, {"extra", 1}}));
  const auto tag = validate_schema(schema, json{{"zip", "94102"}, {"tags", {"a", "c"}}});
  ASSERT_TRUE(tag);
  EXPECT_EQ(tag->rfind("/tags/1", 0), 0u);
  EXPECT_TRUE(validate_schema(schema, json{{"zip", "94102"}, {"mode", 1.5}}));
}

TEST(JsonSchema, OneOfNeedsExactlyOne) {
  const json schema = json::parse(R"({"oneOf": [{"type": "number"}, {"type": "integer"}]})");
  EXPECT_FALSE(validate_schema(schema, 1.5));
  EXPECT_TRUE(validate_schema(schema, 2));
}

// ---- table eval ----

TEST(TableEval, FilterSortTake) {
  const json table = json::parse(R"([{"n": "a", "d": 3}, {"n": "b", "d": 1}, {"n": "c"}, {"n": "d", "d": 2}])");
  const auto rows = table_eval(table, "filter d <= 2 | sort d desc | take 1");
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0]["n"], "d");
  const auto sorted = table_eval(table, "sort d");
  EXPECT_EQ(sorted.back()["n"], "c");
  EXPECT_EQ(table_eval(table, "filter n == \"b\"").size(), 1u);
}

TEST(TableEval, Aggregates) {
  const json table = json::parse(R"([{"kcal": 95}, {"kcal": 205}, {"x": 1}])");
  EXPECT_EQ(table_eval(table, "sum kcal")[0]["sum_kcal"], 300.0);
  EXPECT_EQ(table_eval(table, "mean kcal")[0]["mean_kcal"], 150.0);
  EXPECT_TRUE(table_eval(json::array(), "mean kcal").empty());
}

TEST(TableEval, RejectsAnythingElse) {
  for (const char* bad : {"drop table", "filter d ~ 3", "take -1", "sort", "sum", "system('ls')"}) {
    try {
      table_eval(json::array(), bad);
      FAIL() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kRejected) << bad;
    }
  }
}
