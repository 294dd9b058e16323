#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>

#include "food4all/data_io.hpp"
#include "food4all/metrics.hpp"
#include "support.hpp"

using namespace food4all;
using food4all::support::TempDir;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

// Runs the CLI with stderr folded into stdout.
Run cli(const std::string& args) {
  const std::string cmd = std::string(FOOD4ALL_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("frobnicate").code, 2);
  EXPECT_EQ(cli("evaluate --dataset x.jsonl").code, 2);
  EXPECT_EQ(cli("--help").code, 0);
  const auto bad = cli("simulate-feedback --n 4 --prefer louder");
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.out.find("usage error"), std::string::npos);
}

TEST(Cli, EvaluateTsrFixtureAndReport) {
  TempDir tmp;
  const auto dir = support::fixture("tsr");
  const auto r = cli("evaluate --dataset " + q(dir / "cases.jsonl") + " --answers " + q(dir / "answers.jsonl") +
                     " --data " + q(dir) + " --out " + q(tmp / "report.json"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto report = json::parse(read_file(tmp / "report.json")).get<EvalReport>();
  EXPECT_EQ(report.tsr, 0.6);
  EXPECT_EQ(report.per_case.size(), 20u);

  const auto table = cli("report --in " + q(tmp / "report.json"));
  ASSERT_EQ(table.code, 0) << table.out;
  EXPECT_EQ(parse_report_table(table.out).at("Task Succ."), 0.6);
}

TEST(Cli, MissingFilesExitOne) {
  TempDir tmp;
  const auto r = cli("evaluate --dataset /nonexistent/cases.jsonl --answers /nonexistent/a.jsonl --data " +
                     q(support::fixture("tsr")) + " --out " + q(tmp / "r.json"));
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(cli("report --in /nonexistent/report.json").code, 1);
}

TEST(Cli, GenWorldNegativesAndTraining) {
  TempDir tmp;
  const auto w = tmp / "world";
  ASSERT_EQ(cli("gen-world --out " + q(w) + " --zips 4 --cases 12 --seed 3").code, 0);
  for (const char* f : {"registry.csv", "geocode.csv", "nutrients.jsonl", "cases.jsonl"}) {
    EXPECT_TRUE(fs::exists(w / f)) << f;
  }
  const auto neg = cli("gen-negatives --dataset " + q(w / "cases.jsonl") + " --ops item-drop,hallucinate --data " +
                       q(w) + " --out " + q(tmp / "with_neg.jsonl"));
  ASSERT_EQ(neg.code, 0) << neg.out;
  for (const auto& c : load_cases(tmp / "with_neg.jsonl")) EXPECT_TRUE(c.y_minus) << c.id;
  EXPECT_EQ(cli("gen-negatives --dataset " + q(w / "cases.jsonl") + " --ops melt --data " + q(w) + " --out " +
                q(tmp / "x.jsonl"))
                .code,
            2);

  const auto tr = cli("train-offline --dataset " + q(tmp / "with_neg.jsonl") + " --epochs 5 --lr 1e-3 --data " +
                      q(w) + " --out " + q(tmp / "ckpt.json"));
  ASSERT_EQ(tr.code, 0) << tr.out;
  const auto ck = json::parse(read_file(tmp / "ckpt.json"));
  EXPECT_EQ(ck.at("version"), 1);
  EXPECT_EQ(read_file(tmp / "ckpt_curve.csv").rfind("step,loss\n", 0), 0u);
}

TEST(Cli, LiveEvaluateOnSmallWorld) {
  TempDir tmp;
  const auto w = tmp / "world";
  ASSERT_EQ(cli("gen-world --out " + q(w) + " --zips 3 --cases 3 --seed 5").code, 0);
  const auto r = cli("evaluate --live --dataset " + q(w / "cases.jsonl") + " --data " + q(w) + " --out " +
                     q(tmp / "live.json"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto report = json::parse(read_file(tmp / "live.json")).get<EvalReport>();
  EXPECT_EQ(report.n, 3u);
  EXPECT_EQ(report.format_acc, 1.0);
}

TEST(Cli, ServeFailsCleanlyOnBadConfig) {
  TempDir tmp;
  write_file(tmp / "c.json", R"({"data": {"registry": "missing.csv"}})");
  const auto r = cli("serve --config " + q(tmp / "c.json"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("missing.csv"), std::string::npos);
}
