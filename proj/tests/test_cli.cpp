#include <gtest/gtest.h>
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hmt/io.hpp"
#include "hmt/orchestrator.hpp"
#include "support.hpp"

using namespace hmt;
using hmt::test::TempDir;

namespace {

struct Run {
  int code = -1;
  std::string out;  // stdout and stderr
};

Run hmt_cli(const std::string& args) {
  const std::string cmd = std::string(HMT_CLI) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return {};
  Run r;
  std::array<char, 4096> buf{};
  while (const std::size_t n = fread(buf.data(), 1, buf.size(), pipe)) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(hmt_cli("--help").code, 0);
  EXPECT_EQ(hmt_cli("").code, 2);
  EXPECT_EQ(hmt_cli("fly").code, 2);
  EXPECT_EQ(hmt_cli("eval --frobnicate").code, 2);
  EXPECT_EQ(hmt_cli("eval -n 0").code, 2);
  EXPECT_EQ(hmt_cli("train --variant dqfd").code, 2);
  EXPECT_EQ(hmt_cli("train --variant ph --episodes 10").code, 2);  // no demos
  EXPECT_EQ(hmt_cli("stats compare a").code, 2);
}

TEST(Cli, OperationalFailuresExitOne) {
  TempDir dir;
  std::ofstream(dir / "bad.json") << R"({"base": "reduced", "blue": {"count": 0}})";
  const auto r = hmt_cli("eval -n 5 --scenario " + (dir / "bad.json").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("blue.count"), std::string::npos) << r.out;
  EXPECT_EQ(hmt_cli("replay " + (dir / "missing.ndjson").string()).code, 1);
  EXPECT_EQ(hmt_cli("eval -n 5 --policy " + (dir / "missing.json").string()).code, 1);
}

TEST(Cli, EvalIsDeterministicAndWritesCsv) {
  TempDir dir;
  const auto a = hmt_cli("eval --scenario reduced -n 30 --seed 4 --csv " + (dir / "a.csv").string());
  const auto b = hmt_cli("eval --scenario reduced -n 30 --seed 4 -j 3 --csv " + (dir / "b.csv").string());
  ASSERT_EQ(a.code, 0) << a.out;
  EXPECT_EQ(a.out.rfind("success_rate ", 0), 0u);
  EXPECT_EQ(a.out, b.out);
  const std::string csv = slurp(dir / "a.csv");
  EXPECT_EQ(csv, slurp(dir / "b.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "episode,seed,winner,reason");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 31);
}

TEST(Cli, RecordReplayAndTamper) {
  TempDir dir;
  const auto store = dir / "eps";
  ASSERT_EQ(hmt_cli("eval --scenario reduced -n 6 --seed 2 --record " + store.string()).code, 0);
  const auto entries = Datastore(store).list();
  ASSERT_EQ(entries.size(), 6u);
  const auto file = store / entries[0].file;
  auto r = hmt_cli("replay " + file.string());
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out.rfind("ok: ", 0), 0u);

  // nudge one coordinate of step 4's state
  auto rec = read_episode_file(file);
  rec.steps.at(4).state.at(0).pos.y += 0.5;
  std::ofstream(dir / "tampered.ndjson") << to_ndjson(rec);
  r = hmt_cli("replay " + (dir / "tampered.ndjson").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.out.rfind("mismatch at step 4", 0), 0u) << r.out;

  rec = read_episode_file(file);
  rec.footer.reset();
  std::ofstream(dir / "partial.ndjson") << to_ndjson(rec);
  r = hmt_cli("replay " + (dir / "partial.ndjson").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.out.rfind("incompatible", 0), 0u) << r.out;

  r = hmt_cli("demos build --store " + store.string() + " --all");
  ASSERT_EQ(r.code, 0) << r.out;
  const Json j = Json::parse(r.out);
  EXPECT_EQ(j["episodes"], 6);
  EXPECT_EQ(j["human"], 0);
  EXPECT_GT(j["agent"].get<int>(), 0);
}

TEST(Cli, PolicyRecordsReplayFromTheCheckpointPath) {
  TempDir dir;
  Rng rng(6);
  const auto c = reduced_scenario();
  save_checkpoint(dir / "p.json", Checkpoint{1, 1, 0.0, DuelingQNet::random({observation_length(c), {8}, 9}, rng)});
  const auto store = dir / "eps";
  auto r = hmt_cli("eval --scenario reduced -n 2 --policy " + (dir / "p.json").string() + " --record " + store.string());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto file = store / Datastore(store).list()[0].file;
  r = hmt_cli("replay " + file.string());
  EXPECT_EQ(r.code, 0) << r.out;
}

TEST(Cli, TrainStatsAndPlots) {
  TempDir dir;
  const std::string common = " --scenario reduced --episodes 200 --config ";
  std::ofstream(dir / "small.json") << R"({"eval_every_episodes": 100, "eval_episodes": 10, "hidden": [8]})";
  auto r = hmt_cli("train --variant plain --seeds 1,2" + common + (dir / "small.json").string() + " --out " +
                   (dir / "a").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(std::filesystem::exists(dir / "a" / "seed-1" / "best.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "a" / "seed-2" / "final.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "a" / "config.json"));
  const auto evals = slurp(dir / "a" / "evals.csv");
  EXPECT_EQ(std::count(evals.begin(), evals.end(), '\n'), 1 + 2 * 2);

  // per-seed bests {0.1,0.2,0.3} vs {0.4,0.5,0.6}: the {1,2,3} vs {4,5,6} Welch case scaled by 0.1
  std::ofstream(dir / "x.csv") << "seed,episode,success_rate\n1,100,0.05\n1,200,0.1\n2,100,0.2\n3,100,0.3\n";
  std::ofstream(dir / "y.csv") << "seed,episode,success_rate\n1,100,0.4\n2,100,0.5\n3,100,0.6\n3,200,0.1\n";
  r = hmt_cli("stats compare --metric best " + (dir / "x.csv").string() + " " + (dir / "y.csv").string());
  ASSERT_EQ(r.code, 0) << r.out;
  Json j = Json::parse(r.out);
  EXPECT_EQ(j["n_a"], 3);
  EXPECT_NEAR(j["t"].get<double>(), -3.6742346141747673, 1e-9);
  EXPECT_NEAR(j["df"].get<double>(), 4.0, 1e-9);
  EXPECT_NEAR(j["p"].get<double>(), 0.021311641128756727, 1e-9);
  EXPECT_NEAR(j["cohens_d"].get<double>(), -3.0, 1e-9);
  // censored episodes-to-threshold on the real runs
  r = hmt_cli("stats compare --threshold 2 --censor 777 " + (dir / "a").string() + " " + (dir / "y.csv").string());
  EXPECT_EQ(r.code, 1) << r.out;  // every seed censored: zero variance is reported, not crashed
  EXPECT_NE(r.out.find("error"), std::string::npos);

  r = hmt_cli("plot curves plain=" + (dir / "a").string() + " --reference 0.5 --out " + (dir / "curves").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(slurp(dir / "curves.svg").find("class=\"curve\""), std::string::npos);
  EXPECT_EQ(slurp(dir / "curves.csv").rfind("label,episode,mean,min,max,seeds", 0), 0u);

  ASSERT_EQ(hmt_cli("eval --scenario reduced -n 40 --record " + (dir / "eps").string()).code, 0);
  r = hmt_cli("plot trajectories --store " + (dir / "eps").string() + " --episodes 3 --out " + (dir / "tr").string());
  ASSERT_EQ(r.code, 0) << r.out;
  const std::string svg = slurp(dir / "tr.svg");
  EXPECT_NE(svg.find("id=\"origin\""), std::string::npos);
}
