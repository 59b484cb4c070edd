#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "hmt/io.hpp"
#include "hmt/stats.hpp"
#include "support.hpp"

using namespace hmt;
using hmt::test::has_field;
using hmt::test::TempDir;

// ---- statistics, golden values from an independent implementation ----

struct Golden {
  std::vector<double> a, b;
  double t, df, p, d;
};

class WelchGolden : public ::testing::TestWithParam<Golden> {};

TEST_P(WelchGolden, MatchesReference) {
  const auto& g = GetParam();
  const Comparison c = compare_runs(g.a, g.b);
  EXPECT_NEAR(c.t, g.t, 1e-9);
  EXPECT_NEAR(c.df, g.df, 1e-9);
  EXPECT_NEAR(c.p, g.p, 1e-9);
  EXPECT_NEAR(c.cohens_d, g.d, 1e-9);
  EXPECT_NEAR(c.mean_a, mean(g.a), 1e-12);
}

INSTANTIATE_TEST_SUITE_P(
    Stats, WelchGolden,
    ::testing::Values(
        Golden{{1, 2, 3}, {4, 5, 6}, -3.6742346141747673, 4.0, 0.021311641128756727, -3.0},
        Golden{{1.2, 3.4, 2.2, 5.0, 4.1}, {2.0, 2.5, 2.1}, 1.4178598456843008, 4.398151239401718,
               0.22302417408213668, 0.7902198011947439},
        Golden{{1600, 1400, 1900, 1300, 1700}, {3500, 3100, 4000, 2900, 5000}, -5.430544507532736,
               4.642607850897708, 0.003597428632449604, -3.434577915744173}));

TEST(Stats, HandDerivedSmallCase) {
  // a = {1,2,3}, b = {4,5,6}: both variances 1, pooled SD 1, d = -3,
  // t = -3 / sqrt(1/3 + 1/3), df = (2/3)^2 / (2 (1/3)^2 / 2) = 4
  const std::vector<double> a{1, 2, 3}, b{4, 5, 6};
  EXPECT_NEAR(sample_variance(a), 1.0, 1e-15);
  const auto c = compare_runs(a, b);
  EXPECT_NEAR(c.cohens_d, -3.0, 1e-12);
  EXPECT_NEAR(c.t, -3.0 / std::sqrt(2.0 / 3.0), 1e-12);
  EXPECT_NEAR(c.df, 4.0, 1e-12);
}

TEST(Stats, AntisymmetricInArguments) {
  const std::vector<double> a{3, 1, 4, 1, 5}, b{9, 2, 6, 5};
  const auto ab = compare_runs(a, b);
  const auto ba = compare_runs(b, a);
  EXPECT_NEAR(ab.t, -ba.t, 1e-12);
  EXPECT_NEAR(ab.cohens_d, -ba.cohens_d, 1e-12);
  EXPECT_NEAR(ab.p, ba.p, 1e-12);
}

TEST(Stats, DegenerateInputsAreRejected) {
  EXPECT_THROW(compare_runs(std::vector<double>{1}, std::vector<double>{1, 2}), ConfigError);
  EXPECT_THROW(compare_runs(std::vector<double>{2, 2}, std::vector<double>{3, 3}), ConfigError);
}

// ---- configuration JSON ----

TEST(Json, EpisodeConfigRoundTrip) {
  for (const auto& c : {default_scenario(), reduced_scenario()}) {
    const Json j = to_json(c);
    EXPECT_EQ(episode_config_from_json(j), c);
    // and through text
    EXPECT_EQ(episode_config_from_json(Json::parse(j.dump())), c);
  }
  auto c = default_scenario();
  c.blue.sensors.push_back(Sensor{100, 0.5, 1.0, 0.3});
  c.red.spawn = SpawnRegion::ring({1, 2}, 3, 4);
  c.blue.observability = ObservabilityMode::OwnSensorsOnly;
  c.red.initial_heading = InitialHeading::Random;
  c.red.payload = Payload{Payload::Kind::None, 0.0};
  EXPECT_EQ(episode_config_from_json(to_json(c)), c);
}

TEST(Json, OverlayKeepsBaseForAbsentKeys) {
  const Json j = Json::parse(R"({"max_steps": 77, "blue": {"count": 3}})");
  const auto c = episode_config_from_json(j, reduced_scenario());
  auto expect = reduced_scenario();
  expect.max_steps = 77;
  expect.blue.count = 3;
  EXPECT_EQ(c, expect);
}

TEST(Json, ErrorsCarryDottedPaths) {
  const Json j = Json::parse(R"({
    "map_width": "wide",
    "colour": 1,
    "blue": {"spec": {"max_speed": -1, "warp": true}, "observability": "telepathy"},
    "fixed_sensors": [{"sensor": {"p_detect": 2}}]
  })");
  try {
    episode_config_from_json(j, default_scenario());
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_TRUE(has_field(e.fields(), "map_width"));
    EXPECT_TRUE(has_field(e.fields(), "colour"));
    EXPECT_TRUE(has_field(e.fields(), "blue.spec.warp"));
    EXPECT_TRUE(has_field(e.fields(), "blue.observability"));
  }
  // well-typed but out of range values fail validation with the same paths
  try {
    episode_config_from_json(Json::parse(R"({"fixed_sensors": [{"sensor": {"p_detect": 2}}]})"), default_scenario());
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_TRUE(has_field(e.fields(), "fixed_sensors[0].sensor.p_detect"));
  }
}

TEST(Json, TrainConfigRoundTripAndErrors) {
  auto c = TrainConfig::desk_scale(Variant::MH);
  c.stop_at_success = 0.8;
  c.seeds = {7, 8};
  EXPECT_EQ(train_config_from_json(to_json(c)), c);
  EXPECT_TRUE(to_json(TrainConfig{})["stop_at_success"].is_null());
  try {
    train_config_from_json(Json::parse(R"({"lr": "fast", "variant": "ppo", "hiden": [3]})"));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_TRUE(has_field(e.fields(), "lr"));
    EXPECT_TRUE(has_field(e.fields(), "variant"));
    EXPECT_TRUE(has_field(e.fields(), "hiden"));
  }
}

TEST(Json, CommandsAndEventsRoundTrip) {
  const std::vector<OperatorCommand> cmds{AddWaypoint{2, {10.5, -3}}, RemoveWaypoint{1, 4}, ClearWaypoints{0}};
  for (const auto& c : cmds) EXPECT_EQ(operator_command_from_json(to_json(c)), c);
  const std::vector<Event> events{Detection{1, 5, 3}, Neutralization{2, 5, 9}, Intrusion{5, 4}, Timeout{300}};
  for (const auto& e : events) EXPECT_EQ(event_from_json(to_json(e)), e);
  const Outcome o{Team::Red, Outcome::Reason::Intrusion};
  EXPECT_EQ(outcome_from_json(to_json(o)), o);
  const ControlInput ci{0.25, -0.125};
  EXPECT_EQ(control_from_json(to_json(ci)), ci);

  EXPECT_THROW(operator_command_from_json(Json::parse(R"({"type": "teleport", "uav_id": 1})")), ConfigError);
  EXPECT_THROW(operator_command_from_json(Json::parse(R"({"type": "add_waypoint", "uav_id": 1})")), ConfigError);
  EXPECT_THROW(operator_command_from_json(Json::parse(R"({"type": "remove_waypoint", "pos": [1, 2]})")), ConfigError);
}

TEST(Json, ScenarioFilesNameABase) {
  TempDir dir;
  std::ofstream(dir / "s.json") << R"({"base": "reduced", "max_steps": 42})";
  auto expect = reduced_scenario();
  expect.max_steps = 42;
  EXPECT_EQ(load_scenario((dir / "s.json").string()), expect);
  EXPECT_EQ(load_scenario("default"), default_scenario());
  std::ofstream(dir / "bad.json") << R"({"base": "huge"})";
  EXPECT_THROW(load_scenario((dir / "bad.json").string()), ConfigError);
  EXPECT_THROW(load_scenario((dir / "missing.json").string()), ConfigError);
  std::ofstream(dir / "broken.json") << "{ not json";
  EXPECT_THROW(load_scenario((dir / "broken.json").string()), ConfigError);
}

// ---- checkpoints and evaluation CSV ----

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir;
  Rng rng(1);
  Checkpoint c{5, 1200, 0.9, DuelingQNet::random({21, {8, 4}, 9}, rng)};
  save_checkpoint(dir / "c.json", c);
  const Checkpoint back = load_checkpoint(dir / "c.json");
  EXPECT_EQ(back.seed, 5u);
  EXPECT_EQ(back.episode, 1200);
  EXPECT_EQ(back.success_rate, 0.9);
  EXPECT_EQ(back.net.layout(), c.net.layout());
  EXPECT_EQ(back.net.params(), c.net.params());
  EXPECT_EQ(back.net.hash(), c.net.hash());
}

TEST(Checkpoint, IncompatibleFilesAreRejected) {
  Rng rng(2);
  const Checkpoint c{1, 1, 0.5, DuelingQNet::random({3, {2}, 9}, rng)};
  Json j = checkpoint_to_json(c);
  j["format"] = "hmt-qnet/99";
  EXPECT_THROW(checkpoint_from_json(j), ConfigError);
  j = checkpoint_to_json(c);
  j["observation_layout"] = "other";
  EXPECT_THROW(checkpoint_from_json(j), ConfigError);
  j = checkpoint_to_json(c);
  j["params"].erase(0);
  EXPECT_THROW(checkpoint_from_json(j), ConfigError);
}

TEST(EvalCsv, RoundTripAndHeader) {
  const std::vector<EvalPoint> pts{{1, 100, 0.25}, {1, 200, 0.5}, {2, 100, 1.0 / 3.0}};
  std::stringstream s;
  write_eval_csv(s, pts);
  EXPECT_EQ(s.str().substr(0, s.str().find('\n')), "seed,episode,success_rate");
  EXPECT_EQ(read_eval_csv(s), pts);
  std::stringstream bad("seed,episode,success_rate\n1,x,0.5\n");
  EXPECT_THROW(read_eval_csv(bad), ConfigError);
}

TEST(Files, AtomicWriteReplacesContent) {
  TempDir dir;
  write_file_atomic(dir / "f.txt", "one");
  write_file_atomic(dir / "f.txt", "two");
  std::ifstream in(dir / "f.txt");
  std::string s;
  in >> s;
  EXPECT_EQ(s, "two");
  int files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir.path())) files += e.is_regular_file();
  EXPECT_EQ(files, 1);  // no temp file left behind
}
