#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "hmt/io.hpp"
#include "hmt/learner/train.hpp"
#include "hmt/orchestrator.hpp"
#include "hmt/plot.hpp"
#include "support.hpp"

using namespace hmt;
using hmt::test::has_field;
using hmt::test::TempDir;

namespace {

std::shared_ptr<const DuelingQNet> random_policy(const EpisodeConfig& c, std::uint64_t seed) {
  Rng rng(seed);
  return std::make_shared<const DuelingQNet>(DuelingQNet::random({observation_length(c), {16}, kActionCount}, rng));
}

EpisodeRecord heuristic_episode(const EpisodeConfig& c, std::uint64_t seed) {
  return run_episode(c, seed, default_bindings(c), PolicyRegistry{});
}

// Serialized record without the wall-clock fields.
std::string reproducible_bytes(EpisodeRecord r) {
  if (r.footer) {
    r.footer->wall_time = 0.0;
    r.footer->pauses.clear();
  }
  return to_ndjson(r);
}

int count_lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

// ---- bindings ----

TEST(Bindings, DefaultShape) {
  const auto b = default_bindings(default_scenario());
  ASSERT_EQ(b.size(), 6u);
  EXPECT_EQ(b[0].actors, (std::vector<std::string>{"waypoint", "heuristic_blue"}));
  EXPECT_EQ(b[5].actors, (std::vector<std::string>{"scripted_red"}));
  EXPECT_EQ(default_bindings(reduced_scenario(), "policy:p")[1].actors[1], "policy:p");
}

TEST(Bindings, ErrorsNameTheOffendingEntry) {
  const auto c = reduced_scenario();  // 0,1 blue; 2 red
  PolicyRegistry reg;
  Rng rng(1);
  reg.add("small", std::make_shared<const DuelingQNet>(DuelingQNet::random({5, {4}, 9}, rng)));
  const std::vector<ActorBinding> bad{
      {0, {"waypoint", "teleporter"}},
      {1, {"scripted_red"}},
      {2, {"heuristic_blue"}},
      {2, {"scripted_red"}},
      {7, {"waypoint"}},
  };
  try {
    check_bindings(c, bad, reg);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_TRUE(has_field(e.fields(), "bindings[0].actors[1]"));
    EXPECT_TRUE(has_field(e.fields(), "bindings[1].actors[0]"));
    EXPECT_TRUE(has_field(e.fields(), "bindings[2].actors[0]"));
    EXPECT_TRUE(has_field(e.fields(), "bindings[3].uav_id"));
    EXPECT_TRUE(has_field(e.fields(), "bindings[4].uav_id"));
  }
  // missing binding, wrong policy input size, unknown policy
  try {
    check_bindings(c, {{0, {"policy:small"}}, {1, {"policy:nope"}}}, reg);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_TRUE(has_field(e.fields(), "bindings[0].actors[0]"));
    EXPECT_TRUE(has_field(e.fields(), "bindings[1].actors[0]"));
    EXPECT_TRUE(has_field(e.fields(), "bindings"));
  }
}

TEST(Bindings, RegistryLoadsCheckpointPaths) {
  TempDir dir;
  const auto c = reduced_scenario();
  save_checkpoint(dir / "p.json", Checkpoint{1, 1, 0.5, *random_policy(c, 3)});
  PolicyRegistry reg;
  const std::string path = (dir / "p.json").string();
  const auto net = reg.find(path);
  ASSERT_TRUE(net);
  EXPECT_EQ(net->hash(), random_policy(c, 3)->hash());
  EXPECT_FALSE(reg.find("not-a-file"));
  EXPECT_NO_THROW(check_bindings(c, default_bindings(c, "policy:" + path), reg));
}

// ---- episodes ----

TEST(Episode, HeadlessRecordIsCompleteAndConsistent) {
  const auto c = reduced_scenario();
  const auto rec = heuristic_episode(c, 5);
  ASSERT_TRUE(rec.complete());
  EXPECT_EQ(rec.header.format, kRecordFormat);
  EXPECT_EQ(rec.header.observation_layout, kObservationLayout);
  EXPECT_EQ(rec.footer->steps, static_cast<int>(rec.steps.size()));
  EXPECT_EQ(rec.header.initial_state.size(), 3u);
  for (std::size_t k = 0; k < rec.steps.size(); ++k) {
    const auto& s = rec.steps[k];
    ASSERT_EQ(s.t, static_cast<int>(k));
    ASSERT_EQ(s.state.size(), 3u);
    for (const auto& u : s.uavs) {
      if (u.id < 2) {
        ASSERT_TRUE(u.reward);
        ASSERT_EQ(u.frame.size(), static_cast<std::size_t>(frame_length(c)));
        ASSERT_EQ(u.driver, 1u);  // heuristic below an empty waypoint queue
      } else {
        ASSERT_FALSE(u.reward);
      }
    }
  }
  EXPECT_EQ(rec.footer->provenance.at(0), "heuristic");
  EXPECT_EQ(rec.footer->final_frames.size(), 2u);
}

TEST(Episode, RecordedOutcomesMatchEvaluationEpisodes) {
  // the orchestrator and the learner's evaluator must play the same game
  for (const auto& c : {reduced_scenario(), default_scenario()}) {
    for (std::uint64_t i = 0; i < 25; ++i) {
      const std::uint64_t seed = derive_seed(3, i);
      ASSERT_EQ(heuristic_episode(c, seed).footer->outcome, play_episode(c, seed, heuristic_factory())) << i;
    }
  }
  const auto c = reduced_scenario();
  const auto net = random_policy(c, 8);
  PolicyRegistry reg;
  reg.add("p", net);
  for (std::uint64_t seed = 0; seed < 10; ++seed)
    ASSERT_EQ(run_episode(c, seed, default_bindings(c, "policy:p"), reg).footer->outcome,
              play_episode(c, seed, policy_factory(net)));
}

TEST(Episode, PolicyStepsCarryActionsAndHash) {
  const auto c = reduced_scenario();
  PolicyRegistry reg;
  reg.add("p", random_policy(c, 1));
  const auto rec = run_episode(c, 2, default_bindings(c, "policy:p"), reg);
  EXPECT_EQ(rec.header.policies.size(), 1u);
  EXPECT_EQ(rec.header.policies.at("p").size(), 16u);
  for (const auto& u : rec.steps[0].uavs)
    if (u.id < 2) {
      ASSERT_TRUE(u.action);
      EXPECT_EQ(u.control, decode_action(*u.action, c.blue.spec));
    }
  EXPECT_EQ(rec.footer->provenance.at(1), "policy");
}

TEST(Episode, ScheduledCommandsSteerAndMarkHumanProvenance) {
  const auto c = reduced_scenario();
  RunOptions opt;
  opt.scheduled[0] = {AddWaypoint{0, {900, 900}}};
  const auto rec = run_episode(c, 4, default_bindings(c), PolicyRegistry{}, opt);
  EXPECT_EQ(rec.steps[0].commands.size(), 1u);
  EXPECT_EQ(rec.steps[0].uavs[0].driver, 0u);  // waypoint actor took over
  EXPECT_EQ(rec.footer->provenance.at(0), "human");
  EXPECT_EQ(rec.footer->provenance.at(1), "heuristic");

  RunOptions red;
  red.scheduled[1] = {AddWaypoint{2, {0, 0}}};
  EXPECT_THROW(run_episode(c, 4, default_bindings(c), PolicyRegistry{}, red), IntegrityError);
}

TEST(Episode, InteractiveCommandsPausesAndAbort) {
  const auto c = reduced_scenario();
  CommandInbox inbox;
  const auto t1 = inbox.submit(AddWaypoint{1, {100, 100}});
  const auto t2 = inbox.submit(AddWaypoint{2, {0, 0}});  // red: rejected
  std::vector<CommandResult> results;
  RunOptions opt;
  opt.mode = EpisodeMode::Interactive;
  opt.inbox = &inbox;
  opt.on_command = [&](const CommandResult& r) { results.push_back(r); };
  opt.on_step = [&](const StepRecord& s, const WorldState&, const WaypointQueues&) {
    if (s.t == 2) {
      inbox.pause();
      std::thread([&] {
        std::this_thread::sleep_for(std::chrono::milliseconds(30));
        inbox.resume();
      }).detach();
    }
  };
  const auto rec = run_episode(c, 6, default_bindings(c), PolicyRegistry{}, opt);
  ASSERT_EQ(results.size(), 2u);
  EXPECT_EQ(results[0].ticket, t1);
  EXPECT_FALSE(results[0].error);
  EXPECT_EQ(results[1].ticket, t2);
  EXPECT_EQ(results[1].error, CommandError::Unauthorized);
  EXPECT_EQ(rec.steps[0].commands.size(), 1u);
  ASSERT_EQ(rec.footer->pauses.size(), 1u);
  EXPECT_EQ(rec.footer->pauses[0].at_step, 3);
  EXPECT_GE(rec.footer->pauses[0].wall_seconds, 0.02);
  EXPECT_EQ(rec.footer->provenance.at(1), "human");

  // the interactive record replays headlessly
  EXPECT_TRUE(same_episode(replay_episode(rec, PolicyRegistry{}), rec));

  CommandInbox abort_box;
  RunOptions ab;
  ab.mode = EpisodeMode::Interactive;
  ab.inbox = &abort_box;
  ab.on_step = [&](const StepRecord& s, const WorldState&, const WaypointQueues&) {
    if (s.t == 4) abort_box.abort();
  };
  const auto partial = run_episode(c, 6, default_bindings(c), PolicyRegistry{}, ab);
  EXPECT_FALSE(partial.complete());
  EXPECT_EQ(partial.steps.size(), 5u);
}

// ---- serialization ----

TEST(Ndjson, ByteRoundTrip) {
  const auto c = default_scenario();
  RunOptions opt;
  opt.scheduled[3] = {AddWaypoint{0, {10, 20.125}}, RemoveWaypoint{0, 0}};
  opt.episode_id = "ep-x";
  const auto rec = run_episode(c, 9, default_bindings(c), PolicyRegistry{}, opt);
  const std::string text = to_ndjson(rec);
  EXPECT_EQ(count_lines(text), static_cast<int>(rec.steps.size()) + 2);
  const auto back = parse_ndjson(text);
  EXPECT_EQ(back, rec);
  EXPECT_EQ(to_ndjson(back), text);

  // each line is a JSON object with a type tag
  std::istringstream lines(text);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(Json::parse(line)["type"], "header");
}

TEST(Ndjson, PartialRecordsAndGarbage) {
  auto rec = heuristic_episode(reduced_scenario(), 1);
  rec.footer.reset();
  rec.steps.resize(3);
  const auto back = parse_ndjson(to_ndjson(rec));
  EXPECT_FALSE(back.complete());
  EXPECT_EQ(back.steps.size(), 3u);
  EXPECT_ANY_THROW(parse_ndjson("{\"type\":\"step\"}\n"));
  EXPECT_ANY_THROW(parse_ndjson("not json\n"));
}

// ---- replay ----

TEST(Replay, UntamperedRecordsReplay) {
  const auto c = reduced_scenario();
  PolicyRegistry reg;
  reg.add("p", random_policy(c, 4));
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto rec = run_episode(c, seed, default_bindings(c, "policy:p"), reg);
    EXPECT_EQ(reproducible_bytes(replay_episode(parse_ndjson(to_ndjson(rec)), reg)), reproducible_bytes(rec));
  }
}

TEST(Replay, TamperingIsLocatedAtItsStep) {
  const auto c = reduced_scenario();
  RunOptions opt;
  opt.scheduled[2] = {AddWaypoint{0, {500, 500}}};
  const auto rec = run_episode(c, 12, default_bindings(c), PolicyRegistry{}, opt);
  ASSERT_GT(rec.steps.size(), 6u);

  auto expect_at = [&](EpisodeRecord r, int step, const std::string& what) {
    try {
      replay_episode(r, PolicyRegistry{});
      ADD_FAILURE() << "tampered " << what << " was not detected";
    } catch (const IntegrityError& e) {
      EXPECT_EQ(e.step(), step) << what << ": " << e.what();
    }
  };
  auto r = rec;
  r.steps[5].state[0].pos.x += 1e-9;
  expect_at(r, 5, "position");
  r = rec;
  r.steps[4].uavs[0].reward = *r.steps[4].uavs[0].reward + 1e-12;
  expect_at(r, 4, "reward");
  r = rec;
  r.steps[3].uavs[1].control.d_heading += 0.1;
  expect_at(r, 3, "control");
  // commands are replay inputs; an edited one shows up where its effect diverges
  r = rec;
  r.steps[2].commands[0] = AddWaypoint{0, {501, 500}};
  try {
    replay_episode(r, PolicyRegistry{});
    ADD_FAILURE() << "tampered command was not detected";
  } catch (const IntegrityError& e) {
    EXPECT_GE(e.step(), 2);
  }
  r = rec;
  r.steps[6].events.push_back(Timeout{7});
  expect_at(r, 6, "event");
  r = rec;
  r.footer->outcome.winner = r.footer->outcome.winner == Team::Blue ? Team::Red : Team::Blue;
  expect_at(r, static_cast<int>(rec.steps.size()), "outcome");
  r = rec;
  r.steps.pop_back();
  EXPECT_THROW(replay_episode(r, PolicyRegistry{}), IntegrityError);
}

TEST(Replay, IncompatibleRecordsAreRefused) {
  const auto c = reduced_scenario();
  PolicyRegistry reg;
  reg.add("p", random_policy(c, 1));
  const auto rec = run_episode(c, 3, default_bindings(c, "policy:p"), reg);

  PolicyRegistry other;
  other.add("p", random_policy(c, 2));
  EXPECT_THROW(replay_episode(rec, other), IncompatibleRecord);
  EXPECT_THROW(replay_episode(rec, PolicyRegistry{}), IncompatibleRecord);
  auto r = rec;
  r.header.format = "hmt-episode/2";
  EXPECT_THROW(replay_episode(r, reg), IncompatibleRecord);
  r = rec;
  r.header.observation_layout = "hmt-obs/0";
  EXPECT_THROW(replay_episode(r, reg), IncompatibleRecord);
  r = rec;
  r.header.software_version = "9.0.0";
  EXPECT_THROW(replay_episode(r, reg), IncompatibleRecord);
  r = rec;
  r.footer.reset();
  EXPECT_THROW(replay_episode(r, reg), IncompatibleRecord);
}

// Randomized configs and command schedules replay byte-identically.
TEST(Replay, RandomizedEpisodesProperty) {
  Rng rng(2024);
  for (int trial = 0; trial < 25; ++trial) {
    auto c = rng.bernoulli(0.5) ? reduced_scenario() : default_scenario();
    c.blue.count = 1 + static_cast<int>(rng.below(4));
    c.red.count = 1 + static_cast<int>(rng.below(2));
    c.max_steps = 20 + static_cast<int>(rng.below(60));
    c.blue.observability = static_cast<ObservabilityMode>(rng.below(3));
    c.fixed_sensors[0].sensor.p_detect = rng.uniform(0.1, 1.0);
    RunOptions opt;
    for (int k = 0; k < 6; ++k) {
      const int t = static_cast<int>(rng.below(static_cast<std::uint64_t>(c.max_steps / 2)));
      const auto uav = static_cast<EntityId>(rng.below(static_cast<std::uint64_t>(c.blue.count)));
      opt.scheduled[t].push_back(AddWaypoint{uav, {rng.uniform(0, c.map_width), rng.uniform(0, c.map_height)}});
    }
    const auto rec = run_episode(c, rng.next_u64(), default_bindings(c), PolicyRegistry{}, opt);
    const std::string text = to_ndjson(rec);
    ASSERT_EQ(reproducible_bytes(replay_episode(parse_ndjson(text), PolicyRegistry{})), reproducible_bytes(rec))
        << "trial " << trial;
  }
}

TEST(Batch, ResultsDoNotDependOnParallelism) {
  const auto c = default_scenario();
  const auto a = run_batch(c, default_bindings(c), PolicyRegistry{}, 12, 1, 77);
  const auto b = run_batch(c, default_bindings(c), PolicyRegistry{}, 12, 4, 77);
  ASSERT_TRUE(a.errors.empty());
  for (std::size_t i = 0; i < 12; ++i) {
    ASSERT_TRUE(same_episode(*a.records[i], *b.records[i])) << i;
    EXPECT_EQ(a.records[i]->header.seed, derive_seed(77, i));
  }
  EXPECT_EQ(a.success_rate(), b.success_rate());
}

// ---- datastore ----

TEST(Datastore, WriteListReadAndQuarantine) {
  TempDir dir;
  const auto c = reduced_scenario();
  std::vector<std::string> ids;
  {
    Datastore store(dir.path());
    for (std::uint64_t s = 0; s < 3; ++s) ids.push_back(store.write(heuristic_episode(c, s)));
    auto partial = heuristic_episode(c, 9);
    partial.footer.reset();
    ids.push_back(store.write(partial));
    auto named = heuristic_episode(c, 10);
    named.header.episode_id = "mine";
    EXPECT_EQ(store.write(named), "mine");
    EXPECT_ANY_THROW(store.write(named));
  }
  Datastore store(dir.path());  // reopened from disk
  const auto list = store.list();
  ASSERT_EQ(list.size(), 5u);
  EXPECT_EQ(std::set<std::string>(ids.begin(), ids.end()).size(), 4u);
  EXPECT_FALSE(list[3].complete);
  EXPECT_EQ(list[3].file.rfind("quarantine/", 0), 0u);
  EXPECT_EQ(list[0].file.rfind("episodes/", 0), 0u);
  EXPECT_EQ(store.read_complete().size(), 4u);
  EXPECT_TRUE(same_episode(store.read(ids[1]), heuristic_episode(c, 1)));
  EXPECT_FALSE(store.find("nope"));
  EXPECT_ANY_THROW(store.read("nope"));
  EXPECT_TRUE(std::filesystem::exists(dir / "index.jsonl"));
}

// ---- demonstrations ----

TEST(Demos, TransitionsFollowTheRecords) {
  const auto c = reduced_scenario();
  std::vector<EpisodeRecord> recs;
  for (std::uint64_t s = 0; s < 20; ++s) recs.push_back(heuristic_episode(c, s));
  std::size_t expect = 0;
  for (const auto& r : recs)
    if (r.blue_won())
      for (const auto& st : r.steps)
        for (const auto& u : st.uavs) expect += u.id < 2;
  const DemoStore store = build_demo_store(recs);
  EXPECT_EQ(store.size(), expect);
  EXPECT_EQ(store.count(TransitionSource::DemoAgent), expect);

  // transition k of the first winner, blue 0
  const auto& win = *std::find_if(recs.begin(), recs.end(), [](const EpisodeRecord& r) { return r.blue_won(); });
  std::vector<ObservationFrame> frames;
  for (const auto& st : win.steps) frames.push_back(st.uavs[0].frame);
  frames.push_back(win.footer->final_frames.at(0));
  const std::size_t k = 2;
  const Transition& t = store.at(k);
  EXPECT_EQ(t.obs, stack(std::span(frames).first(k + 1)));
  EXPECT_EQ(t.next_obs, stack(std::span(frames).first(k + 2)));
  EXPECT_EQ(t.action, encode_action(win.steps[k].uavs[0].control, c.blue.spec));
  EXPECT_EQ(t.reward, *win.steps[k].uavs[0].reward);
  EXPECT_FALSE(t.terminal);
  const Transition& last = store.at(win.steps.size() - 1);
  EXPECT_EQ(last.terminal, win.footer->outcome.reason != Outcome::Reason::Timeout);

  DemoFilter all;
  all.winners_only = false;
  EXPECT_GT(build_demo_store(recs, all).size(), store.size());
  DemoFilter humans;
  humans.provenance = {"human"};
  EXPECT_THROW(build_demo_store(recs, humans), ConfigError);
}

TEST(Demos, OperatedUavsBecomeHumanDemonstrations) {
  const auto c = reduced_scenario();
  std::vector<EpisodeRecord> recs;
  for (std::uint64_t s = 0; s < 30; ++s) {
    RunOptions opt;
    opt.scheduled[0] = {AddWaypoint{0, c.zone.center}};
    recs.push_back(run_episode(c, s, default_bindings(c), PolicyRegistry{}, opt));
  }
  DemoFilter f;
  f.winners_only = false;
  const DemoStore store = build_demo_store(recs, f);
  EXPECT_GT(store.count(TransitionSource::DemoHuman), 0u);
  EXPECT_GT(store.count(TransitionSource::DemoAgent), 0u);
  std::size_t human_steps = 0;
  for (const auto& r : recs)
    for (const auto& st : r.steps)
      for (const auto& u : st.uavs) human_steps += u.id == 0;
  EXPECT_EQ(store.count(TransitionSource::DemoHuman), human_steps);
}

// ---- plots ----

TEST(Plot, RelativeTrajectoryOracle) {
  const auto c = reduced_scenario();
  std::optional<EpisodeRecord> rec;
  for (std::uint64_t s = 0; s < 50 && !rec; ++s) {
    auto r = heuristic_episode(c, s);
    if (r.footer->outcome.reason == Outcome::Reason::Neutralized) rec = r;
  }
  ASSERT_TRUE(rec);
  const auto tr = relative_trajectory(*rec);
  ASSERT_TRUE(tr);
  Neutralization hit;
  for (const auto& e : rec->steps.back().events)
    if (const auto* n = std::get_if<Neutralization>(&e)) hit = *n;
  EXPECT_EQ(tr->blue, hit.by);
  EXPECT_EQ(tr->red, hit.target);
  ASSERT_EQ(tr->red_path.size(), rec->steps.size() + 1);
  for (std::size_t k = 0; k < rec->steps.size(); ++k) {
    const auto& st = rec->steps[k].state;
    const Vec2 blue = st[tr->blue].pos;
    EXPECT_EQ(tr->red_path[k + 1], st[tr->red].pos - blue);
    EXPECT_EQ(tr->zone_path[k + 1], c.zone.center - blue);
  }
  // the last point is within EMP range of the origin
  EXPECT_LE(tr->red_path.back().norm(), c.blue.payload.radius);

  auto timeout = heuristic_episode(c, 0);
  timeout.steps.clear();
  EXPECT_FALSE(relative_trajectory(timeout));
}

TEST(Plot, TrajectorySvgStructure) {
  const auto c = reduced_scenario();
  std::vector<RelativeTrajectory> trs;
  for (std::uint64_t s = 0; trs.size() < 5 && s < 100; ++s)
    if (auto t = relative_trajectory(heuristic_episode(c, s))) trs.push_back(*t);
  ASSERT_EQ(trs.size(), 5u);
  const std::string svg = trajectories_svg(trs);
  const auto count = [&](const std::string& pat) {
    int n = 0;
    for (auto at = svg.find(pat); at != std::string::npos; at = svg.find(pat, at + 1)) ++n;
    return n;
  };
  EXPECT_EQ(count("id=\"origin\""), 1);
  EXPECT_EQ(count("class=\"red-trace\""), 5);
  EXPECT_EQ(count("class=\"zone-trace\""), 5);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  std::ostringstream csv;
  write_trajectories_csv(csv, trs);
  std::size_t points = 0;
  for (const auto& t : trs) points += t.red_path.size();
  EXPECT_EQ(count_lines(csv.str()), static_cast<int>(points) + 1);
}

TEST(Plot, MeanCurveCarriesStoppedSeedsForward) {
  const std::vector<EvalPoint> e{{1, 100, 0.2}, {1, 200, 0.9}, {2, 100, 0.4}, {2, 200, 0.5}, {2, 300, 0.7}};
  const auto m = mean_curve(e);
  ASSERT_EQ(m.size(), 3u);
  EXPECT_NEAR(m[0].mean, 0.3, 1e-12);
  EXPECT_NEAR(m[1].mean, 0.7, 1e-12);
  EXPECT_NEAR(m[2].mean, 0.8, 1e-12);  // seed 1 stopped at 0.9
  EXPECT_EQ(m[2].seeds, 2);
  EXPECT_EQ(m[2].min, 0.7);
  EXPECT_EQ(m[2].max, 0.9);
  const std::string svg = curves_svg({{"plain", e}}, 0.5);
  EXPECT_NE(svg.find("class=\"curve\""), std::string::npos);
  EXPECT_NE(svg.find("class=\"reference\""), std::string::npos);
}
