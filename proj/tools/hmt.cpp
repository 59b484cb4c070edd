// hmt: training, evaluation, serving, replay, demos, statistics and plots.
//
// Exit codes: 0 ok, 1 operational failure, 2 usage error.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "hmt/io.hpp"
#include "hmt/learner/train.hpp"
#include "hmt/orchestrator.hpp"
#include "hmt/parallel.hpp"
#include "hmt/plot.hpp"
#include "hmt/rng.hpp"
#include "hmt/service.hpp"
#include "hmt/stats.hpp"

namespace fs = std::filesystem;
using namespace hmt;

namespace {

constexpr int kUsage = 2;
constexpr int kFailure = 1;

struct BadUsage : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void print_config_error(const ConfigError& e) {
  std::cerr << "error: " << e.what() << '\n';
  for (const auto& f : e.fields()) std::cerr << "  " << f.field << ": " << f.message << '\n';
}

// "id=path" pairs; a bare path registers under its own string.
std::shared_ptr<PolicyRegistry> load_policies(const std::vector<std::string>& specs) {
  auto reg = std::make_shared<PolicyRegistry>();
  for (const auto& s : specs) {
    const auto eq = s.find('=');
    const std::string id = eq == std::string::npos ? s : s.substr(0, eq);
    const std::string path = eq == std::string::npos ? s : s.substr(eq + 1);
    reg->add(id, std::make_shared<const DuelingQNet>(load_checkpoint(path).net));
  }
  return reg;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path, text);
}

// ---- train ----

struct TrainArgs {
  std::string variant = "plain";
  std::string scenario = "reduced";
  std::string config;
  std::string preset = "desk";
  std::string demos;
  std::vector<std::uint64_t> seeds;
  int episodes = 0;
  double stop_at = -1.0;
  std::string out = "runs/train";
  int jobs = 1;
};

int run_train(const TrainArgs& a) {
  const Variant variant = parse_variant(a.variant);
  TrainConfig cfg;
  if (a.preset == "desk") cfg = TrainConfig::desk_scale(variant);
  else if (a.preset == "reference") cfg = TrainConfig::for_variant(variant);
  else throw BadUsage("--preset must be desk or reference");
  if (!a.config.empty()) cfg = train_config_from_json(read_json_file(a.config), cfg);
  cfg.variant = variant;
  if (!a.seeds.empty()) cfg.seeds = a.seeds;
  if (a.episodes > 0) cfg.max_episodes = a.episodes;
  if (a.stop_at >= 0) cfg.stop_at_success = a.stop_at;
  if (auto errs = validate(cfg); !errs.empty()) throw ConfigError(errs);
  const EpisodeConfig scenario = load_scenario(a.scenario);

  std::optional<DemoStore> demos;
  if (variant != Variant::Plain) {
    if (a.demos.empty()) throw BadUsage("--demos is required for the ph and mh variants");
    demos = build_demo_store(Datastore(a.demos).read_complete());
    std::cout << "demos: " << demos->count(TransitionSource::DemoAgent) << " agent, "
              << demos->count(TransitionSource::DemoHuman) << " human\n";
  }

  const fs::path out(a.out);
  fs::create_directories(out);
  write_text(out / "config.json", Json{{"train", to_json(cfg)}, {"scenario", to_json(scenario)}}.dump(2) + "\n");

  std::mutex mu;
  TrainHooks hooks;
  hooks.on_eval = [&](const EvalPoint& p) {
    std::lock_guard lock(mu);
    std::cout << "seed " << p.seed << " episode " << p.episode << " success " << p.success_rate << std::endl;
  };
  const auto runs = train(cfg, scenario, demos ? &*demos : nullptr, a.jobs, hooks);

  std::vector<EvalPoint> all;
  for (const auto& r : runs) {
    const fs::path dir = out / ("seed-" + std::to_string(r.seed));
    fs::create_directories(dir);
    const Checkpoint& best = r.best();
    save_checkpoint(dir / "best.json", best);
    save_checkpoint(dir / "final.json", Checkpoint{r.seed, r.evals.empty() ? 0 : r.evals.back().episode,
                                                    r.evals.empty() ? 0.0 : r.evals.back().success_rate,
                                                    r.final_net});
    all.insert(all.end(), r.evals.begin(), r.evals.end());
    std::cout << "seed " << r.seed << ": best " << best.success_rate << " at episode " << best.episode << '\n';
  }
  std::ostringstream csv;
  write_eval_csv(csv, all);
  write_text(out / "evals.csv", csv.str());
  return 0;
}

// ---- eval ----

struct EvalArgs {
  std::string policy = "heuristic";
  std::string scenario = "default";
  int n = 500;
  std::uint64_t seed = 0;
  std::string record;
  std::string csv;
  int jobs = 1;
};

int run_eval(const EvalArgs& a) {
  if (a.n <= 0) throw BadUsage("-n must be positive");
  const EpisodeConfig scenario = load_scenario(a.scenario);
  std::vector<Outcome> outcomes(static_cast<std::size_t>(a.n));

  if (!a.record.empty()) {
    PolicyRegistry reg;
    std::string blue = "heuristic_blue";
    if (a.policy != "heuristic") {
      // keyed by path so `replay` can find the checkpoint again
      reg.add(a.policy, std::make_shared<const DuelingQNet>(load_checkpoint(a.policy).net));
      blue = "policy:" + a.policy;
    }
    const auto batch = run_batch(scenario, default_bindings(scenario, blue), reg, a.n, a.jobs, a.seed);
    if (!batch.errors.empty()) {
      for (const auto& [i, msg] : batch.errors) std::cerr << "episode " << i << ": " << msg << '\n';
      return kFailure;
    }
    Datastore store(a.record);
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      outcomes[i] = batch.records[i]->footer->outcome;
      store.write(*batch.records[i]);
    }
  } else {
    BlueActorFactory blue = heuristic_factory();
    if (a.policy != "heuristic")
      blue = policy_factory(std::make_shared<const DuelingQNet>(load_checkpoint(a.policy).net));
    parallel_for(outcomes.size(), a.jobs,
                 [&](std::size_t i) { outcomes[i] = play_episode(scenario, derive_seed(a.seed, i), blue); });
  }

  int wins = 0;
  for (const auto& o : outcomes) wins += o.winner == Team::Blue;
  const double rate = static_cast<double>(wins) / a.n;
  std::cout << "success_rate " << rate << " (" << wins << "/" << a.n << ")\n";
  if (!a.csv.empty()) {
    std::ostringstream s;
    s << "episode,seed,winner,reason\n";
    for (std::size_t i = 0; i < outcomes.size(); ++i)
      s << i << ',' << derive_seed(a.seed, i) << ',' << to_string(outcomes[i].winner) << ','
        << to_string(outcomes[i].reason) << '\n';
    write_text(a.csv, s.str());
  }
  return 0;
}

// ---- serve ----

struct ServeArgs {
  std::string host = "127.0.0.1";
  unsigned short port = 8080;
  std::string store = "runs/episodes";
  std::string static_dir;
  std::vector<std::string> policies;
  double steps_per_second = 10.0;
};

int run_serve(const ServeArgs& a) {
  sigset_t sigs;
  sigemptyset(&sigs);
  sigaddset(&sigs, SIGINT);
  sigaddset(&sigs, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &sigs, nullptr);  // inherited by every server thread

  Datastore store(a.store);
  SessionOptions defaults;
  defaults.steps_per_second = a.steps_per_second;
  SessionManager sessions(&store, load_policies(a.policies), defaults);
  Server server(sessions, a.host, a.port, a.static_dir);
  server.start();
  std::cout << "listening on http://" << a.host << ':' << server.port() << std::endl;
  int sig = 0;
  sigwait(&sigs, &sig);
  std::cout << "shutting down\n";
  server.stop();
  return 0;
}

// ---- replay ----

int run_replay(const std::string& file, const std::vector<std::string>& policies) {
  const EpisodeRecord rec = read_episode_file(file);
  const auto reg = load_policies(policies);
  try {
    replay_episode(rec, *reg);
  } catch (const IntegrityError& e) {
    std::cout << "mismatch at step " << e.step() << ": " << e.what() << '\n';
    return kFailure;
  } catch (const IncompatibleRecord& e) {
    std::cout << "incompatible: " << e.what() << '\n';
    return kFailure;
  }
  std::cout << "ok: " << rec.steps.size() << " steps reproduced\n";
  return 0;
}

// ---- demos ----

int run_demos_build(const std::string& store_dir, const std::vector<std::string>& provenance, bool all) {
  DemoFilter filter;
  if (!provenance.empty()) filter.provenance = {provenance.begin(), provenance.end()};
  filter.winners_only = !all;
  const auto records = Datastore(store_dir).read_complete();
  const DemoStore demos = build_demo_store(records, filter);
  const Json summary{{"episodes", records.size()},
                     {"transitions", demos.size()},
                     {"agent", demos.count(TransitionSource::DemoAgent)},
                     {"human", demos.count(TransitionSource::DemoHuman)}};
  std::cout << summary.dump() << '\n';
  return 0;
}

// ---- stats ----

std::vector<EvalPoint> read_evals(const std::string& run) {
  fs::path p(run);
  if (fs::is_directory(p)) p /= "evals.csv";
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  return read_eval_csv(in);
}

// One value per seed.
std::vector<double> per_seed(const std::vector<EvalPoint>& evals, const std::string& metric, double threshold,
                             int censor) {
  std::map<std::uint64_t, std::vector<EvalPoint>> by_seed;
  for (const auto& p : evals) by_seed[p.seed].push_back(p);
  std::vector<double> out;
  for (const auto& [seed, pts] : by_seed) {
    if (metric == "episodes-to-threshold") {
      out.push_back(episodes_to_threshold(pts, threshold, censor));
    } else {
      double best = 0.0;
      for (const auto& p : pts) best = std::max(best, p.success_rate);
      out.push_back(best);
    }
  }
  return out;
}

int run_stats(const std::string& a, const std::string& b, const std::string& metric, double threshold, int censor) {
  if (metric != "episodes-to-threshold" && metric != "best") throw BadUsage("--metric: episodes-to-threshold or best");
  const auto va = per_seed(read_evals(a), metric, threshold, censor);
  const auto vb = per_seed(read_evals(b), metric, threshold, censor);
  const Comparison c = compare_runs(va, vb);
  const Json out{{"metric", metric}, {"n_a", va.size()}, {"n_b", vb.size()}, {"mean_a", c.mean_a},
                 {"mean_b", c.mean_b}, {"t", c.t},        {"df", c.df},         {"p", c.p},
                 {"cohens_d", c.cohens_d}};
  std::cout << out.dump(2) << '\n';
  return 0;
}

// ---- plot ----

int run_plot_curves(const std::vector<std::string>& runs, const std::string& out, double reference) {
  std::vector<CurveSeries> series;
  for (const auto& r : runs) {
    const auto eq = r.find('=');
    const std::string label = eq == std::string::npos ? fs::path(r).filename().string() : r.substr(0, eq);
    series.push_back({label, read_evals(eq == std::string::npos ? r : r.substr(eq + 1))});
  }
  std::ostringstream csv;
  write_curves_csv(csv, series);
  write_text(out + ".csv", csv.str());
  write_text(out + ".svg", curves_svg(series, reference >= 0 ? std::optional(reference) : std::nullopt));
  std::cout << "wrote " << out << ".svg and " << out << ".csv\n";
  return 0;
}

int run_plot_trajectories(const std::string& store_dir, int episodes, const std::string& out) {
  std::vector<RelativeTrajectory> trs;
  for (const auto& rec : Datastore(store_dir).read_complete()) {
    if (static_cast<int>(trs.size()) >= episodes) break;
    if (!rec.blue_won()) continue;
    if (auto t = relative_trajectory(rec)) trs.push_back(std::move(*t));
  }
  if (trs.empty()) throw std::runtime_error("no winning episode with a neutralization in " + store_dir);
  if (static_cast<int>(trs.size()) < episodes)
    std::cerr << "warning: only " << trs.size() << " winning episodes available\n";
  std::ostringstream csv;
  write_trajectories_csv(csv, trs);
  write_text(out + ".csv", csv.str());
  write_text(out + ".svg", trajectories_svg(trs));
  std::cout << "wrote " << trs.size() << " episodes to " << out << ".svg and " << out << ".csv\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Human-machine teaming UAV simulator and learner"};
  app.require_subcommand(1);
  std::function<int()> action;

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train D3QN on one or more seeds");
  train_cmd->add_option("--variant", ta.variant, "plain | ph | mh")->check(CLI::IsMember({"plain", "ph", "mh"}));
  train_cmd->add_option("--scenario", ta.scenario, "default | reduced | scenario JSON file");
  train_cmd->add_option("--config", ta.config, "JSON overlay for the training config");
  train_cmd->add_option("--preset", ta.preset, "desk | reference")->check(CLI::IsMember({"desk", "reference"}));
  train_cmd->add_option("--demos", ta.demos, "episode store to build demonstrations from");
  train_cmd->add_option("--seeds", ta.seeds, "training seeds")->delimiter(',');
  train_cmd->add_option("--episodes", ta.episodes, "maximum training episodes per seed");
  train_cmd->add_option("--stop-at", ta.stop_at, "stop a seed once evaluation reaches this success rate");
  train_cmd->add_option("--out", ta.out, "output directory");
  train_cmd->add_option("-j,--jobs", ta.jobs, "seeds trained in parallel");
  train_cmd->callback([&] { action = [&] { return run_train(ta); }; });

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Success rate of a policy");
  eval_cmd->add_option("--policy", ea.policy, "heuristic or a checkpoint file");
  eval_cmd->add_option("--scenario", ea.scenario, "default | reduced | scenario JSON file");
  eval_cmd->add_option("-n", ea.n, "episodes");
  eval_cmd->add_option("--seed", ea.seed, "base seed");
  eval_cmd->add_option("--record", ea.record, "write episode records to this store");
  eval_cmd->add_option("--csv", ea.csv, "per-episode outcomes");
  eval_cmd->add_option("-j,--jobs", ea.jobs, "parallel episodes");
  eval_cmd->callback([&] { action = [&] { return run_eval(ea); }; });

  ServeArgs sa;
  auto* serve_cmd = app.add_subcommand("serve", "HTTP and WebSocket session service");
  serve_cmd->add_option("--host", sa.host);
  serve_cmd->add_option("--port", sa.port, "0 picks a free port");
  serve_cmd->add_option("--store", sa.store, "episode store for finished sessions");
  serve_cmd->add_option("--static", sa.static_dir, "operator UI assets");
  serve_cmd->add_option("--policy", sa.policies, "id=checkpoint, repeatable");
  serve_cmd->add_option("--steps-per-second", sa.steps_per_second);
  serve_cmd->callback([&] { action = [&] { return run_serve(sa); }; });

  std::string replay_file;
  std::vector<std::string> replay_policies;
  auto* replay_cmd = app.add_subcommand("replay", "Re-simulate an episode record and check it");
  replay_cmd->add_option("file", replay_file)->required();
  replay_cmd->add_option("--policy", replay_policies, "id=checkpoint, repeatable");
  replay_cmd->callback([&] { action = [&] { return run_replay(replay_file, replay_policies); }; });

  std::string demo_store;
  std::vector<std::string> demo_prov;
  bool demo_all = false;
  auto* demos_cmd = app.add_subcommand("demos", "Demonstration stores");
  demos_cmd->require_subcommand(1);
  auto* demos_build = demos_cmd->add_subcommand("build", "Summarize the demonstrations in an episode store");
  demos_build->add_option("--store", demo_store)->required();
  demos_build->add_option("--provenance", demo_prov, "human | policy | heuristic")->delimiter(',');
  demos_build->add_flag("--all", demo_all, "keep losing episodes too");
  demos_build->callback([&] { action = [&] { return run_demos_build(demo_store, demo_prov, demo_all); }; });

  std::string run_a, run_b, metric = "episodes-to-threshold";
  double threshold = 0.8;
  int censor = 5000;
  auto* stats_cmd = app.add_subcommand("stats", "Statistics over training runs");
  stats_cmd->require_subcommand(1);
  auto* compare = stats_cmd->add_subcommand("compare", "Welch t-test and Cohen's d between two runs");
  compare->add_option("run_a", run_a, "train output directory or evals.csv")->required();
  compare->add_option("run_b", run_b)->required();
  compare->add_option("--metric", metric, "episodes-to-threshold | best");
  compare->add_option("--threshold", threshold);
  compare->add_option("--censor", censor, "value for seeds that never reach the threshold");
  compare->callback([&] { action = [&] { return run_stats(run_a, run_b, metric, threshold, censor); }; });

  std::vector<std::string> curve_runs;
  std::string plot_out = "plot";
  double reference = -1.0;
  std::string traj_store;
  int traj_episodes = 5;
  auto* plot_cmd = app.add_subcommand("plot", "SVG and CSV figures");
  plot_cmd->require_subcommand(1);
  auto* curves = plot_cmd->add_subcommand("curves", "Success rate vs episodes, mean over seeds");
  curves->add_option("runs", curve_runs, "label=dir or dir")->required();
  curves->add_option("--out", plot_out, "output path without extension");
  curves->add_option("--reference", reference, "horizontal reference line, e.g. the heuristic rate");
  curves->callback([&] { action = [&] { return run_plot_curves(curve_runs, plot_out, reference); }; });
  auto* traj = plot_cmd->add_subcommand("trajectories", "Red and zone relative to the neutralizing blue");
  traj->add_option("--store", traj_store)->required();
  traj->add_option("--episodes", traj_episodes);
  traj->add_option("--out", plot_out, "output path without extension");
  traj->callback([&] { action = [&] { return run_plot_trajectories(traj_store, traj_episodes, plot_out); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    return action();
  } catch (const BadUsage& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigError& e) {
    print_config_error(e);
    return kFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}
