#include "hmt/learner/train.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hmt/parallel.hpp"

namespace hmt {

TrainConfig TrainConfig::for_variant(Variant v) {
  TrainConfig cfg;
  cfg.variant = v;
  cfg.demo_ratio = v == Variant::Plain ? 0.0 : 0.25;
  return cfg;
}

TrainConfig TrainConfig::desk_scale(Variant v) {
  TrainConfig cfg = for_variant(v);
  cfg.gamma = 0.95;
  cfg.lr = 1e-2;
  cfg.hidden = {64, 64};
  cfg.eps_decay_episodes = 500;
  cfg.target_sync_steps = 500;
  return cfg;
}

std::vector<FieldError> validate(const TrainConfig& c) {
  std::vector<FieldError> out;
  auto check = [&](bool ok, const char* field, const char* msg) {
    if (!ok) out.push_back({field, msg});
  };
  check(c.gamma >= 0.0 && c.gamma <= 1.0, "gamma", "must be in [0, 1]");
  check(c.lr > 0.0 && std::isfinite(c.lr), "lr", "must be > 0");
  check(c.momentum >= 0.0 && c.momentum < 1.0, "momentum", "must be in [0, 1)");
  check(c.batch_size >= 1, "batch_size", "must be >= 1");
  check(c.demo_ratio >= 0.0 && c.demo_ratio <= 1.0, "demo_ratio", "must be in [0, 1]");
  check(c.variant != Variant::Plain || c.demo_ratio == 0.0, "demo_ratio", "must be 0 for plain");
  check(c.eps_start >= 0.0 && c.eps_start <= 1.0, "eps_start", "must be in [0, 1]");
  check(c.eps_end >= 0.0 && c.eps_end <= 1.0, "eps_end", "must be in [0, 1]");
  check(c.eps_decay_episodes >= 0, "eps_decay_episodes", "must be >= 0");
  check(c.target_sync_steps >= 1, "target_sync_steps", "must be >= 1");
  check(c.max_episodes >= 1, "max_episodes", "must be >= 1");
  check(c.eval_every_episodes >= 1, "eval_every_episodes", "must be >= 1");
  check(c.eval_episodes >= 1, "eval_episodes", "must be >= 1");
  check(c.replay_capacity >= c.batch_size, "replay_capacity", "must hold at least one batch");
  check(!c.seeds.empty(), "seeds", "must not be empty");
  check(!c.stop_at_success || (*c.stop_at_success >= 0.0 && *c.stop_at_success <= 1.0),
        "stop_at_success", "must be in [0, 1]");
  check(std::all_of(c.hidden.begin(), c.hidden.end(), [](int h) { return h > 0; }), "hidden",
        "widths must be > 0");
  return out;
}

double epsilon_at(const TrainConfig& cfg, int episode) {
  if (cfg.eps_decay_episodes <= 0 || episode >= cfg.eps_decay_episodes) return cfg.eps_end;
  const double frac = static_cast<double>(episode) / cfg.eps_decay_episodes;
  return cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac;
}

ActorOutput PolicyActor::act(ActorContext& ctx) {
  const auto& w = ctx.world;
  history_.push(encode_frame(w, ctx.uav, w.config->blue.observability));
  const StackedObservation obs = history_.stacked();
  const int a = greedy_action(net_->q_values(obs));
  return {decode_action(a, w.uav(ctx.uav).spec), a};
}

BlueActorFactory heuristic_factory() {
  return [](EntityId) { return std::make_unique<HeuristicBlueActor>(); };
}

BlueActorFactory policy_factory(std::shared_ptr<const DuelingQNet> net) {
  return [net](EntityId) { return std::make_unique<PolicyActor>(net); };
}

Rng red_actor_stream(std::uint64_t episode_seed, EntityId red) {
  return Rng::stream(episode_seed, "red/" + std::to_string(red));
}

Outcome play_episode(const EpisodeConfig& scenario, std::uint64_t seed,
                     const BlueActorFactory& blue) {
  WorldState world = init_world(scenario, seed);
  std::vector<std::unique_ptr<Actor>> actors;
  for (const auto& u : world.uavs) {
    if (u.team == Team::Blue)
      actors.push_back(blue(u.id));
    else
      actors.push_back(std::make_unique<ScriptedRedActor>(red_actor_stream(seed, u.id)));
  }
  WaypointQueue unused;
  while (!world.terminated()) {
    ControlMap controls;
    for (const auto& u : world.uavs) {
      if (!u.active()) continue;
      ActorContext ctx{world, u.id, unused};
      const ActorOutput out = actors[u.id]->act(ctx);
      if (out.control) controls[u.id] = *out.control;
    }
    step(world, controls);
  }
  return *world.outcome;
}

double evaluate(const BlueActorFactory& blue, const EpisodeConfig& scenario, int n,
                std::uint64_t seed, int parallelism) {
  if (n < 1) throw UsageError("evaluate: n must be >= 1");
  std::vector<char> won(static_cast<std::size_t>(n), 0);
  parallel_for(won.size(), parallelism, [&](std::size_t i) {
    won[i] = play_episode(scenario, derive_seed(seed, i), blue).winner == Team::Blue;
  });
  const auto wins = std::count(won.begin(), won.end(), 1);
  return static_cast<double>(wins) / n;
}

double evaluate(const DuelingQNet& net, const EpisodeConfig& scenario, int n, std::uint64_t seed,
                int parallelism) {
  // aliasing constructor: no ownership, the caller keeps net alive
  std::shared_ptr<const DuelingQNet> view(std::shared_ptr<const DuelingQNet>{}, &net);
  return evaluate(policy_factory(view), scenario, n, seed, parallelism);
}

const Checkpoint& TrainRun::best() const {
  if (checkpoints.empty()) throw UsageError("TrainRun::best: no checkpoints");
  const Checkpoint* best = &checkpoints.front();
  for (const auto& c : checkpoints)
    if (c.success_rate > best->success_rate) best = &c;
  return *best;
}

TrainRun train_seed(const TrainConfig& cfg, const EpisodeConfig& scenario, const DemoStore* demos,
                    std::uint64_t seed, const TrainHooks& hooks) {
  if (auto errors = validate(cfg); !errors.empty()) throw ConfigError(std::move(errors));
  if (auto errors = validate(scenario); !errors.empty()) throw ConfigError(std::move(errors));
  if (cfg.variant == Variant::Plain && demos)
    throw ConfigError(FieldError{"demos", "plain variant does not take demonstrations"});
  if (cfg.variant != Variant::Plain && !demos)
    throw ConfigError(FieldError{"demos", std::string(to_string(cfg.variant)) + " variant needs demonstrations"});

  Rng init_rng = Rng::stream(seed, "learner-init");
  Rng explore_rng = Rng::stream(seed, "learner-exploration");
  Rng sample_rng = Rng::stream(seed, "learner-replay");
  const std::uint64_t episode_base = mix64(seed ^ fnv1a("train-episodes"));
  const std::uint64_t eval_base = mix64(seed ^ fnv1a("eval-episodes"));

  QNetLayout layout;
  layout.input = observation_length(scenario);
  layout.hidden = cfg.hidden;
  TrainRun run;
  run.seed = seed;
  DuelingQNet online = DuelingQNet::random(layout, init_rng);
  DuelingQNet target = online;
  SgdMomentum optimizer(cfg.lr, cfg.momentum, cfg.grad_clip);
  ReplayBuffer replay(cfg.replay_capacity);

  std::vector<const Transition*> batch;
  for (int episode = 0; episode < cfg.max_episodes; ++episode) {
    const double eps = epsilon_at(cfg, episode);
    const std::uint64_t ep_seed = derive_seed(episode_base, static_cast<std::uint64_t>(episode));
    WorldState world = init_world(scenario, ep_seed);

    std::vector<EntityId> blues;
    std::vector<std::unique_ptr<Actor>> reds;
    std::vector<EntityId> red_ids;
    for (const auto& u : world.uavs) {
      if (u.team == Team::Blue) {
        blues.push_back(u.id);
      } else {
        red_ids.push_back(u.id);
        reds.push_back(std::make_unique<ScriptedRedActor>(red_actor_stream(ep_seed, u.id)));
      }
    }
    std::vector<FrameHistory> histories(blues.size());
    for (std::size_t i = 0; i < blues.size(); ++i)
      histories[i].push(encode_frame(world, blues[i], scenario.blue.observability));

    WaypointQueue unused;
    std::vector<StackedObservation> obs(blues.size());
    std::vector<int> actions(blues.size());
    while (!world.terminated()) {
      ControlMap controls;
      for (std::size_t i = 0; i < blues.size(); ++i) {
        obs[i] = histories[i].stacked();
        actions[i] = select_action(online, obs[i], eps, explore_rng);
        controls[blues[i]] = decode_action(actions[i], world.uav(blues[i]).spec);
      }
      for (std::size_t i = 0; i < reds.size(); ++i) {
        if (!world.uav(red_ids[i]).active()) continue;
        ActorContext ctx{world, red_ids[i], unused};
        const ActorOutput out = reds[i]->act(ctx);
        if (out.control) controls[red_ids[i]] = *out.control;
      }
      const WorldState before = world;
      const StepResult result = step(world, controls);
      const bool terminal = result.outcome && result.outcome->reason != Outcome::Reason::Timeout;
      for (std::size_t i = 0; i < blues.size(); ++i) {
        histories[i].push(encode_frame(world, blues[i], scenario.blue.observability));
        Transition t;
        t.obs = std::move(obs[i]);
        t.action = actions[i];
        t.reward = compute_reward(before, world, blues[i], result.outcome);
        t.next_obs = histories[i].stacked();
        t.terminal = terminal;
        replay.push(std::move(t));
      }
      ++run.env_steps;

      if (replay.size() >= cfg.warmup_transitions) {
        batch = sample_batch(replay, demos, cfg.variant, cfg.demo_ratio, cfg.batch_size, sample_rng);
        update_step(online, target, batch, cfg.gamma, optimizer);
        ++run.updates;
        if (run.updates % static_cast<std::size_t>(cfg.target_sync_steps) == 0) target = online;
      }
    }
    if (hooks.on_episode) hooks.on_episode(episode + 1, *world.outcome);

    if ((episode + 1) % cfg.eval_every_episodes == 0) {
      EvalPoint p{seed, episode + 1, evaluate(online, scenario, cfg.eval_episodes, eval_base)};
      run.evals.push_back(p);
      run.checkpoints.push_back({seed, p.episode, p.success_rate, online});
      if (hooks.on_eval) hooks.on_eval(p);
      if (cfg.stop_at_success && p.success_rate >= *cfg.stop_at_success) break;
    }
  }
  run.final_net = std::move(online);
  return run;
}

std::vector<TrainRun> train(const TrainConfig& cfg, const EpisodeConfig& scenario,
                            const DemoStore* demos, int parallelism, const TrainHooks& hooks) {
  std::vector<TrainRun> runs(cfg.seeds.size());
  parallel_for(runs.size(), parallelism, [&](std::size_t i) {
    runs[i] = train_seed(cfg, scenario, demos, cfg.seeds[i], hooks);
  });
  return runs;
}

double episodes_to_threshold(const std::vector<EvalPoint>& evals, double threshold, int censor) {
  for (const auto& p : evals)
    if (p.success_rate >= threshold) return p.episode;
  return censor;
}

}  // namespace hmt
