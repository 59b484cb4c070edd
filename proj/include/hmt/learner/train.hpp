#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hmt/agents.hpp"
#include "hmt/learner/dqn.hpp"
#include "hmt/learner/qnet.hpp"
#include "hmt/learner/replay.hpp"
#include "hmt/sim.hpp"

namespace hmt {

struct TrainConfig {
  double gamma = 0.99;
  double lr = 1e-4;
  double momentum = 0.9;
  double grad_clip = 10.0;
  std::size_t batch_size = 64;
  double demo_ratio = 0.0;
  double eps_start = 1.0;
  double eps_end = 0.05;
  int eps_decay_episodes = 2000;
  int target_sync_steps = 1000;
  int max_episodes = 5000;
  int eval_every_episodes = 100;
  int eval_episodes = 30;
  std::size_t warmup_transitions = 1000;
  std::size_t replay_capacity = 100'000;
  std::vector<int> hidden{128, 128};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  Variant variant = Variant::Plain;
  /// Stop a seed at the first evaluation reaching this success rate.
  std::optional<double> stop_at_success;

  /// Default demo ratio for a variant: 0 for Plain, 0.25 otherwise.
  static TrainConfig for_variant(Variant v);
  /// Hyperparameters that learn the reduced scenario in a few thousand
  /// episodes on one CPU core.
  static TrainConfig desk_scale(Variant v = Variant::Plain);
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

std::vector<FieldError> validate(const TrainConfig& cfg);

/// Linear decay from eps_start to eps_end over eps_decay_episodes.
double epsilon_at(const TrainConfig& cfg, int episode);

/// Greedy trained policy bound to one blue UAV; keeps its own frame history.
class PolicyActor final : public Actor {
 public:
  PolicyActor(std::shared_ptr<const DuelingQNet> net, std::string id = "policy")
      : net_(std::move(net)), id_(std::move(id)) {}
  std::string name() const override { return id_; }
  ActorOutput act(ActorContext& ctx) override;

 private:
  std::shared_ptr<const DuelingQNet> net_;
  std::string id_;
  FrameHistory history_;
};

/// Builds the actor that drives one blue UAV in an evaluation episode.
using BlueActorFactory = std::function<std::unique_ptr<Actor>(EntityId)>;

BlueActorFactory heuristic_factory();
BlueActorFactory policy_factory(std::shared_ptr<const DuelingQNet> net);

/// Seed of the scripted red actor controlling `red` in an episode.
Rng red_actor_stream(std::uint64_t episode_seed, EntityId red);

/// Plays one episode: the factory's actor on every blue UAV, scripted red.
Outcome play_episode(const EpisodeConfig& scenario, std::uint64_t seed,
                     const BlueActorFactory& blue);

/// Success rate over n episodes with seeds derive_seed(seed, i). No learning,
/// no exploration. Episodes may run in parallel; the result does not depend
/// on it.
double evaluate(const BlueActorFactory& blue, const EpisodeConfig& scenario, int n,
                std::uint64_t seed, int parallelism = 1);

double evaluate(const DuelingQNet& net, const EpisodeConfig& scenario, int n, std::uint64_t seed,
                int parallelism = 1);

struct EvalPoint {
  std::uint64_t seed = 0;
  int episode = 0;
  double success_rate = 0.0;
  friend bool operator==(const EvalPoint&, const EvalPoint&) = default;
};

struct Checkpoint {
  std::uint64_t seed = 0;
  int episode = 0;
  double success_rate = 0.0;
  DuelingQNet net;
};

struct TrainRun {
  std::uint64_t seed = 0;
  std::vector<EvalPoint> evals;
  std::vector<Checkpoint> checkpoints;
  DuelingQNet final_net;
  std::size_t updates = 0;
  std::size_t env_steps = 0;

  const Checkpoint& best() const;
};

struct TrainHooks {
  std::function<void(const EvalPoint&)> on_eval;
  /// Called once per finished training episode with its outcome.
  std::function<void(int episode, const Outcome&)> on_episode;
};

/// Trains one parameter-shared network for every blue UAV with a single seed.
TrainRun train_seed(const TrainConfig& cfg, const EpisodeConfig& scenario, const DemoStore* demos,
                    std::uint64_t seed, const TrainHooks& hooks = {});

/// Runs every seed in cfg.seeds, up to `parallelism` at a time. Runs are
/// returned in seed order.
std::vector<TrainRun> train(const TrainConfig& cfg, const EpisodeConfig& scenario,
                            const DemoStore* demos, int parallelism = 1,
                            const TrainHooks& hooks = {});

/// Training episode of the first evaluation with success_rate >= threshold, or
/// `censor` when none reaches it.
double episodes_to_threshold(const std::vector<EvalPoint>& evals, double threshold, int censor);

}  // namespace hmt
