#pragma once

// Actors that drive UAVs and the priority stacks that combine them.
//
// A ControlStack holds actors in priority order (index 0 first). Each step
// every actor is asked for an output; the first one that does not yield
// (NoOp) drives the UAV. Operator takeover is a waypoint actor placed above
// the autonomous policy: it yields whenever its queue is empty.

#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "hmt/sim.hpp"

namespace hmt {

struct ActorOutput {
  std::optional<ControlInput> control;  // empty == NoOp
  std::optional<int> action;            // discrete action index, when the actor has one

  static ActorOutput noop() { return {}; }
  static ActorOutput of(ControlInput c) { return {c, std::nullopt}; }
  bool is_noop() const noexcept { return !control.has_value(); }
  friend bool operator==(const ActorOutput&, const ActorOutput&) = default;
};

struct WaypointQueue {
  std::deque<Vec2> points;
  double arrival_tolerance = 30.0;
  friend bool operator==(const WaypointQueue&, const WaypointQueue&) = default;
};

using WaypointQueues = std::map<EntityId, WaypointQueue>;

/// Path following: pops reached waypoints, then steers at the head.
ActorOutput waypoint_policy(const KinematicState& kin, const UavSpec& spec, WaypointQueue& queue,
                            double dt);

struct PatrolSlot {
  int index = 0;          // blue index within the team
  int count = 1;          // number of blue UAVs
  double radius = 300.0;  // orbit radius around the zone center
  double phase = 0.0;     // angle of slot 0
  double speed = 15.0;    // orbit speed
  double time = 0.0;      // elapsed simulated seconds
};

/// Pure pursuit of the nearest perceived red, otherwise orbit patrol.
ActorOutput heuristic_blue_policy(std::span<const EntitySnapshot> perceived, const Uav& self,
                                  const Zone& zone, const PatrolSlot& slot, double dt);

/// Full speed toward the zone center with Gaussian heading noise.
ActorOutput scripted_red_policy(const Uav& self, const Zone& zone, double noise_sigma, double dt,
                                Rng& rng);

/// First non-NoOp control; zero input when every actor yields.
ControlInput resolve_control(std::span<const ActorOutput> outputs);

struct AddWaypoint {
  EntityId uav_id = 0;
  Vec2 pos;
  friend bool operator==(const AddWaypoint&, const AddWaypoint&) = default;
};
struct RemoveWaypoint {
  EntityId uav_id = 0;
  std::size_t index = 0;
  friend bool operator==(const RemoveWaypoint&, const RemoveWaypoint&) = default;
};
struct ClearWaypoints {
  EntityId uav_id = 0;
  friend bool operator==(const ClearWaypoints&, const ClearWaypoints&) = default;
};

using OperatorCommand = std::variant<AddWaypoint, RemoveWaypoint, ClearWaypoints>;

EntityId command_target(const OperatorCommand& cmd);

enum class CommandError : std::uint8_t { UnknownUav, Unauthorized, IndexOutOfRange };

const char* to_string(CommandError e);

/// Applies an operator command for the blue team. On error the queues are
/// left untouched.
std::optional<CommandError> apply_operator_command(const WorldState& world, WaypointQueues& queues,
                                                   const OperatorCommand& cmd);

/// Checks a command without applying it.
std::optional<CommandError> check_operator_command(const WorldState& world,
                                                   const WaypointQueues& queues,
                                                   const OperatorCommand& cmd);

struct ActorContext {
  const WorldState& world;
  EntityId uav;
  WaypointQueue& waypoints;
};

class Actor {
 public:
  virtual ~Actor() = default;
  virtual std::string name() const = 0;
  virtual ActorOutput act(ActorContext& ctx) = 0;
};

class WaypointActor final : public Actor {
 public:
  std::string name() const override { return "waypoint"; }
  ActorOutput act(ActorContext& ctx) override;
};

class HeuristicBlueActor final : public Actor {
 public:
  std::string name() const override { return "heuristic_blue"; }
  ActorOutput act(ActorContext& ctx) override;
};

class ScriptedRedActor final : public Actor {
 public:
  explicit ScriptedRedActor(Rng rng) : rng_(rng) {}
  std::string name() const override { return "scripted_red"; }
  ActorOutput act(ActorContext& ctx) override;

 private:
  Rng rng_;
};

struct ResolvedControl {
  ControlInput control;
  std::optional<std::size_t> driver;  // stack index of the actor that drove the UAV
  std::optional<int> action;
};

class ControlStack {
 public:
  ControlStack() = default;
  ControlStack(EntityId uav, std::vector<std::unique_ptr<Actor>> actors)
      : uav_(uav), actors_(std::move(actors)) {}

  EntityId uav() const noexcept { return uav_; }
  std::size_t size() const noexcept { return actors_.size(); }
  const Actor& actor(std::size_t i) const { return *actors_.at(i); }

  /// Queries every actor (so stateful actors observe every step) and
  /// resolves by priority.
  ResolvedControl resolve(ActorContext& ctx);

 private:
  EntityId uav_ = 0;
  std::vector<std::unique_ptr<Actor>> actors_;
};

}  // namespace hmt
