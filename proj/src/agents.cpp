#include "hmt/agents.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hmt {

namespace {

double steer(double heading, double desired, const UavSpec& spec, double dt) {
  const double err = wrap_pi(desired - heading);
  return std::clamp(err / dt, -spec.max_turn_rate, spec.max_turn_rate);
}

}  // namespace

ActorOutput waypoint_policy(const KinematicState& kin, const UavSpec& spec, WaypointQueue& queue,
                            double dt) {
  while (!queue.points.empty() && distance(kin.pos, queue.points.front()) <= queue.arrival_tolerance)
    queue.points.pop_front();
  if (queue.points.empty()) return ActorOutput::noop();

  const double desired = bearing(kin.pos, queue.points.front());
  const double err = wrap_pi(desired - kin.heading);
  ControlInput c;
  c.d_heading = steer(kin.heading, desired, spec, dt);
  c.d_speed = std::abs(err) < kPi / 2.0 ? spec.max_accel : -spec.max_accel;
  return ActorOutput::of(c);
}

ActorOutput heuristic_blue_policy(std::span<const EntitySnapshot> perceived, const Uav& self,
                                  const Zone& zone, const PatrolSlot& slot, double dt) {
  const EntitySnapshot* target = nullptr;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& e : perceived) {
    if (e.team != Team::Red || e.status != UavStatus::Active) continue;
    const double d = distance(self.kin.pos, e.pos);
    if (d < best) {
      best = d;
      target = &e;
    }
  }

  ControlInput c;
  if (target) {
    c.d_heading = steer(self.kin.heading, bearing(self.kin.pos, target->pos), self.spec, dt);
    c.d_speed = self.spec.max_accel;
    return ActorOutput::of(c);
  }

  // Orbit: chase a point a little ahead of this UAV's slot on the circle.
  constexpr double kLead = 0.35;
  const double omega = slot.radius > 0.0 ? slot.speed / slot.radius : 0.0;
  const double slot_angle = slot.phase + kTwoPi * slot.index / std::max(1, slot.count) +
                            omega * slot.time;
  const Vec2 aim = zone.center + unit(slot_angle + kLead) * slot.radius;
  c.d_heading = steer(self.kin.heading, bearing(self.kin.pos, aim), self.spec, dt);
  const double gap = distance(self.kin.pos, aim);
  const double cruise = gap > slot.radius ? self.spec.max_speed : slot.speed;
  c.d_speed = std::clamp((cruise - self.kin.speed) / dt, -self.spec.max_accel, self.spec.max_accel);
  return ActorOutput::of(c);
}

ActorOutput scripted_red_policy(const Uav& self, const Zone& zone, double noise_sigma, double dt,
                                Rng& rng) {
  const double noise = noise_sigma * rng.normal();
  const double desired = bearing(self.kin.pos, zone.center) + noise;
  ControlInput c;
  c.d_heading = steer(self.kin.heading, desired, self.spec, dt);
  c.d_speed = self.spec.max_accel;
  return ActorOutput::of(c);
}

ControlInput resolve_control(std::span<const ActorOutput> outputs) {
  for (const auto& o : outputs)
    if (!o.is_noop()) return *o.control;
  return {};
}

EntityId command_target(const OperatorCommand& cmd) {
  return std::visit([](const auto& c) { return c.uav_id; }, cmd);
}

const char* to_string(CommandError e) {
  switch (e) {
    case CommandError::UnknownUav: return "unknown_uav";
    case CommandError::Unauthorized: return "unauthorized";
    case CommandError::IndexOutOfRange: return "index_out_of_range";
  }
  return "unknown";
}

std::optional<CommandError> check_operator_command(const WorldState& world,
                                                   const WaypointQueues& queues,
                                                   const OperatorCommand& cmd) {
  const EntityId id = command_target(cmd);
  if (id >= world.uavs.size()) return CommandError::UnknownUav;
  if (world.uavs[id].team != Team::Blue) return CommandError::Unauthorized;
  if (const auto* rm = std::get_if<RemoveWaypoint>(&cmd)) {
    auto it = queues.find(id);
    const std::size_t n = it == queues.end() ? 0 : it->second.points.size();
    if (rm->index >= n) return CommandError::IndexOutOfRange;
  }
  return std::nullopt;
}

std::optional<CommandError> apply_operator_command(const WorldState& world, WaypointQueues& queues,
                                                   const OperatorCommand& cmd) {
  if (auto err = check_operator_command(world, queues, cmd)) return err;
  const EntityId id = command_target(cmd);
  auto [it, inserted] = queues.try_emplace(id);
  if (inserted && world.config) it->second.arrival_tolerance = world.config->agents.arrival_tolerance;
  auto& q = it->second.points;
  std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, AddWaypoint>) {
          q.push_back(c.pos);
        } else if constexpr (std::is_same_v<T, RemoveWaypoint>) {
          q.erase(q.begin() + static_cast<std::ptrdiff_t>(c.index));
        } else {
          q.clear();
        }
      },
      cmd);
  return std::nullopt;
}

ActorOutput WaypointActor::act(ActorContext& ctx) {
  const Uav& u = ctx.world.uav(ctx.uav);
  return waypoint_policy(u.kin, u.spec, ctx.waypoints, ctx.world.config->dt);
}

ActorOutput HeuristicBlueActor::act(ActorContext& ctx) {
  const auto& w = ctx.world;
  const auto& cfg = *w.config;
  const Uav& self = w.uav(ctx.uav);
  const auto perceived = perceived_entities(w, ctx.uav, cfg.blue.observability);
  PatrolSlot slot;
  slot.index = w.team_index(ctx.uav);
  slot.count = w.team_count(Team::Blue);
  slot.radius = cfg.agents.patrol_radius;
  slot.phase = cfg.agents.patrol_phase;
  slot.speed = cfg.agents.patrol_speed;
  slot.time = w.t * cfg.dt;
  return heuristic_blue_policy(perceived, self, w.zone, slot, cfg.dt);
}

ActorOutput ScriptedRedActor::act(ActorContext& ctx) {
  const auto& w = ctx.world;
  return scripted_red_policy(w.uav(ctx.uav), w.zone, w.config->agents.red_heading_noise,
                             w.config->dt, rng_);
}

ResolvedControl ControlStack::resolve(ActorContext& ctx) {
  ResolvedControl r;
  for (std::size_t i = 0; i < actors_.size(); ++i) {
    ActorOutput out = actors_[i]->act(ctx);
    if (!r.driver && !out.is_noop()) {
      r.driver = i;
      r.control = *out.control;
      r.action = out.action;
    }
  }
  return r;
}

}  // namespace hmt
