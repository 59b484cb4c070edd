#include "hmt/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace hmt {

int frame_length(const EpisodeConfig& c) { return 2 * (c.blue.count - 1) + 2 * c.red.count + 2 + 3; }

ObservationFrame encode_frame(const WorldState& w, EntityId agent, ObservabilityMode mode) {
  const Uav& self = w.uav(agent);
  const double scale = 1.0 / w.config->half_extent();
  ObservationFrame f;
  f.reserve(static_cast<std::size_t>(frame_length(*w.config)));

  const auto perceived = perceived_entities(w, agent, mode);
  auto is_perceived = [&](EntityId id) {
    return std::any_of(perceived.begin(), perceived.end(),
                       [&](const EntitySnapshot& e) { return e.id == id; });
  };
  auto push_rel = [&](Vec2 p) {
    const Vec2 r = (p - self.kin.pos) * scale;
    f.push_back(r.x);
    f.push_back(r.y);
  };

  for (const auto& u : w.uavs)
    if (u.team == self.team && u.id != agent) push_rel(u.kin.pos);
  for (const auto& u : w.uavs) {
    if (u.team == self.team) continue;
    if (u.active() && is_perceived(u.id)) {
      push_rel(u.kin.pos);
    } else {
      f.push_back(0.0);
      f.push_back(0.0);
    }
  }
  push_rel(w.zone.center);
  f.push_back(std::cos(self.kin.heading));
  f.push_back(std::sin(self.kin.heading));
  f.push_back(self.kin.speed / self.spec.max_speed);
  return f;
}

StackedObservation stack(std::span<const ObservationFrame> history) {
  if (history.empty()) throw UsageError("stack: empty frame history");
  const std::size_t n = history.size();
  StackedObservation out;
  out.reserve(kStackDepth * history.back().size());
  for (int k = kStackDepth - 1; k >= 0; --k) {
    const std::size_t back = static_cast<std::size_t>(k);
    const ObservationFrame& f = back < n ? history[n - 1 - back] : history.front();
    out.insert(out.end(), f.begin(), f.end());
  }
  return out;
}

void FrameHistory::push(ObservationFrame frame) {
  frames_.push_back(std::move(frame));
  while (frames_.size() > static_cast<std::size_t>(kStackDepth)) frames_.pop_front();
}

StackedObservation FrameHistory::stacked() const {
  const std::vector<ObservationFrame> v(frames_.begin(), frames_.end());
  return stack(v);
}

ActionComponents action_components(int k) {
  if (k < 0 || k >= kActionCount) throw UsageError("action index out of range: " + std::to_string(k));
  return {k / 3 - 1, k % 3 - 1};
}

int action_index(ActionComponents c) { return 3 * (c.turn + 1) + (c.accel + 1); }

ControlInput decode_action(int k, const UavSpec& spec) {
  const auto c = action_components(k);
  return {c.accel * spec.max_accel, c.turn * spec.max_turn_rate};
}

int encode_action(const ControlInput& control, const UavSpec& spec) {
  auto quantize = [](double v, double limit) {
    if (v > 0.5 * limit) return 1;
    if (v < -0.5 * limit) return -1;
    return 0;
  };
  return action_index({quantize(control.d_heading, spec.max_turn_rate),
                       quantize(control.d_speed, spec.max_accel)});
}

double shaping_reward(const WorldState& before, const WorldState& after, EntityId agent) {
  const Uav& self0 = before.uav(agent);
  const Uav* nearest = nullptr;
  double d0 = std::numeric_limits<double>::infinity();
  for (const auto& u : before.uavs) {
    if (u.team == self0.team || !u.active()) continue;
    const double d = distance(self0.kin.pos, u.kin.pos);
    if (d < d0) {
      d0 = d;
      nearest = &u;
    }
  }
  if (!nearest) return 0.0;
  const double d1 = distance(after.uav(agent).kin.pos, after.uav(nearest->id).kin.pos);
  const double scale = 1.0 / before.config->half_extent();
  return before.config->reward.shaping_k * (d0 * scale - d1 * scale);
}

double terminal_reward(const RewardConfig& reward, const std::optional<Outcome>& outcome) {
  if (!outcome) return 0.0;
  if (outcome->winner == Team::Blue && outcome->reason == Outcome::Reason::Neutralized)
    return reward.r_win;
  if (outcome->winner == Team::Red) return reward.r_lose;
  return 0.0;
}

double compute_reward(const WorldState& before, const WorldState& after, EntityId agent,
                      const std::optional<Outcome>& outcome) {
  return shaping_reward(before, after, agent) + terminal_reward(before.config->reward, outcome);
}

}  // namespace hmt
