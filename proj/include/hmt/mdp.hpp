#pragma once

// Observation encoding, discrete action space and shaped reward for the blue
// team.
//
// Frame layout for a blue agent (all positions relative to the agent and
// divided by the map half extent):
//
//   [0, 2(B-1))          teammates, ascending entity id, self excluded
//   [.., +2R)            red UAVs, ascending entity id, (0, 0) if not perceived
//   [.., +2)             zone center
//   [.., +3)             cos(heading), sin(heading), speed / max_speed
//
// so L = 2(B-1) + 2R + 2 + 3. A stacked observation is the last three frames,
// oldest first.

#include <array>
#include <deque>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "hmt/sim.hpp"

namespace hmt {

inline constexpr std::string_view kObservationLayout = "hmt-obs/1";
inline constexpr int kStackDepth = 3;
inline constexpr int kActionCount = 9;

using ObservationFrame = std::vector<double>;
using StackedObservation = std::vector<double>;

int frame_length(const EpisodeConfig& config);
inline int observation_length(const EpisodeConfig& config) {
  return kStackDepth * frame_length(config);
}

ObservationFrame encode_frame(const WorldState& world, EntityId agent, ObservabilityMode mode);

/// Last three frames; a short history is back-filled with its earliest frame.
/// Throws UsageError on an empty history.
StackedObservation stack(std::span<const ObservationFrame> history);

/// Rolling window of the most recent frames of one agent.
class FrameHistory {
 public:
  void push(ObservationFrame frame);
  StackedObservation stacked() const;
  bool empty() const noexcept { return frames_.empty(); }
  void clear() { frames_.clear(); }

 private:
  std::deque<ObservationFrame> frames_;
};

struct ActionComponents {
  int turn = 0;   // -1, 0, +1
  int accel = 0;  // -1, 0, +1
  friend bool operator==(const ActionComponents&, const ActionComponents&) = default;
};

/// k = 3 (turn + 1) + (accel + 1); k = 4 is the no-op.
ActionComponents action_components(int k);
int action_index(ActionComponents c);

/// Throws UsageError when k is outside 0..8.
ControlInput decode_action(int k, const UavSpec& spec);

/// Nearest discrete action of a continuous control (each axis quantized with
/// a dead band of half its limit). Used to label operator-driven steps.
int encode_action(const ControlInput& control, const UavSpec& spec);

/// Reward of one blue agent for the transition before -> after. Shaping uses
/// true positions and the red nearest at `before` (ties to the lower id).
double compute_reward(const WorldState& before, const WorldState& after, EntityId agent,
                      const std::optional<Outcome>& outcome);

/// Shaping part only, in normalized distance units times shaping_k.
double shaping_reward(const WorldState& before, const WorldState& after, EntityId agent);

/// Terminal part only.
double terminal_reward(const RewardConfig& reward, const std::optional<Outcome>& outcome);

}  // namespace hmt
