#pragma once

// Deterministic 2D airspace simulation: two UAV teams, sensors, EMP payloads
// and a restricted zone, advanced in fixed time steps.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "hmt/errors.hpp"
#include "hmt/geometry.hpp"
#include "hmt/rng.hpp"

namespace hmt {

using EntityId = std::uint32_t;

enum class Team : std::uint8_t { Blue, Red };

enum class UavStatus : std::uint8_t { Active, Neutralized };

enum class ObservabilityMode : std::uint8_t { FullAwareness, TeamShared, OwnSensorsOnly };

struct UavSpec {
  double max_speed = 30.0;      // m/s
  double min_speed = 0.0;       // m/s; > 0 for fixed-wing
  double max_turn_rate = 0.5;   // rad/s
  double max_accel = 1.0;       // m/s^2
  friend bool operator==(const UavSpec&, const UavSpec&) = default;
};

struct KinematicState {
  Vec2 pos;
  double heading = 0.0;  // [0, 2pi)
  double speed = 0.0;
  friend bool operator==(const KinematicState&, const KinematicState&) = default;
};

struct Sensor {
  double range = 400.0;
  double fov_offset = 0.0;    // sector center relative to carrier heading
  double fov_width = kTwoPi;  // (0, 2pi]
  double p_detect = 1.0;      // (0, 1]
  friend bool operator==(const Sensor&, const Sensor&) = default;
};

struct Payload {
  enum class Kind : std::uint8_t { None, Emp };
  Kind kind = Kind::None;
  double radius = 0.0;  // EMP effect radius, meters
  friend bool operator==(const Payload&, const Payload&) = default;
};

struct Uav {
  EntityId id = 0;
  Team team = Team::Blue;
  UavSpec spec;
  KinematicState kin;
  std::vector<Sensor> sensors;
  Payload payload;
  UavStatus status = UavStatus::Active;

  bool active() const noexcept { return status == UavStatus::Active; }
  friend bool operator==(const Uav&, const Uav&) = default;
};

struct FixedSensor {
  EntityId id = 0;
  Team team = Team::Blue;
  Vec2 pos;
  double orientation = 0.0;  // fov_offset is measured from this
  Sensor sensor;
  friend bool operator==(const FixedSensor&, const FixedSensor&) = default;
};

struct Zone {
  Vec2 center;
  double radius = 200.0;
  friend bool operator==(const Zone&, const Zone&) = default;
};

/// Spawn area: axis-aligned rectangle or annulus.
struct SpawnRegion {
  enum class Kind : std::uint8_t { Rect, Ring };
  Kind kind = Kind::Rect;
  Vec2 min;  // Rect
  Vec2 max;  // Rect
  Vec2 center;         // Ring
  double r_min = 0.0;  // Ring
  double r_max = 0.0;  // Ring

  static SpawnRegion rect(Vec2 lo, Vec2 hi) { return {Kind::Rect, lo, hi, {}, 0.0, 0.0}; }
  static SpawnRegion ring(Vec2 c, double r0, double r1) { return {Kind::Ring, {}, {}, c, r0, r1}; }
  double area() const;
  friend bool operator==(const SpawnRegion&, const SpawnRegion&) = default;
};

enum class InitialHeading : std::uint8_t { Random, TowardZone };

struct TeamSetup {
  int count = 1;
  UavSpec spec;
  std::vector<Sensor> sensors;
  Payload payload;
  SpawnRegion spawn;
  ObservabilityMode observability = ObservabilityMode::TeamShared;
  double initial_speed = 0.0;
  InitialHeading initial_heading = InitialHeading::Random;
  friend bool operator==(const TeamSetup&, const TeamSetup&) = default;
};

struct RewardConfig {
  double r_win = 1.0;
  double r_lose = -1.0;
  double shaping_k = 0.01;  // per normalized-distance unit
  friend bool operator==(const RewardConfig&, const RewardConfig&) = default;
};

/// Parameters of the built-in policies that live with the scenario.
struct AgentParams {
  double red_heading_noise = 0.05;  // rad per step (sigma)
  double arrival_tolerance = 30.0;  // m
  double patrol_radius = 600.0;     // m around the zone center
  double patrol_phase = kPi / 2.0;  // angle of blue slot 0
  double patrol_speed = 2.5;        // m/s while orbiting
  friend bool operator==(const AgentParams&, const AgentParams&) = default;
};

struct FixedSensorSetup {
  Team team = Team::Blue;
  Vec2 pos;
  double orientation = 0.0;
  Sensor sensor;
  friend bool operator==(const FixedSensorSetup&, const FixedSensorSetup&) = default;
};

struct EpisodeConfig {
  double map_width = 2000.0;
  double map_height = 2000.0;
  Zone zone;
  TeamSetup blue;
  TeamSetup red;
  std::vector<FixedSensorSetup> fixed_sensors;
  double dt = 1.0;
  int max_steps = 300;
  double min_spawn_separation = 20.0;
  RewardConfig reward;
  AgentParams agents;
  std::uint64_t seed = 0;

  double half_extent() const { return 0.5 * std::max(map_width, map_height); }
  friend bool operator==(const EpisodeConfig&, const EpisodeConfig&) = default;
};

/// Field-level validation. Empty result means the config is usable.
std::vector<FieldError> validate(const EpisodeConfig& config);

/// 5 blue defenders vs 1 red attacker on a 2 km square map.
EpisodeConfig default_scenario();

/// 2 blue vs 1 red on a 1 km map with 150 steps; used for learning runs.
EpisodeConfig reduced_scenario();

struct ControlInput {
  double d_speed = 0.0;    // m/s^2 request
  double d_heading = 0.0;  // rad/s request
  friend bool operator==(const ControlInput&, const ControlInput&) = default;
};

using ControlMap = std::map<EntityId, ControlInput>;

struct Detection {
  EntityId observer = 0;
  EntityId target = 0;
  int t = 0;
  friend bool operator==(const Detection&, const Detection&) = default;
};
struct Neutralization {
  EntityId by = 0;
  EntityId target = 0;
  int t = 0;
  friend bool operator==(const Neutralization&, const Neutralization&) = default;
};
struct Intrusion {
  EntityId target = 0;
  int t = 0;
  friend bool operator==(const Intrusion&, const Intrusion&) = default;
};
struct Timeout {
  int t = 0;
  friend bool operator==(const Timeout&, const Timeout&) = default;
};

using Event = std::variant<Detection, Neutralization, Intrusion, Timeout>;

struct Outcome {
  enum class Reason : std::uint8_t { Neutralized, Intrusion, Timeout };
  Team winner = Team::Blue;
  Reason reason = Reason::Timeout;
  friend bool operator==(const Outcome&, const Outcome&) = default;
};

struct WorldState {
  int t = 0;
  std::vector<Uav> uavs;  // index == entity id
  std::vector<FixedSensor> fixed_sensors;
  Zone zone;
  Rng spawn_rng;
  Rng sensing_rng;
  std::vector<Detection> detections;  // latest sensing pass
  std::optional<Outcome> outcome;
  std::shared_ptr<const EpisodeConfig> config;
  std::uint64_t seed = 0;

  const Uav& uav(EntityId id) const { return uavs.at(id); }
  bool terminated() const noexcept { return outcome.has_value(); }
  int team_count(Team team) const;
  /// Position of uav among its own team (0-based), by entity id.
  int team_index(EntityId id) const;

  friend bool operator==(const WorldState& a, const WorldState& b);
};

/// Places UAVs from the "spawn" substream and runs the initial sensing pass.
WorldState init_world(const EpisodeConfig& config, std::uint64_t seed);

/// Integrates one UAV over dt with the request clamped to its spec.
KinematicState apply_control(const Uav& uav, const ControlInput& input, double dt);

/// Detections made by one observer. Targets are visited in entity-id order
/// and one draw is consumed per target that is inside range and sector.
std::vector<Detection> sense(const WorldState& world, const Uav& observer, Rng& rng);
std::vector<Detection> sense(const WorldState& world, const FixedSensor& observer, Rng& rng);

/// Whether `target` lies inside the sensor's range and angular sector.
bool in_coverage(const Sensor& sensor, Vec2 origin, double orientation, Vec2 target);

struct EntitySnapshot {
  EntityId id = 0;
  Team team = Team::Blue;
  Vec2 pos;
  double heading = 0.0;
  double speed = 0.0;
  UavStatus status = UavStatus::Active;
  friend bool operator==(const EntitySnapshot&, const EntitySnapshot&) = default;
};

EntitySnapshot snapshot(const Uav& u);

/// Entities known to `uav` under `mode`, in entity-id order.
std::vector<EntitySnapshot> perceived_entities(const WorldState& world, EntityId uav,
                                               ObservabilityMode mode);

struct StepResult {
  std::vector<Event> events;
  std::optional<Outcome> outcome;
};

/// Advances the world by one step. Missing control entries mean zero input.
/// Throws UsageError on a terminated world.
StepResult step(WorldState& world, const ControlMap& controls);

const char* to_string(Team team);
const char* to_string(Outcome::Reason reason);
const char* to_string(ObservabilityMode mode);

}  // namespace hmt
