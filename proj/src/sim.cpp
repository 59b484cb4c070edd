#include "hmt/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hmt {

double SpawnRegion::area() const {
  if (kind == Kind::Rect) return std::max(0.0, max.x - min.x) * std::max(0.0, max.y - min.y);
  return kPi * (r_max * r_max - r_min * r_min);
}

namespace {

void check(std::vector<FieldError>& out, bool ok, std::string field, std::string message) {
  if (!ok) out.push_back({std::move(field), std::move(message)});
}

bool finite(double v) { return std::isfinite(v); }

void validate_spec(std::vector<FieldError>& out, const UavSpec& s, const std::string& p) {
  check(out, finite(s.max_speed) && s.max_speed > 0.0, p + ".max_speed", "must be > 0");
  check(out, finite(s.min_speed) && s.min_speed >= 0.0, p + ".min_speed", "must be >= 0");
  check(out, s.min_speed <= s.max_speed, p + ".min_speed", "must not exceed max_speed");
  check(out, finite(s.max_turn_rate) && s.max_turn_rate > 0.0, p + ".max_turn_rate", "must be > 0");
  check(out, finite(s.max_accel) && s.max_accel > 0.0, p + ".max_accel", "must be > 0");
}

void validate_sensor(std::vector<FieldError>& out, const Sensor& s, const std::string& p) {
  check(out, finite(s.range) && s.range > 0.0, p + ".range", "must be > 0");
  check(out, finite(s.fov_offset), p + ".fov_offset", "must be finite");
  check(out, finite(s.fov_width) && s.fov_width > 0.0 && s.fov_width <= kTwoPi + 1e-12,
        p + ".fov_width", "must be in (0, 2pi]");
  check(out, finite(s.p_detect) && s.p_detect > 0.0 && s.p_detect <= 1.0, p + ".p_detect",
        "must be in (0, 1]");
}

void validate_team(std::vector<FieldError>& out, const TeamSetup& t, const std::string& p) {
  check(out, t.count >= 1, p + ".count", "must be >= 1");
  validate_spec(out, t.spec, p + ".spec");
  for (std::size_t i = 0; i < t.sensors.size(); ++i)
    validate_sensor(out, t.sensors[i], p + ".sensors[" + std::to_string(i) + "]");
  if (t.payload.kind == Payload::Kind::Emp)
    check(out, finite(t.payload.radius) && t.payload.radius > 0.0, p + ".payload.radius",
          "must be > 0");
  const auto& s = t.spawn;
  if (s.kind == SpawnRegion::Kind::Rect) {
    check(out, s.min.finite() && s.max.finite() && s.min.x < s.max.x && s.min.y < s.max.y,
          p + ".spawn", "rectangle must have min < max");
  } else {
    check(out, s.center.finite() && finite(s.r_min) && finite(s.r_max) && s.r_min >= 0.0 &&
                   s.r_max > s.r_min,
          p + ".spawn", "ring must satisfy 0 <= r_min < r_max");
  }
  check(out, finite(t.initial_speed) && t.initial_speed >= 0.0, p + ".initial_speed",
        "must be >= 0");
}

}  // namespace

std::vector<FieldError> validate(const EpisodeConfig& c) {
  std::vector<FieldError> out;
  check(out, finite(c.map_width) && c.map_width > 0.0, "map_width", "must be > 0");
  check(out, finite(c.map_height) && c.map_height > 0.0, "map_height", "must be > 0");
  check(out, c.zone.center.finite(), "zone.center", "must be finite");
  check(out, finite(c.zone.radius) && c.zone.radius > 0.0, "zone.radius", "must be > 0");
  validate_team(out, c.blue, "blue");
  validate_team(out, c.red, "red");
  for (std::size_t i = 0; i < c.fixed_sensors.size(); ++i) {
    const auto p = "fixed_sensors[" + std::to_string(i) + "]";
    check(out, c.fixed_sensors[i].pos.finite(), p + ".pos", "must be finite");
    validate_sensor(out, c.fixed_sensors[i].sensor, p + ".sensor");
  }
  check(out, finite(c.dt) && c.dt > 0.0, "dt", "must be > 0");
  check(out, c.max_steps > 0, "max_steps", "must be > 0");
  check(out, finite(c.min_spawn_separation) && c.min_spawn_separation >= 0.0,
        "min_spawn_separation", "must be >= 0");
  check(out, finite(c.reward.r_win) && finite(c.reward.r_lose) && finite(c.reward.shaping_k),
        "reward", "must be finite");
  check(out, finite(c.agents.red_heading_noise) && c.agents.red_heading_noise >= 0.0,
        "agents.red_heading_noise", "must be >= 0");
  check(out, finite(c.agents.arrival_tolerance) && c.agents.arrival_tolerance > 0.0,
        "agents.arrival_tolerance", "must be > 0");
  check(out, finite(c.agents.patrol_radius) && c.agents.patrol_radius > 0.0,
        "agents.patrol_radius", "must be > 0");
  check(out, finite(c.agents.patrol_speed) && c.agents.patrol_speed >= 0.0,
        "agents.patrol_speed", "must be >= 0");
  check(out, finite(c.agents.patrol_phase), "agents.patrol_phase", "must be finite");
  return out;
}

EpisodeConfig default_scenario() {
  EpisodeConfig c;
  c.map_width = 2000.0;
  c.map_height = 2000.0;
  c.zone = {{300.0, 1000.0}, 200.0};

  c.blue.count = 5;
  c.blue.spec = {30.0, 0.0, 0.5, 1.0};
  c.blue.sensors = {Sensor{400.0, 0.0, kTwoPi, 1.0}};
  c.blue.payload = {Payload::Kind::Emp, 50.0};
  c.blue.spawn = SpawnRegion::ring(c.zone.center, 250.0, 450.0);
  c.blue.observability = ObservabilityMode::TeamShared;
  c.blue.initial_speed = 0.0;
  c.blue.initial_heading = InitialHeading::Random;

  c.red.count = 1;
  c.red.spec = {25.0, 0.0, 0.5, 1.0};
  c.red.sensors = {};
  c.red.payload = {};
  c.red.spawn = SpawnRegion::rect({1800.0, 200.0}, {2000.0, 1800.0});
  c.red.observability = ObservabilityMode::FullAwareness;
  c.red.initial_speed = 25.0;
  c.red.initial_heading = InitialHeading::TowardZone;

  c.fixed_sensors = {FixedSensorSetup{Team::Blue, c.zone.center, 0.0, Sensor{600.0, 0.0, kTwoPi, 0.8}}};
  c.dt = 1.0;
  c.max_steps = 300;
  c.agents.patrol_radius = 600.0;
  c.agents.patrol_speed = 2.5;
  return c;
}

EpisodeConfig reduced_scenario() {
  EpisodeConfig c = default_scenario();
  c.map_width = 1000.0;
  c.map_height = 1000.0;
  c.zone = {{150.0, 500.0}, 100.0};
  c.blue.count = 2;
  c.blue.spawn = SpawnRegion::ring(c.zone.center, 125.0, 225.0);
  c.red.spawn = SpawnRegion::rect({900.0, 100.0}, {1000.0, 900.0});
  c.fixed_sensors = {FixedSensorSetup{Team::Blue, c.zone.center, 0.0, Sensor{300.0, 0.0, kTwoPi, 0.8}}};
  c.blue.sensors = {Sensor{250.0, 0.0, kTwoPi, 1.0}};
  c.red.spec.max_speed = 15.0;
  c.red.initial_speed = 15.0;
  c.agents.patrol_radius = 300.0;
  c.max_steps = 150;
  return c;
}

int WorldState::team_count(Team team) const {
  return static_cast<int>(std::count_if(uavs.begin(), uavs.end(),
                                        [&](const Uav& u) { return u.team == team; }));
}

int WorldState::team_index(EntityId id) const {
  const Team team = uavs.at(id).team;
  int idx = 0;
  for (const auto& u : uavs) {
    if (u.id == id) return idx;
    if (u.team == team) ++idx;
  }
  return idx;
}

bool operator==(const WorldState& a, const WorldState& b) {
  const bool same_config = (a.config == b.config) || (a.config && b.config && *a.config == *b.config);
  return same_config && a.t == b.t && a.uavs == b.uavs && a.fixed_sensors == b.fixed_sensors &&
         a.zone == b.zone && a.spawn_rng == b.spawn_rng && a.sensing_rng == b.sensing_rng &&
         a.detections == b.detections && a.outcome == b.outcome && a.seed == b.seed;
}

namespace {

Vec2 sample_point(const SpawnRegion& r, Rng& rng) {
  if (r.kind == SpawnRegion::Kind::Rect) {
    const double x = rng.uniform(r.min.x, r.max.x);
    const double y = rng.uniform(r.min.y, r.max.y);
    return {x, y};
  }
  const double u = rng.uniform();
  const double a = rng.uniform(0.0, kTwoPi);
  const double rad = std::sqrt(u * (r.r_max * r.r_max - r.r_min * r.r_min) + r.r_min * r.r_min);
  return r.center + unit(a) * rad;
}

void spawn_team(WorldState& w, const TeamSetup& setup, Team team, double separation) {
  constexpr int kMaxAttempts = 1000;
  if (separation > 0.0) {
    const double capacity = setup.spawn.area() / (separation * separation);
    if (static_cast<double>(setup.count) > capacity)
      throw ConfigError(FieldError{team == Team::Blue ? "blue.spawn" : "red.spawn",
                          "region cannot hold count UAVs at min_spawn_separation"});
  }
  for (int i = 0; i < setup.count; ++i) {
    Vec2 pos;
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      pos = sample_point(setup.spawn, w.spawn_rng);
      placed = std::all_of(w.uavs.begin(), w.uavs.end(), [&](const Uav& u) {
        return distance(u.kin.pos, pos) >= separation;
      });
    }
    if (!placed)
      throw ConfigError(FieldError{team == Team::Blue ? "blue.spawn" : "red.spawn",
                          "could not place UAVs at min_spawn_separation"});
    Uav u;
    u.id = static_cast<EntityId>(w.uavs.size());
    u.team = team;
    u.spec = setup.spec;
    u.sensors = setup.sensors;
    u.payload = setup.payload;
    u.kin.pos = pos;
    const double random_heading = w.spawn_rng.uniform(0.0, kTwoPi);
    u.kin.heading = setup.initial_heading == InitialHeading::TowardZone
                        ? normalize_angle(bearing(pos, w.zone.center))
                        : normalize_angle(random_heading);
    u.kin.speed = std::clamp(setup.initial_speed, setup.spec.min_speed, setup.spec.max_speed);
    w.uavs.push_back(std::move(u));
  }
}

void run_sensing(WorldState& w) {
  w.detections.clear();
  for (const auto& u : w.uavs) {
    if (!u.active()) continue;
    auto d = sense(w, u, w.sensing_rng);
    w.detections.insert(w.detections.end(), d.begin(), d.end());
  }
  for (const auto& f : w.fixed_sensors) {
    auto d = sense(w, f, w.sensing_rng);
    w.detections.insert(w.detections.end(), d.begin(), d.end());
  }
}

}  // namespace

WorldState init_world(const EpisodeConfig& config, std::uint64_t seed) {
  if (auto errors = validate(config); !errors.empty()) throw ConfigError(std::move(errors));

  WorldState w;
  auto cfg = std::make_shared<EpisodeConfig>(config);
  cfg->seed = seed;
  w.config = std::move(cfg);
  w.seed = seed;
  w.zone = config.zone;
  w.spawn_rng = Rng::stream(seed, "spawn");
  w.sensing_rng = Rng::stream(seed, "sensing");

  spawn_team(w, config.blue, Team::Blue, config.min_spawn_separation);
  spawn_team(w, config.red, Team::Red, config.min_spawn_separation);

  EntityId next = static_cast<EntityId>(w.uavs.size());
  for (const auto& fs : config.fixed_sensors)
    w.fixed_sensors.push_back(FixedSensor{next++, fs.team, fs.pos, fs.orientation, fs.sensor});

  run_sensing(w);
  return w;
}

KinematicState apply_control(const Uav& uav, const ControlInput& input, double dt) {
  const auto& s = uav.spec;
  const double accel = std::clamp(input.d_speed, -s.max_accel, s.max_accel);
  const double turn = std::clamp(input.d_heading, -s.max_turn_rate, s.max_turn_rate);
  KinematicState k;
  k.speed = std::clamp(uav.kin.speed + accel * dt, s.min_speed, s.max_speed);
  k.heading = normalize_angle(uav.kin.heading + turn * dt);
  k.pos = uav.kin.pos + unit(k.heading) * (k.speed * dt);
  return k;
}

bool in_coverage(const Sensor& sensor, Vec2 origin, double orientation, Vec2 target) {
  if (distance(origin, target) > sensor.range) return false;
  if (sensor.fov_width >= kTwoPi) return true;
  const double center = orientation + sensor.fov_offset;
  const double off = std::abs(wrap_pi(bearing(origin, target) - center));
  return off <= 0.5 * sensor.fov_width;
}

namespace {

std::vector<Detection> sense_from(const WorldState& w, EntityId observer, Team team, Vec2 origin,
                                  double orientation, const std::vector<Sensor>& sensors,
                                  Rng& rng) {
  std::vector<Detection> out;
  for (const auto& target : w.uavs) {
    if (target.team == team || !target.active()) continue;
    bool detected = false;
    for (const auto& s : sensors) {
      if (!in_coverage(s, origin, orientation, target.kin.pos)) continue;
      if (rng.bernoulli(s.p_detect)) detected = true;
    }
    if (detected) out.push_back({observer, target.id, w.t});
  }
  return out;
}

}  // namespace

std::vector<Detection> sense(const WorldState& world, const Uav& observer, Rng& rng) {
  if (!observer.active()) return {};
  return sense_from(world, observer.id, observer.team, observer.kin.pos, observer.kin.heading,
                    observer.sensors, rng);
}

std::vector<Detection> sense(const WorldState& world, const FixedSensor& observer, Rng& rng) {
  const std::vector<Sensor> sensors{observer.sensor};
  return sense_from(world, observer.id, observer.team, observer.pos, observer.orientation, sensors,
                    rng);
}

EntitySnapshot snapshot(const Uav& u) {
  return {u.id, u.team, u.kin.pos, u.kin.heading, u.kin.speed, u.status};
}

namespace {

Team observer_team(const WorldState& w, EntityId observer) {
  if (observer < w.uavs.size()) return w.uavs[observer].team;
  for (const auto& f : w.fixed_sensors)
    if (f.id == observer) return f.team;
  return Team::Red;
}

}  // namespace

std::vector<EntitySnapshot> perceived_entities(const WorldState& w, EntityId uav_id,
                                               ObservabilityMode mode) {
  const Uav& self = w.uav(uav_id);
  std::vector<EntitySnapshot> out;
  for (const auto& u : w.uavs) {
    bool known = false;
    if (mode == ObservabilityMode::FullAwareness || u.team == self.team) {
      known = true;
    } else if (u.active()) {
      known = std::any_of(w.detections.begin(), w.detections.end(), [&](const Detection& d) {
        if (d.target != u.id) return false;
        if (mode == ObservabilityMode::OwnSensorsOnly) return d.observer == self.id;
        return observer_team(w, d.observer) == self.team;
      });
    }
    if (known) out.push_back(snapshot(u));
  }
  return out;
}

StepResult step(WorldState& w, const ControlMap& controls) {
  if (w.terminated()) throw UsageError("step called on a terminated world");
  const EpisodeConfig& cfg = *w.config;
  StepResult result;

  // (1) kinematics, every read from the pre-step state
  std::vector<KinematicState> next(w.uavs.size());
  for (std::size_t i = 0; i < w.uavs.size(); ++i) {
    const Uav& u = w.uavs[i];
    if (!u.active()) {
      next[i] = u.kin;
      continue;
    }
    auto it = controls.find(u.id);
    next[i] = apply_control(u, it == controls.end() ? ControlInput{} : it->second, cfg.dt);
  }
  for (std::size_t i = 0; i < w.uavs.size(); ++i) w.uavs[i].kin = next[i];
  const int t_next = w.t + 1;
  w.t = t_next;

  // (2) sensing
  run_sensing(w);
  for (const auto& d : w.detections) result.events.emplace_back(d);

  // (3) EMP neutralization, nearest blue gets the credit, ties to lower id
  for (auto& red : w.uavs) {
    if (red.team != Team::Red || !red.active()) continue;
    const Uav* by = nullptr;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& blue : w.uavs) {
      if (blue.team != Team::Blue || !blue.active() || blue.payload.kind != Payload::Kind::Emp)
        continue;
      const double d = distance(blue.kin.pos, red.kin.pos);
      if (d <= blue.payload.radius && d < best) {
        best = d;
        by = &blue;
      }
    }
    if (by) {
      red.status = UavStatus::Neutralized;
      result.events.emplace_back(Neutralization{by->id, red.id, t_next});
    }
  }

  // (4) intrusion
  bool intrusion = false;
  for (const auto& red : w.uavs) {
    if (red.team != Team::Red || !red.active()) continue;
    if (distance(red.kin.pos, w.zone.center) <= w.zone.radius) {
      result.events.emplace_back(Intrusion{red.id, t_next});
      intrusion = true;
    }
  }

  // (5) termination
  const bool reds_left = std::any_of(w.uavs.begin(), w.uavs.end(), [](const Uav& u) {
    return u.team == Team::Red && u.active();
  });
  if (!reds_left) {
    w.outcome = Outcome{Team::Blue, Outcome::Reason::Neutralized};
  } else if (intrusion) {
    w.outcome = Outcome{Team::Red, Outcome::Reason::Intrusion};
  } else if (t_next >= cfg.max_steps) {
    result.events.emplace_back(Timeout{t_next});
    w.outcome = Outcome{Team::Blue, Outcome::Reason::Timeout};
  }
  result.outcome = w.outcome;
  return result;
}

const char* to_string(Team team) { return team == Team::Blue ? "blue" : "red"; }

const char* to_string(Outcome::Reason reason) {
  switch (reason) {
    case Outcome::Reason::Neutralized: return "neutralized";
    case Outcome::Reason::Intrusion: return "intrusion";
    case Outcome::Reason::Timeout: return "timeout";
  }
  return "unknown";
}

const char* to_string(ObservabilityMode mode) {
  switch (mode) {
    case ObservabilityMode::FullAwareness: return "full_awareness";
    case ObservabilityMode::TeamShared: return "team_shared";
    case ObservabilityMode::OwnSensorsOnly: return "own_sensors_only";
  }
  return "unknown";
}

}  // namespace hmt
