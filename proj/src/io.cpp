#include "hmt/io.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <string>

namespace hmt {

namespace {

using Errors = std::vector<FieldError>;

std::string join(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}

const char* type_name(const Json& j) { return j.type_name(); }

// Leaf readers. Each returns false (after recording an error) on a mismatch.
bool read(const Json& j, const std::string& path, double& out, Errors& e) {
  if (!j.is_number()) {
    e.push_back({path, std::string("expected number, got ") + type_name(j)});
    return false;
  }
  out = j.get<double>();
  return true;
}

bool read(const Json& j, const std::string& path, int& out, Errors& e) {
  if (!j.is_number_integer()) {
    e.push_back({path, std::string("expected integer, got ") + type_name(j)});
    return false;
  }
  out = j.get<int>();
  return true;
}

bool read(const Json& j, const std::string& path, std::uint64_t& out, Errors& e) {
  if (!j.is_number_unsigned()) {
    e.push_back({path, std::string("expected unsigned integer, got ") + type_name(j)});
    return false;
  }
  out = j.get<std::uint64_t>();
  return true;
}

static_assert(std::is_same_v<std::size_t, std::uint64_t>, "size_t fields are read as uint64");

bool read(const Json& j, const std::string& path, std::string& out, Errors& e) {
  if (!j.is_string()) {
    e.push_back({path, std::string("expected string, got ") + type_name(j)});
    return false;
  }
  out = j.get<std::string>();
  return true;
}

bool read(const Json& j, const std::string& path, Vec2& out, Errors& e) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    e.push_back({path, "expected [x, y]"});
    return false;
  }
  out = {j[0].get<double>(), j[1].get<double>()};
  return true;
}

template <class T>
bool read(const Json& j, const std::string& path, std::vector<T>& out, Errors& e) {
  if (!j.is_array()) {
    e.push_back({path, std::string("expected array, got ") + type_name(j)});
    return false;
  }
  std::vector<T> v;
  bool ok = true;
  for (std::size_t i = 0; i < j.size(); ++i) {
    T item{};
    ok &= read(j[i], path + "[" + std::to_string(i) + "]", item, e);
    v.push_back(std::move(item));
  }
  if (ok) out = std::move(v);
  return ok;
}

template <class Enum>
bool read_enum(const Json& j, const std::string& path, Enum& out, Errors& e,
               std::initializer_list<std::pair<const char*, Enum>> names) {
  std::string s;
  if (!read(j, path, s, e)) return false;
  for (const auto& [name, value] : names)
    if (s == name) {
      out = value;
      return true;
    }
  std::string expected;
  for (const auto& [name, value] : names) expected += (expected.empty() ? "" : ", ") + std::string(name);
  e.push_back({path, "unknown value '" + s + "', expected one of " + expected});
  return false;
}

// Object reader: visits known keys and reports any others.
class Obj {
 public:
  Obj(const Json& j, std::string path, Errors& e) : j_(j), path_(std::move(path)), e_(e) {
    ok_ = j.is_object();
    if (!ok_) e_.push_back({path_.empty() ? "<root>" : path_, std::string("expected object, got ") + type_name(j)});
  }
  ~Obj() {
    if (!ok_) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.contains(k)) e_.push_back({join(path_, k), "unknown field"});
  }
  bool ok() const { return ok_; }
  const Json* get(std::string_view key) {
    seen_.insert(std::string(key));
    if (!ok_) return nullptr;
    auto it = j_.find(std::string(key));
    return it == j_.end() ? nullptr : &*it;
  }
  std::string path(std::string_view key) const { return join(path_, key); }
  Errors& errors() { return e_; }

  template <class T>
  void field(std::string_view key, T& out) {
    if (const Json* v = get(key)) read(*v, path(key), out, e_);
  }
  template <class F>
  void with(std::string_view key, F&& f) {
    if (const Json* v = get(key)) f(*v, path(key));
  }

 private:
  const Json& j_;
  std::string path_;
  Errors& e_;
  std::set<std::string> seen_;
  bool ok_ = false;
};

constexpr std::initializer_list<std::pair<const char*, ObservabilityMode>> kModes = {
    {"full_awareness", ObservabilityMode::FullAwareness},
    {"team_shared", ObservabilityMode::TeamShared},
    {"own_sensors_only", ObservabilityMode::OwnSensorsOnly}};
constexpr std::initializer_list<std::pair<const char*, Team>> kTeams = {{"blue", Team::Blue},
                                                                        {"red", Team::Red}};

Json vec(Vec2 v) { return Json::array({v.x, v.y}); }

Json sensor_json(const Sensor& s) {
  return {{"range", s.range}, {"fov_offset", s.fov_offset}, {"fov_width", s.fov_width},
          {"p_detect", s.p_detect}};
}

void read_sensor(const Json& j, const std::string& path, Sensor& s, Errors& e) {
  Obj o(j, path, e);
  o.field("range", s.range);
  o.field("fov_offset", s.fov_offset);
  o.field("fov_width", s.fov_width);
  o.field("p_detect", s.p_detect);
}

Json spec_json(const UavSpec& s) {
  return {{"max_speed", s.max_speed}, {"min_speed", s.min_speed},
          {"max_turn_rate", s.max_turn_rate}, {"max_accel", s.max_accel}};
}

void read_spec(const Json& j, const std::string& path, UavSpec& s, Errors& e) {
  Obj o(j, path, e);
  o.field("max_speed", s.max_speed);
  o.field("min_speed", s.min_speed);
  o.field("max_turn_rate", s.max_turn_rate);
  o.field("max_accel", s.max_accel);
}

Json spawn_json(const SpawnRegion& s) {
  if (s.kind == SpawnRegion::Kind::Rect) return {{"kind", "rect"}, {"min", vec(s.min)}, {"max", vec(s.max)}};
  return {{"kind", "ring"}, {"center", vec(s.center)}, {"r_min", s.r_min}, {"r_max", s.r_max}};
}

void read_spawn(const Json& j, const std::string& path, SpawnRegion& s, Errors& e) {
  Obj o(j, path, e);
  o.with("kind", [&](const Json& v, const std::string& p) {
    read_enum(v, p, s.kind, e, {{"rect", SpawnRegion::Kind::Rect}, {"ring", SpawnRegion::Kind::Ring}});
  });
  o.field("min", s.min);
  o.field("max", s.max);
  o.field("center", s.center);
  o.field("r_min", s.r_min);
  o.field("r_max", s.r_max);
}

Json team_json(const TeamSetup& t) {
  Json sensors = Json::array();
  for (const auto& s : t.sensors) sensors.push_back(sensor_json(s));
  return {{"count", t.count},
          {"spec", spec_json(t.spec)},
          {"sensors", sensors},
          {"payload",
           {{"kind", t.payload.kind == Payload::Kind::Emp ? "emp" : "none"}, {"radius", t.payload.radius}}},
          {"spawn", spawn_json(t.spawn)},
          {"observability", to_string(t.observability)},
          {"initial_speed", t.initial_speed},
          {"initial_heading", t.initial_heading == InitialHeading::Random ? "random" : "toward_zone"}};
}

void read_team(const Json& j, const std::string& path, TeamSetup& t, Errors& e) {
  Obj o(j, path, e);
  o.field("count", t.count);
  o.with("spec", [&](const Json& v, const std::string& p) { read_spec(v, p, t.spec, e); });
  o.with("sensors", [&](const Json& v, const std::string& p) {
    // each element overlays a default sensor, not the base list
    std::vector<Sensor> sensors;
    if (!v.is_array()) {
      e.push_back({p, "expected array"});
      return;
    }
    for (std::size_t i = 0; i < v.size(); ++i) {
      Sensor s;
      read_sensor(v[i], p + "[" + std::to_string(i) + "]", s, e);
      sensors.push_back(s);
    }
    t.sensors = std::move(sensors);
  });
  o.with("payload", [&](const Json& v, const std::string& p) {
    Obj po(v, p, e);
    po.with("kind", [&](const Json& k, const std::string& kp) {
      read_enum(k, kp, t.payload.kind, e, {{"none", Payload::Kind::None}, {"emp", Payload::Kind::Emp}});
    });
    po.field("radius", t.payload.radius);
  });
  o.with("spawn", [&](const Json& v, const std::string& p) { read_spawn(v, p, t.spawn, e); });
  o.with("observability", [&](const Json& v, const std::string& p) { read_enum(v, p, t.observability, e, kModes); });
  o.field("initial_speed", t.initial_speed);
  o.with("initial_heading", [&](const Json& v, const std::string& p) {
    read_enum(v, p, t.initial_heading, e,
              {{"random", InitialHeading::Random}, {"toward_zone", InitialHeading::TowardZone}});
  });
}

template <class T>
T finish(T value, Errors& errors) {
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return value;
}

}  // namespace

ObservabilityMode parse_observability(std::string_view s) {
  Errors e;
  ObservabilityMode m{};
  read_enum(Json(std::string(s)), "observability", m, e, kModes);
  return finish(m, e);
}

Team parse_team(std::string_view s) {
  Errors e;
  Team t{};
  read_enum(Json(std::string(s)), "team", t, e, kTeams);
  return finish(t, e);
}

Json to_json(Vec2 v) { return vec(v); }

Json to_json(const EpisodeConfig& c) {
  Json fixed = Json::array();
  for (const auto& f : c.fixed_sensors)
    fixed.push_back({{"team", to_string(f.team)},
                     {"pos", vec(f.pos)},
                     {"orientation", f.orientation},
                     {"sensor", sensor_json(f.sensor)}});
  return {{"map_width", c.map_width},
          {"map_height", c.map_height},
          {"zone", {{"center", vec(c.zone.center)}, {"radius", c.zone.radius}}},
          {"blue", team_json(c.blue)},
          {"red", team_json(c.red)},
          {"fixed_sensors", fixed},
          {"dt", c.dt},
          {"max_steps", c.max_steps},
          {"min_spawn_separation", c.min_spawn_separation},
          {"reward", {{"r_win", c.reward.r_win}, {"r_lose", c.reward.r_lose}, {"shaping_k", c.reward.shaping_k}}},
          {"agents",
           {{"red_heading_noise", c.agents.red_heading_noise},
            {"arrival_tolerance", c.agents.arrival_tolerance},
            {"patrol_radius", c.agents.patrol_radius},
            {"patrol_phase", c.agents.patrol_phase},
            {"patrol_speed", c.agents.patrol_speed}}},
          {"seed", c.seed}};
}

EpisodeConfig episode_config_from_json(const Json& j, const EpisodeConfig& base) {
  EpisodeConfig c = base;
  Errors e;
  {
    Obj o(j, "", e);
    o.field("map_width", c.map_width);
    o.field("map_height", c.map_height);
    o.with("zone", [&](const Json& v, const std::string& p) {
      Obj z(v, p, e);
      z.field("center", c.zone.center);
      z.field("radius", c.zone.radius);
    });
    o.with("blue", [&](const Json& v, const std::string& p) { read_team(v, p, c.blue, e); });
    o.with("red", [&](const Json& v, const std::string& p) { read_team(v, p, c.red, e); });
    o.with("fixed_sensors", [&](const Json& v, const std::string& p) {
      if (!v.is_array()) {
        e.push_back({p, "expected array"});
        return;
      }
      std::vector<FixedSensorSetup> out;
      for (std::size_t i = 0; i < v.size(); ++i) {
        FixedSensorSetup f;
        Obj fo(v[i], p + "[" + std::to_string(i) + "]", e);
        fo.with("team", [&](const Json& t, const std::string& tp) { read_enum(t, tp, f.team, e, kTeams); });
        fo.field("pos", f.pos);
        fo.field("orientation", f.orientation);
        fo.with("sensor", [&](const Json& s, const std::string& sp) { read_sensor(s, sp, f.sensor, e); });
        out.push_back(f);
      }
      c.fixed_sensors = std::move(out);
    });
    o.field("dt", c.dt);
    o.field("max_steps", c.max_steps);
    o.field("min_spawn_separation", c.min_spawn_separation);
    o.with("reward", [&](const Json& v, const std::string& p) {
      Obj r(v, p, e);
      r.field("r_win", c.reward.r_win);
      r.field("r_lose", c.reward.r_lose);
      r.field("shaping_k", c.reward.shaping_k);
    });
    o.with("agents", [&](const Json& v, const std::string& p) {
      Obj a(v, p, e);
      a.field("red_heading_noise", c.agents.red_heading_noise);
      a.field("arrival_tolerance", c.agents.arrival_tolerance);
      a.field("patrol_radius", c.agents.patrol_radius);
      a.field("patrol_phase", c.agents.patrol_phase);
      a.field("patrol_speed", c.agents.patrol_speed);
    });
    o.field("seed", c.seed);
  }
  if (e.empty()) e = validate(c);
  return finish(c, e);
}

Json to_json(const TrainConfig& c) {
  return {{"gamma", c.gamma},
          {"lr", c.lr},
          {"momentum", c.momentum},
          {"grad_clip", c.grad_clip},
          {"batch_size", c.batch_size},
          {"demo_ratio", c.demo_ratio},
          {"eps_start", c.eps_start},
          {"eps_end", c.eps_end},
          {"eps_decay_episodes", c.eps_decay_episodes},
          {"target_sync_steps", c.target_sync_steps},
          {"max_episodes", c.max_episodes},
          {"eval_every_episodes", c.eval_every_episodes},
          {"eval_episodes", c.eval_episodes},
          {"warmup_transitions", c.warmup_transitions},
          {"replay_capacity", c.replay_capacity},
          {"hidden", c.hidden},
          {"seeds", c.seeds},
          {"variant", to_string(c.variant)},
          {"stop_at_success", c.stop_at_success ? Json(*c.stop_at_success) : Json(nullptr)}};
}

TrainConfig train_config_from_json(const Json& j, const TrainConfig& base) {
  TrainConfig c = base;
  Errors e;
  {
    Obj o(j, "", e);
    o.field("gamma", c.gamma);
    o.field("lr", c.lr);
    o.field("momentum", c.momentum);
    o.field("grad_clip", c.grad_clip);
    o.field("batch_size", c.batch_size);
    o.field("demo_ratio", c.demo_ratio);
    o.field("eps_start", c.eps_start);
    o.field("eps_end", c.eps_end);
    o.field("eps_decay_episodes", c.eps_decay_episodes);
    o.field("target_sync_steps", c.target_sync_steps);
    o.field("max_episodes", c.max_episodes);
    o.field("eval_every_episodes", c.eval_every_episodes);
    o.field("eval_episodes", c.eval_episodes);
    o.field("warmup_transitions", c.warmup_transitions);
    o.field("replay_capacity", c.replay_capacity);
    o.field("hidden", c.hidden);
    o.field("seeds", c.seeds);
    o.with("variant", [&](const Json& v, const std::string& p) {
      read_enum(v, p, c.variant, e, {{"plain", Variant::Plain}, {"ph", Variant::PH}, {"mh", Variant::MH}});
    });
    o.with("stop_at_success", [&](const Json& v, const std::string& p) {
      if (v.is_null()) {
        c.stop_at_success.reset();
        return;
      }
      double x = 0.0;
      if (read(v, p, x, e)) c.stop_at_success = x;
    });
  }
  if (e.empty()) e = validate(c);
  return finish(c, e);
}

Json to_json(const OperatorCommand& cmd) {
  return std::visit(
      [](const auto& c) -> Json {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, AddWaypoint>)
          return {{"type", "add_waypoint"}, {"uav_id", c.uav_id}, {"pos", vec(c.pos)}};
        else if constexpr (std::is_same_v<T, RemoveWaypoint>)
          return {{"type", "remove_waypoint"}, {"uav_id", c.uav_id}, {"index", c.index}};
        else
          return {{"type", "clear_waypoints"}, {"uav_id", c.uav_id}};
      },
      cmd);
}

OperatorCommand operator_command_from_json(const Json& j) {
  Errors e;
  std::string type;
  std::uint64_t uav = 0;
  Vec2 pos;
  std::uint64_t index = 0;
  bool has_uav = false, has_pos = false, has_index = false;
  {
    Obj o(j, "", e);
    if (const Json* v = o.get("type")) read(*v, "type", type, e);
    else if (o.ok()) e.push_back({"type", "missing"});
    if (const Json* v = o.get("uav_id")) has_uav = read(*v, "uav_id", uav, e);
    else if (o.ok()) e.push_back({"uav_id", "missing"});
    if (const Json* v = o.get("pos")) has_pos = read(*v, "pos", pos, e);
    if (const Json* v = o.get("index")) has_index = read(*v, "index", index, e);
  }
  if (!e.empty()) throw ConfigError(std::move(e));
  if (!has_uav) throw ConfigError(FieldError{"uav_id", "missing"});
  const auto id = static_cast<EntityId>(uav);
  if (type == "add_waypoint") {
    if (!has_pos) throw ConfigError(FieldError{"pos", "missing"});
    if (!pos.finite()) throw ConfigError(FieldError{"pos", "must be finite"});
    return AddWaypoint{id, pos};
  }
  if (type == "remove_waypoint") {
    if (!has_index) throw ConfigError(FieldError{"index", "missing"});
    return RemoveWaypoint{id, static_cast<std::size_t>(index)};
  }
  if (type == "clear_waypoints") return ClearWaypoints{id};
  throw ConfigError(FieldError{"type", "unknown command type '" + type + "'"});
}

Json to_json(const Event& ev) {
  return std::visit(
      [](const auto& x) -> Json {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Detection>)
          return {{"type", "detection"}, {"observer", x.observer}, {"target", x.target}, {"t", x.t}};
        else if constexpr (std::is_same_v<T, Neutralization>)
          return {{"type", "neutralization"}, {"by", x.by}, {"target", x.target}, {"t", x.t}};
        else if constexpr (std::is_same_v<T, Intrusion>)
          return {{"type", "intrusion"}, {"target", x.target}, {"t", x.t}};
        else
          return {{"type", "timeout"}, {"t", x.t}};
      },
      ev);
}

Event event_from_json(const Json& j) {
  try {
    const std::string type = j.at("type").get<std::string>();
    const int t = j.at("t").get<int>();
    if (type == "detection") return Detection{j.at("observer").get<EntityId>(), j.at("target").get<EntityId>(), t};
    if (type == "neutralization") return Neutralization{j.at("by").get<EntityId>(), j.at("target").get<EntityId>(), t};
    if (type == "intrusion") return Intrusion{j.at("target").get<EntityId>(), t};
    if (type == "timeout") return Timeout{t};
    throw ConfigError(FieldError{"type", "unknown event type '" + type + "'"});
  } catch (const Json::exception& ex) {
    throw ConfigError(FieldError{"event", ex.what()});
  }
}

Json to_json(const Outcome& o) { return {{"winner", to_string(o.winner)}, {"reason", to_string(o.reason)}}; }

Outcome outcome_from_json(const Json& j) {
  Errors e;
  Outcome o;
  {
    Obj r(j, "", e);
    r.with("winner", [&](const Json& v, const std::string& p) { read_enum(v, p, o.winner, e, kTeams); });
    r.with("reason", [&](const Json& v, const std::string& p) {
      read_enum(v, p, o.reason, e,
                {{"neutralized", Outcome::Reason::Neutralized},
                 {"intrusion", Outcome::Reason::Intrusion},
                 {"timeout", Outcome::Reason::Timeout}});
    });
  }
  return finish(o, e);
}

Json to_json(const ControlInput& c) { return {{"d_speed", c.d_speed}, {"d_heading", c.d_heading}}; }

ControlInput control_from_json(const Json& j) {
  Errors e;
  ControlInput c;
  {
    Obj o(j, "", e);
    o.field("d_speed", c.d_speed);
    o.field("d_heading", c.d_heading);
  }
  return finish(c, e);
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(FieldError{path.string(), "cannot open file"});
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& ex) {
    throw ConfigError(FieldError{path.string(), ex.what()});
  }
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

EpisodeConfig load_scenario(const std::string& name_or_path) {
  if (name_or_path == "default") return default_scenario();
  if (name_or_path == "reduced") return reduced_scenario();
  const Json j = read_json_file(name_or_path);
  // a file may name a built-in base and override parts of it
  EpisodeConfig base = default_scenario();
  Json body = j;
  if (j.is_object() && j.contains("base")) {
    const auto b = j["base"];
    if (b == "reduced") base = reduced_scenario();
    else if (b != "default") throw ConfigError(FieldError{"base", "expected default or reduced"});
    body.erase("base");
  }
  return episode_config_from_json(body, base);
}

Json checkpoint_to_json(const Checkpoint& c) {
  const auto& p = c.net.params();
  return {{"format", kCheckpointFormat},
          {"observation_layout", kObservationLayout},
          {"layout",
           {{"input", c.net.layout().input}, {"hidden", c.net.layout().hidden}, {"actions", c.net.layout().actions}}},
          {"seed", c.seed},
          {"episode", c.episode},
          {"success_rate", c.success_rate},
          {"params", std::vector<double>(p.data(), p.data() + p.size())}};
}

Checkpoint checkpoint_from_json(const Json& j) {
  try {
    if (j.at("format") != kCheckpointFormat)
      throw ConfigError(FieldError{"format", "unsupported checkpoint format " + j.at("format").dump()});
    if (j.at("observation_layout") != kObservationLayout)
      throw ConfigError(FieldError{"observation_layout", "unsupported observation layout " +
                                                             j.at("observation_layout").dump()});
    QNetLayout layout;
    layout.input = j.at("layout").at("input").get<int>();
    layout.hidden = j.at("layout").at("hidden").get<std::vector<int>>();
    layout.actions = j.at("layout").at("actions").get<int>();
    Checkpoint c{j.at("seed").get<std::uint64_t>(), j.at("episode").get<int>(),
                 j.at("success_rate").get<double>(), DuelingQNet(layout)};
    const auto params = j.at("params").get<std::vector<double>>();
    if (params.size() != layout.parameter_count())
      throw ConfigError(FieldError{"params", "expected " + std::to_string(layout.parameter_count()) +
                                                 " values, got " + std::to_string(params.size())});
    c.net.params() = Eigen::Map<const Eigen::VectorXd>(params.data(), static_cast<Eigen::Index>(params.size()));
    return c;
  } catch (const Json::exception& ex) {
    throw ConfigError(FieldError{"checkpoint", ex.what()});
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  write_file_atomic(path, checkpoint_to_json(c).dump());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_json(read_json_file(path));
}

void write_eval_csv(std::ostream& out, const std::vector<EvalPoint>& evals, bool header) {
  if (header) out << "seed,episode,success_rate\n";
  for (const auto& p : evals) {
    std::ostringstream rate;
    rate.precision(17);
    rate << p.success_rate;
    out << p.seed << ',' << p.episode << ',' << rate.str() << '\n';
  }
}

std::vector<EvalPoint> read_eval_csv(std::istream& in) {
  std::vector<EvalPoint> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("seed", 0) == 0) continue;
    std::istringstream row(line);
    EvalPoint p;
    char c1 = 0, c2 = 0;
    if (!(row >> p.seed >> c1 >> p.episode >> c2 >> p.success_rate) || c1 != ',' || c2 != ',')
      throw ConfigError(FieldError{"line " + std::to_string(lineno), "expected seed,episode,success_rate"});
    out.push_back(p);
  }
  return out;
}

}  // namespace hmt
