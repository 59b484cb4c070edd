#include "hmt/service.hpp"

#include <condition_variable>
#include <set>

namespace hmt {

const char* to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::Configured: return "configured";
    case SessionStatus::Running: return "running";
    case SessionStatus::Paused: return "paused";
    case SessionStatus::Finished: return "finished";
  }
  return "unknown";
}

Json error_body(const std::string& code, const std::string& message, const std::vector<FieldError>& fields) {
  Json f = Json::array();
  for (const auto& e : fields) f.push_back({{"field", e.field}, {"message", e.message}});
  return {{"schema", kWireSchema}, {"type", "error"}, {"error", code}, {"message", message}, {"fields", f}};
}

SessionSpec session_spec_from_json(const Json& body, const SessionOptions& defaults) {
  if (!body.is_object()) throw ConfigError(FieldError{"<root>", "expected object"});
  static const std::set<std::string> known{"base",      "config",     "bindings",  "blue_policy",
                                           "seed",      "steps_per_second", "decimation", "spectator"};
  std::vector<FieldError> errors;
  for (const auto& [k, v] : body.items())
    if (!known.contains(k)) errors.push_back({k, "unknown field"});
  if (!errors.empty()) throw ConfigError(std::move(errors));

  SessionSpec spec;
  spec.options = defaults;
  const std::string base = body.value("base", std::string("default"));
  EpisodeConfig cfg;
  if (base == "default") cfg = default_scenario();
  else if (base == "reduced") cfg = reduced_scenario();
  else throw ConfigError(FieldError{"base", "expected default or reduced"});
  spec.config = body.contains("config") ? episode_config_from_json(body["config"], cfg) : cfg;
  if (auto errs = validate(spec.config); !errs.empty()) throw ConfigError(std::move(errs));

  try {
    spec.seed = body.contains("seed") ? body["seed"].get<std::uint64_t>() : spec.config.seed;
    if (body.contains("bindings")) {
      for (const auto& b : body["bindings"])
        spec.bindings.push_back({b.at("uav_id").get<EntityId>(), b.at("actors").get<std::vector<std::string>>()});
    } else {
      spec.bindings = default_bindings(spec.config, body.value("blue_policy", std::string("heuristic_blue")));
    }
    spec.options.steps_per_second = body.value("steps_per_second", defaults.steps_per_second);
    spec.options.decimation = body.value("decimation", defaults.decimation);
    spec.options.spectator = body.value("spectator", defaults.spectator);
  } catch (const Json::exception& e) {
    throw ConfigError(FieldError{"session", e.what()});
  }
  if (spec.options.steps_per_second < 0.0)
    throw ConfigError(FieldError{"steps_per_second", "must be >= 0"});
  if (spec.options.decimation < 1) throw ConfigError(FieldError{"decimation", "must be >= 1"});
  return spec;
}

Json make_tick(const WorldState& world, const WaypointQueues& queues, const std::vector<Event>& events,
               bool spectator) {
  const EpisodeConfig& cfg = *world.config;
  Json uavs = Json::array();
  std::set<EntityId> perceived;
  for (const auto& u : world.uavs) {
    if (u.team != Team::Blue) continue;
    Json wp = Json::array();
    if (auto it = queues.find(u.id); it != queues.end())
      for (const auto& p : it->second.points) wp.push_back(to_json(p));
    Json sensors = Json::array();
    for (const auto& s : u.sensors)
      sensors.push_back({{"range", s.range}, {"fov_offset", s.fov_offset}, {"fov_width", s.fov_width}});
    Json j = to_json(snapshot(u));
    j["waypoints"] = wp;
    j["sensors"] = sensors;
    uavs.push_back(std::move(j));
    if (u.active())
      for (const auto& e : perceived_entities(world, u.id, cfg.blue.observability))
        if (e.team == Team::Red && e.status == UavStatus::Active) perceived.insert(e.id);
  }
  Json reds = Json::array();
  for (EntityId id : perceived) reds.push_back({{"id", id}, {"pos", to_json(world.uav(id).kin.pos)}});
  Json fixed = Json::array();
  for (const auto& f : world.fixed_sensors)
    fixed.push_back({{"id", f.id},
                     {"team", to_string(f.team)},
                     {"pos", to_json(f.pos)},
                     {"orientation", f.orientation},
                     {"range", f.sensor.range},
                     {"fov_offset", f.sensor.fov_offset},
                     {"fov_width", f.sensor.fov_width}});
  Json ev = Json::array();
  for (const auto& e : events) ev.push_back(to_json(e));
  Json tick{{"type", "tick"},
            {"schema", kWireSchema},
            {"t", world.t},
            {"uavs", uavs},
            {"perceived_reds", reds},
            {"fixed_sensors", fixed},
            {"zone", {{"center", to_json(world.zone.center)}, {"radius", world.zone.radius}}},
            {"map", {{"width", cfg.map_width}, {"height", cfg.map_height}}},
            {"events", ev},
            {"outcome", world.outcome ? to_json(*world.outcome) : Json(nullptr)},
            {"final", world.terminated()}};
  if (spectator) {
    Json truth = Json::array();
    for (const auto& u : world.uavs)
      if (u.team == Team::Red) truth.push_back(to_json(snapshot(u)));
    tick["red_truth"] = truth;
  }
  return tick;
}

// --- sessions -----------------------------------------------------------

struct SessionManager::Session {
  std::string id;
  SessionSpec spec;

  mutable std::mutex mu;
  mutable std::condition_variable cv;
  SessionStatus status = SessionStatus::Configured;
  int t = 0;
  std::optional<Outcome> outcome;
  std::string episode_id;
  std::string error;
  bool aborted = false;
  std::map<std::uint64_t, Listener> replies;  // by ticket

  // Tick delivery is serialized so every listener sees ticks in order.
  std::mutex delivery_mu;
  std::optional<Json> latest_tick;
  std::map<std::uint64_t, Listener> listeners;
  std::uint64_t next_listener = 1;

  CommandInbox inbox;
  std::thread thread;

  void broadcast(const Json& msg, bool is_tick) {
    std::lock_guard lock(delivery_mu);
    if (is_tick) latest_tick = msg;
    for (const auto& [h, l] : listeners) l(msg);
  }
};

SessionManager::SessionManager(Datastore* store, std::shared_ptr<const PolicyRegistry> policies,
                               SessionOptions defaults)
    : store_(store), policies_(std::move(policies)), defaults_(defaults) {
  if (!policies_) policies_ = std::make_shared<PolicyRegistry>();
}

SessionManager::~SessionManager() {
  std::vector<std::shared_ptr<Session>> all;
  {
    std::lock_guard lock(mu_);
    for (auto& [id, s] : sessions_) all.push_back(s);
  }
  for (auto& s : all) {
    s->inbox.abort();
    if (s->thread.joinable()) s->thread.join();
  }
}

std::shared_ptr<SessionManager::Session> SessionManager::get(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFound("no session '" + id + "'");
  return it->second;
}

std::string SessionManager::create(const SessionSpec& spec) {
  if (auto errs = validate(spec.config); !errs.empty()) throw ConfigError(std::move(errs));
  check_bindings(spec.config, spec.bindings, *policies_);
  auto s = std::make_shared<Session>();
  s->spec = spec;
  std::lock_guard lock(mu_);
  s->id = "s-" + std::to_string(next_id_++);
  sessions_[s->id] = s;
  return s->id;
}

void SessionManager::run(std::shared_ptr<Session> s) {
  RunOptions opt;
  opt.mode = EpisodeMode::Interactive;
  opt.inbox = &s->inbox;
  if (s->spec.options.steps_per_second > 0.0)
    opt.step_period = std::chrono::duration<double>(1.0 / s->spec.options.steps_per_second);
  const int decimation = s->spec.options.decimation;
  const bool spectator = s->spec.options.spectator;
  opt.on_start = [&](const WorldState& w, const WaypointQueues& q) { s->broadcast(make_tick(w, q, {}, spectator), true); };
  opt.on_step = [&](const StepRecord& rec, const WorldState& w, const WaypointQueues& q) {
    {
      std::lock_guard lock(s->mu);
      s->t = w.t;
    }
    if (w.t % decimation == 0 || w.terminated()) s->broadcast(make_tick(w, q, rec.events, spectator), true);
  };
  opt.on_command = [&](const CommandResult& r) {
    Listener reply;
    {
      std::lock_guard lock(s->mu);
      if (auto it = s->replies.find(r.ticket); it != s->replies.end()) {
        reply = std::move(it->second);
        s->replies.erase(it);
      }
    }
    Json msg;
    if (r.error) {
      msg = error_body(to_string(*r.error), "command rejected");
      msg["ticket"] = r.ticket;
      msg["step"] = r.step;
    } else {
      msg = {{"type", "ack"}, {"schema", kWireSchema}, {"ticket", r.ticket}, {"step", r.step}};
      s->broadcast({{"type", "command"}, {"schema", kWireSchema}, {"command", to_json(r.command)}, {"step", r.step}},
                   false);
    }
    if (reply) reply(msg);
  };

  std::string error;
  std::optional<EpisodeRecord> record;
  try {
    record = run_episode(s->spec.config, s->spec.seed, s->spec.bindings, *policies_, opt);
  } catch (const std::exception& e) {
    error = e.what();
  }
  std::string episode_id;
  if (record && store_) {
    try {
      episode_id = store_->write(*record);
    } catch (const std::exception& e) {
      error = std::string("datastore: ") + e.what();
    }
  }
  // commands still queued when the episode ended are never applied
  std::vector<Listener> orphans;
  {
    std::lock_guard lock(s->mu);
    for (auto& [ticket, l] : s->replies) orphans.push_back(std::move(l));
    s->replies.clear();
  }
  for (auto& l : orphans) l(error_body("state", "episode ended before the command was applied"));

  const bool aborted = record && !record->complete();
  if (aborted) {
    std::lock_guard lock(s->delivery_mu);
    if (s->latest_tick) {
      Json last = *s->latest_tick;
      last["final"] = true;
      last["aborted"] = true;
      for (const auto& [h, l] : s->listeners) l(last);
      s->latest_tick = last;
    }
  }
  std::lock_guard lock(s->mu);
  s->status = SessionStatus::Finished;
  s->aborted = aborted || s->aborted;
  s->error = error;
  s->episode_id = episode_id;
  if (record && record->footer) s->outcome = record->footer->outcome;
  s->cv.notify_all();
}

SessionStatus SessionManager::control(const std::string& id, const std::string& action) {
  auto s = get(id);
  std::unique_lock lock(s->mu);
  const SessionStatus st = s->status;
  auto illegal = [&] {
    return StateError("cannot " + action + " a " + to_string(st) + " session");
  };
  if (action == "start") {
    if (st != SessionStatus::Configured) throw illegal();
    s->status = SessionStatus::Running;
    s->thread = std::thread([this, s] { run(s); });
  } else if (action == "pause") {
    if (st != SessionStatus::Running) throw illegal();
    s->inbox.pause();
    s->status = SessionStatus::Paused;
  } else if (action == "resume") {
    if (st != SessionStatus::Paused) throw illegal();
    s->inbox.resume();
    s->status = SessionStatus::Running;
  } else if (action == "abort") {
    if (st == SessionStatus::Finished) return st;
    s->aborted = true;
    s->inbox.abort();
    if (st == SessionStatus::Configured) {
      s->status = SessionStatus::Finished;
      s->cv.notify_all();
    } else {
      s->cv.wait(lock, [&] { return s->status == SessionStatus::Finished; });
    }
  } else {
    throw ConfigError(FieldError{"action", "expected start, pause, resume or abort, got '" + action + "'"});
  }
  return s->status;
}

std::uint64_t SessionManager::submit(const std::string& id, const OperatorCommand& cmd, Listener reply) {
  auto s = get(id);
  std::lock_guard lock(s->mu);
  if (s->status != SessionStatus::Running && s->status != SessionStatus::Paused)
    throw StateError(std::string("commands need a running or paused session, this one is ") + to_string(s->status));
  const std::uint64_t ticket = s->inbox.submit(cmd);
  if (reply) s->replies[ticket] = std::move(reply);
  return ticket;
}

Json SessionManager::describe(const std::string& id) const {
  auto s = get(id);
  std::lock_guard lock(s->mu);
  Json bindings = Json::array();
  for (const auto& b : s->spec.bindings) bindings.push_back({{"uav_id", b.uav_id}, {"actors", b.actors}});
  return {{"schema", kWireSchema},
          {"session_id", s->id},
          {"status", to_string(s->status)},
          {"t", s->t},
          {"seed", s->spec.seed},
          {"config", to_json(s->spec.config)},
          {"bindings", bindings},
          {"steps_per_second", s->spec.options.steps_per_second},
          {"outcome", s->outcome ? to_json(*s->outcome) : Json(nullptr)},
          {"aborted", s->aborted},
          {"episode_id", s->episode_id.empty() ? Json(nullptr) : Json(s->episode_id)},
          {"error", s->error.empty() ? Json(nullptr) : Json(s->error)}};
}

SessionStatus SessionManager::status(const std::string& id) const {
  auto s = get(id);
  std::lock_guard lock(s->mu);
  return s->status;
}

std::uint64_t SessionManager::subscribe(const std::string& id, Listener listener) {
  auto s = get(id);
  std::lock_guard lock(s->delivery_mu);
  const std::uint64_t h = s->next_listener++;
  if (s->latest_tick) listener(*s->latest_tick);
  s->listeners[h] = std::move(listener);
  return h;
}

void SessionManager::unsubscribe(const std::string& id, std::uint64_t handle) {
  std::shared_ptr<Session> s;
  try {
    s = get(id);
  } catch (const NotFound&) {
    return;
  }
  std::lock_guard lock(s->delivery_mu);
  s->listeners.erase(handle);
}

void SessionManager::wait(const std::string& id) const {
  auto s = get(id);
  std::unique_lock lock(s->mu);
  s->cv.wait(lock, [&] { return s->status == SessionStatus::Finished; });
}

std::vector<std::string> SessionManager::ids() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, s] : sessions_) out.push_back(id);
  return out;
}

// --- routing ------------------------------------------------------------

namespace {

std::vector<std::string> split_path(const std::string& target) {
  std::string path = target.substr(0, target.find('?'));
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (pos <= path.size()) {
    const std::size_t next = path.find('/', pos);
    const std::string part = path.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
    if (!part.empty()) parts.push_back(part);
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return parts;
}

Json parse_body(const std::string& body) {
  if (body.empty()) return Json::object();
  return Json::parse(body);
}

Json record_json(const EpisodeRecord& r) {
  Json steps = Json::array();
  for (const auto& s : r.steps) steps.push_back(to_json(s));
  return {{"schema", kWireSchema},
          {"header", to_json(r.header)},
          {"steps", steps},
          {"footer", r.footer ? to_json(*r.footer) : Json(nullptr)}};
}

}  // namespace

ApiResponse route(SessionManager& sm, const std::string& method, const std::string& target,
                  const std::string& body) {
  const auto parts = split_path(target);
  auto method_not_allowed = [&] { return ApiResponse{405, error_body("method_not_allowed", method + " " + target)}; };
  try {
    if (parts.size() >= 1 && parts[0] == "sessions") {
      if (parts.size() == 1) {
        if (method == "POST") {
          const std::string id = sm.create(session_spec_from_json(parse_body(body), sm.defaults()));
          return {201, sm.describe(id)};
        }
        if (method == "GET") {
          Json list = Json::array();
          for (const auto& id : sm.ids()) list.push_back({{"session_id", id}, {"status", to_string(sm.status(id))}});
          return {200, {{"schema", kWireSchema}, {"sessions", list}}};
        }
        return method_not_allowed();
      }
      const std::string& id = parts[1];
      if (parts.size() == 2) {
        if (method != "GET") return method_not_allowed();
        return {200, sm.describe(id)};
      }
      if (parts.size() == 3 && parts[2] == "control") {
        if (method != "POST") return method_not_allowed();
        const Json j = parse_body(body);
        if (!j.contains("action") || !j["action"].is_string())
          throw ConfigError(FieldError{"action", "expected start, pause, resume or abort"});
        const SessionStatus st = sm.control(id, j["action"].get<std::string>());
        return {200, {{"schema", kWireSchema}, {"session_id", id}, {"status", to_string(st)}}};
      }
      if (parts.size() == 3 && parts[2] == "commands") {
        if (method != "POST") return method_not_allowed();
        const auto ticket = sm.submit(id, operator_command_from_json(parse_body(body)));
        return {202, {{"schema", kWireSchema}, {"session_id", id}, {"ticket", ticket}}};
      }
    }
    if (parts.size() >= 1 && parts[0] == "episodes") {
      if (method != "GET") return method_not_allowed();
      Datastore* store = sm.datastore();
      if (parts.size() == 1) {
        Json list = Json::array();
        if (store)
          for (const auto& e : store->list()) list.push_back(to_json(e));
        return {200, {{"schema", kWireSchema}, {"episodes", list}}};
      }
      if (parts.size() == 2) {
        if (!store || !store->find(parts[1])) throw NotFound("no episode '" + parts[1] + "'");
        return {200, record_json(store->read(parts[1]))};
      }
    }
    return {404, error_body("not_found", "no route for " + method + " " + target)};
  } catch (const Json::parse_error& e) {
    return {400, error_body("bad_json", e.what())};
  } catch (const ConfigError& e) {
    return {400, error_body("invalid_config", e.what(), e.fields())};
  } catch (const NotFound& e) {
    return {404, error_body("not_found", e.what())};
  } catch (const StateError& e) {
    return {409, error_body("state", e.what())};
  }
}

std::optional<Json> handle_stream_message(SessionManager& sm, const std::string& session_id,
                                          const std::string& text, const SessionManager::Listener& reply) {
  Json ref;
  try {
    const Json msg = Json::parse(text);
    if (msg.contains("ref")) ref = msg["ref"];
    if (msg.value("type", std::string()) != "command")
      throw ConfigError(FieldError{"type", "clients may only send command messages"});
    if (!msg.contains("command")) throw ConfigError(FieldError{"command", "missing"});
    const OperatorCommand cmd = operator_command_from_json(msg["command"]);
    sm.submit(session_id, cmd, [reply, ref](const Json& m) {
      Json out = m;
      if (!ref.is_null()) out["ref"] = ref;
      reply(out);
    });
    return std::nullopt;
  } catch (const Json::parse_error& e) {
    Json out = error_body("bad_json", e.what());
    return out;
  } catch (const ConfigError& e) {
    Json out = error_body("invalid_command", e.what(), e.fields());
    if (!ref.is_null()) out["ref"] = ref;
    return out;
  } catch (const StateError& e) {
    Json out = error_body("state", e.what());
    if (!ref.is_null()) out["ref"] = ref;
    return out;
  } catch (const NotFound& e) {
    return error_body("not_found", e.what());
  }
}

}  // namespace hmt
