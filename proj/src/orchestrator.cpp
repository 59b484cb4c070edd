#include "hmt/orchestrator.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <thread>

#include "hmt/learner/train.hpp"
#include "hmt/parallel.hpp"

#ifndef HMT_VERSION
#define HMT_VERSION "0.0.0"
#endif

namespace hmt {

std::string_view software_version() { return HMT_VERSION; }

namespace {

constexpr std::string_view kPolicyPrefix = "policy:";

bool is_policy(const std::string& name) { return name.rfind(kPolicyPrefix, 0) == 0; }
std::string policy_id(const std::string& name) { return name.substr(kPolicyPrefix.size()); }

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex;
  s.width(16);
  s.fill('0');
  s << v;
  return s.str();
}

std::string major_version(std::string_view v) { return std::string(v.substr(0, v.find('.'))); }

}  // namespace

std::vector<ActorBinding> default_bindings(const EpisodeConfig& config, const std::string& blue_policy) {
  std::vector<ActorBinding> out;
  EntityId id = 0;
  for (int i = 0; i < config.blue.count; ++i) out.push_back({id++, {"waypoint", blue_policy}});
  for (int i = 0; i < config.red.count; ++i) out.push_back({id++, {"scripted_red"}});
  return out;
}

void PolicyRegistry::add(const std::string& id, std::shared_ptr<const DuelingQNet> net) {
  std::lock_guard lock(mu_);
  nets_[id] = std::move(net);
}

std::shared_ptr<const DuelingQNet> PolicyRegistry::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  if (auto it = nets_.find(id); it != nets_.end()) return it->second;
  std::error_code ec;
  if (!std::filesystem::is_regular_file(id, ec)) return nullptr;
  auto net = std::make_shared<const DuelingQNet>(load_checkpoint(id).net);
  nets_[id] = net;
  return net;
}

std::vector<std::string> PolicyRegistry::ids() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [k, v] : nets_) out.push_back(k);
  return out;
}

void check_bindings(const EpisodeConfig& config, const std::vector<ActorBinding>& bindings,
                    const PolicyRegistry& policies) {
  std::vector<FieldError> errors;
  const auto n_uav = static_cast<EntityId>(config.blue.count + config.red.count);
  const auto team_of = [&](EntityId id) {
    return id < static_cast<EntityId>(config.blue.count) ? Team::Blue : Team::Red;
  };
  std::vector<int> seen(n_uav, 0);
  for (std::size_t i = 0; i < bindings.size(); ++i) {
    const auto& b = bindings[i];
    const std::string path = "bindings[" + std::to_string(i) + "]";
    if (b.uav_id >= n_uav) {
      errors.push_back({path + ".uav_id", "no UAV with id " + std::to_string(b.uav_id)});
      continue;
    }
    if (seen[b.uav_id]++) errors.push_back({path + ".uav_id", "UAV " + std::to_string(b.uav_id) + " bound twice"});
    if (b.actors.empty()) errors.push_back({path + ".actors", "must not be empty"});
    const Team team = team_of(b.uav_id);
    for (std::size_t j = 0; j < b.actors.size(); ++j) {
      const std::string& name = b.actors[j];
      const std::string apath = path + ".actors[" + std::to_string(j) + "]";
      auto need_team = [&](Team t) {
        if (team != t)
          errors.push_back({apath, "'" + name + "' cannot drive a " + to_string(team) + " UAV"});
      };
      if (name == "waypoint" || name == "heuristic_blue") {
        need_team(Team::Blue);
      } else if (name == "scripted_red") {
        need_team(Team::Red);
      } else if (is_policy(name)) {
        need_team(Team::Blue);
        std::shared_ptr<const DuelingQNet> net;
        try {
          net = policies.find(policy_id(name));
        } catch (const ConfigError& e) {
          errors.push_back({apath, std::string("cannot load policy: ") + e.what()});
          continue;
        }
        if (!net) {
          errors.push_back({apath, "unknown policy '" + policy_id(name) + "'"});
        } else if (net->layout().input != observation_length(config)) {
          errors.push_back({apath, "policy expects observations of length " +
                                       std::to_string(net->layout().input) + ", scenario has " +
                                       std::to_string(observation_length(config))});
        }
      } else {
        errors.push_back({apath, "unknown actor '" + name + "'"});
      }
    }
  }
  for (EntityId id = 0; id < n_uav; ++id)
    if (!seen[id]) errors.push_back({"bindings", "UAV " + std::to_string(id) + " has no binding"});
  if (!errors.empty()) throw ConfigError(std::move(errors));
}

// --- commands -----------------------------------------------------------

std::uint64_t CommandInbox::submit(OperatorCommand cmd) {
  std::lock_guard lock(mu_);
  const std::uint64_t ticket = next_ticket_++;
  queue_.push_back({ticket, std::move(cmd)});
  return ticket;
}

void CommandInbox::pause() {
  std::lock_guard lock(mu_);
  paused_ = true;
  cv_.notify_all();
}

void CommandInbox::resume() {
  std::lock_guard lock(mu_);
  paused_ = false;
  cv_.notify_all();
}

void CommandInbox::abort() {
  std::lock_guard lock(mu_);
  aborted_ = true;
  cv_.notify_all();
}

bool CommandInbox::paused() const {
  std::lock_guard lock(mu_);
  return paused_;
}

bool CommandInbox::aborted() const {
  std::lock_guard lock(mu_);
  return aborted_;
}

std::vector<CommandInbox::Item> CommandInbox::drain() {
  std::lock_guard lock(mu_);
  std::vector<Item> out(std::make_move_iterator(queue_.begin()), std::make_move_iterator(queue_.end()));
  queue_.clear();
  return out;
}

std::optional<double> CommandInbox::wait_runnable() {
  std::unique_lock lock(mu_);
  const auto start = std::chrono::steady_clock::now();
  cv_.wait(lock, [&] { return aborted_ || !paused_; });
  if (aborted_) return std::nullopt;
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

bool CommandInbox::sleep_until(std::chrono::steady_clock::time_point deadline) {
  std::unique_lock lock(mu_);
  cv_.wait_until(lock, deadline, [&] { return aborted_ || paused_; });
  return !aborted_;
}

// --- runner -------------------------------------------------------------

namespace {

std::unique_ptr<Actor> make_actor(const std::string& name, EntityId uav, std::uint64_t seed,
                                  const PolicyRegistry& policies) {
  if (name == "waypoint") return std::make_unique<WaypointActor>();
  if (name == "heuristic_blue") return std::make_unique<HeuristicBlueActor>();
  if (name == "scripted_red") return std::make_unique<ScriptedRedActor>(red_actor_stream(seed, uav));
  if (is_policy(name)) return std::make_unique<PolicyActor>(policies.find(policy_id(name)), name);
  throw ConfigError(FieldError{"actors", "unknown actor '" + name + "'"});
}

std::string provenance_of(const ActorBinding& b) {
  for (const auto& a : b.actors) {
    if (is_policy(a)) return "policy";
    if (a == "heuristic_blue") return "heuristic";
    if (a == "scripted_red") return "scripted";
  }
  return "human";  // waypoint-only: nothing moves the UAV but the operator
}

std::vector<EntitySnapshot> snapshots(const WorldState& w) {
  std::vector<EntitySnapshot> out;
  out.reserve(w.uavs.size());
  for (const auto& u : w.uavs) out.push_back(snapshot(u));
  return out;
}

}  // namespace

EpisodeRecord run_episode(const EpisodeConfig& scenario, std::uint64_t seed,
                          const std::vector<ActorBinding>& bindings, const PolicyRegistry& policies,
                          const RunOptions& opt) {
  check_bindings(scenario, bindings, policies);
  const auto wall_start = std::chrono::steady_clock::now();
  WorldState world = init_world(scenario, seed);
  const EpisodeConfig& cfg = *world.config;

  std::vector<ActorBinding> sorted = bindings;
  std::sort(sorted.begin(), sorted.end(),
            [](const ActorBinding& a, const ActorBinding& b) { return a.uav_id < b.uav_id; });
  std::vector<ControlStack> stacks;
  for (const auto& b : sorted) {
    std::vector<std::unique_ptr<Actor>> actors;
    for (const auto& name : b.actors) actors.push_back(make_actor(name, b.uav_id, seed, policies));
    stacks.emplace_back(b.uav_id, std::move(actors));
  }

  EpisodeRecord rec;
  rec.header.software_version = std::string(software_version());
  rec.header.episode_id = opt.episode_id;
  rec.header.seed = seed;
  rec.header.config = cfg;
  rec.header.bindings = sorted;
  for (const auto& b : sorted)
    for (const auto& a : b.actors)
      if (is_policy(a)) rec.header.policies[policy_id(a)] = hex(policies.find(policy_id(a))->hash());
  rec.header.initial_state = snapshots(world);

  WaypointQueues queues;
  for (const auto& u : world.uavs) queues[u.id].arrival_tolerance = cfg.agents.arrival_tolerance;
  std::set<EntityId> operated;
  std::vector<PauseSpan> pauses;
  const bool interactive = opt.mode == EpisodeMode::Interactive && opt.inbox;
  const auto period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(opt.step_period);
  auto deadline = std::chrono::steady_clock::now();
  if (opt.on_start) opt.on_start(world, queues);

  while (!world.terminated()) {
    StepRecord s;
    s.t = world.t;

    if (interactive) {
      if (opt.inbox->paused()) {
        const auto waited = opt.inbox->wait_runnable();
        if (!waited) return rec;
        pauses.push_back({world.t, *waited});
        deadline = std::chrono::steady_clock::now();
      } else if (opt.inbox->aborted()) {
        return rec;
      }
      if (period.count() > 0) {
        deadline += period;
        if (!opt.inbox->sleep_until(deadline)) return rec;
        if (opt.inbox->paused()) continue;  // paused mid-wait: nothing happened this step
      }
      for (auto& item : opt.inbox->drain()) {
        const auto err = apply_operator_command(world, queues, item.command);
        if (!err) {
          s.commands.push_back(item.command);
          operated.insert(command_target(item.command));
        }
        if (opt.on_command) opt.on_command({item.ticket, item.command, world.t, err});
      }
    }
    if (auto it = opt.scheduled.find(world.t); it != opt.scheduled.end()) {
      for (const auto& cmd : it->second) {
        if (const auto err = apply_operator_command(world, queues, cmd))
          throw IntegrityError(world.t, std::string("recorded command rejected: ") + to_string(*err));
        s.commands.push_back(cmd);
        operated.insert(command_target(cmd));
      }
    }

    ControlMap controls;
    for (auto& stack : stacks) {
      const Uav& u = world.uav(stack.uav());
      if (!u.active()) continue;
      UavStep us;
      us.id = u.id;
      if (u.team == Team::Blue) us.frame = encode_frame(world, u.id, cfg.blue.observability);
      ActorContext ctx{world, u.id, queues[u.id]};
      const ResolvedControl rc = stack.resolve(ctx);
      us.control = rc.control;
      us.action = rc.action;
      us.driver = rc.driver;
      controls[u.id] = rc.control;
      s.uavs.push_back(std::move(us));
    }

    const WorldState before = world;
    const StepResult result = step(world, controls);
    for (auto& us : s.uavs)
      if (world.uav(us.id).team == Team::Blue) us.reward = compute_reward(before, world, us.id, result.outcome);
    s.events = result.events;
    s.state = snapshots(world);
    rec.steps.push_back(std::move(s));
    if (opt.on_step) opt.on_step(rec.steps.back(), world, queues);
  }

  EpisodeFooter f;
  f.outcome = *world.outcome;
  f.steps = static_cast<int>(rec.steps.size());
  f.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  f.pauses = std::move(pauses);
  for (const auto& b : sorted) {
    if (world.uav(b.uav_id).team != Team::Blue) continue;
    f.provenance[b.uav_id] = operated.contains(b.uav_id) ? "human" : provenance_of(b);
    f.final_frames[b.uav_id] = encode_frame(world, b.uav_id, cfg.blue.observability);
  }
  rec.footer = std::move(f);
  return rec;
}

double BatchResult::success_rate() const {
  int done = 0, won = 0;
  for (const auto& r : records) {
    if (!r || !r->complete()) continue;
    ++done;
    won += r->blue_won();
  }
  return done ? static_cast<double>(won) / done : 0.0;
}

BatchResult run_batch(const EpisodeConfig& scenario, const std::vector<ActorBinding>& bindings,
                      const PolicyRegistry& policies, int n, int parallelism, std::uint64_t base_seed) {
  if (n < 1) throw UsageError("run_batch: n must be >= 1");
  check_bindings(scenario, bindings, policies);
  BatchResult out;
  out.records.resize(static_cast<std::size_t>(n));
  std::vector<std::string> errors(static_cast<std::size_t>(n));
  parallel_for(out.records.size(), parallelism, [&](std::size_t i) {
    try {
      out.records[i] = run_episode(scenario, derive_seed(base_seed, i), bindings, policies);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty()) out.errors.emplace_back(i, errors[i]);
  return out;
}

// --- comparison and replay ----------------------------------------------

namespace {

EpisodeRecord canonical(EpisodeRecord r) {
  r.header.episode_id.clear();
  r.header.software_version.clear();
  if (r.footer) {
    r.footer->wall_time = 0.0;
    r.footer->pauses.clear();
  }
  return r;
}

std::string describe_step_difference(const StepRecord& a, const StepRecord& b) {
  if (a.t != b.t) return "time index differs";
  if (a.commands != b.commands) return "operator commands differ";
  if (a.uavs.size() != b.uavs.size()) return "set of acting UAVs differs";
  for (std::size_t i = 0; i < a.uavs.size(); ++i) {
    const auto& x = a.uavs[i];
    const auto& y = b.uavs[i];
    const std::string who = "uav " + std::to_string(x.id) + ": ";
    if (x.id != y.id) return "set of acting UAVs differs";
    if (x.frame != y.frame) return who + "observation differs";
    if (x.action != y.action) return who + "action differs";
    if (x.driver != y.driver) return who + "driving actor differs";
    if (x.control != y.control) return who + "control differs";
    if (x.reward != y.reward) return who + "reward differs";
  }
  if (a.state != b.state) return "world state differs";
  if (a.events != b.events) return "events differ";
  return "records differ";
}

}  // namespace

bool same_episode(const EpisodeRecord& a, const EpisodeRecord& b) { return canonical(a) == canonical(b); }

EpisodeRecord replay_episode(const EpisodeRecord& record, const PolicyRegistry& policies) {
  const auto& h = record.header;
  if (h.format != kRecordFormat) throw IncompatibleRecord("unsupported record format '" + h.format + "'");
  if (h.observation_layout != kObservationLayout)
    throw IncompatibleRecord("unsupported observation layout '" + h.observation_layout + "'");
  if (major_version(h.software_version) != major_version(software_version()))
    throw IncompatibleRecord("record written by software " + h.software_version + ", this is " +
                             std::string(software_version()));
  if (!record.complete()) throw IncompatibleRecord("partial episode cannot be replayed");
  for (const auto& [id, hash] : h.policies) {
    const auto net = policies.find(id);
    if (!net) throw IncompatibleRecord("policy '" + id + "' is not available");
    if (hex(net->hash()) != hash)
      throw IncompatibleRecord("policy '" + id + "' has parameters " + hex(net->hash()) + ", record used " + hash);
  }

  RunOptions opt;
  opt.episode_id = h.episode_id;
  for (const auto& s : record.steps)
    if (!s.commands.empty()) opt.scheduled[s.t] = s.commands;
  EpisodeRecord out = run_episode(h.config, h.seed, h.bindings, policies, opt);

  if (out.header.initial_state != h.initial_state) throw IntegrityError(0, "initial state differs");
  const std::size_t n = std::min(out.steps.size(), record.steps.size());
  for (std::size_t k = 0; k < n; ++k)
    if (out.steps[k] != record.steps[k])
      throw IntegrityError(record.steps[k].t, describe_step_difference(record.steps[k], out.steps[k]));
  if (out.steps.size() != record.steps.size())
    throw IntegrityError(static_cast<int>(n), "episode length differs (" + std::to_string(record.steps.size()) +
                                                  " recorded, " + std::to_string(out.steps.size()) + " replayed)");
  if (!same_episode(out, record)) throw IntegrityError(static_cast<int>(n), "header or footer differs");
  return out;
}

// --- demonstrations -----------------------------------------------------

DemoStore build_demo_store(const std::vector<EpisodeRecord>& records, const DemoFilter& filter) {
  std::vector<Transition> out;
  for (const auto& rec : records) {
    if (!rec.complete()) continue;
    if (filter.winners_only && !rec.blue_won()) continue;
    const auto& footer = *rec.footer;
    const bool terminal_end = footer.outcome.reason != Outcome::Reason::Timeout;
    for (const auto& [uav, tag] : footer.provenance) {
      if (!filter.provenance.contains(tag)) continue;
      const TransitionSource source = tag == "human" ? TransitionSource::DemoHuman : TransitionSource::DemoAgent;
      const UavSpec& spec = uav < static_cast<EntityId>(rec.header.config.blue.count) ? rec.header.config.blue.spec
                                                                                      : rec.header.config.red.spec;
      FrameHistory history;
      for (std::size_t k = 0; k < rec.steps.size(); ++k) {
        const auto& st = rec.steps[k];
        const auto it = std::find_if(st.uavs.begin(), st.uavs.end(), [&](const UavStep& u) { return u.id == uav; });
        if (it == st.uavs.end()) break;
        history.push(it->frame);
        Transition t;
        t.obs = history.stacked();
        t.action = it->action ? *it->action : encode_action(it->control, spec);
        t.reward = it->reward.value_or(0.0);
        t.source = source;
        const bool last = k + 1 == rec.steps.size();
        FrameHistory next = history;
        if (last) {
          next.push(footer.final_frames.at(uav));
          t.terminal = terminal_end;
        } else {
          const auto& ns = rec.steps[k + 1];
          const auto nit =
              std::find_if(ns.uavs.begin(), ns.uavs.end(), [&](const UavStep& u) { return u.id == uav; });
          if (nit == ns.uavs.end()) break;
          next.push(nit->frame);
        }
        t.next_obs = next.stacked();
        out.push_back(std::move(t));
      }
    }
  }
  if (out.empty()) throw ConfigError(FieldError{"demos", "no transitions left after filtering"});
  return DemoStore(std::move(out));
}

// --- serialization ------------------------------------------------------

namespace {

Json opt_json(const std::optional<int>& v) { return v ? Json(*v) : Json(nullptr); }

Json frame_json(const ObservationFrame& f) { return Json(f); }

ObservationFrame frame_from(const Json& j) { return j.get<ObservationFrame>(); }

EntitySnapshot snapshot_from(const Json& j) {
  EntitySnapshot e;
  e.id = j.at("id").get<EntityId>();
  e.team = parse_team(j.at("team").get<std::string>());
  e.pos = {j.at("pos").at(0).get<double>(), j.at("pos").at(1).get<double>()};
  e.heading = j.at("heading").get<double>();
  e.speed = j.at("speed").get<double>();
  const auto status = j.at("status").get<std::string>();
  if (status == "active") e.status = UavStatus::Active;
  else if (status == "neutralized") e.status = UavStatus::Neutralized;
  else throw ConfigError(FieldError{"status", "unknown status '" + status + "'"});
  return e;
}

}  // namespace

Json to_json(const EntitySnapshot& e) {
  return {{"id", e.id},
          {"team", to_string(e.team)},
          {"pos", to_json(e.pos)},
          {"heading", e.heading},
          {"speed", e.speed},
          {"status", e.status == UavStatus::Active ? "active" : "neutralized"}};
}

Json to_json(const StepRecord& s) {
  Json uavs = Json::array();
  for (const auto& u : s.uavs) {
    Json j{{"id", u.id}, {"control", to_json(u.control)}, {"action", opt_json(u.action)},
           {"driver", u.driver ? Json(*u.driver) : Json(nullptr)},
           {"reward", u.reward ? Json(*u.reward) : Json(nullptr)}};
    if (!u.frame.empty()) j["frame"] = frame_json(u.frame);
    uavs.push_back(std::move(j));
  }
  Json commands = Json::array();
  for (const auto& c : s.commands) commands.push_back(to_json(c));
  Json state = Json::array();
  for (const auto& e : s.state) state.push_back(to_json(e));
  Json events = Json::array();
  for (const auto& e : s.events) events.push_back(to_json(e));
  return {{"type", "step"}, {"t", s.t}, {"commands", commands}, {"uavs", uavs}, {"state", state}, {"events", events}};
}

Json to_json(const EpisodeHeader& h) {
  Json bindings = Json::array();
  for (const auto& b : h.bindings) bindings.push_back({{"uav_id", b.uav_id}, {"actors", b.actors}});
  Json initial = Json::array();
  for (const auto& e : h.initial_state) initial.push_back(to_json(e));
  return {{"type", "header"},
          {"format", h.format},
          {"software_version", h.software_version},
          {"observation_layout", h.observation_layout},
          {"episode_id", h.episode_id},
          {"seed", h.seed},
          {"config", to_json(h.config)},
          {"bindings", bindings},
          {"policies", h.policies},
          {"initial_state", initial}};
}

Json to_json(const EpisodeFooter& f) {
  Json pauses = Json::array();
  for (const auto& p : f.pauses) pauses.push_back({{"at_step", p.at_step}, {"wall_seconds", p.wall_seconds}});
  Json provenance = Json::object();
  for (const auto& [id, tag] : f.provenance) provenance[std::to_string(id)] = tag;
  Json frames = Json::object();
  for (const auto& [id, fr] : f.final_frames) frames[std::to_string(id)] = frame_json(fr);
  return {{"type", "footer"},       {"outcome", to_json(f.outcome)}, {"steps", f.steps},
          {"wall_time", f.wall_time}, {"pauses", pauses},              {"provenance", provenance},
          {"final_frames", frames}};
}

std::string to_ndjson(const EpisodeRecord& r) {
  std::string out = to_json(r.header).dump();
  out += '\n';
  for (const auto& s : r.steps) {
    out += to_json(s).dump();
    out += '\n';
  }
  if (r.footer) {
    out += to_json(*r.footer).dump();
    out += '\n';
  }
  return out;
}

namespace {

EpisodeHeader header_from(const Json& j) {
  EpisodeHeader h;
  h.format = j.at("format").get<std::string>();
  h.software_version = j.at("software_version").get<std::string>();
  h.observation_layout = j.at("observation_layout").get<std::string>();
  if (h.format != kRecordFormat) throw IncompatibleRecord("unsupported record format '" + h.format + "'");
  h.episode_id = j.at("episode_id").get<std::string>();
  h.seed = j.at("seed").get<std::uint64_t>();
  h.config = episode_config_from_json(j.at("config"));
  for (const auto& b : j.at("bindings"))
    h.bindings.push_back({b.at("uav_id").get<EntityId>(), b.at("actors").get<std::vector<std::string>>()});
  h.policies = j.at("policies").get<std::map<std::string, std::string>>();
  for (const auto& e : j.at("initial_state")) h.initial_state.push_back(snapshot_from(e));
  return h;
}

StepRecord step_from(const Json& j) {
  StepRecord s;
  s.t = j.at("t").get<int>();
  for (const auto& c : j.at("commands")) s.commands.push_back(operator_command_from_json(c));
  for (const auto& u : j.at("uavs")) {
    UavStep us;
    us.id = u.at("id").get<EntityId>();
    us.control = control_from_json(u.at("control"));
    if (!u.at("action").is_null()) us.action = u.at("action").get<int>();
    if (!u.at("driver").is_null()) us.driver = u.at("driver").get<std::size_t>();
    if (!u.at("reward").is_null()) us.reward = u.at("reward").get<double>();
    if (u.contains("frame")) us.frame = frame_from(u.at("frame"));
    s.uavs.push_back(std::move(us));
  }
  for (const auto& e : j.at("state")) s.state.push_back(snapshot_from(e));
  for (const auto& e : j.at("events")) s.events.push_back(event_from_json(e));
  return s;
}

EpisodeFooter footer_from(const Json& j) {
  EpisodeFooter f;
  f.outcome = outcome_from_json(j.at("outcome"));
  f.steps = j.at("steps").get<int>();
  f.wall_time = j.at("wall_time").get<double>();
  for (const auto& p : j.at("pauses")) f.pauses.push_back({p.at("at_step").get<int>(), p.at("wall_seconds").get<double>()});
  for (const auto& [k, v] : j.at("provenance").items())
    f.provenance[static_cast<EntityId>(std::stoul(k))] = v.get<std::string>();
  for (const auto& [k, v] : j.at("final_frames").items())
    f.final_frames[static_cast<EntityId>(std::stoul(k))] = frame_from(v);
  return f;
}

}  // namespace

EpisodeRecord parse_ndjson(std::string_view text) {
  EpisodeRecord r;
  bool have_header = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no);
    try {
      const Json j = Json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (r.footer) throw ConfigError(FieldError{where, "content after footer"});
      if (type == "header") {
        if (have_header) throw ConfigError(FieldError{where, "second header"});
        r.header = header_from(j);
        have_header = true;
      } else if (!have_header) {
        throw ConfigError(FieldError{where, "record must start with a header"});
      } else if (type == "step") {
        r.steps.push_back(step_from(j));
      } else if (type == "footer") {
        r.footer = footer_from(j);
      } else {
        throw ConfigError(FieldError{where, "unknown line type '" + type + "'"});
      }
    } catch (const Json::exception& e) {
      throw ConfigError(FieldError{where, e.what()});
    }
  }
  if (!have_header) throw ConfigError(FieldError{"record", "empty episode file"});
  return r;
}

EpisodeRecord read_episode_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(FieldError{path.string(), "cannot open episode file"});
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_ndjson(buf.str());
}

// --- datastore ----------------------------------------------------------

Json to_json(const Datastore::Entry& e) {
  return {{"id", e.id},
          {"file", e.file},
          {"complete", e.complete},
          {"seed", e.seed},
          {"steps", e.steps},
          {"outcome", e.outcome ? to_json(*e.outcome) : Json(nullptr)}};
}

namespace {

Datastore::Entry entry_from(const Json& j) {
  Datastore::Entry e;
  e.id = j.at("id").get<std::string>();
  e.file = j.at("file").get<std::string>();
  e.complete = j.at("complete").get<bool>();
  e.seed = j.at("seed").get<std::uint64_t>();
  e.steps = j.at("steps").get<int>();
  if (!j.at("outcome").is_null()) e.outcome = outcome_from_json(j.at("outcome"));
  return e;
}

std::vector<Datastore::Entry> read_index(const std::filesystem::path& index) {
  std::vector<Datastore::Entry> out;
  std::ifstream in(index);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(entry_from(Json::parse(line)));
  return out;
}

}  // namespace

Datastore::Datastore(std::filesystem::path root) : root_(std::move(root)) {
  std::filesystem::create_directories(root_ / "episodes");
  std::filesystem::create_directories(root_ / "quarantine");
}

std::string Datastore::write(EpisodeRecord record) {
  std::lock_guard lock(mu_);
  const auto index = root_ / "index.jsonl";
  const auto entries = read_index(index);
  if (record.header.episode_id.empty()) {
    std::ostringstream id;
    id << "ep-";
    id.width(6);
    id.fill('0');
    id << entries.size();
    record.header.episode_id = id.str();
  }
  const std::string& id = record.header.episode_id;
  for (const auto& e : entries)
    if (e.id == id) throw UsageError("datastore: episode '" + id + "' already exists");

  Entry e;
  e.id = id;
  e.complete = record.complete();
  e.file = (e.complete ? "episodes/" : "quarantine/") + id + ".ndjson";
  e.seed = record.header.seed;
  e.steps = static_cast<int>(record.steps.size());
  if (record.footer) e.outcome = record.footer->outcome;
  write_file_atomic(root_ / e.file, to_ndjson(record));
  std::ofstream out(index, std::ios::app);
  out << to_json(e).dump() << '\n';
  if (!out) throw std::runtime_error("datastore: cannot append to " + index.string());
  return id;
}

std::vector<Datastore::Entry> Datastore::list() const {
  std::lock_guard lock(mu_);
  return read_index(root_ / "index.jsonl");
}

std::optional<Datastore::Entry> Datastore::find(const std::string& id) const {
  for (const auto& e : list())
    if (e.id == id) return e;
  return std::nullopt;
}

EpisodeRecord Datastore::read(const std::string& id) const {
  const auto e = find(id);
  if (!e) throw ConfigError(FieldError{"episode", "no episode '" + id + "'"});
  return read_episode_file(root_ / e->file);
}

std::vector<EpisodeRecord> Datastore::read_complete() const {
  std::vector<EpisodeRecord> out;
  for (const auto& e : list())
    if (e.complete) out.push_back(read_episode_file(root_ / e.file));
  return out;
}

}  // namespace hmt
