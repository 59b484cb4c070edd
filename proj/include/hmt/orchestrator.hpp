#pragma once

// Episode lifecycle: binds actors to UAVs, runs headless or interactive
// episodes, records every step, replays records and turns them into
// demonstration stores.
//
// Episode files are newline-delimited JSON: one header line, one line per
// step and a footer line. A file without a footer is a partial episode.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hmt/agents.hpp"
#include "hmt/io.hpp"
#include "hmt/learner/qnet.hpp"
#include "hmt/learner/replay.hpp"
#include "hmt/mdp.hpp"
#include "hmt/sim.hpp"

namespace hmt {

inline constexpr std::string_view kRecordFormat = "hmt-episode/1";
std::string_view software_version();

/// Record from an incompatible format, layout or software version.
class IncompatibleRecord : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Replay diverged from the record.
class IntegrityError : public std::runtime_error {
 public:
  IntegrityError(int step, const std::string& what)
      : std::runtime_error("step " + std::to_string(step) + ": " + what), step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

struct ActorBinding {
  EntityId uav_id = 0;
  std::vector<std::string> actors;  // priority order, index 0 first
  friend bool operator==(const ActorBinding&, const ActorBinding&) = default;
};

/// Waypoint takeover above `blue_policy` for every blue, scripted red.
std::vector<ActorBinding> default_bindings(const EpisodeConfig& config,
                                           const std::string& blue_policy = "heuristic_blue");

/// Trained networks addressable as "policy:<id>".
class PolicyRegistry {
 public:
  void add(const std::string& id, std::shared_ptr<const DuelingQNet> net);
  /// Registered network, else a checkpoint file at path `id`, else nullptr.
  std::shared_ptr<const DuelingQNet> find(const std::string& id) const;
  std::vector<std::string> ids() const;

 private:
  mutable std::mutex mu_;
  mutable std::map<std::string, std::shared_ptr<const DuelingQNet>> nets_;
};

/// Checks every binding before an episode starts. Throws ConfigError.
void check_bindings(const EpisodeConfig& config, const std::vector<ActorBinding>& bindings,
                    const PolicyRegistry& policies);

enum class EpisodeMode : std::uint8_t { Headless, Interactive };

struct UavStep {
  EntityId id = 0;
  ControlInput control;
  std::optional<int> action;          // when the driving actor chose a discrete action
  std::optional<std::size_t> driver;  // stack index of the driving actor
  std::optional<double> reward;       // blue only
  ObservationFrame frame;             // blue only; frame at decision time
  friend bool operator==(const UavStep&, const UavStep&) = default;
};

struct StepRecord {
  int t = 0;
  std::vector<OperatorCommand> commands;  // applied before this step's decisions
  std::vector<UavStep> uavs;              // active UAVs, by id
  std::vector<EntitySnapshot> state;      // every UAV after the step
  std::vector<Event> events;
  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct PauseSpan {
  int at_step = 0;
  double wall_seconds = 0.0;
  friend bool operator==(const PauseSpan&, const PauseSpan&) = default;
};

struct EpisodeHeader {
  std::string format{kRecordFormat};
  std::string software_version;
  std::string observation_layout{kObservationLayout};
  std::string episode_id;
  std::uint64_t seed = 0;
  EpisodeConfig config;
  std::vector<ActorBinding> bindings;
  std::map<std::string, std::string> policies;  // policy id -> parameter hash (hex)
  std::vector<EntitySnapshot> initial_state;
  friend bool operator==(const EpisodeHeader&, const EpisodeHeader&) = default;
};

struct EpisodeFooter {
  Outcome outcome;
  int steps = 0;
  double wall_time = 0.0;  // seconds; not reproducible
  std::vector<PauseSpan> pauses;
  std::map<EntityId, std::string> provenance;  // blue uav -> human | policy | heuristic | scripted
  std::map<EntityId, ObservationFrame> final_frames;
  friend bool operator==(const EpisodeFooter&, const EpisodeFooter&) = default;
};

struct EpisodeRecord {
  EpisodeHeader header;
  std::vector<StepRecord> steps;
  std::optional<EpisodeFooter> footer;  // empty for partial episodes

  bool complete() const noexcept { return footer.has_value(); }
  bool blue_won() const { return footer && footer->outcome.winner == Team::Blue; }
  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

/// Equality ignoring wall-clock fields (wall_time, pause durations) and the
/// episode id.
bool same_episode(const EpisodeRecord& a, const EpisodeRecord& b);

std::string to_ndjson(const EpisodeRecord& r);
EpisodeRecord parse_ndjson(std::string_view text);
EpisodeRecord read_episode_file(const std::filesystem::path& path);

Json to_json(const StepRecord& s);
Json to_json(const EpisodeHeader& h);
Json to_json(const EpisodeFooter& f);
Json to_json(const EntitySnapshot& e);

/// Result of one operator command taken from an inbox.
struct CommandResult {
  std::uint64_t ticket = 0;
  OperatorCommand command;
  int step = 0;  // step index the command applies at
  std::optional<CommandError> error;
};

/// Serialized operator command queue with pause/resume/abort for one
/// interactive episode. Safe to use from any thread.
class CommandInbox {
 public:
  std::uint64_t submit(OperatorCommand cmd);
  void pause();
  void resume();
  void abort();
  bool paused() const;
  bool aborted() const;

  struct Item {
    std::uint64_t ticket;
    OperatorCommand command;
  };
  std::vector<Item> drain();

  /// Blocks while paused. Returns the paused wall time, or nullopt on abort.
  std::optional<double> wait_runnable();
  /// Sleeps until `deadline` unless aborted or paused first. Returns false on abort.
  bool sleep_until(std::chrono::steady_clock::time_point deadline);

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Item> queue_;
  std::uint64_t next_ticket_ = 1;
  bool paused_ = false;
  bool aborted_ = false;
};

struct RunOptions {
  EpisodeMode mode = EpisodeMode::Headless;
  CommandInbox* inbox = nullptr;          // interactive only
  std::chrono::duration<double> step_period{0.0};  // wall time per step; 0 free-runs
  /// Commands to apply at given steps (used by replay).
  std::map<int, std::vector<OperatorCommand>> scheduled;
  std::function<void(const CommandResult&)> on_command;
  /// Once, after spawning and before the first step.
  std::function<void(const WorldState&, const WaypointQueues&)> on_start;
  /// After each step, with the world and waypoint queues it ended in.
  std::function<void(const StepRecord&, const WorldState&, const WaypointQueues&)> on_step;
  std::string episode_id;
};

/// Runs one episode to its outcome. An aborted interactive episode returns a
/// partial record (no footer).
EpisodeRecord run_episode(const EpisodeConfig& scenario, std::uint64_t seed,
                          const std::vector<ActorBinding>& bindings, const PolicyRegistry& policies,
                          const RunOptions& options = {});

struct BatchResult {
  std::vector<std::optional<EpisodeRecord>> records;  // index i uses derive_seed(base_seed, i)
  std::vector<std::pair<std::size_t, std::string>> errors;
  double success_rate() const;  // over completed episodes
};

BatchResult run_batch(const EpisodeConfig& scenario, const std::vector<ActorBinding>& bindings,
                      const PolicyRegistry& policies, int n, int parallelism, std::uint64_t base_seed);

/// Re-simulates a record and checks it step for step.
/// Throws IncompatibleRecord or IntegrityError.
EpisodeRecord replay_episode(const EpisodeRecord& record, const PolicyRegistry& policies);

struct DemoFilter {
  std::set<std::string> provenance{"human", "policy", "heuristic"};
  bool winners_only = true;
};

/// Transitions of every blue UAV whose provenance passes the filter. Human
/// provenance becomes DemoHuman, everything else DemoAgent. Actions are the
/// recorded discrete action, or the quantized control when the driver had
/// none. Throws ConfigError when nothing is left.
DemoStore build_demo_store(const std::vector<EpisodeRecord>& records, const DemoFilter& filter = {});

/// One directory per run: episodes/, quarantine/ and index.jsonl.
class Datastore {
 public:
  explicit Datastore(std::filesystem::path root);

  struct Entry {
    std::string id;
    std::string file;  // relative to root
    bool complete = false;
    std::uint64_t seed = 0;
    int steps = 0;
    std::optional<Outcome> outcome;
  };

  /// Writes a record under a fresh id (assigned when header.episode_id is
  /// empty). Partial records go to quarantine/.
  std::string write(EpisodeRecord record);
  std::vector<Entry> list() const;
  std::optional<Entry> find(const std::string& id) const;
  EpisodeRecord read(const std::string& id) const;
  /// Every complete record, in index order.
  std::vector<EpisodeRecord> read_complete() const;
  const std::filesystem::path& root() const noexcept { return root_; }

 private:
  std::filesystem::path root_;
  mutable std::mutex mu_;
};

Json to_json(const Datastore::Entry& e);

}  // namespace hmt
