#pragma once

// JSON forms of configurations, commands, events and checkpoints, plus the
// evaluation CSV. Readers overlay the given JSON on a base value: absent keys
// keep the base value, unknown keys and type mismatches are reported as
// ConfigError with a dotted field path.

#include <filesystem>
#include <iosfwd>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "hmt/agents.hpp"
#include "hmt/learner/train.hpp"
#include "hmt/sim.hpp"

namespace hmt {

using Json = nlohmann::json;

inline constexpr std::string_view kCheckpointFormat = "hmt-qnet/1";

Json to_json(const EpisodeConfig& c);
Json to_json(const TrainConfig& c);
Json to_json(const OperatorCommand& cmd);
Json to_json(const Event& e);
Json to_json(const Outcome& o);
Json to_json(const ControlInput& c);
Json to_json(Vec2 v);

EpisodeConfig episode_config_from_json(const Json& j, const EpisodeConfig& base = EpisodeConfig{});
TrainConfig train_config_from_json(const Json& j, const TrainConfig& base = TrainConfig{});
OperatorCommand operator_command_from_json(const Json& j);
Event event_from_json(const Json& j);
Outcome outcome_from_json(const Json& j);
ControlInput control_from_json(const Json& j);

/// Scenario by name ("default", "reduced") or a JSON file path.
EpisodeConfig load_scenario(const std::string& name_or_path);

Json read_json_file(const std::filesystem::path& path);
/// Writes to a temporary sibling and renames, so readers never see a torn file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

Json checkpoint_to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const Json& j);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Columns: seed, episode, success_rate.
void write_eval_csv(std::ostream& out, const std::vector<EvalPoint>& evals, bool header = true);
std::vector<EvalPoint> read_eval_csv(std::istream& in);

ObservabilityMode parse_observability(std::string_view s);
Team parse_team(std::string_view s);

}  // namespace hmt
