#pragma once

// Interactive session service. SessionManager owns the sessions and is
// transport independent; route() maps HTTP requests onto it and Server puts
// both behind HTTP and WebSocket.
//
// Every JSON message carries "schema": kWireSchema.

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "hmt/orchestrator.hpp"

namespace hmt {

inline constexpr std::string_view kWireSchema = "hmt-wire/1";

enum class SessionStatus : std::uint8_t { Configured, Running, Paused, Finished };
const char* to_string(SessionStatus s);

/// Illegal session transition or command outside Running/Paused.
class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SessionOptions {
  double steps_per_second = 10.0;  // 0 free-runs
  int decimation = 1;              // emit every n-th tick (the final tick always)
  bool spectator = false;          // ticks also carry true red positions
};

struct SessionSpec {
  EpisodeConfig config;
  std::vector<ActorBinding> bindings;
  std::uint64_t seed = 0;
  SessionOptions options;
};

/// Parses a POST /sessions body: {config?, base?, bindings?, seed?,
/// steps_per_second?, decimation?, spectator?}. Config overlays the named
/// base scenario (default "default"). Throws ConfigError.
SessionSpec session_spec_from_json(const Json& body, const SessionOptions& defaults);

/// State tick for the blue-team operator view.
Json make_tick(const WorldState& world, const WaypointQueues& queues, const std::vector<Event>& events,
               bool spectator);

class SessionManager {
 public:
  using Listener = std::function<void(const Json&)>;

  /// `store` may be null: finished episodes are then not persisted.
  SessionManager(Datastore* store, std::shared_ptr<const PolicyRegistry> policies,
                 SessionOptions defaults = {});
  ~SessionManager();
  SessionManager(const SessionManager&) = delete;
  SessionManager& operator=(const SessionManager&) = delete;

  /// Throws ConfigError on an invalid config or binding.
  std::string create(const SessionSpec& spec);
  /// action: start | pause | resume | abort. Returns the new status.
  SessionStatus control(const std::string& id, const std::string& action);
  /// Queues a command. `reply` receives the ack or error message when the
  /// episode takes the command. Returns the ticket.
  std::uint64_t submit(const std::string& id, const OperatorCommand& cmd, Listener reply = {});
  Json describe(const std::string& id) const;
  SessionStatus status(const std::string& id) const;

  /// Registers a listener for ticks; it first receives the latest tick, if
  /// any. Returns a handle for unsubscribe().
  std::uint64_t subscribe(const std::string& id, Listener listener);
  void unsubscribe(const std::string& id, std::uint64_t handle);

  /// Blocks until the session is Finished.
  void wait(const std::string& id) const;
  std::vector<std::string> ids() const;
  Datastore* datastore() const noexcept { return store_; }
  const SessionOptions& defaults() const noexcept { return defaults_; }

 private:
  struct Session;
  std::shared_ptr<Session> get(const std::string& id) const;
  void run(std::shared_ptr<Session> s);

  Datastore* store_;
  std::shared_ptr<const PolicyRegistry> policies_;
  SessionOptions defaults_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 1;
};

struct ApiResponse {
  int status = 200;
  Json body;
};

/// HTTP routing without a socket: POST /sessions, POST /sessions/{id}/control,
/// POST /sessions/{id}/commands, GET /sessions/{id}, GET /episodes,
/// GET /episodes/{id}.
ApiResponse route(SessionManager& sessions, const std::string& method, const std::string& target,
                  const std::string& body);

/// Handles one client message from a session stream. Returns the immediate
/// reply, if any; acks arrive later through `reply`.
std::optional<Json> handle_stream_message(SessionManager& sessions, const std::string& session_id,
                                          const std::string& text, const SessionManager::Listener& reply);

Json error_body(const std::string& code, const std::string& message,
                const std::vector<FieldError>& fields = {});

/// HTTP + WebSocket front end. WebSocket upgrades are accepted on
/// /sessions/{id}/stream.
class Server {
 public:
  Server(SessionManager& sessions, const std::string& address, unsigned short port,
         std::string static_dir = {});
  ~Server();
  unsigned short port() const noexcept;
  /// Serves on a background thread until stop().
  void start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace hmt
