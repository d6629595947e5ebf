// Host pool maintenance, phase detection and the two-phase dynamic
// scheduling state machine emitting LAUNCH / INVOKE_REPLICA / ACTIVATE /
// SUSPEND / MIGRATE commands.
#ifndef REPLICANET_SCHEDULER_HPP_
#define REPLICANET_SCHEDULER_HPP_

#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "replicanet/protocol.hpp"
#include "replicanet/taskmap.hpp"

namespace replicanet {

// Resume < launch < migrate; h must be > 1 so the ordering holds.
struct CostModel {
  double h = 10.0;
  double resume_cost() const { return 1.0; }
  double launch_cost() const { return h; }
  double migrate_cost() const { return 2.0 * h; }
};

struct SchedulerConfig {
  std::int64_t tick_ms = 1000;
  double safety_factor = 2.0;
  // Load charged per running replica; suspend until load <= availability.
  int load_quantum = 30;
  CostModel cost;
};

enum class Phase { Phase1, Phase2a, Phase2b };
std::string to_string(Phase p);

enum class ReplicaState { Running, Suspended };

struct ReplicaInfo {
  std::uint32_t replica_id = 0;
  std::uint32_t host = 0;
  ReplicaState state = ReplicaState::Running;
  std::int64_t task_started_ms = -1;  // -1: no task in flight
  std::size_t records_done = 0;
  bool pending_migrate = false;
};

struct HostEntry {
  HostStatus status;
  bool is_new = false;     // first heartbeat arrived since last tick
  int avail_delta = 0;     // sign of availability change since last tick
  bool launched_before = false;  // binary already on the host
  bool pending_launch = false;   // launch commanded, not yet effective
};

struct SchedulerState {
  std::map<std::uint32_t, HostEntry> pool;
  std::map<std::uint32_t, ReplicaInfo> replicas;
  std::size_t remaining_tasks = 0;
  std::vector<std::int64_t> completed_durations_ms;
};

class EmptyPool : public std::runtime_error {
 public:
  explicit EmptyPool(const std::string& w) : std::runtime_error(w) {}
};

struct CmdLaunch {
  std::uint32_t host = 0;
  bool invoke = false;  // true: binary cached, send INVOKE_REPLICA
};
struct CmdActivate {
  std::uint32_t replica = 0;
  std::uint32_t host = 0;
};
struct CmdSuspend {
  std::uint32_t replica = 0;
  std::uint32_t host = 0;
};
struct CmdMigrate {
  std::uint32_t replica = 0;
  std::uint32_t from_host = 0;
  std::uint32_t to_host = 0;
};
using Command = std::variant<CmdLaunch, CmdActivate, CmdSuspend, CmdMigrate>;

std::string format_command(const Command& cmd);

// Phase1 iff remaining_tasks >= |pool|; otherwise Phase2a when there are
// more replicas than remaining tasks, Phase2b when fewer or equal.
Phase phase(const SchedulerState& state);

// safety_factor x mean completed duration; +inf before the first
// completion so nothing is ever flagged early.
double predict_deadline(const SchedulerState& state, double safety_factor);

// One scheduling pass. Pure: inspects state, emits commands, mutates
// nothing. Phase1 never migrates; Phase2a never launches; activations for
// a host always precede launches for it.
std::vector<Command> tick(const SchedulerState& state,
                          const SchedulerConfig& config, std::int64_t now_ms);

// Ordered-job allocation for the external-analysis task tree: hosts by
// descending availability; among equal-priority runnable tasks prefer the
// one holding the data storage, then the bigger one.
std::map<std::uint32_t, std::string> allocate_ordered(
    const TaskTree& tree, const std::vector<HostStatus>& hosts,
    const std::set<std::string>& completed,
    const std::set<std::string>& excluded = {});

// Stateful wrapper feeding heartbeats in and applying command outcomes.
class Scheduler {
 public:
  explicit Scheduler(SchedulerConfig config) : config_(config) {}

  void on_heartbeat(const HostStatus& status, std::int64_t now_ms);
  // Drops hosts silent for kStalePeriods periods; their replicas are
  // counted as suspended from then on.
  void remove_stale(std::int64_t now_ms, std::int64_t period_ms);

  std::vector<Command> run_tick(std::int64_t now_ms);

  std::uint32_t note_launched(std::uint32_t host, std::int64_t now_ms);
  void note_activated(std::uint32_t replica, std::int64_t now_ms);
  void note_suspended(std::uint32_t replica);
  void note_migrated(std::uint32_t replica, std::uint32_t to_host,
                     std::int64_t now_ms);
  void note_task_completed(std::uint32_t replica, std::int64_t duration_ms,
                           std::int64_t now_ms);
  void note_replica_exited(std::uint32_t replica);
  void set_remaining_tasks(std::size_t n) { state_.remaining_tasks = n; }

  const SchedulerState& state() const { return state_; }
  SchedulerState& mutable_state() { return state_; }
  const SchedulerConfig& config() const { return config_; }
  const std::vector<std::string>& decision_log() const { return log_; }

 private:
  SchedulerConfig config_;
  SchedulerState state_;
  std::uint32_t next_replica_id_ = 1;
  std::uint64_t tick_count_ = 0;
  std::vector<std::string> log_;
};

}  // namespace replicanet

#endif  // REPLICANET_SCHEDULER_HPP_
