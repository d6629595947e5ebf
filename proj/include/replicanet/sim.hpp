// Deterministic discrete-event simulation of a LAN: hosts with
// time-varying availability, replicas consuming records through the
// wrapper and record store, the scheduler in the loop.
#ifndef REPLICANET_SIM_HPP_
#define REPLICANET_SIM_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "replicanet/scheduler.hpp"

namespace replicanet {

struct AvailabilityStep {
  std::int64_t at_ms = 0;
  int availability = 0;
};

struct SimHost {
  std::uint32_t host_id = 0;
  // Piecewise-constant availability, "t0:a0,t1:a1,..." in config files.
  std::vector<AvailabilityStep> trajectory;
  std::int64_t leave_at_ms = -1;  // -1: never leaves (heartbeats stop after)
};

struct SimConfig {
  std::vector<SimHost> hosts;
  std::size_t record_count = 0;
  std::size_t record_bytes = 4;
  double compute_ms_per_record = 10.0;  // at 100% availability
  std::uint64_t seed = 1;
  SchedulerConfig scheduler;
  std::int64_t heartbeat_ms = 1000;
  double unit_ms = 5.0;          // cost-model unit -> milliseconds
  std::int64_t net_latency_ms = 0;  // LAN latency, 0 per design assumption
  std::int64_t max_time_ms = 100'000'000;
  std::string scenario_makefile;  // empty: internal-only scenario
  std::string workdir;            // store files land here; auto when empty
};

struct NodeSpan {
  std::string name;
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  std::uint32_t host = 0;
};

struct SimReport {
  std::int64_t total_elapsed_ms = 0;  // TET
  std::map<std::uint32_t, std::size_t> per_host_records;
  std::vector<std::string> command_log;
  std::vector<std::pair<std::int64_t, Phase>> phase_transitions;
  bool stalled = false;
  std::vector<NodeSpan> node_spans;  // external scenario only
};

// Event-driven execution to completion (or max_time, reported as
// stalled). Deterministic for a given config.
SimReport run_sim(const SimConfig& config);

// External-analysis scenario: nodes of the makefile tree execute per
// their priorities; replica-eligible nodes expand into internal
// sub-simulations.
SimReport run_external(const SimConfig& config);

struct SpeedupRow {
  std::size_t records = 0;
  std::int64_t tet_1host = 0;
  std::int64_t tet_2host = 0;
};

// For each N, TET with only the first host vs the first two hosts,
// identical seeds.
std::vector<SpeedupRow> speedup_table(const SimConfig& base,
                                      const std::vector<std::size_t>& ns);
std::string speedup_csv(const std::vector<SpeedupRow>& rows);

std::string report_to_json(const SimReport& report);

SimConfig parse_sim_config(const std::string& text);
SimConfig load_sim_config(const std::string& path);

int availability_at(const SimHost& host, std::int64_t t_ms);

}  // namespace replicanet

#endif  // REPLICANET_SIM_HPP_
