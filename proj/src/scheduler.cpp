#include "replicanet/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace replicanet {
namespace {

struct TickView {
  std::map<std::uint32_t, int> active;  // running replicas per host
  // Suspended replica ids per host, ascending; excludes pending migrations.
  std::map<std::uint32_t, std::vector<std::uint32_t>> suspended;
};

TickView make_view(const SchedulerState& state) {
  TickView v;
  for (const auto& [id, entry] : state.pool) {
    v.active[id] = 0;
    v.suspended[id] = {};
  }
  for (const auto& [id, r] : state.replicas) {
    if (r.state == ReplicaState::Running) {
      v.active[r.host] += 1;
    } else if (!r.pending_migrate) {
      v.suspended[r.host].push_back(id);
    }
  }
  for (auto& [_, ids] : v.suspended) std::sort(ids.begin(), ids.end());
  return v;
}

std::vector<std::uint32_t> running_on(const SchedulerState& state,
                                      std::uint32_t host) {
  std::vector<std::uint32_t> ids;
  for (const auto& [id, r] : state.replicas)
    if (r.state == ReplicaState::Running && r.host == host) ids.push_back(id);
  std::sort(ids.begin(), ids.end(), std::greater<>());  // newest first
  return ids;
}

}  // namespace

std::string to_string(Phase p) {
  switch (p) {
    case Phase::Phase1: return "phase1";
    case Phase::Phase2a: return "phase2a";
    case Phase::Phase2b: return "phase2b";
  }
  return "?";
}

std::string format_command(const Command& cmd) {
  std::ostringstream out;
  std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, CmdLaunch>)
          out << (c.invoke ? "INVOKE_REPLICA " : "LAUNCH ") << c.host;
        else if constexpr (std::is_same_v<T, CmdActivate>)
          out << "ACTIVATE " << c.replica;
        else if constexpr (std::is_same_v<T, CmdSuspend>)
          out << "SUSPEND " << c.replica;
        else if constexpr (std::is_same_v<T, CmdMigrate>)
          out << "MIGRATE " << c.replica << ' ' << c.to_host;
      },
      cmd);
  return out.str();
}

Phase phase(const SchedulerState& state) {
  if (state.pool.empty()) throw EmptyPool("no hosts in pool");
  if (state.remaining_tasks >= state.pool.size()) return Phase::Phase1;
  return state.replicas.size() > state.remaining_tasks ? Phase::Phase2a
                                                       : Phase::Phase2b;
}

double predict_deadline(const SchedulerState& state, double safety_factor) {
  if (state.completed_durations_ms.empty())
    return std::numeric_limits<double>::infinity();
  double sum = 0;
  for (auto d : state.completed_durations_ms) sum += static_cast<double>(d);
  return safety_factor * sum /
         static_cast<double>(state.completed_durations_ms.size());
}

std::vector<Command> tick(const SchedulerState& state,
                          const SchedulerConfig& config, std::int64_t now_ms) {
  std::vector<Command> out;
  const Phase p = phase(state);
  const double deadline = predict_deadline(state, config.safety_factor);
  const int quantum = config.load_quantum;
  TickView view = make_view(state);

  auto activate_while_capacity = [&](std::uint32_t host, int avail) {
    auto& susp = view.suspended[host];
    while (!susp.empty() &&
           (view.active[host] + 1) * quantum <= avail) {
      out.push_back(CmdActivate{susp.front(), host});
      susp.erase(susp.begin());
      view.active[host] += 1;
    }
  };
  auto suspend_until_balanced = [&](std::uint32_t host, int avail) {
    auto victims = running_on(state, host);
    std::size_t i = 0;
    while (view.active[host] * quantum > avail && i < victims.size()) {
      out.push_back(CmdSuspend{victims[i], host});
      view.suspended[host].push_back(victims[i]);
      view.active[host] -= 1;
      ++i;
    }
  };
  auto suspend_past_deadline = [&]() {
    for (const auto& [id, r] : state.replicas) {
      if (r.state != ReplicaState::Running || r.task_started_ms < 0) continue;
      if (static_cast<double>(now_ms - r.task_started_ms) > deadline) {
        out.push_back(CmdSuspend{id, r.host});
        view.suspended[r.host].push_back(id);
        std::sort(view.suspended[r.host].begin(), view.suspended[r.host].end());
        view.active[r.host] -= 1;
      }
    }
  };
  auto idle_hosts = [&]() {
    // Idle: no running replicas, enough availability for one, no launch
    // already in flight. Highest availability first.
    std::vector<std::uint32_t> ids;
    for (const auto& [id, entry] : state.pool) {
      if (view.active[id] == 0 && !entry.pending_launch &&
          entry.status.availability >= quantum)
        ids.push_back(id);
    }
    std::sort(ids.begin(), ids.end(), [&](std::uint32_t a, std::uint32_t b) {
      int aa = state.pool.at(a).status.availability;
      int ab = state.pool.at(b).status.availability;
      return aa != ab ? aa > ab : a < b;
    });
    return ids;
  };

  if (p == Phase::Phase1) {
    // Greedy: launch on new hosts, re-activate before launching on hosts
    // that gained availability, suspend to balance on hosts that lost it.
    // Never migrate here.
    for (const auto& [host, entry] : state.pool) {
      const int avail = entry.status.availability;
      if (entry.is_new) {
        if (!entry.pending_launch && (view.active[host] + 1) * quantum <= avail) {
          out.push_back(CmdLaunch{host, entry.launched_before});
          view.active[host] += 1;
        }
        continue;
      }
      if (entry.avail_delta > 0) {
        activate_while_capacity(host, avail);
        if (view.suspended[host].empty() && !entry.pending_launch &&
            (view.active[host] + 1) * quantum <= avail) {
          out.push_back(CmdLaunch{host, entry.launched_before});
          view.active[host] += 1;
        }
      } else if (entry.avail_delta < 0) {
        suspend_until_balanced(host, avail);
      }
    }
    return out;
  }

  if (p == Phase::Phase2a) {
    // More replicas than tasks: no launches. Past-deadline replicas are
    // suspended, then suspended replicas move to idle hosts, lowest
    // availability source first.
    suspend_past_deadline();
    for (const auto& [host, entry] : state.pool) {
      if (entry.avail_delta > 0)
        activate_while_capacity(host, entry.status.availability);
      else if (entry.avail_delta < 0)
        suspend_until_balanced(host, entry.status.availability);
    }
    std::vector<std::uint32_t> sources;
    for (const auto& [id, r] : state.replicas) {
      if (r.state != ReplicaState::Suspended || r.pending_migrate) continue;
      bool still_listed = false;
      for (auto sid : view.suspended[r.host]) still_listed |= (sid == id);
      if (still_listed) sources.push_back(id);
    }
    auto source_avail = [&](std::uint32_t id) {
      auto host = state.replicas.at(id).host;
      auto it = state.pool.find(host);
      return it == state.pool.end() ? -1 : it->second.status.availability;
    };
    std::sort(sources.begin(), sources.end(),
              [&](std::uint32_t a, std::uint32_t b) {
                int aa = source_avail(a), ab = source_avail(b);
                return aa != ab ? aa < ab : a < b;
              });
    auto idle = idle_hosts();
    std::size_t s = 0;
    for (auto target : idle) {
      while (s < sources.size() &&
             state.replicas.at(sources[s]).host == target)
        ++s;  // never migrate to the replica's own host
      if (s >= sources.size()) break;
      std::uint32_t replica = sources[s++];
      out.push_back(
          CmdMigrate{replica, state.replicas.at(replica).host, target});
      view.active[target] += 1;  // arrives running
    }
    return out;
  }

  // Phase2b: fewer replicas than remaining tasks. Launch on idle hosts
  // (launching is cheaper than migrating), re-activate on availability
  // gains, suspend past-deadline replicas. No migrations.
  for (auto host : idle_hosts()) {
    out.push_back(CmdLaunch{host, state.pool.at(host).launched_before});
    view.active[host] += 1;
  }
  for (const auto& [host, entry] : state.pool) {
    if (entry.avail_delta > 0)
      activate_while_capacity(host, entry.status.availability);
    else if (entry.avail_delta < 0)
      suspend_until_balanced(host, entry.status.availability);
  }
  suspend_past_deadline();
  return out;
}

std::map<std::uint32_t, std::string> allocate_ordered(
    const TaskTree& tree, const std::vector<HostStatus>& hosts,
    const std::set<std::string>& completed,
    const std::set<std::string>& excluded) {
  std::map<std::uint32_t, std::string> out;
  auto runnable = runnable_set(tree, completed);
  for (const auto& name : excluded) runnable.erase(name);

  std::vector<HostStatus> ordered = hosts;
  std::sort(ordered.begin(), ordered.end(),
            [](const HostStatus& a, const HostStatus& b) {
              return a.availability != b.availability
                         ? a.availability > b.availability
                         : a.host_id < b.host_id;
            });

  std::set<std::string> assigned;
  for (const auto& host : ordered) {
    std::vector<const TaskNode*> candidates;
    for (const auto& name : runnable)
      if (!assigned.count(name)) candidates.push_back(&tree.nodes.at(name));
    if (candidates.empty()) break;

    int best = std::numeric_limits<int>::max();
    for (const auto* n : candidates) best = std::min(best, n->priority);
    std::vector<const TaskNode*> group;
    for (const auto* n : candidates)
      if (n->priority == best) group.push_back(n);

    const TaskNode* pick = nullptr;
    if (group.size() > 1) {
      for (const auto* n : group)  // task holding the data storage first
        if (n->data_storage && (!pick || n->name < pick->name)) pick = n;
      if (!pick) {
        for (const auto* n : group) {  // then the bigger task
          if (!pick || n->size_hint > pick->size_hint ||
              (n->size_hint == pick->size_hint && n->name < pick->name))
            pick = n;
        }
      }
    } else {
      pick = group.front();
    }
    out[host.host_id] = pick->name;
    assigned.insert(pick->name);
  }
  return out;
}

void Scheduler::on_heartbeat(const HostStatus& status, std::int64_t now_ms) {
  auto it = state_.pool.find(status.host_id);
  if (it == state_.pool.end()) {
    HostEntry entry;
    entry.status = status;
    entry.status.last_seen_ms = now_ms;
    entry.is_new = true;
    state_.pool[status.host_id] = entry;
    return;
  }
  int old = it->second.status.availability;
  if (status.availability != old)
    it->second.avail_delta = status.availability > old ? 1 : -1;
  it->second.status = status;
  it->second.status.last_seen_ms = now_ms;
}

void Scheduler::remove_stale(std::int64_t now_ms, std::int64_t period_ms) {
  for (auto it = state_.pool.begin(); it != state_.pool.end();) {
    if (now_ms - it->second.status.last_seen_ms > kStalePeriods * period_ms) {
      for (auto& [_, r] : state_.replicas)
        if (r.host == it->first) r.state = ReplicaState::Suspended;
      it = state_.pool.erase(it);
    } else {
      ++it;
    }
  }
}

std::vector<Command> Scheduler::run_tick(std::int64_t now_ms) {
  ++tick_count_;
  auto cmds = tick(state_, config_, now_ms);
  Phase p = phase(state_);
  for (const auto& cmd : cmds) {
    if (const auto* launch = std::get_if<CmdLaunch>(&cmd))
      state_.pool[launch->host].pending_launch = true;
    else if (const auto* mig = std::get_if<CmdMigrate>(&cmd))
      state_.replicas[mig->replica].pending_migrate = true;
    log_.push_back("tick=" + std::to_string(tick_count_) + " phase=" +
                   to_string(p) + " " + format_command(cmd));
  }
  for (auto& [_, entry] : state_.pool) {
    entry.is_new = false;
    entry.avail_delta = 0;
  }
  return cmds;
}

std::uint32_t Scheduler::note_launched(std::uint32_t host,
                                       std::int64_t now_ms) {
  std::uint32_t id = next_replica_id_++;
  ReplicaInfo r;
  r.replica_id = id;
  r.host = host;
  r.state = ReplicaState::Running;
  r.task_started_ms = now_ms;
  state_.replicas[id] = r;
  auto it = state_.pool.find(host);
  if (it != state_.pool.end()) {
    it->second.pending_launch = false;
    it->second.launched_before = true;
  }
  return id;
}

void Scheduler::note_activated(std::uint32_t replica, std::int64_t now_ms) {
  auto& r = state_.replicas.at(replica);
  r.state = ReplicaState::Running;
  r.task_started_ms = now_ms;
}

void Scheduler::note_suspended(std::uint32_t replica) {
  state_.replicas.at(replica).state = ReplicaState::Suspended;
}

void Scheduler::note_migrated(std::uint32_t replica, std::uint32_t to_host,
                              std::int64_t now_ms) {
  auto& r = state_.replicas.at(replica);
  r.host = to_host;
  r.state = ReplicaState::Running;  // re-activated on arrival
  r.task_started_ms = now_ms;
  r.pending_migrate = false;
}

void Scheduler::note_task_completed(std::uint32_t replica,
                                    std::int64_t duration_ms,
                                    std::int64_t now_ms) {
  auto& r = state_.replicas.at(replica);
  r.records_done += 1;
  r.task_started_ms = now_ms;
  state_.completed_durations_ms.push_back(duration_ms);
}

void Scheduler::note_replica_exited(std::uint32_t replica) {
  state_.replicas.erase(replica);
}

}  // namespace replicanet
