#include "replicanet/sim.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <queue>
#include <sstream>

#include <unistd.h>

#include "json.hpp"
#include "replicanet/record_store.hpp"
#include "replicanet/wrapper.hpp"

namespace replicanet {
namespace {

namespace fs = std::filesystem;

std::string make_workdir(const SimConfig& config) {
  if (!config.workdir.empty()) {
    fs::create_directories(config.workdir);
    return config.workdir;
  }
  static std::atomic<std::uint64_t> counter{0};
  auto dir = fs::temp_directory_path() /
             ("replicanet-sim-" + std::to_string(::getpid()) + "-" +
              std::to_string(counter.fetch_add(1)));
  fs::create_directories(dir);
  return dir.string();
}

std::string format_record(std::size_t value, std::size_t record_bytes) {
  std::string digits = std::to_string(value);
  std::size_t width = record_bytes - 1;  // trailing newline
  if (digits.size() > width) digits = digits.substr(digits.size() - width);
  return std::string(width - digits.size(), '0') + digits + "\n";
}

void generate_store_file(const std::string& path, std::size_t count,
                         std::size_t record_bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  for (std::size_t i = 0; i < count; ++i)
    out << format_record(i, record_bytes);
}

// The modeled computation: numeric records gain one, anything else echoes.
std::string compute_result(const std::string& record) {
  std::string body = record;
  bool newline = !body.empty() && body.back() == '\n';
  if (newline) body.pop_back();
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), value);
  if (ec != std::errc{} || ptr != body.data() + body.size())
    return record;
  std::string digits = std::to_string(value + 1);
  std::string out = digits.size() >= body.size()
                        ? digits
                        : std::string(body.size() - digits.size(), '0') + digits;
  if (newline) out.push_back('\n');
  return out;
}

struct Event {
  double t = 0;
  std::uint64_t seq = 0;
  std::function<void()> fn;
};
struct EventAfter {
  bool operator()(const Event& a, const Event& b) const {
    return a.t != b.t ? a.t > b.t : a.seq > b.seq;
  }
};

class SimEngine {
 public:
  explicit SimEngine(const SimConfig& config) : cfg_(config) {}

  SimReport run() {
    SimReport report;
    if (cfg_.hosts.empty()) {
      report.stalled = cfg_.record_count > 0;
      return report;
    }
    std::string dir = make_workdir(cfg_);
    input_path_ = dir + "/input.dat";
    output_path_ = dir + "/output.dat";
    generate_store_file(input_path_, cfg_.record_count, cfg_.record_bytes);
    RecordStoreConfig scfg;
    scfg.input_path = input_path_;
    scfg.output_path = output_path_;
    scfg.layout = FixedSize{cfg_.record_bytes};
    store_ = std::make_unique<RecordStore>(scfg);
    store_->prefetch(cfg_.record_count);
    sched_ = std::make_unique<Scheduler>(cfg_.scheduler);

    for (const auto& h : cfg_.hosts) {
      avail_[h.host_id] = availability_at(h, 0);
      for (const auto& step : h.trajectory) {
        if (step.at_ms <= 0) continue;
        schedule(static_cast<double>(step.at_ms),
                 [this, id = h.host_id, v = step.availability] {
                   on_avail_change(id, v);
                 });
      }
    }
    schedule(0.0, [this] { on_tick(); });

    // Event loop.
    while (!queue_.empty()) {
      Event ev = queue_.top();
      queue_.pop();
      if (done_) break;
      if (ev.t > static_cast<double>(cfg_.max_time_ms)) {
        stalled_ = records_written_ < cfg_.record_count;
        break;
      }
      now_ = ev.t;
      ev.fn();
    }
    if (!done_ && records_written_ < cfg_.record_count) stalled_ = true;

    report.total_elapsed_ms = std::llround(progress_time_);
    report.per_host_records = per_host_records_;
    report.command_log = sched_->decision_log();
    report.phase_transitions = phase_transitions_;
    report.stalled = stalled_;
    return report;
  }

 private:
  struct SimReplica {
    std::uint32_t id = 0;
    std::uint32_t host = 0;
    std::unique_ptr<ReplicaSession> session;
    bool running = false;
    bool exited = false;
    bool has_record = false;
    std::string record;
    double work_remaining = 0;  // ms at 100% availability
    double work_started = 0;
    int avail_used = 0;
    double dispense_time = 0;
    std::uint64_t gen = 0;  // invalidates stale completion events
  };

  void schedule(double t, std::function<void()> fn) {
    queue_.push(Event{t, seq_++, std::move(fn)});
  }

  const SimHost& host_cfg(std::uint32_t id) const {
    for (const auto& h : cfg_.hosts)
      if (h.host_id == id) return h;
    throw std::logic_error("unknown host in sim");
  }

  bool host_present(std::uint32_t id, double t) const {
    const auto& h = host_cfg(id);
    return h.leave_at_ms < 0 || t < static_cast<double>(h.leave_at_ms);
  }

  void on_tick() {
    if (done_) return;
    const std::int64_t t = std::llround(now_);
    for (const auto& h : cfg_.hosts) {
      if (!host_present(h.host_id, now_)) continue;
      HostStatus st;
      st.host_id = h.host_id;
      st.availability = avail_[h.host_id];
      for (const auto& [_, r] : replicas_) {
        if (r->host != h.host_id || r->exited) continue;
        (r->running ? st.active_replicas : st.suspended_replicas) += 1;
      }
      sched_->on_heartbeat(st, t);
    }
    sched_->remove_stale(t, cfg_.heartbeat_ms);
    sched_->set_remaining_tasks(store_->records_remaining());

    if (!sched_->state().pool.empty()) {
      Phase p = phase(sched_->state());
      if (phase_transitions_.empty() || phase_transitions_.back().second != p)
        phase_transitions_.emplace_back(t, p);
      for (const auto& cmd : sched_->run_tick(t)) apply_command(cmd);
    }
    schedule(now_ + static_cast<double>(cfg_.scheduler.tick_ms),
             [this] { on_tick(); });
  }

  void apply_command(const Command& cmd) {
    const auto& cost = cfg_.scheduler.cost;
    if (const auto* launch = std::get_if<CmdLaunch>(&cmd)) {
      // The very first launch is the operator starting the target
      // application on the server host; it carries no shipping cost.
      double delay = first_launch_ ? 0.0 : cost.launch_cost() * cfg_.unit_ms;
      first_launch_ = false;
      schedule(now_ + delay, [this, host = launch->host] {
        if (done_) return;
        std::uint32_t id = sched_->note_launched(host, std::llround(now_));
        start_replica(id, host);
      });
    } else if (const auto* act = std::get_if<CmdActivate>(&cmd)) {
      schedule(now_ + cost.resume_cost() * cfg_.unit_ms,
               [this, id = act->replica] {
                 if (done_ || !replicas_.count(id)) return;
                 auto& r = *replicas_[id];
                 if (r.exited || r.running) return;
                 sched_->note_activated(id, std::llround(now_));
                 resume_work(r);
               });
    } else if (const auto* sus = std::get_if<CmdSuspend>(&cmd)) {
      if (!replicas_.count(sus->replica)) return;
      auto& r = *replicas_[sus->replica];
      if (r.exited || !r.running) return;
      pause_work(r);
      sched_->note_suspended(sus->replica);
    } else if (const auto* mig = std::get_if<CmdMigrate>(&cmd)) {
      schedule(now_ + cost.migrate_cost() * cfg_.unit_ms,
               [this, id = mig->replica, to = mig->to_host] {
                 if (done_ || !replicas_.count(id)) return;
                 auto& r = *replicas_[id];
                 if (r.exited) return;
                 sched_->note_migrated(id, to, std::llround(now_));
                 r.host = to;
                 resume_work(r);
               });
    }
  }

  void start_replica(std::uint32_t id, std::uint32_t host) {
    auto replica = std::make_unique<SimReplica>();
    replica->id = id;
    replica->host = host;
    replica->running = true;
    replica->session = std::make_unique<ReplicaSession>(
        id, std::vector<std::string>{input_path_, output_path_},
        cfg_.record_bytes);
    ++alive_;
    SimReplica& r = *replica;
    replicas_[id] = std::move(replica);
    r.session->handle_event({int(1000 + id), EvOpen{input_path_}}, *store_);
    r.session->handle_event({int(1000 + id), EvOpen{output_path_}}, *store_);
    request_next(r);
  }

  void request_next(SimReplica& r) {
    Action act = r.session->handle_event(
        {int(1000 + r.id), EvRead{3, cfg_.record_bytes}}, *store_);
    if (act.records == 0) {
      // EndOfData: DATABASE_DONE was emitted; wrap up and terminate.
      r.session->handle_event({int(1000 + r.id), EvClose{3}}, *store_);
      r.session->handle_event({int(1000 + r.id), EvClose{4}}, *store_);
      r.session->handle_event({int(1000 + r.id), EvExit{0}}, *store_);
      r.exited = true;
      r.running = false;
      --alive_;
      sched_->note_replica_exited(r.id);
      progress_time_ = std::max(progress_time_, now_);
      check_done();
      return;
    }
    r.has_record = true;
    r.record = act.substituted;
    r.work_remaining = cfg_.compute_ms_per_record +
                       2.0 * static_cast<double>(cfg_.net_latency_ms);
    r.dispense_time = now_;
    schedule_completion(r);
  }

  void schedule_completion(SimReplica& r) {
    int avail = avail_[r.host];
    if (!r.running || avail <= 0) return;  // waits for activation
    r.avail_used = avail;
    r.work_started = now_;
    std::uint64_t gen = ++r.gen;
    double t_done = now_ + r.work_remaining * 100.0 / avail;
    schedule(t_done, [this, id = r.id, gen] {
      auto it = replicas_.find(id);
      if (done_ || it == replicas_.end()) return;
      auto& rr = *it->second;
      if (rr.gen != gen || !rr.running || rr.exited || !rr.has_record) return;
      on_record_done(rr);
    });
  }

  void on_record_done(SimReplica& r) {
    std::string result = compute_result(r.record);
    r.session->handle_event(
        {int(1000 + r.id), EvWrite{4, result.size(), result}}, *store_);
    per_host_records_[r.host] += 1;
    ++records_written_;
    sched_->note_task_completed(r.id, std::llround(now_ - r.dispense_time),
                                std::llround(now_));
    r.has_record = false;
    progress_time_ = std::max(progress_time_, now_);
    request_next(r);
  }

  void pause_work(SimReplica& r) {
    if (r.has_record) {
      double progress = (now_ - r.work_started) * r.avail_used / 100.0;
      r.work_remaining = std::max(0.0, r.work_remaining - progress);
    }
    ++r.gen;
    r.running = false;
  }

  void resume_work(SimReplica& r) {
    r.running = true;
    if (r.has_record)
      schedule_completion(r);
    else
      request_next(r);
  }

  void on_avail_change(std::uint32_t host, int value) {
    if (done_) return;
    int old = avail_[host];
    avail_[host] = value;
    if (old == value) return;
    for (auto& [_, rp] : replicas_) {
      auto& r = *rp;
      if (r.host != host || r.exited || !r.running || !r.has_record) continue;
      double progress = (now_ - r.work_started) * r.avail_used / 100.0;
      r.work_remaining = std::max(0.0, r.work_remaining - progress);
      ++r.gen;
      schedule_completion(r);
    }
  }

  void check_done() {
    if (records_written_ == cfg_.record_count && alive_ == 0 &&
        !replicas_.empty())
      done_ = true;
  }

  SimConfig cfg_;
  std::priority_queue<Event, std::vector<Event>, EventAfter> queue_;
  std::uint64_t seq_ = 0;
  double now_ = 0;
  double progress_time_ = 0;
  bool done_ = false;
  bool stalled_ = false;
  bool first_launch_ = true;
  std::size_t records_written_ = 0;
  int alive_ = 0;

  std::string input_path_;
  std::string output_path_;
  std::unique_ptr<RecordStore> store_;
  std::unique_ptr<Scheduler> sched_;
  std::map<std::uint32_t, int> avail_;
  std::map<std::uint32_t, std::unique_ptr<SimReplica>> replicas_;
  std::map<std::uint32_t, std::size_t> per_host_records_;
  std::vector<std::pair<std::int64_t, Phase>> phase_transitions_;
};

}  // namespace

int availability_at(const SimHost& host, std::int64_t t_ms) {
  int value = 0;
  for (const auto& step : host.trajectory) {
    if (step.at_ms <= t_ms) value = step.availability;
  }
  return value;
}

SimReport run_sim(const SimConfig& config) {
  SimEngine engine(config);
  return engine.run();
}

SimReport run_external(const SimConfig& config) {
  SimReport report;
  MakefileSpec spec = load_makefile(config.scenario_makefile);
  TaskTree tree = build_tree(spec);
  mark_replicable(tree, spec);

  constexpr double kBaseNodeMs = 100.0;
  std::set<std::string> completed;
  struct Running {
    std::string node;
    std::uint32_t host;
    std::int64_t end;
  };
  std::vector<Running> running;
  std::int64_t t = 0;
  std::int64_t last_end = 0;

  while (completed.size() < tree.nodes.size()) {
    // Offer free hosts to the allocator.
    std::vector<HostStatus> free_hosts;
    for (const auto& h : config.hosts) {
      bool busy = false;
      for (const auto& r : running) busy |= (r.host == h.host_id);
      int avail = availability_at(h, t);
      if (!busy && avail > 0)
        free_hosts.push_back({h.host_id, avail, 0, 0, t});
    }
    std::set<std::string> in_flight;
    for (const auto& r : running) in_flight.insert(r.node);

    auto assignments = allocate_ordered(tree, free_hosts, completed, in_flight);
    for (const auto& [host, name] : assignments) {
      const TaskNode& node = tree.nodes.at(name);
      std::int64_t dur = 0;
      if (node.replica_eligible) {
        SimConfig sub = config;
        sub.scenario_makefile.clear();
        sub.workdir.clear();
        SimReport inner = run_sim(sub);
        dur = inner.total_elapsed_ms;
        for (const auto& [h, n] : inner.per_host_records)
          report.per_host_records[h] += n;
        for (const auto& line : inner.command_log)
          report.command_log.push_back(name + ": " + line);
      } else if (!node.commands.empty()) {
        int avail = 100;
        for (const auto& h : config.hosts)
          if (h.host_id == host) avail = std::max(1, availability_at(h, t));
        dur = std::llround(kBaseNodeMs * 100.0 / avail);
      }
      running.push_back({name, host, t + dur});
      report.node_spans.push_back({name, t, t + dur, host});
    }

    if (running.empty()) {
      report.stalled = true;  // nodes remain but nothing can run
      break;
    }
    auto next = std::min_element(
        running.begin(), running.end(),
        [](const Running& a, const Running& b) { return a.end < b.end; });
    t = next->end;
    last_end = std::max(last_end, t);
    completed.insert(next->node);
    running.erase(next);
  }
  report.total_elapsed_ms = last_end;
  return report;
}

std::vector<SpeedupRow> speedup_table(const SimConfig& base,
                                      const std::vector<std::size_t>& ns) {
  std::vector<SpeedupRow> rows;
  for (std::size_t n : ns) {
    SimConfig one = base;
    one.record_count = n;
    one.workdir.clear();
    one.hosts.assign(base.hosts.begin(), base.hosts.begin() + 1);
    SimConfig two = base;
    two.record_count = n;
    two.workdir.clear();
    if (base.hosts.size() >= 2)
      two.hosts.assign(base.hosts.begin(), base.hosts.begin() + 2);
    rows.push_back({n, run_sim(one).total_elapsed_ms,
                    run_sim(two).total_elapsed_ms});
  }
  return rows;
}

std::string speedup_csv(const std::vector<SpeedupRow>& rows) {
  std::ostringstream out;
  out << "records,tet_1host_ms,tet_2host_ms\n";
  for (const auto& r : rows)
    out << r.records << ',' << r.tet_1host << ',' << r.tet_2host << '\n';
  return out.str();
}

std::string report_to_json(const SimReport& report) {
  nlohmann::json j;
  j["total_elapsed_ms"] = report.total_elapsed_ms;
  j["stalled"] = report.stalled;
  auto& per_host = j["per_host_records"];
  per_host = nlohmann::json::object();
  for (const auto& [h, n] : report.per_host_records)
    per_host[std::to_string(h)] = n;
  j["command_log"] = report.command_log;
  auto& phases = j["phase_transitions"];
  phases = nlohmann::json::array();
  for (const auto& [t, p] : report.phase_transitions)
    phases.push_back({{"t_ms", t}, {"phase", to_string(p)}});
  auto& spans = j["node_spans"];
  spans = nlohmann::json::array();
  for (const auto& s : report.node_spans)
    spans.push_back({{"node", s.name},
                     {"start_ms", s.start_ms},
                     {"end_ms", s.end_ms},
                     {"host", s.host}});
  return j.dump(2);
}

SimConfig parse_sim_config(const std::string& text) {
  SimConfig cfg;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) continue;
    if (key.rfind("host ", 0) == 0) {
      SimHost host;
      host.host_id = static_cast<std::uint32_t>(std::stoul(key.substr(5)));
      std::istringstream steps(value);
      std::string step;
      while (std::getline(steps, step, ',')) {
        auto colon = step.find(':');
        if (colon == std::string::npos)
          throw IoFailure("bad trajectory step: " + step);
        host.trajectory.push_back(
            {std::stoll(step.substr(0, colon)),
             std::stoi(step.substr(colon + 1))});
      }
      cfg.hosts.push_back(std::move(host));
    } else if (key == "records") {
      cfg.record_count = std::stoul(value);
    } else if (key == "record_bytes") {
      cfg.record_bytes = std::stoul(value);
    } else if (key == "compute_ms") {
      cfg.compute_ms_per_record = std::stod(value);
    } else if (key == "seed") {
      cfg.seed = std::stoull(value);
    } else if (key == "tick_ms") {
      cfg.scheduler.tick_ms = std::stoll(value);
      cfg.heartbeat_ms = cfg.scheduler.tick_ms;
    } else if (key == "unit_ms") {
      cfg.unit_ms = std::stod(value);
    } else if (key == "safety_factor") {
      cfg.scheduler.safety_factor = std::stod(value);
    } else if (key == "load_quantum") {
      cfg.scheduler.load_quantum = std::stoi(value);
    } else if (key == "h") {
      cfg.scheduler.cost.h = std::stod(value);
    } else if (key == "latency_ms") {
      cfg.net_latency_ms = std::stoll(value);
    } else if (key == "max_time_ms") {
      cfg.max_time_ms = std::stoll(value);
    } else if (key == "makefile") {
      cfg.scenario_makefile = value;
    } else if (key == "workdir") {
      cfg.workdir = value;
    } else {
      throw IoFailure("unknown sim config key: " + key);
    }
  }
  return cfg;
}

SimConfig load_sim_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("sim config unreadable: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_sim_config(buf.str());
}

}  // namespace replicanet
