// Release acceptance: one self-contained check per criterion, one
// PASS/FAIL line each. Exit status is the number of failed criteria.
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "replicanet/demo.hpp"
#include "replicanet/protocol.hpp"
#include "replicanet/record_store.hpp"
#include "replicanet/scheduler.hpp"
#include "replicanet/sim.hpp"
#include "replicanet/taskmap.hpp"
#include "replicanet/wrapper.hpp"

using namespace replicanet;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void run_criterion(int number, const std::string& name, double budget_s,
                   const std::function<std::string()>& body) {
  auto start = std::chrono::steady_clock::now();
  std::string failure;
  try {
    failure = body();  // empty string means success
  } catch (const std::exception& e) {
    failure = std::string("exception: ") + e.what();
  }
  double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  if (failure.empty() && elapsed > budget_s)
    failure = "over time budget: " + std::to_string(elapsed) + "s > " +
              std::to_string(budget_s) + "s";
  if (failure.empty()) {
    std::printf("PASS criterion %d: %s (%.2fs)\n", number, name.c_str(),
                elapsed);
  } else {
    std::printf("FAIL criterion %d: %s (%.2fs) - %s\n", number, name.c_str(),
                elapsed, failure.c_str());
    ++g_failures;
  }
  std::fflush(stdout);
}

fs::path work_dir() {
  fs::path dir =
      fs::temp_directory_path() / ("acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

std::string fixed_record(std::size_t index, std::size_t bytes) {
  std::ostringstream out;
  out << std::setw(static_cast<int>(bytes) - 1) << std::setfill('0') << index;
  return out.str() + "\n";
}

std::string write_fixed_store(const fs::path& path, std::size_t n,
                              std::size_t bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  for (std::size_t i = 0; i < n; ++i) out << fixed_record(i, bytes);
  return path.string();
}

// ---------------------------------------------------------------------
// 1. Exactly-once dispensing under randomized session interleavings.
std::string check_exactly_once() {
  auto dir = work_dir();
  constexpr std::size_t kBytes = 6;
  // One input file per record count; contents only depend on the count.
  std::map<std::size_t, std::string> inputs;

  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    std::mt19937_64 rng(seed);
    std::size_t records =
        std::uniform_int_distribution<std::size_t>(20, 200)(rng);
    std::uint32_t sessions =
        std::uniform_int_distribution<std::uint32_t>(2, 6)(rng);
    auto it = inputs.find(records);
    if (it == inputs.end()) {
      fs::path p = dir / ("in_" + std::to_string(records) + ".dat");
      it = inputs.emplace(records, write_fixed_store(p, records, kBytes))
               .first;
    }
    RecordStoreConfig cfg;
    cfg.input_path = it->second;
    cfg.output_path = it->second + ".out";
    cfg.layout = FixedSize{kBytes};
    RecordStore store(cfg);
    std::uniform_int_distribution<std::size_t> depth(0, records);
    store.prefetch(depth(rng));

    for (std::uint32_t s = 1; s <= sessions; ++s) store.open_store(s);
    std::vector<std::size_t> per_session(sessions + 1, 0);
    std::vector<int> seen(records, 0);
    std::uniform_int_distribution<std::uint32_t> pick(1, sessions);
    while (true) {
      std::uint32_t s = pick(rng);
      auto rec = store.read_next(s, kBytes);
      if (!rec) break;
      if (rec->index >= records) return "record index out of range";
      seen[rec->index] += 1;
      per_session[s] += 1;
    }
    std::size_t sum = 0;
    for (std::uint32_t s = 1; s <= sessions; ++s) {
      if (store.dispensed_by(s) != per_session[s])
        return "per-session count mismatch, seed " + std::to_string(seed);
      sum += per_session[s];
    }
    if (sum != records)
      return "dispensed total " + std::to_string(sum) + " != " +
             std::to_string(records) + ", seed " + std::to_string(seed);
    for (std::size_t i = 0; i < records; ++i)
      if (seen[i] != 1)
        return "record " + std::to_string(i) + " dispensed " +
               std::to_string(seen[i]) + " times, seed " +
               std::to_string(seed);
    for (std::uint32_t s = 1; s <= sessions; ++s) store.close_store(s);
  }
  return "";
}

// ---------------------------------------------------------------------
// 2. End-to-end demo output equals the sequential oracle.
std::string check_demo_oracle() {
  auto dir = work_dir() / "demo";
  DemoResult result = run_bank_demo(200, 2, dir.string());
  if (result.records != 200) return "record count mismatch";
  // run_bank_demo already compares the output multiset against the
  // sequential +1 oracle and throws on any difference.
  return "";
}

// ---------------------------------------------------------------------
// 3. Scheduler state-machine legality over an exhaustive enumeration.
struct HostVariant {
  int availability;
  int delta;
  bool is_new;
};

std::string check_scheduler_legality() {
  SchedulerConfig cfg;
  const std::vector<HostVariant> variants = {
      {10, 0, false}, {10, -1, false}, {10, 1, false}, {10, 0, true},
      {100, 0, false}, {100, -1, false}, {100, 1, false}, {100, 0, true},
  };
  const std::vector<std::size_t> task_counts = {0, 1, 2, 3, 4, 5, 10};
  long long ticks = 0;

  for (int hosts = 1; hosts <= 4; ++hosts) {
    // Every assignment of a variant to each host.
    std::vector<std::size_t> idx(hosts, 0);
    while (true) {
      SchedulerState base;
      for (int h = 0; h < hosts; ++h) {
        HostEntry e;
        e.status.host_id = static_cast<std::uint32_t>(h + 1);
        e.status.availability = variants[idx[h]].availability;
        e.avail_delta = variants[idx[h]].delta;
        e.is_new = variants[idx[h]].is_new;
        e.launched_before = (h % 2) == 1;
        base.pool[e.status.host_id] = e;
      }
      for (std::size_t tasks : task_counts) {
        for (int replicas = 0; replicas <= 6; ++replicas) {
          for (int mask = 0; mask < (1 << replicas); ++mask) {
            SchedulerState s = base;
            s.remaining_tasks = tasks;
            for (int r = 0; r < replicas; ++r) {
              ReplicaInfo info;
              info.replica_id = static_cast<std::uint32_t>(r + 1);
              info.host = static_cast<std::uint32_t>(1 + r % hosts);
              info.state = (mask >> r) & 1 ? ReplicaState::Suspended
                                           : ReplicaState::Running;
              info.task_started_ms = (r % 2) ? 0 : 90;
              s.replicas[info.replica_id] = info;
            }
            // Two deadline regimes: nothing completed yet (infinite) and
            // a tight history that flags the older task.
            for (int regime = 0; regime < 2; ++regime) {
              if (regime == 1) s.completed_durations_ms = {10};
              auto cmds = tick(s, cfg, /*now=*/100);
              ++ticks;
              Phase p = phase(s);
              std::map<std::uint32_t, bool> launched_seen;
              for (const auto& cmd : cmds) {
                if (std::holds_alternative<CmdMigrate>(cmd) &&
                    p == Phase::Phase1)
                  return "Migrate emitted in Phase 1";
                if (std::holds_alternative<CmdLaunch>(cmd) &&
                    p == Phase::Phase2a)
                  return "Launch emitted in Phase 2a";
                if (const auto* l = std::get_if<CmdLaunch>(&cmd))
                  launched_seen[l->host] = true;
                if (const auto* a = std::get_if<CmdActivate>(&cmd)) {
                  if (p == Phase::Phase1 && launched_seen[a->host])
                    return "Activate after Launch on host " +
                           std::to_string(a->host) + " in Phase 1";
                }
              }
            }
          }
        }
      }
      // Advance the per-host variant indices (odometer).
      int pos = 0;
      while (pos < hosts && ++idx[pos] == variants.size()) {
        idx[pos] = 0;
        ++pos;
      }
      if (pos == hosts) break;
    }
  }
  if (ticks < 1'000'000)
    return "enumeration unexpectedly small: " + std::to_string(ticks);
  return "";
}

// ---------------------------------------------------------------------
// 4. Task tree golden structure and two-host overlap.
std::string check_task_tree() {
  const char* makefile =
      "all: main\n"
      "main: run1 run2\n"
      "\tcat r1.out r2.out > main.out\n"
      "run1: exec\n"
      "\t./exec 1 > r1.out\n"
      "run2: exec\n"
      "\t./exec 2 > r2.out\n"
      "exec: sch.c\n"
      "\tcc -o exec sch.c\n";
  TaskTree tree = build_tree(parse_makefile(makefile));
  if (tree.root != "main") return "root is " + tree.root;
  auto prio = [&](const char* n) { return tree.nodes.at(n).priority; };
  if (prio("sch.c") != 1 || prio("exec") != 2 || prio("run1") != 3 ||
      prio("run2") != 3 || prio("main") != 4)
    return "priority layout wrong";

  auto dir = work_dir();
  fs::path mk = dir / "scenario.mk";
  std::ofstream(mk) << makefile;
  SimConfig cfg;
  cfg.scenario_makefile = mk.string();
  cfg.hosts.resize(2);
  cfg.hosts[0].host_id = 1;
  cfg.hosts[0].trajectory = {{0, 100}};
  cfg.hosts[1].host_id = 2;
  cfg.hosts[1].trajectory = {{0, 100}};
  SimReport report = run_external(cfg);
  if (report.stalled) return "external scenario stalled";

  std::map<std::string, NodeSpan> spans;
  for (const auto& s : report.node_spans) spans[s.name] = s;
  for (const char* n : {"exec", "run1", "run2", "main"})
    if (!spans.count(n)) return std::string("missing span for ") + n;
  const auto& exec = spans["exec"];
  const auto& run1 = spans["run1"];
  const auto& run2 = spans["run2"];
  const auto& main_span = spans["main"];
  if (exec.end_ms > run1.start_ms || exec.end_ms > run2.start_ms)
    return "shared tool did not finish before the runs";
  if (main_span.start_ms < run1.end_ms || main_span.start_ms < run2.end_ms)
    return "root started before both runs finished";
  if (!(run1.start_ms < run2.end_ms && run2.start_ms < run1.end_ms))
    return "runs did not overlap on two hosts";
  return "";
}

// ---------------------------------------------------------------------
// 5. Two equal hosts beat one, gap non-decreasing in workload size.
std::string check_speedup_trend() {
  SimConfig base;
  base.record_bytes = 6;
  base.compute_ms_per_record = 10.0;
  base.hosts.resize(2);
  base.hosts[0].host_id = 1;
  base.hosts[0].trajectory = {{0, 100}};
  base.hosts[1].host_id = 2;
  base.hosts[1].trajectory = {{0, 100}};
  auto rows = speedup_table(base, {200, 400, 600, 800, 1000});
  std::int64_t prev_gap = -1;
  for (const auto& row : rows) {
    if (row.tet_2host >= row.tet_1host)
      return "no speedup at N=" + std::to_string(row.records);
    std::int64_t gap = row.tet_1host - row.tet_2host;
    if (gap < prev_gap)
      return "gap shrank at N=" + std::to_string(row.records);
    prev_gap = gap;
  }
  return "";
}

// ---------------------------------------------------------------------
// 6. Access pattern classification over characteristic traces.
class ScriptedStore final : public RecordService {
 public:
  explicit ScriptedStore(std::vector<std::string> recs)
      : recs_(std::move(recs)) {}
  void open_store(std::uint32_t) override {}
  std::optional<Record> read_next(std::uint32_t, std::size_t) override {
    if (cursor_ >= recs_.size()) return std::nullopt;
    Record r{cursor_, recs_[cursor_]};
    ++cursor_;
    return r;
  }
  void write_back(std::uint32_t, std::string) override {}
  void close_store(std::uint32_t) override {}

 private:
  std::vector<std::string> recs_;
  std::size_t cursor_ = 0;
};

std::string check_pattern_classification() {
  std::vector<std::string> records = {"101\n", "102\n", "103\n", "104\n",
                                      "105\n"};
  // Record-at-a-time reader: first read asks for exactly one record.
  {
    ScriptedStore store(records);
    ReplicaSession session(1, {"in"}, 4);
    auto src = TraceReplaySource::from_text(
        "10 open in\n10 read 3 4\n10 close 3\n10 exit 0\n");
    run_session(session, src, store);
    if (session.pattern()->kind != AccessPattern::Kind::PerRecord)
      return "record-at-a-time trace misclassified";
  }
  // Buffered runtime reader: one 8192-byte read over a 20-byte store.
  {
    ScriptedStore store(records);
    ReplicaSession session(2, {"in"}, 4);
    auto src = TraceReplaySource::from_text(
        "846 open in\n846 read 3 8192\n846 close 3\n846 exit 0\n");
    run_session(session, src, store);
    if (session.pattern()->kind != AccessPattern::Kind::Chunked)
      return "buffered trace misclassified";
    if (session.pattern()->chunk_bytes != 8192) return "chunk size lost";
  }
  // Memory-mapped reader: mmap before the first read forces chunked mode.
  {
    ScriptedStore store(records);
    ReplicaSession session(3, {"in"}, 4);
    auto src = TraceReplaySource::from_text(
        "846 open in\n846 mmap 331776\n846 read 3 4\n846 close 3\n"
        "846 exit 0\n");
    run_session(session, src, store);
    if (session.pattern()->kind != AccessPattern::Kind::Chunked)
      return "memory-mapped trace misclassified";
  }
  // Both consumption modes drain identical record sets.
  std::size_t per_total = 0, chunk_total = 0;
  std::string per_data, chunk_data;
  {
    ScriptedStore store(records);
    ReplicaSession session(4, {"in"}, 4);
    session.handle_event({1, EvOpen{"in"}}, store);
    while (true) {
      Action a = session.handle_event({1, EvRead{3, 4}}, store);
      if (a.records == 0) break;
      per_data += a.substituted;
    }
    per_total = session.records_consumed();
  }
  {
    ScriptedStore store(records);
    ReplicaSession session(5, {"in"}, 4);
    session.handle_event({1, EvOpen{"in"}}, store);
    while (true) {
      Action a = session.handle_event({1, EvRead{3, 8192}}, store);
      if (a.records == 0) break;
      chunk_data += a.substituted;
    }
    chunk_total = session.records_consumed();
  }
  if (per_total != chunk_total || per_data != chunk_data)
    return "consumption differs between modes";
  return "";
}

// ---------------------------------------------------------------------
// 7. Index buffer counter law under concurrency.
std::string check_counter_law() {
  auto dir = work_dir();
  constexpr std::size_t kBytes = 8;
  constexpr std::size_t kRecords = 1000;
  std::string input =
      write_fixed_store(dir / "counter.dat", kRecords, kBytes);

  // Single-requester law: counter == k * s after every k.
  {
    RecordStoreConfig cfg;
    cfg.input_path = input;
    cfg.layout = FixedSize{kBytes};
    RecordStore store(cfg);
    store.prefetch(kRecords);
    store.open_store(1);
    for (std::size_t k = 1; k <= kRecords; ++k) {
      store.read_next(1, kBytes);
      if (store.buffer_counter() != k * kBytes)
        return "counter law broken at k=" + std::to_string(k);
    }
    store.close_store(1);
  }
  // Eight concurrent requesters: final counter and conservation.
  {
    RecordStoreConfig cfg;
    cfg.input_path = input;
    cfg.layout = FixedSize{kBytes};
    RecordStore store(cfg);
    store.prefetch(kRecords);
    std::vector<std::thread> threads;
    std::vector<std::size_t> counts(8, 0);
    for (int t = 0; t < 8; ++t) {
      store.open_store(static_cast<std::uint32_t>(t + 1));
      threads.emplace_back([&, t] {
        while (store.read_next(static_cast<std::uint32_t>(t + 1), kBytes))
          ++counts[t];
      });
    }
    for (auto& th : threads) th.join();
    if (store.buffer_counter() != kRecords * kBytes)
      return "concurrent counter " + std::to_string(store.buffer_counter()) +
             " != " + std::to_string(kRecords * kBytes);
    std::size_t sum = 0;
    for (auto c : counts) sum += c;
    if (sum != kRecords) return "concurrent dispensing lost records";
    if (store.storage_reads() != 0)
      return "prefetched reads touched storage";
  }
  return "";
}

// ---------------------------------------------------------------------
// 8. Protocol round-trip and malformed rejection.
std::string check_protocol_roundtrip() {
  std::mt19937 rng(2026);
  std::uniform_int_distribution<int> which(0, 6);
  std::uniform_int_distribution<std::uint32_t> id(0, 4'000'000'000u);
  std::uniform_int_distribution<int> avail(0, 100);
  auto rand_app = [&]() {
    static const char chars[] = "abcdefghijklmnopqrstuvwxyz0123456789_./-";
    std::uniform_int_distribution<std::size_t> len(1, 20);
    std::uniform_int_distribution<std::size_t> pick(0, sizeof(chars) - 2);
    std::string s;
    for (std::size_t i = 0, n = len(rng); i < n; ++i) s += chars[pick(rng)];
    return s;
  };
  for (int i = 0; i < 10'000; ++i) {
    Message m;
    switch (which(rng)) {
      case 0: m = Heartbeat{id(rng), avail(rng)}; break;
      case 1: m = Launch{rand_app()}; break;
      case 2: m = InvokeReplica{rand_app()}; break;
      case 3: m = Suspend{id(rng)}; break;
      case 4: m = Activate{id(rng)}; break;
      case 5: m = Migrate{id(rng), id(rng)}; break;
      default: m = DatabaseDone{id(rng)}; break;
    }
    if (!(decode(encode(m)) == m))
      return "round trip failed at i=" + std::to_string(i);
  }
  const char* corpus[] = {
      "", "\n", "  ", "JUNK", "HEARTBEAT_MSG", "HEARTBEAT_MSG 1",
      "HEARTBEAT_MSG 1 2 3", "HEARTBEAT_MSG x 2", "HEARTBEAT_MSG 1 101",
      "HEARTBEAT_MSG 1 -4", "LAUNCH", "LAUNCH a b", "INVOKE_REPLICA",
      "SUSPEND", "SUSPEND x", "ACTIVATE 1 2", "MIGRATE 1", "MIGRATE a b",
      "DATABASE_DONE_MSG", "DATABASE_DONE_MSG z", "launch app",
  };
  for (const char* line : corpus) {
    try {
      decode(line);
      return std::string("malformed line accepted: '") + line + "'";
    } catch (const MalformedMessage&) {
      // expected
    }
  }
  return "";
}

}  // namespace

int main() {
  run_criterion(1, "exactly-once record dispensing (500 seeds)", 30.0,
                check_exactly_once);
  run_criterion(2, "demo output equals the sequential oracle", 10.0,
                check_demo_oracle);
  run_criterion(3, "scheduler command legality (exhaustive)", 60.0,
                check_scheduler_legality);
  run_criterion(4, "task tree golden structure and two-host overlap", 1.0,
                check_task_tree);
  run_criterion(5, "speedup trend over workload sizes", 10.0,
                check_speedup_trend);
  run_criterion(6, "access pattern classification", 1.0,
                check_pattern_classification);
  run_criterion(7, "index buffer counter law under concurrency", 5.0,
                check_counter_law);
  run_criterion(8, "protocol round-trip and malformed rejection", 5.0,
                check_protocol_roundtrip);
  return g_failures;
}
