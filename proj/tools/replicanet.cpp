// Operator entry points: server, agent, simulator, makefile analysis and
// the self-verifying bank demo.
#include <chrono>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "replicanet/demo.hpp"
#include "replicanet/net.hpp"
#include "replicanet/protocol.hpp"
#include "replicanet/record_store.hpp"
#include "replicanet/sim.hpp"
#include "replicanet/taskmap.hpp"

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted.store(true); }

bool log_verbose() {
  const char* level = std::getenv("REPLICANET_LOG");
  return level && (std::string(level) == "debug" || std::string(level) == "info");
}

// "host:port" or "port"; host defaults to loopback.
void split_address(const std::string& addr, std::string& host, int& port) {
  auto colon = addr.rfind(':');
  if (colon == std::string::npos) {
    host = "127.0.0.1";
    port = std::stoi(addr);
  } else {
    host = addr.substr(0, colon);
    port = std::stoi(addr.substr(colon + 1));
  }
}

int cmd_server(const std::string& store_path, int port,
               const std::string& out_dir) {
  using namespace replicanet;
  RecordStore store(load_store_config(store_path));
  store.prefetch(store.total_records());
  store.seal();

  ServerOptions options;
  options.port = port;
  ServerCore server(store, options);
  server.start();
  std::fprintf(stderr, "listening on port %d, %zu records\n",
               server.bound_port(), store.total_records());

  // Clean shutdown once every record is dispensed, every session has
  // closed and at least one replica reported DATABASE_DONE.
  while (!g_interrupted.load()) {
    if (store.records_remaining() == 0 && store.open_count() == 0 &&
        server.database_done_count() > 0)
      break;
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  server.stop();

  // Per-host stats logs; agents number replicas host_id * 1000 + seq.
  std::map<std::uint32_t, std::size_t> per_host;
  for (std::uint32_t replica : server.seen_replicas())
    per_host[replica / 1000] += store.dispensed_by(replica);
  std::filesystem::create_directories(out_dir);
  for (const auto& [host, count] : per_host) {
    auto path = std::filesystem::path(out_dir) /
                ("stats_host_" + std::to_string(host) + ".log");
    write_stats_log(path.string(), host, count);
  }
  if (log_verbose())
    for (const auto& line : server.decision_log())
      std::fprintf(stderr, "%s\n", line.c_str());
  return g_interrupted.load() ? 1 : 0;
}

int cmd_agent(const std::string& connect, std::uint32_t host_id,
              std::size_t record_bytes) {
  using namespace replicanet;
  AgentOptions options;
  split_address(connect, options.server_host, options.port);
  options.host_id = host_id;
  options.record_bytes = record_bytes;
  options.verbose = log_verbose();
  run_agent(options);  // returns when the server closes the connection
  return 0;
}

int cmd_sim(const std::string& config_path, const std::string& out_path,
            const std::string& csv_path) {
  using namespace replicanet;
  SimConfig config = load_sim_config(config_path);

  if (!csv_path.empty()) {
    auto rows = speedup_table(config, {200, 400, 600, 800, 1000});
    std::ofstream out(csv_path);
    out << speedup_csv(rows);
    std::cout << speedup_csv(rows);
    return 0;
  }

  SimReport report = config.scenario_makefile.empty() ? run_sim(config)
                                                      : run_external(config);
  std::string json = report_to_json(report);
  if (out_path.empty()) {
    std::cout << json << "\n";
  } else {
    std::ofstream out(out_path);
    out << json << "\n";
  }
  std::fprintf(stderr, "TET %lld ms%s\n",
               static_cast<long long>(report.total_elapsed_ms),
               report.stalled ? " (stalled)" : "");
  return report.stalled ? 1 : 0;
}

int cmd_analyze(const std::string& makefile_path) {
  using namespace replicanet;
  MakefileSpec spec = load_makefile(makefile_path);
  TaskTree tree = build_tree(spec);
  mark_replicable(tree, spec);
  std::cout << "root: " << tree.root << "\n";
  for (const auto& [name, node] : tree.nodes) {
    std::cout << name << " priority=" << node.priority;
    if (node.replica_eligible) std::cout << " replica-eligible";
    if (!node.children.empty()) {
      std::cout << " deps:";
      for (const auto& c : node.children) std::cout << " " << c;
    }
    std::cout << "\n";
  }
  return 0;
}

int cmd_demo(std::size_t records, std::size_t agents,
             const std::string& out_dir) {
  using namespace replicanet;
  DemoResult result = run_bank_demo(records, agents, out_dir, log_verbose());
  std::printf("verified %zu records across %zu agents in %.2fs\n",
              result.records, result.agents, result.elapsed_s);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  CLI::App app{"record-replication middleware"};
  app.require_subcommand(1);

  std::string store_path, listen = std::to_string(replicanet::kDefaultServerPort);
  std::string connect = "127.0.0.1:" + std::to_string(replicanet::kDefaultServerPort);
  std::string config_path, out_path, csv_path, makefile_path;
  std::uint32_t host_id = 1;
  std::size_t record_bytes = 8, records = 200, agents = 2;

  auto* server = app.add_subcommand("server", "serve a record store");
  server->add_option("--store", store_path, "store config file")->required();
  server->add_option("--listen", listen, "listen port");
  server->add_option("--out", out_path, "stats log directory");

  auto* agent = app.add_subcommand("agent", "run a client agent");
  agent->add_option("--connect", connect, "server address host:port");
  agent->add_option("--host-id", host_id, "host identifier");
  agent->add_option("--record-bytes", record_bytes,
                    "record size of the server's store");

  auto* sim = app.add_subcommand("sim", "run a deterministic simulation");
  sim->add_option("--config", config_path, "simulation config file")
      ->required();
  sim->add_option("--out", out_path, "report JSON path (default stdout)");
  sim->add_option("--csv", csv_path, "write a 1-vs-2-host speedup table CSV");

  auto* analyze = app.add_subcommand("analyze", "print a makefile task tree");
  analyze->add_option("--makefile", makefile_path, "makefile path")
      ->required();

  auto* demo = app.add_subcommand("demo", "self-verifying bank workload");
  demo->add_option("--records", records, "record count");
  demo->add_option("--agents", agents, "agent count");
  demo->add_option("--out", out_path, "working directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (server->parsed()) {
      std::string host;
      int port = replicanet::kDefaultServerPort;
      split_address(listen, host, port);
      return cmd_server(store_path, port,
                        out_path.empty() ? "." : out_path);
    }
    if (agent->parsed()) return cmd_agent(connect, host_id, record_bytes);
    if (sim->parsed()) return cmd_sim(config_path, out_path, csv_path);
    if (analyze->parsed()) return cmd_analyze(makefile_path);
    if (demo->parsed())
      return cmd_demo(records, agents,
                      out_path.empty() ? "demo_work" : out_path);
  } catch (const replicanet::ConnectFailed& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
