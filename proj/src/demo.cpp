#include "replicanet/demo.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

#include "replicanet/net.hpp"
#include "replicanet/protocol.hpp"
#include "replicanet/record_store.hpp"
#include "replicanet/wrapper.hpp"

namespace replicanet {
namespace {

// The fd-tracking labels a generated session opens; arbitrary but must be
// consistent between the event stream and the session's observed paths.
constexpr const char* kInLabel = "store.in";
constexpr const char* kOutLabel = "store.out";

// Bank replica behaviour as an event stream: open input and output, then
// read a record, write back balance+1, repeat until end of data.
class BankEventSource final : public EventSource {
 public:
  explicit BankEventSource(std::size_t record_bytes)
      : record_bytes_(record_bytes) {}

  std::optional<ProcessEvent> next(const Action* last) override {
    switch (step_) {
      case Step::OpenInput:
        step_ = Step::OpenOutput;
        return ProcessEvent{1, EvOpen{kInLabel}};
      case Step::OpenOutput:
        step_ = Step::Read;
        return ProcessEvent{1, EvOpen{kOutLabel}};
      case Step::Read:
        step_ = Step::AfterRead;
        return ProcessEvent{1, EvRead{3, record_bytes_}};
      case Step::AfterRead: {
        if (!last || last->records == 0) {  // end of data
          step_ = Step::CloseOutput;
          return ProcessEvent{1, EvClose{3}};
        }
        std::uint64_t balance = std::stoull(last->substituted);
        std::string updated = format_balance_record(balance + 1, record_bytes_);
        step_ = Step::Read;
        return ProcessEvent{1, EvWrite{4, updated.size(), updated}};
      }
      case Step::CloseOutput:
        step_ = Step::Exit;
        return ProcessEvent{1, EvClose{4}};
      case Step::Exit:
        step_ = Step::Done;
        return ProcessEvent{1, EvExit{0}};
      case Step::Done:
        return std::nullopt;
    }
    return std::nullopt;
  }

 private:
  enum class Step { OpenInput, OpenOutput, Read, AfterRead, CloseOutput,
                    Exit, Done };
  Step step_ = Step::OpenInput;
  std::size_t record_bytes_;
};

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(line);
  return lines;
}

}  // namespace

std::string format_balance_record(std::uint64_t value,
                                  std::size_t record_bytes) {
  std::ostringstream out;
  out << std::setw(static_cast<int>(record_bytes) - 1) << std::setfill('0')
      << value << '\n';
  return out.str();
}

void run_agent(const AgentOptions& options) {
  LineSocket ctrl = LineSocket::connect_to(options.server_host, options.port);
  std::mutex send_mu;
  auto send_ctrl = [&](const std::string& line) {
    std::lock_guard lock(send_mu);
    ctrl.send_line(line);
  };

  std::atomic<bool> finished{false};
  auto should_stop = [&] {
    return finished.load() || (options.stop && options.stop->load());
  };
  std::thread beat([&] {
    while (!should_stop()) {
      send_ctrl(encode(Heartbeat{options.host_id, 100}));
      std::this_thread::sleep_for(
          std::chrono::milliseconds(options.heartbeat_ms));
    }
  });

  std::uint32_t session_seq = 0;
  std::string line;
  while (ctrl.recv_line(line)) {
    Message msg;
    try {
      msg = decode(line);
    } catch (const MalformedMessage&) {
      continue;
    }
    if (!std::holds_alternative<Launch>(msg) &&
        !std::holds_alternative<InvokeReplica>(msg))
      continue;

    std::uint32_t replica_id = options.host_id * 1000 + ++session_seq;
    if (options.verbose)
      std::fprintf(stderr, "agent %u: launching replica %u\n",
                   options.host_id, replica_id);
    try {
      RemoteRecordClient data(options.server_host, options.port);
      ReplicaSession session(
          replica_id, {kInLabel, kOutLabel}, options.record_bytes,
          [&](const Message& m) { send_ctrl(encode(m)); });
      BankEventSource source(options.record_bytes);
      SessionReport report = run_session(session, source, data);
      if (options.verbose)
        std::fprintf(stderr, "agent %u: replica %u processed %zu records\n",
                     options.host_id, replica_id, report.records_consumed);
    } catch (const std::exception& e) {
      if (options.verbose)
        std::fprintf(stderr, "agent %u: replica %u failed: %s\n",
                     options.host_id, replica_id, e.what());
    }
  }
  finished.store(true);
  if (beat.joinable()) beat.join();
}

DemoResult run_bank_demo(std::size_t n, std::size_t agents,
                         const std::string& workdir, bool verbose) {
  namespace fs = std::filesystem;
  constexpr std::size_t kRecordBytes = 8;
  fs::create_directories(workdir);
  const std::string input_path = (fs::path(workdir) / "input.dat").string();
  const std::string output_path = (fs::path(workdir) / "output.dat").string();

  {
    std::ofstream in(input_path, std::ios::trunc);
    for (std::size_t i = 0; i < n; ++i)
      in << format_balance_record(201 + i, kRecordBytes);
  }
  std::error_code ec;
  fs::remove(output_path, ec);

  RecordStoreConfig store_cfg;
  store_cfg.input_path = input_path;
  store_cfg.output_path = output_path;
  store_cfg.layout = FixedSize{kRecordBytes};
  RecordStore store(store_cfg);
  store.prefetch(n);
  store.seal();

  ServerOptions options;
  options.port = 0;
  options.app_id = "bank";
  options.heartbeat_ms = 50;
  ServerCore server(store, options);
  server.start();

  auto started = std::chrono::steady_clock::now();
  std::atomic<bool> stop{false};
  std::vector<std::thread> agent_threads;
  for (std::size_t a = 0; a < agents; ++a) {
    AgentOptions agent;
    agent.port = server.bound_port();
    agent.host_id = static_cast<std::uint32_t>(a + 1);
    agent.record_bytes = kRecordBytes;
    agent.stop = &stop;
    agent.verbose = verbose;
    agent_threads.emplace_back(run_agent, agent);
  }

  const auto deadline = started + std::chrono::seconds(8);
  bool complete = false;
  while (std::chrono::steady_clock::now() < deadline) {
    if (store.records_remaining() == 0 && read_lines(output_path).size() >= n) {
      complete = true;
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  double elapsed_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
          .count();

  stop.store(true);
  server.stop();  // closes control connections; agent loops unblock
  for (auto& t : agent_threads) t.join();

  if (!complete)
    throw VerificationFailed("demo timed out before all records were written");

  // Oracle: re-read the input file and increment each balance; never
  // derived from anything the replicas produced.
  std::vector<std::string> expected;
  expected.reserve(n);
  for (const std::string& line : read_lines(input_path)) {
    std::string rec = format_balance_record(std::stoull(line) + 1,
                                            kRecordBytes);
    rec.pop_back();  // compare line content without the newline
    expected.push_back(rec);
  }
  std::vector<std::string> actual = read_lines(output_path);
  std::sort(expected.begin(), expected.end());
  std::sort(actual.begin(), actual.end());
  if (actual != expected) {
    std::ostringstream why;
    why << "output mismatch: expected " << expected.size() << " records, got "
        << actual.size();
    throw VerificationFailed(why.str());
  }

  DemoResult result;
  result.records = n;
  result.agents = agents;
  result.elapsed_s = elapsed_s;
  return result;
}

}  // namespace replicanet
