// Agent-side workload driver and the end-to-end demonstration run.
//
// The agent connects to a server, heartbeats, and reacts to LAUNCH /
// INVOKE_REPLICA commands by running a bank-style replica session: read
// an account record, add one to the balance, write the result back,
// until end of data. The demo wires one in-process server to N such
// agents over loopback and self-verifies against an independently
// computed expected output.
#ifndef REPLICANET_DEMO_HPP_
#define REPLICANET_DEMO_HPP_

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace replicanet {

class VerificationFailed : public std::runtime_error {
 public:
  explicit VerificationFailed(const std::string& w) : std::runtime_error(w) {}
};

struct AgentOptions {
  std::string server_host = "127.0.0.1";
  int port = 0;
  std::uint32_t host_id = 1;
  std::size_t record_bytes = 8;  // must match the server's store layout
  std::int64_t heartbeat_ms = 50;
  const std::atomic<bool>* stop = nullptr;  // optional external stop flag
  bool verbose = false;
};

// Serves launch commands until the server closes the control connection.
// Replica ids are host_id * 1000 + per-agent sequence number. Throws
// ConnectFailed when the server is unreachable.
void run_agent(const AgentOptions& options);

// Numeric balance record, zero-padded to record_bytes - 1 digits plus a
// trailing newline.
std::string format_balance_record(std::uint64_t value,
                                  std::size_t record_bytes);

struct DemoResult {
  std::size_t records = 0;
  std::size_t agents = 0;
  double elapsed_s = 0.0;
};

// Runs the bank demo: n fixed-size records, `agents` concurrent agent
// loops against one server. Throws VerificationFailed when the written
// output is not a permutation of input+1, and propagates transport errors.
// workdir is created if missing; input.dat / output.dat land there.
DemoResult run_bank_demo(std::size_t n, std::size_t agents,
                         const std::string& workdir, bool verbose = false);

}  // namespace replicanet

#endif  // REPLICANET_DEMO_HPP_
