// Control-plane messages exchanged between the server and client agents,
// and their newline-delimited ASCII wire encoding.
#ifndef REPLICANET_PROTOCOL_HPP_
#define REPLICANET_PROTOCOL_HPP_

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <variant>

namespace replicanet {

inline constexpr int kDefaultServerPort = 7070;

// Per-host CPU census carried by heartbeats. Availability is the percent
// of the CPU the middleware may exploit, 0..100.
struct HostStatus {
  std::uint32_t host_id = 0;
  int availability = 0;  // 0..100
  int active_replicas = 0;
  int suspended_replicas = 0;
  std::int64_t last_seen_ms = 0;

  bool operator==(const HostStatus&) const = default;
};

struct Heartbeat {
  std::uint32_t host_id = 0;
  int availability = 0;
  bool operator==(const Heartbeat&) const = default;
};
struct Launch {
  std::string app_id;
  bool operator==(const Launch&) const = default;
};
struct InvokeReplica {
  std::string app_id;
  bool operator==(const InvokeReplica&) const = default;
};
struct Suspend {
  std::uint32_t replica_id = 0;
  bool operator==(const Suspend&) const = default;
};
struct Activate {
  std::uint32_t replica_id = 0;
  bool operator==(const Activate&) const = default;
};
struct Migrate {
  std::uint32_t replica_id = 0;
  std::uint32_t target_host = 0;
  bool operator==(const Migrate&) const = default;
};
struct DatabaseDone {
  std::uint32_t replica_id = 0;
  bool operator==(const DatabaseDone&) const = default;
};

using Message = std::variant<Heartbeat, Launch, InvokeReplica, Suspend,
                             Activate, Migrate, DatabaseDone>;

// Raised by decode() on unknown tag, wrong arity or a non-numeric field.
// The caller is expected to drop the offending connection.
class MalformedMessage : public std::runtime_error {
 public:
  explicit MalformedMessage(const std::string& what)
      : std::runtime_error(what) {}
};

// One ASCII line, newline terminated. Total on any in-range Message.
std::string encode(const Message& msg);

// Inverse of encode. Accepts the line with or without the trailing newline.
Message decode(const std::string& line);

// After this many silent periods the server drops a host from the pool.
inline constexpr int kStalePeriods = 3;

// Emits one Heartbeat per period until *stop becomes true. The sink returns
// false when unavailable; the message is dropped and retried next period
// with fresh status (no backlog). Returns the number of accepted sends.
int heartbeat_loop(const std::function<HostStatus()>& status_source,
                   const std::function<bool(const std::string&)>& sink,
                   std::chrono::milliseconds period,
                   const std::atomic<bool>& stop);

}  // namespace replicanet

#endif  // REPLICANET_PROTOCOL_HPP_
