// Stream-socket transport: the server core accepting agent connections
// and the remote record-service client used by agent-side sessions.
//
// One message per line. Control lines use the protocol module's grammar;
// data-plane requests extend it:
//   OPEN <replica>                      -> OK | ERR <msg>
//   READ <replica> <size>               -> DATA <index> <payload-escaped> | EOD
//   WRITE <replica> <payload-escaped>   -> OK | ERR <msg>
//   CLOSE <replica>                     -> OK | ERR <msg>
#ifndef REPLICANET_NET_HPP_
#define REPLICANET_NET_HPP_

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "replicanet/record_store.hpp"
#include "replicanet/scheduler.hpp"

namespace replicanet {

class BindFailed : public std::runtime_error {
 public:
  explicit BindFailed(const std::string& w) : std::runtime_error(w) {}
};
class ConnectFailed : public std::runtime_error {
 public:
  explicit ConnectFailed(const std::string& w) : std::runtime_error(w) {}
};

// Blocking line-framed TCP connection.
class LineSocket {
 public:
  LineSocket() = default;
  explicit LineSocket(int fd) : fd_(fd) {}
  LineSocket(LineSocket&& other) noexcept;
  LineSocket& operator=(LineSocket&& other) noexcept;
  LineSocket(const LineSocket&) = delete;
  LineSocket& operator=(const LineSocket&) = delete;
  ~LineSocket();

  static LineSocket connect_to(const std::string& host, int port);

  bool send_line(const std::string& line);  // appends '\n' if missing
  // false on EOF / error.
  bool recv_line(std::string& line);
  void close();
  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }

 private:
  int fd_ = -1;
  std::string buf_;
};

struct ServerOptions {
  int port = kDefaultServerPort;  // 0: ephemeral, see bound_port()
  SchedulerConfig scheduler;
  std::string app_id = "app";
  bool run_scheduler = true;
  std::int64_t heartbeat_ms = 1000;
};

// Listener + record store + scheduler. Each agent connection gets a
// handler thread; heartbeats feed the scheduler, whose commands are sent
// back on the sender's connection.
class ServerCore {
 public:
  ServerCore(RecordStore& store, ServerOptions options);
  ~ServerCore();

  void start();  // throws BindFailed
  void stop();

  int bound_port() const { return bound_port_; }
  std::size_t database_done_count() const;
  // Blocks until `count` DATABASE_DONE messages arrived or timeout.
  bool wait_database_done(std::size_t count, std::int64_t timeout_ms);
  std::vector<std::string> decision_log() const;
  // Every replica id that opened the store on this server.
  std::vector<std::uint32_t> seen_replicas() const;

 private:
  void accept_loop();
  void handle_connection(int fd);
  void scheduler_loop();
  std::int64_t now_ms() const;

  RecordStore& store_;
  ServerOptions options_;
  int listen_fd_ = -1;
  int bound_port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread accept_thread_;
  std::thread scheduler_thread_;
  mutable std::mutex mu_;
  std::vector<std::thread> handlers_;
  std::map<std::uint32_t, int> host_conn_;  // host id -> connection fd
  std::vector<std::uint32_t> seen_replicas_;
  std::size_t done_count_ = 0;
  Scheduler sched_;
  std::chrono::steady_clock::time_point epoch_;
};

// RecordService over a server connection; safe for one session at a time.
class RemoteRecordClient final : public RecordService {
 public:
  RemoteRecordClient(const std::string& host, int port);  // ConnectFailed

  void open_store(std::uint32_t replica_id) override;
  std::optional<Record> read_next(std::uint32_t replica_id,
                                  std::size_t size) override;
  void write_back(std::uint32_t replica_id, std::string payload) override;
  void close_store(std::uint32_t replica_id) override;

  bool send_raw(const std::string& line);  // control messages (heartbeat)

 private:
  std::string request(const std::string& line);

  std::mutex mu_;
  LineSocket sock_;
};

}  // namespace replicanet

#endif  // REPLICANET_NET_HPP_
