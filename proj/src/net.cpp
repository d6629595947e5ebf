#include "replicanet/net.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstring>
#include <sstream>

#include "replicanet/protocol.hpp"
#include "replicanet/wrapper.hpp"

namespace replicanet {

LineSocket::LineSocket(LineSocket&& other) noexcept
    : fd_(other.fd_), buf_(std::move(other.buf_)) {
  other.fd_ = -1;
}

LineSocket& LineSocket::operator=(LineSocket&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = other.fd_;
    buf_ = std::move(other.buf_);
    other.fd_ = -1;
  }
  return *this;
}

LineSocket::~LineSocket() { close(); }

void LineSocket::close() {
  if (fd_ >= 0) {
    ::shutdown(fd_, SHUT_RDWR);
    ::close(fd_);
    fd_ = -1;
  }
}

LineSocket LineSocket::connect_to(const std::string& host, int port) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw ConnectFailed("socket: " + std::string(strerror(errno)));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<uint16_t>(port));
  if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw ConnectFailed("bad address: " + host);
  }
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd);
    throw ConnectFailed("connect " + host + ":" + std::to_string(port) +
                        ": " + strerror(errno));
  }
  return LineSocket(fd);
}

bool LineSocket::send_line(const std::string& line) {
  if (fd_ < 0) return false;
  std::string out = line;
  if (out.empty() || out.back() != '\n') out.push_back('\n');
  std::size_t sent = 0;
  while (sent < out.size()) {
    ssize_t n = ::send(fd_, out.data() + sent, out.size() - sent, MSG_NOSIGNAL);
    if (n <= 0) return false;
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

bool LineSocket::recv_line(std::string& line) {
  while (true) {
    auto nl = buf_.find('\n');
    if (nl != std::string::npos) {
      line = buf_.substr(0, nl);
      buf_.erase(0, nl + 1);
      return true;
    }
    if (fd_ < 0) return false;
    char chunk[4096];
    ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
    if (n <= 0) return false;
    buf_.append(chunk, static_cast<std::size_t>(n));
  }
}

ServerCore::ServerCore(RecordStore& store, ServerOptions options)
    : store_(store),
      options_(std::move(options)),
      sched_(options_.scheduler),
      epoch_(std::chrono::steady_clock::now()) {}

ServerCore::~ServerCore() { stop(); }

std::int64_t ServerCore::now_ms() const {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::steady_clock::now() - epoch_)
      .count();
}

void ServerCore::start() {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw BindFailed("socket: " + std::string(strerror(errno)));
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<uint16_t>(options_.port));
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw BindFailed("bind port " + std::to_string(options_.port) + ": " +
                     strerror(errno));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  bound_port_ = ntohs(addr.sin_port);
  if (::listen(listen_fd_, 16) != 0) throw BindFailed("listen failed");
  accept_thread_ = std::thread([this] { accept_loop(); });
  if (options_.run_scheduler)
    scheduler_thread_ = std::thread([this] { scheduler_loop(); });
}

void ServerCore::stop() {
  if (stopping_.exchange(true)) return;
  if (listen_fd_ >= 0) {
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
  {
    std::lock_guard lock(mu_);
    for (auto& [_, fd] : host_conn_) ::shutdown(fd, SHUT_RDWR);
  }
  if (accept_thread_.joinable()) accept_thread_.join();
  if (scheduler_thread_.joinable()) scheduler_thread_.join();
  for (auto& t : handlers_)
    if (t.joinable()) t.join();
}

void ServerCore::accept_loop() {
  while (!stopping_.load()) {
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) break;
    std::lock_guard lock(mu_);
    handlers_.emplace_back([this, fd] { handle_connection(fd); });
  }
}

void ServerCore::handle_connection(int fd) {
  LineSocket conn(fd);
  std::string line;
  while (!stopping_.load() && conn.recv_line(line)) {
    if (line.empty()) continue;
    // Control message?
    bool control = false;
    try {
      Message msg = decode(line);
      control = true;
      std::lock_guard lock(mu_);
      if (const auto* hb = std::get_if<Heartbeat>(&msg)) {
        host_conn_[hb->host_id] = fd;
        HostStatus st;
        st.host_id = hb->host_id;
        st.availability = hb->availability;
        sched_.on_heartbeat(st, now_ms());
      } else if (std::holds_alternative<DatabaseDone>(msg)) {
        ++done_count_;
      }
    } catch (const MalformedMessage&) {
      control = false;
    }
    if (control) continue;

    // Data-plane request.
    std::istringstream in(line);
    std::string op;
    std::uint32_t replica = 0;
    in >> op >> replica;
    try {
      if (op == "OPEN" && in) {
        store_.open_store(replica);
        {
          std::lock_guard lock(mu_);
          if (std::find(seen_replicas_.begin(), seen_replicas_.end(),
                        replica) == seen_replicas_.end())
            seen_replicas_.push_back(replica);
        }
        conn.send_line("OK");
      } else if (op == "READ" && in) {
        std::size_t size = 0;
        in >> size;
        auto rec = store_.read_next(replica, size);
        if (rec)
          conn.send_line("DATA " + std::to_string(rec->index) + " " +
                         escape_payload(rec->payload));
        else
          conn.send_line("EOD");
      } else if (op == "WRITE" && in) {
        std::string payload;
        in >> payload;  // empty payload escapes to the empty string
        store_.write_back(replica, unescape_payload(payload));
        conn.send_line("OK");
      } else if (op == "CLOSE" && in) {
        store_.close_store(replica);
        conn.send_line("OK");
      } else {
        break;  // protocol violation: drop the connection
      }
    } catch (const std::exception& e) {
      conn.send_line(std::string("ERR ") + e.what());
    }
  }
}

void ServerCore::scheduler_loop() {
  while (!stopping_.load()) {
    {
      std::lock_guard lock(mu_);
      std::int64_t now = now_ms();
      sched_.remove_stale(now, options_.heartbeat_ms);
      sched_.set_remaining_tasks(store_.records_remaining());
      if (!sched_.state().pool.empty()) {
        auto cmds = sched_.run_tick(now);
        for (const auto& cmd : cmds) {
          std::uint32_t host = 0;
          Message wire = Launch{options_.app_id};
          if (const auto* l = std::get_if<CmdLaunch>(&cmd)) {
            host = l->host;
            wire = l->invoke ? Message(InvokeReplica{options_.app_id})
                             : Message(Launch{options_.app_id});
            sched_.note_launched(host, now);
          } else if (const auto* a = std::get_if<CmdActivate>(&cmd)) {
            host = a->host;
            wire = Activate{a->replica};
            sched_.note_activated(a->replica, now);
          } else if (const auto* s = std::get_if<CmdSuspend>(&cmd)) {
            host = s->host;
            wire = Suspend{s->replica};
            sched_.note_suspended(s->replica);
          } else if (const auto* m = std::get_if<CmdMigrate>(&cmd)) {
            host = m->from_host;
            wire = Migrate{m->replica, m->to_host};
            sched_.note_migrated(m->replica, m->to_host, now);
          }
          auto it = host_conn_.find(host);
          if (it != host_conn_.end()) {
            // The handler thread owns the fd; write without taking ownership.
            std::string out = encode(wire);
            ::send(it->second, out.data(), out.size(), MSG_NOSIGNAL);
          }
        }
      }
    }
    for (int i = 0; i < options_.heartbeat_ms && !stopping_.load(); i += 5)
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
}

std::size_t ServerCore::database_done_count() const {
  std::lock_guard lock(mu_);
  return done_count_;
}

bool ServerCore::wait_database_done(std::size_t count,
                                    std::int64_t timeout_ms) {
  auto deadline =
      std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
  while (std::chrono::steady_clock::now() < deadline) {
    if (database_done_count() >= count) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  return database_done_count() >= count;
}

std::vector<std::string> ServerCore::decision_log() const {
  std::lock_guard lock(mu_);
  return sched_.decision_log();
}

std::vector<std::uint32_t> ServerCore::seen_replicas() const {
  std::lock_guard lock(mu_);
  return seen_replicas_;
}

RemoteRecordClient::RemoteRecordClient(const std::string& host, int port)
    : sock_(LineSocket::connect_to(host, port)) {}

std::string RemoteRecordClient::request(const std::string& line) {
  std::lock_guard lock(mu_);
  if (!sock_.send_line(line)) throw ServerUnreachable("send failed");
  std::string reply;
  if (!sock_.recv_line(reply)) throw ServerUnreachable("server closed");
  return reply;
}

void RemoteRecordClient::open_store(std::uint32_t replica_id) {
  std::string r = request("OPEN " + std::to_string(replica_id));
  if (r.rfind("OK", 0) != 0) throw IoFailure("open rejected: " + r);
}

std::optional<Record> RemoteRecordClient::read_next(std::uint32_t replica_id,
                                                    std::size_t size) {
  std::string r = request("READ " + std::to_string(replica_id) + " " +
                          std::to_string(size));
  if (r == "EOD") return std::nullopt;
  if (r.rfind("DATA ", 0) == 0) {
    std::istringstream in(r.substr(5));
    Record rec;
    std::string payload;
    in >> rec.index >> payload;
    rec.payload = unescape_payload(payload);
    return rec;
  }
  throw IoFailure("read rejected: " + r);
}

void RemoteRecordClient::write_back(std::uint32_t replica_id,
                                    std::string payload) {
  std::string r = request("WRITE " + std::to_string(replica_id) + " " +
                          escape_payload(payload));
  if (r.rfind("OK", 0) != 0) throw IoFailure("write rejected: " + r);
}

void RemoteRecordClient::close_store(std::uint32_t replica_id) {
  std::string r = request("CLOSE " + std::to_string(replica_id));
  if (r.rfind("OK", 0) != 0) throw IoFailure("close rejected: " + r);
}

bool RemoteRecordClient::send_raw(const std::string& line) {
  std::lock_guard lock(mu_);
  return sock_.send_line(line);
}

}  // namespace replicanet
