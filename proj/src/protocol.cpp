#include "replicanet/protocol.hpp"

#include <charconv>
#include <sstream>
#include <thread>
#include <vector>

namespace replicanet {
namespace {

std::vector<std::string> tokenize(std::string line) {
  if (!line.empty() && line.back() == '\n') line.pop_back();
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::uint64_t parse_uint(const std::string& tok, const char* field) {
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc{} || ptr != tok.data() + tok.size())
    throw MalformedMessage(std::string("non-numeric ") + field + ": " + tok);
  return value;
}

void expect_arity(const std::vector<std::string>& toks, std::size_t n) {
  if (toks.size() != n)
    throw MalformedMessage("wrong arity for " + toks[0]);
}

}  // namespace

std::string encode(const Message& msg) {
  std::ostringstream out;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, Heartbeat>)
          out << "HEARTBEAT_MSG " << m.host_id << ' ' << m.availability;
        else if constexpr (std::is_same_v<T, Launch>)
          out << "LAUNCH " << m.app_id;
        else if constexpr (std::is_same_v<T, InvokeReplica>)
          out << "INVOKE_REPLICA " << m.app_id;
        else if constexpr (std::is_same_v<T, Suspend>)
          out << "SUSPEND " << m.replica_id;
        else if constexpr (std::is_same_v<T, Activate>)
          out << "ACTIVATE " << m.replica_id;
        else if constexpr (std::is_same_v<T, Migrate>)
          out << "MIGRATE " << m.replica_id << ' ' << m.target_host;
        else if constexpr (std::is_same_v<T, DatabaseDone>)
          out << "DATABASE_DONE_MSG " << m.replica_id;
      },
      msg);
  out << '\n';
  return out.str();
}

Message decode(const std::string& line) {
  auto toks = tokenize(line);
  if (toks.empty()) throw MalformedMessage("empty line");
  const std::string& tag = toks[0];
  if (tag == "HEARTBEAT_MSG") {
    expect_arity(toks, 3);
    Heartbeat hb;
    hb.host_id = static_cast<std::uint32_t>(parse_uint(toks[1], "host_id"));
    hb.availability = static_cast<int>(parse_uint(toks[2], "availability"));
    if (hb.availability > 100)
      throw MalformedMessage("availability out of range: " + toks[2]);
    return hb;
  }
  if (tag == "LAUNCH") {
    expect_arity(toks, 2);
    return Launch{toks[1]};
  }
  if (tag == "INVOKE_REPLICA") {
    expect_arity(toks, 2);
    return InvokeReplica{toks[1]};
  }
  if (tag == "SUSPEND") {
    expect_arity(toks, 2);
    return Suspend{static_cast<std::uint32_t>(parse_uint(toks[1], "replica_id"))};
  }
  if (tag == "ACTIVATE") {
    expect_arity(toks, 2);
    return Activate{static_cast<std::uint32_t>(parse_uint(toks[1], "replica_id"))};
  }
  if (tag == "MIGRATE") {
    expect_arity(toks, 3);
    Migrate m;
    m.replica_id = static_cast<std::uint32_t>(parse_uint(toks[1], "replica_id"));
    m.target_host = static_cast<std::uint32_t>(parse_uint(toks[2], "target_host"));
    return m;
  }
  if (tag == "DATABASE_DONE_MSG") {
    expect_arity(toks, 2);
    return DatabaseDone{
        static_cast<std::uint32_t>(parse_uint(toks[1], "replica_id"))};
  }
  throw MalformedMessage("unknown tag: " + tag);
}

int heartbeat_loop(const std::function<HostStatus()>& status_source,
                   const std::function<bool(const std::string&)>& sink,
                   std::chrono::milliseconds period,
                   const std::atomic<bool>& stop) {
  int accepted = 0;
  while (!stop.load(std::memory_order_relaxed)) {
    HostStatus st = status_source();
    Heartbeat hb{st.host_id, st.availability};
    if (sink(encode(hb))) ++accepted;
    // Sleep in small slices so shutdown is prompt.
    auto deadline = std::chrono::steady_clock::now() + period;
    while (!stop.load(std::memory_order_relaxed) &&
           std::chrono::steady_clock::now() < deadline) {
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
  }
  return accepted;
}

}  // namespace replicanet
