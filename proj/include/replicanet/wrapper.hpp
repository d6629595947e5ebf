// Consumes a replica's data-access event stream, classifies the access
// pattern, redirects reads/writes to the record store and substitutes
// server data into read results.
#ifndef REPLICANET_WRAPPER_HPP_
#define REPLICANET_WRAPPER_HPP_

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "replicanet/protocol.hpp"
#include "replicanet/record_store.hpp"

namespace replicanet {

struct EvOpen {
  std::string path;
};
struct EvRead {
  int fd = 0;
  std::size_t size = 0;
};
struct EvWrite {
  int fd = 0;
  std::size_t size = 0;
  std::string payload;
};
struct EvMmap {
  std::size_t length = 0;
};
struct EvFork {
  int child_pid = 0;
};
struct EvClose {
  int fd = 0;
};
struct EvExit {
  int status = 0;
};

struct ProcessEvent {
  int pid = 0;
  std::variant<EvOpen, EvRead, EvWrite, EvMmap, EvFork, EvClose, EvExit> kind;
};

struct AccessPattern {
  enum class Kind { PerRecord, Chunked };
  Kind kind = Kind::PerRecord;
  std::size_t chunk_bytes = 0;  // meaningful for Chunked

  bool operator==(const AccessPattern&) const = default;
};

// PerRecord iff the first read asks for exactly one record and no mmap was
// seen; anything else is a chunked (buffered) reader.
AccessPattern classify_pattern(std::size_t first_read_size,
                               std::size_t record_bytes, bool mmap_seen);

class MalformedTrace : public std::runtime_error {
 public:
  explicit MalformedTrace(const std::string& w) : std::runtime_error(w) {}
};

class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& w)
      : std::runtime_error("line " + std::to_string(line) + ": " + w),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// Remote store unreachable; the replica is suspended, not failed, and the
// event is retried on reconnect.
class ServerUnreachable : public std::runtime_error {
 public:
  explicit ServerUnreachable(const std::string& w) : std::runtime_error(w) {}
};

struct Action {
  enum class Kind {
    PassThrough,  // event on an untracked fd, left untouched
    Opened,
    Substituted,  // read redirected; `substituted` holds the bytes
    Wrote,
    Noted,  // mmap / fork bookkeeping
    Closed,
    Exited,
  };
  Kind kind = Kind::PassThrough;
  std::string substituted;
  std::size_t records = 0;       // records dispensed by this event
  bool database_done = false;    // DATABASE_DONE emitted by this event
};

class ReplicaSession {
 public:
  using MessageSink = std::function<void(const Message&)>;

  // observed_paths are the data-storage paths whose descriptors get
  // redirected; everything else passes through.
  ReplicaSession(std::uint32_t replica_id,
                 std::vector<std::string> observed_paths,
                 std::size_t record_bytes, MessageSink sink = {});

  Action handle_event(const ProcessEvent& event, RecordService& server);

  std::uint32_t replica_id() const { return replica_id_; }
  std::size_t records_consumed() const { return records_consumed_; }
  const std::optional<AccessPattern>& pattern() const { return pattern_; }
  bool done_sent() const { return done_sent_; }
  bool exited() const { return exited_; }
  const std::set<int>& child_pids() const { return child_pids_; }
  // Every record payload substituted into a read, in dispense order.
  const std::vector<Record>& substituted_records() const {
    return substituted_;
  }

 private:
  Action redirect_read(const EvRead& rd, RecordService& server);

  std::uint32_t replica_id_;
  std::vector<std::string> observed_paths_;
  std::size_t record_bytes_;
  MessageSink sink_;

  int next_fd_ = 3;
  std::map<int, bool> open_fds_;  // fd -> tracked
  bool mmap_seen_ = false;
  std::optional<AccessPattern> pattern_;
  std::size_t records_consumed_ = 0;
  bool done_sent_ = false;
  bool exited_ = false;
  std::set<int> child_pids_;
  std::vector<Record> substituted_;
};

struct SessionReport {
  std::size_t records_consumed = 0;
  bool clean_exit = false;
};

// Pull-based event source. next() receives the action taken for the
// previous event so programmatic sources can react to substituted data;
// trace replay ignores it. nullopt ends the stream.
class EventSource {
 public:
  virtual ~EventSource() = default;
  virtual std::optional<ProcessEvent> next(const Action* last) = 0;
};

// Drives handle_event until Exit (or stream end).
SessionReport run_session(ReplicaSession& session, EventSource& source,
                          RecordService& server);

// C-style payload escaping for the one-event-per-line trace format:
// "\n" newline, "\t" tab, "\\" backslash, "\040" space.
std::string escape_payload(const std::string& raw);
std::string unescape_payload(const std::string& escaped);

ProcessEvent parse_trace_line(const std::string& line, int line_no);

class TraceReplaySource final : public EventSource {
 public:
  explicit TraceReplaySource(const std::string& path);
  static TraceReplaySource from_text(const std::string& text);

  std::optional<ProcessEvent> next(const Action* last) override;

 private:
  TraceReplaySource() = default;
  std::vector<ProcessEvent> events_;
  std::size_t pos_ = 0;
};

}  // namespace replicanet

#endif  // REPLICANET_WRAPPER_HPP_
