#include "replicanet/wrapper.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace replicanet {

AccessPattern classify_pattern(std::size_t first_read_size,
                               std::size_t record_bytes, bool mmap_seen) {
  if (first_read_size == record_bytes && !mmap_seen)
    return {AccessPattern::Kind::PerRecord, 0};
  return {AccessPattern::Kind::Chunked, first_read_size};
}

ReplicaSession::ReplicaSession(std::uint32_t replica_id,
                               std::vector<std::string> observed_paths,
                               std::size_t record_bytes, MessageSink sink)
    : replica_id_(replica_id),
      observed_paths_(std::move(observed_paths)),
      record_bytes_(record_bytes),
      sink_(std::move(sink)) {}

Action ReplicaSession::redirect_read(const EvRead& rd, RecordService& server) {
  if (!pattern_)
    pattern_ = classify_pattern(rd.size, record_bytes_, mmap_seen_);

  Action act;
  act.kind = Action::Kind::Substituted;
  std::size_t want = 1;
  if (pattern_->kind == AccessPattern::Kind::Chunked)
    want = std::max<std::size_t>(1, (rd.size + record_bytes_ - 1) / record_bytes_);

  bool hit_end = false;
  for (std::size_t i = 0; i < want; ++i) {
    auto rec = server.read_next(replica_id_, rd.size);
    if (!rec) {
      hit_end = true;
      break;
    }
    act.substituted += rec->payload;
    substituted_.push_back(*rec);
    ++act.records;
    ++records_consumed_;
  }
  if (hit_end && !done_sent_) {
    done_sent_ = true;
    act.database_done = true;
    if (sink_) sink_(DatabaseDone{replica_id_});
  }
  return act;
}

Action ReplicaSession::handle_event(const ProcessEvent& event,
                                    RecordService& server) {
  Action act;
  std::visit(
      [&](const auto& ev) {
        using T = std::decay_t<decltype(ev)>;
        if constexpr (std::is_same_v<T, EvOpen>) {
          bool tracked = std::find(observed_paths_.begin(),
                                   observed_paths_.end(),
                                   ev.path) != observed_paths_.end();
          open_fds_[next_fd_++] = tracked;
          if (tracked) server.open_store(replica_id_);
          act.kind = tracked ? Action::Kind::Opened : Action::Kind::PassThrough;
        } else if constexpr (std::is_same_v<T, EvRead>) {
          auto it = open_fds_.find(ev.fd);
          if (it == open_fds_.end())
            throw MalformedTrace("read on unknown fd " + std::to_string(ev.fd));
          if (!it->second) {
            act.kind = Action::Kind::PassThrough;
          } else {
            act = redirect_read(ev, server);
          }
        } else if constexpr (std::is_same_v<T, EvWrite>) {
          auto it = open_fds_.find(ev.fd);
          if (it == open_fds_.end())
            throw MalformedTrace("write on unknown fd " + std::to_string(ev.fd));
          if (!it->second) {
            act.kind = Action::Kind::PassThrough;
          } else {
            server.write_back(replica_id_, ev.payload);
            act.kind = Action::Kind::Wrote;
          }
        } else if constexpr (std::is_same_v<T, EvMmap>) {
          mmap_seen_ = true;
          act.kind = Action::Kind::Noted;
        } else if constexpr (std::is_same_v<T, EvFork>) {
          // Children inherit tracked fds; dispensing stays attributed to
          // this session.
          child_pids_.insert(ev.child_pid);
          act.kind = Action::Kind::Noted;
        } else if constexpr (std::is_same_v<T, EvClose>) {
          auto it = open_fds_.find(ev.fd);
          if (it == open_fds_.end())
            throw MalformedTrace("close on unknown fd " + std::to_string(ev.fd));
          bool tracked = it->second;
          open_fds_.erase(it);
          if (tracked) {
            server.close_store(replica_id_);
            act.kind = Action::Kind::Closed;
          } else {
            act.kind = Action::Kind::PassThrough;
          }
        } else if constexpr (std::is_same_v<T, EvExit>) {
          exited_ = true;
          act.kind = Action::Kind::Exited;
        }
      },
      event.kind);
  return act;
}

SessionReport run_session(ReplicaSession& session, EventSource& source,
                          RecordService& server) {
  bool first = true;
  Action last;
  const Action* last_ptr = nullptr;
  while (auto ev = source.next(last_ptr)) {
    if (first) {
      if (!std::holds_alternative<EvOpen>(ev->kind))
        throw MalformedTrace("stream must start with open");
      first = false;
    }
    last = session.handle_event(*ev, server);
    last_ptr = &last;
    if (session.exited()) break;
  }
  return {session.records_consumed(), session.exited()};
}

std::string escape_payload(const std::string& raw) {
  std::string out;
  for (char c : raw) {
    switch (c) {
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\\': out += "\\\\"; break;
      case ' ': out += "\\040"; break;
      default: out += c;
    }
  }
  return out;
}

std::string unescape_payload(const std::string& escaped) {
  std::string out;
  for (std::size_t i = 0; i < escaped.size(); ++i) {
    if (escaped[i] != '\\') {
      out += escaped[i];
      continue;
    }
    if (i + 1 >= escaped.size()) throw MalformedTrace("dangling escape");
    char c = escaped[++i];
    if (c == 'n') out += '\n';
    else if (c == 't') out += '\t';
    else if (c == '\\') out += '\\';
    else if (c >= '0' && c <= '7') {
      int val = c - '0';
      for (int k = 0; k < 2 && i + 1 < escaped.size() &&
                      escaped[i + 1] >= '0' && escaped[i + 1] <= '7';
           ++k)
        val = val * 8 + (escaped[++i] - '0');
      out += static_cast<char>(val);
    } else {
      throw MalformedTrace(std::string("bad escape \\") + c);
    }
  }
  return out;
}

ProcessEvent parse_trace_line(const std::string& line, int line_no) {
  std::istringstream in(line);
  int pid = 0;
  std::string kind;
  if (!(in >> pid >> kind)) throw ParseError(line_no, "bad event header");
  ProcessEvent ev;
  ev.pid = pid;
  if (kind == "open") {
    std::string path;
    if (!(in >> path)) throw ParseError(line_no, "open needs a path");
    ev.kind = EvOpen{path};
  } else if (kind == "read") {
    int fd = 0;
    std::size_t size = 0;
    if (!(in >> fd >> size) || size == 0)
      throw ParseError(line_no, "read needs fd and positive size");
    ev.kind = EvRead{fd, size};
  } else if (kind == "write") {
    int fd = 0;
    std::size_t size = 0;
    std::string payload;
    if (!(in >> fd >> size >> payload) || size == 0)
      throw ParseError(line_no, "write needs fd, positive size, payload");
    ev.kind = EvWrite{fd, size, unescape_payload(payload)};
  } else if (kind == "mmap") {
    std::size_t length = 0;
    if (!(in >> length) || length == 0)
      throw ParseError(line_no, "mmap needs a positive length");
    ev.kind = EvMmap{length};
  } else if (kind == "fork") {
    int child = 0;
    if (!(in >> child)) throw ParseError(line_no, "fork needs a child pid");
    ev.kind = EvFork{child};
  } else if (kind == "close") {
    int fd = 0;
    if (!(in >> fd)) throw ParseError(line_no, "close needs an fd");
    ev.kind = EvClose{fd};
  } else if (kind == "exit") {
    int status = 0;
    if (!(in >> status)) throw ParseError(line_no, "exit needs a status");
    ev.kind = EvExit{status};
  } else {
    throw ParseError(line_no, "unknown event kind: " + kind);
  }
  return ev;
}

TraceReplaySource::TraceReplaySource(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, "trace unreadable: " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    events_.push_back(parse_trace_line(line, line_no));
  }
}

TraceReplaySource TraceReplaySource::from_text(const std::string& text) {
  TraceReplaySource src;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    src.events_.push_back(parse_trace_line(line, line_no));
  }
  return src;
}

std::optional<ProcessEvent> TraceReplaySource::next(const Action*) {
  if (pos_ >= events_.size()) return std::nullopt;
  return events_[pos_++];
}

}  // namespace replicanet
