#include "doctest.h"

#include <optional>
#include <string>
#include <vector>

#include "replicanet/wrapper.hpp"

using namespace replicanet;

namespace {

// In-memory record service: dispenses from a list, logs writes.
class FakeService final : public RecordService {
 public:
  explicit FakeService(std::vector<std::string> records)
      : records_(std::move(records)) {}

  void open_store(std::uint32_t) override { ++opens; }
  std::optional<Record> read_next(std::uint32_t, std::size_t) override {
    if (cursor_ >= records_.size()) return std::nullopt;
    Record r{cursor_, records_[cursor_]};
    ++cursor_;
    return r;
  }
  void write_back(std::uint32_t, std::string payload) override {
    writes.push_back(std::move(payload));
  }
  void close_store(std::uint32_t) override { ++closes; }

  int opens = 0;
  int closes = 0;
  std::vector<std::string> writes;

 private:
  std::vector<std::string> records_;
  std::size_t cursor_ = 0;
};

std::vector<std::string> five_records() {
  return {"101\n", "102\n", "103\n", "104\n", "105\n"};
}

}  // namespace

TEST_CASE("pattern classification") {
  // One-record first read, no mmap: the classic per-record C reader.
  CHECK(classify_pattern(4, 4, false) ==
        AccessPattern{AccessPattern::Kind::PerRecord, 0});
  // Buffered reader pulling a big block.
  CHECK(classify_pattern(8192, 20, false) ==
        AccessPattern{AccessPattern::Kind::Chunked, 8192});
  // Memory-mapped access is chunked even when sizes happen to match.
  CHECK(classify_pattern(4, 4, true) ==
        AccessPattern{AccessPattern::Kind::Chunked, 4});
}

TEST_CASE("per-record session dispenses one record per read") {
  FakeService svc(five_records());
  ReplicaSession session(7, {"in.dat"}, 4);
  session.handle_event({1, EvOpen{"in.dat"}}, svc);
  for (int i = 0; i < 5; ++i) {
    Action act = session.handle_event({1, EvRead{3, 4}}, svc);
    CHECK(act.kind == Action::Kind::Substituted);
    CHECK(act.records == 1);
    CHECK(act.substituted == five_records()[i]);
  }
  CHECK(session.pattern()->kind == AccessPattern::Kind::PerRecord);
  CHECK(session.records_consumed() == 5);
  CHECK(!session.done_sent());
}

TEST_CASE("one big chunked read returns the whole small store") {
  FakeService svc(five_records());
  ReplicaSession session(7, {"in.dat"}, 4);
  session.handle_event({1, EvOpen{"in.dat"}}, svc);
  Action act = session.handle_event({1, EvRead{3, 8192}}, svc);
  CHECK(session.pattern() == AccessPattern{AccessPattern::Kind::Chunked, 8192});
  CHECK(act.records == 5);
  CHECK(act.substituted == "101\n102\n103\n104\n105\n");
}

TEST_CASE("end of data substitutes short and reports done exactly once") {
  std::vector<Message> sent;
  FakeService svc({"aaaa", "bbbb", "cccc", "dddd", "eeee", "ffff", "gggg"});
  ReplicaSession session(9, {"in.dat"}, 4,
                         [&](const Message& m) { sent.push_back(m); });
  session.handle_event({1, EvOpen{"in.dat"}}, svc);
  // Chunk of 5 records per read; the second read runs out mid-fill.
  Action first = session.handle_event({1, EvRead{3, 20}}, svc);
  CHECK(first.records == 5);
  CHECK(!first.database_done);
  Action second = session.handle_event({1, EvRead{3, 20}}, svc);
  CHECK(second.records == 2);  // short substitution
  CHECK(second.substituted == "ffffgggg");
  CHECK(second.database_done);
  REQUIRE(sent.size() == 1);
  CHECK(sent[0] == Message{DatabaseDone{9}});
  // Further reads stay empty and never signal done again.
  Action third = session.handle_event({1, EvRead{3, 20}}, svc);
  CHECK(third.records == 0);
  CHECK(third.substituted.empty());
  CHECK(!third.database_done);
  CHECK(sent.size() == 1);
}

TEST_CASE("mmap before the first read forces chunked mode") {
  FakeService svc(five_records());
  ReplicaSession session(7, {"in.dat"}, 4);
  session.handle_event({846, EvOpen{"in.dat"}}, svc);
  Action noted = session.handle_event({846, EvMmap{331776}}, svc);
  CHECK(noted.kind == Action::Kind::Noted);
  session.handle_event({846, EvRead{3, 4}}, svc);
  CHECK(session.pattern()->kind == AccessPattern::Kind::Chunked);
}

TEST_CASE("untracked descriptors pass through untouched") {
  FakeService svc(five_records());
  ReplicaSession session(7, {"in.dat"}, 4);
  Action open = session.handle_event({1, EvOpen{"/etc/hosts"}}, svc);
  CHECK(open.kind == Action::Kind::PassThrough);
  CHECK(svc.opens == 0);
  Action read = session.handle_event({1, EvRead{3, 4}}, svc);
  CHECK(read.kind == Action::Kind::PassThrough);
  CHECK(session.records_consumed() == 0);
  Action close = session.handle_event({1, EvClose{3}}, svc);
  CHECK(close.kind == Action::Kind::PassThrough);
  CHECK(svc.closes == 0);
}

TEST_CASE("events on unknown descriptors are malformed") {
  FakeService svc(five_records());
  ReplicaSession session(7, {"in.dat"}, 4);
  session.handle_event({1, EvOpen{"in.dat"}}, svc);
  CHECK_THROWS_AS(session.handle_event({1, EvRead{99, 4}}, svc),
                  MalformedTrace);
  CHECK_THROWS_AS(session.handle_event({1, EvWrite{99, 4, "x"}}, svc),
                  MalformedTrace);
  CHECK_THROWS_AS(session.handle_event({1, EvClose{99}}, svc), MalformedTrace);
}

TEST_CASE("full trace replay: per-record bank loop") {
  FakeService svc({"0001\n", "0002\n", "0003\n"});
  ReplicaSession session(3, {"in.dat", "out.dat"}, 5);
  auto src = TraceReplaySource::from_text(
      "# three-record run\n"
      "12 open in.dat\n"
      "12 open out.dat\n"
      "12 read 3 5\n"
      "12 write 4 5 0002\\n\n"
      "12 read 3 5\n"
      "12 write 4 5 0003\\n\n"
      "12 read 3 5\n"
      "12 write 4 5 0004\\n\n"
      "12 close 3\n"
      "12 close 4\n"
      "12 exit 0\n");
  SessionReport report = run_session(session, src, svc);
  CHECK(report.records_consumed == 3);
  CHECK(report.clean_exit);
  CHECK(svc.writes == std::vector<std::string>{"0002\n", "0003\n", "0004\n"});
  CHECK(svc.opens == 2);
  CHECK(svc.closes == 2);
  REQUIRE(session.substituted_records().size() == 3);
  CHECK(session.substituted_records()[0].payload == "0001\n");
}

TEST_CASE("a session stream must start with an open") {
  FakeService svc(five_records());
  ReplicaSession session(3, {"in.dat"}, 4);
  auto src = TraceReplaySource::from_text("12 read 3 4\n");
  CHECK_THROWS_AS(run_session(session, src, svc), MalformedTrace);
}

TEST_CASE("fork is noted and children tracked") {
  FakeService svc(five_records());
  ReplicaSession session(3, {"in.dat"}, 4);
  session.handle_event({12, EvOpen{"in.dat"}}, svc);
  session.handle_event({12, EvFork{77}}, svc);
  CHECK(session.child_pids().count(77) == 1);
}

TEST_CASE("payload escaping round trip") {
  std::string raw = "a b\tc\nd\\e  f";
  std::string escaped = escape_payload(raw);
  CHECK(escaped == "a\\040b\\tc\\nd\\\\e\\040\\040f");
  CHECK(unescape_payload(escaped) == raw);
  CHECK(unescape_payload("\\040") == " ");
  CHECK(escape_payload("") == "");
  CHECK(unescape_payload("") == "");
  CHECK_THROWS_AS(unescape_payload("dangling\\"), MalformedTrace);
  CHECK_THROWS_AS(unescape_payload("bad\\q"), MalformedTrace);
}

TEST_CASE("trace line parsing") {
  ProcessEvent mm = parse_trace_line("846 mmap 331776", 1);
  CHECK(mm.pid == 846);
  REQUIRE(std::holds_alternative<EvMmap>(mm.kind));
  CHECK(std::get<EvMmap>(mm.kind).length == 331776);

  ProcessEvent op = parse_trace_line("12 open /data/in.dat", 1);
  CHECK(std::get<EvOpen>(op.kind).path == "/data/in.dat");

  ProcessEvent wr = parse_trace_line("12 write 4 5 ab\\040cd", 1);
  CHECK(std::get<EvWrite>(wr.kind).payload == "ab cd");

  CHECK_THROWS_AS(parse_trace_line("12 frobnicate 1", 7), ParseError);
  CHECK_THROWS_AS(parse_trace_line("12 read 3 0", 7), ParseError);
  CHECK_THROWS_AS(parse_trace_line("garbage", 7), ParseError);
  try {
    parse_trace_line("12 frobnicate 1", 41);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 41);
  }
}

TEST_CASE("per-record and chunked modes consume identical records") {
  auto records = five_records();

  FakeService per_svc(records);
  ReplicaSession per(1, {"in"}, 4);
  per.handle_event({1, EvOpen{"in"}}, per_svc);
  std::string per_data;
  while (true) {
    Action a = per.handle_event({1, EvRead{3, 4}}, per_svc);
    if (a.records == 0) break;
    per_data += a.substituted;
  }

  FakeService chunk_svc(records);
  ReplicaSession chunked(2, {"in"}, 4);
  chunked.handle_event({1, EvOpen{"in"}}, chunk_svc);
  std::string chunk_data;
  while (true) {
    Action a = chunked.handle_event({1, EvRead{3, 8}}, chunk_svc);
    if (a.records == 0) break;
    chunk_data += a.substituted;
  }

  CHECK(per.records_consumed() == chunked.records_consumed());
  CHECK(per_data == chunk_data);
}
