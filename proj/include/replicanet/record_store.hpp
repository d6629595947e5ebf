// Server-side data storage: dispenses each record exactly once to
// concurrent requesters, serializes write-back, filters duplicate
// open/close, and signals end-of-data.
#ifndef REPLICANET_RECORD_STORE_HPP_
#define REPLICANET_RECORD_STORE_HPP_

#include <cstdint>
#include <fstream>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace replicanet {

struct FixedSize {
  std::size_t record_bytes = 0;
};
struct Delimited {
  unsigned char delimiter = '\n';
};
struct IndexEntry {
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
};
struct Indexed {
  std::vector<IndexEntry> table;
};

using RecordLayout = std::variant<FixedSize, Delimited, Indexed>;

class StoreMissing : public std::runtime_error {
 public:
  explicit StoreMissing(const std::string& w) : std::runtime_error(w) {}
};
class StoreClosed : public std::runtime_error {
 public:
  explicit StoreClosed(const std::string& w) : std::runtime_error(w) {}
};
class NotOpen : public std::runtime_error {
 public:
  explicit NotOpen(const std::string& w) : std::runtime_error(w) {}
};
class IoFailure : public std::runtime_error {
 public:
  explicit IoFailure(const std::string& w) : std::runtime_error(w) {}
};
class MergeCommandFailed : public std::runtime_error {
 public:
  explicit MergeCommandFailed(const std::string& w) : std::runtime_error(w) {}
};

struct Record {
  std::size_t index = 0;  // position in the store, 0-based
  std::string payload;
};

// The data-plane surface shared by the in-process store and the socket
// client, so wrapper sessions do not care where the store lives.
class RecordService {
 public:
  virtual ~RecordService() = default;
  virtual void open_store(std::uint32_t replica_id) = 0;
  // nullopt means EndOfData; every later call is EndOfData too once the
  // store is sealed.
  virtual std::optional<Record> read_next(std::uint32_t replica_id,
                                          std::size_t size) = 0;
  virtual void write_back(std::uint32_t replica_id, std::string payload) = 0;
  virtual void close_store(std::uint32_t replica_id) = 0;
};

struct RecordStoreConfig {
  std::string input_path;
  std::string output_path;  // may equal input_path (FixedSize only)
  RecordLayout layout = FixedSize{4};
  std::size_t prefetch_depth = 0;  // 0 = no automatic prefetch
  bool dynamic = false;            // input may grow until seal()
};

// Store config file: "key = value" lines. Keys: input_path, output_path,
// layout (fixed:<bytes> | delim:<hex byte> | index:<offset table path>),
// prefetch. Offset-table file: one "offset length" pair per line.
RecordStoreConfig parse_store_config(const std::string& text);
RecordStoreConfig load_store_config(const std::string& path);

class RecordStore final : public RecordService {
 public:
  explicit RecordStore(RecordStoreConfig config);

  void open_store(std::uint32_t replica_id) override;
  std::optional<Record> read_next(std::uint32_t replica_id,
                                  std::size_t size) override;
  void write_back(std::uint32_t replica_id, std::string payload) override;
  void close_store(std::uint32_t replica_id) override;

  // Loads up to n next records into the index buffer. Returns entries
  // loaded (short fill at end of store).
  std::size_t prefetch(std::size_t n);

  // Marks the store no-more-appends; EndOfData becomes final.
  void seal();

  std::size_t total_records() const;
  std::size_t records_remaining() const;
  std::size_t dispensed_by(std::uint32_t replica_id) const;
  int open_count() const;
  bool storage_open() const;

  // Index buffer counter: advances by the record size per buffered
  // dispense (by one per entry for Delimited layout).
  std::uint64_t buffer_counter() const;
  // Number of read_next calls that had to touch storage state beyond the
  // buffer (used to verify prefetched reads bypass storage).
  std::uint64_t storage_reads() const;

  const RecordStoreConfig& config() const { return config_; }

 private:
  void load_records_locked();
  void rescan_locked();

  RecordStoreConfig config_;
  mutable std::mutex mu_;
  bool loaded_ = false;
  bool sealed_ = false;
  bool ever_opened_ = false;
  int open_count_ = 0;
  std::string data_;
  std::vector<IndexEntry> records_;
  std::size_t cursor_ = 0;  // next undispensed record index
  std::vector<std::uint32_t> dispensed_to_;

  // Index buffer: records [buf_lo_, buf_hi_) are resident in data_ and
  // served with counter arithmetic only.
  std::size_t buf_lo_ = 0;
  std::size_t buf_hi_ = 0;
  std::uint64_t counter_ = 0;
  std::uint64_t storage_reads_ = 0;

  std::mutex write_mu_;
  std::ofstream output_;
  std::size_t writes_arrived_ = 0;
};

struct Concatenate {};
struct UserMergeCommand {
  std::string command;  // invoked as: <command> <part...> > <final>
};
using MergePolicy = std::variant<Concatenate, UserMergeCommand>;

// External-analysis result merge. Concatenate appends the parts in order;
// a user command is run with the part paths and its stdout adopted.
void merge_outputs(const std::vector<std::string>& part_paths,
                   const MergePolicy& policy, const std::string& final_path);

// Per-replica stats log, "host ID#<n>" then "<k> records".
void write_stats_log(const std::string& path, std::uint32_t host_id,
                     std::size_t record_count);

}  // namespace replicanet

#endif  // REPLICANET_RECORD_STORE_HPP_
