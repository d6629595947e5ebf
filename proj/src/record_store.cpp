#include "replicanet/record_store.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <sstream>

namespace replicanet {
namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  auto e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

std::string read_whole_file(const std::string& path, bool& ok) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    ok = false;
    return "";
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  ok = true;
  return buf.str();
}

std::vector<IndexEntry> load_offset_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw StoreMissing("offset table unreadable: " + path);
  std::vector<IndexEntry> table;
  std::uint64_t off = 0, len = 0;
  while (in >> off >> len) table.push_back({off, len});
  return table;
}

}  // namespace

RecordStoreConfig parse_store_config(const std::string& text) {
  RecordStoreConfig cfg;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw IoFailure("bad store config line: " + line);
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key == "input_path") {
      cfg.input_path = value;
    } else if (key == "output_path") {
      cfg.output_path = value;
    } else if (key == "prefetch") {
      cfg.prefetch_depth = std::stoul(value);
    } else if (key == "dynamic") {
      cfg.dynamic = (value == "true" || value == "1");
    } else if (key == "layout") {
      if (value.rfind("fixed:", 0) == 0) {
        cfg.layout = FixedSize{std::stoul(value.substr(6))};
      } else if (value.rfind("delim:", 0) == 0) {
        cfg.layout = Delimited{static_cast<unsigned char>(
            std::stoul(value.substr(6), nullptr, 16))};
      } else if (value.rfind("index:", 0) == 0) {
        cfg.layout = Indexed{load_offset_table(value.substr(6))};
      } else {
        throw IoFailure("unknown layout: " + value);
      }
    } else {
      throw IoFailure("unknown store config key: " + key);
    }
  }
  if (cfg.output_path.empty() && !cfg.input_path.empty())
    cfg.output_path = cfg.input_path + ".out";
  return cfg;
}

RecordStoreConfig load_store_config(const std::string& path) {
  bool ok = false;
  std::string text = read_whole_file(path, ok);
  if (!ok) throw StoreMissing("store config unreadable: " + path);
  return parse_store_config(text);
}

RecordStore::RecordStore(RecordStoreConfig config)
    : config_(std::move(config)) {
  if (config_.output_path.empty())
    config_.output_path = config_.input_path + ".out";
  sealed_ = !config_.dynamic;
}

void RecordStore::load_records_locked() {
  bool ok = false;
  data_ = read_whole_file(config_.input_path, ok);
  if (!ok) throw StoreMissing("input unreadable: " + config_.input_path);
  records_.clear();
  if (const auto* fixed = std::get_if<FixedSize>(&config_.layout)) {
    if (fixed->record_bytes == 0) throw IoFailure("record_bytes is zero");
    if (data_.size() % fixed->record_bytes != 0)
      throw IoFailure("store length is not a multiple of the record size");
    for (std::uint64_t off = 0; off < data_.size(); off += fixed->record_bytes)
      records_.push_back({off, fixed->record_bytes});
  } else if (const auto* delim = std::get_if<Delimited>(&config_.layout)) {
    std::uint64_t start = 0;
    for (std::uint64_t i = 0; i < data_.size(); ++i) {
      if (static_cast<unsigned char>(data_[i]) == delim->delimiter) {
        records_.push_back({start, i - start});
        start = i + 1;
      }
    }
    if (start < data_.size())  // unterminated tail still counts
      records_.push_back({start, data_.size() - start});
  } else {
    const auto& table = std::get<Indexed>(config_.layout).table;
    std::uint64_t prev_end = 0;
    for (const auto& e : table) {
      if (e.offset < prev_end)
        throw IoFailure("index offsets overlap or decrease");
      if (e.offset + e.length > data_.size())
        throw IoFailure("index entry outside store bounds");
      prev_end = e.offset + e.length;
    }
    records_ = table;
  }
  dispensed_to_.resize(records_.size(), 0);
  loaded_ = true;
}

void RecordStore::rescan_locked() {
  std::size_t before = records_.size();
  load_records_locked();
  if (records_.size() < before) records_.resize(before);  // never shrink
  dispensed_to_.resize(records_.size(), 0);
}

void RecordStore::open_store(std::uint32_t) {
  std::lock_guard lock(mu_);
  if (open_count_ == 0) {
    // First open actually opens the storage; later opens are filtered.
    if (!loaded_) load_records_locked();
    bool in_place = config_.output_path == config_.input_path;
    if (!in_place) {
      output_.open(config_.output_path,
                   std::ios::binary | (ever_opened_ ? std::ios::app
                                                    : std::ios::trunc));
      if (!output_) throw IoFailure("cannot open output: " + config_.output_path);
    }
    ever_opened_ = true;
  }
  ++open_count_;
}

std::optional<Record> RecordStore::read_next(std::uint32_t replica_id,
                                             std::size_t /*size*/) {
  std::lock_guard lock(mu_);
  if (open_count_ == 0)
    throw StoreClosed("read_next on closed store");
  if (cursor_ >= records_.size()) {
    if (config_.dynamic && !sealed_) rescan_locked();
    if (cursor_ >= records_.size()) return std::nullopt;
  }
  const IndexEntry& e = records_[cursor_];
  if (cursor_ >= buf_lo_ && cursor_ < buf_hi_) {
    counter_ += std::holds_alternative<Delimited>(config_.layout) ? 1
                                                                  : e.length;
  } else {
    ++storage_reads_;
  }
  Record rec{cursor_, data_.substr(e.offset, e.length)};
  dispensed_to_[cursor_] = replica_id;
  ++cursor_;
  return rec;
}

void RecordStore::write_back(std::uint32_t, std::string payload) {
  {
    std::lock_guard lock(mu_);
    if (open_count_ == 0) throw IoFailure("write_back on closed store");
  }
  // One write in flight at a time; arrival order is the lock queue order.
  std::lock_guard wlock(write_mu_);
  if (config_.output_path == config_.input_path) {
    // In-place update, FixedSize only: overwrite successive record slots.
    const auto* fixed = std::get_if<FixedSize>(&config_.layout);
    if (!fixed)
      throw IoFailure("in-place write requires a fixed-size layout");
    payload.resize(fixed->record_bytes, ' ');
    std::fstream f(config_.input_path,
                   std::ios::binary | std::ios::in | std::ios::out);
    if (!f) throw IoFailure("cannot reopen store for in-place write");
    f.seekp(static_cast<std::streamoff>(writes_arrived_ *
                                        fixed->record_bytes));
    f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!f) throw IoFailure("in-place write failed");
  } else {
    if (payload.empty() || payload.back() != '\n') payload.push_back('\n');
    output_.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    output_.flush();
    if (!output_) throw IoFailure("write to output failed");
  }
  ++writes_arrived_;
}

void RecordStore::close_store(std::uint32_t) {
  std::lock_guard lock(mu_);
  if (open_count_ == 0) throw NotOpen("close without matching open");
  if (--open_count_ == 0) {
    if (output_.is_open()) {
      output_.flush();
      output_.close();
    }
  }
}

std::size_t RecordStore::prefetch(std::size_t n) {
  std::lock_guard lock(mu_);
  if (!loaded_) load_records_locked();
  buf_lo_ = cursor_;
  buf_hi_ = std::min(cursor_ + n, records_.size());
  return buf_hi_ - buf_lo_;
}

void RecordStore::seal() {
  std::lock_guard lock(mu_);
  sealed_ = true;
}

std::size_t RecordStore::total_records() const {
  std::lock_guard lock(mu_);
  return records_.size();
}

std::size_t RecordStore::records_remaining() const {
  std::lock_guard lock(mu_);
  return records_.size() - cursor_;
}

std::size_t RecordStore::dispensed_by(std::uint32_t replica_id) const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(
      std::count(dispensed_to_.begin(), dispensed_to_.begin() + cursor_,
                 replica_id));
}

int RecordStore::open_count() const {
  std::lock_guard lock(mu_);
  return open_count_;
}

bool RecordStore::storage_open() const { return open_count() > 0; }

std::uint64_t RecordStore::buffer_counter() const {
  std::lock_guard lock(mu_);
  return counter_;
}

std::uint64_t RecordStore::storage_reads() const {
  std::lock_guard lock(mu_);
  return storage_reads_;
}

void merge_outputs(const std::vector<std::string>& part_paths,
                   const MergePolicy& policy, const std::string& final_path) {
  if (const auto* user = std::get_if<UserMergeCommand>(&policy)) {
    std::string cmd = user->command;
    for (const auto& p : part_paths) cmd += " " + p;
    cmd += " > " + final_path;
    int rc = std::system(cmd.c_str());
    if (rc != 0)
      throw MergeCommandFailed("merge command exited nonzero: " +
                               user->command);
    return;
  }
  std::ofstream out(final_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoFailure("cannot open merge output: " + final_path);
  for (const auto& p : part_paths) {
    bool ok = false;
    std::string part;
    {
      std::ifstream in(p, std::ios::binary);
      ok = static_cast<bool>(in);
      std::ostringstream buf;
      buf << in.rdbuf();
      part = buf.str();
    }
    if (!ok) throw IoFailure("merge part unreadable: " + p);
    out << part;
  }
}

void write_stats_log(const std::string& path, std::uint32_t host_id,
                     std::size_t record_count) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoFailure("cannot write stats log: " + path);
  out << "host ID#" << host_id << "\n" << record_count << " records\n";
}

}  // namespace replicanet
