// External analysis: parses a makefile-subset dependency spec into a
// priority task tree and marks replica-eligible nodes.
#ifndef REPLICANET_TASKMAP_HPP_
#define REPLICANET_TASKMAP_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace replicanet {

enum class MergeMode { PutTogether, ReIterate, UserCommand };

struct TaskNode {
  std::string name;
  std::vector<std::string> commands;  // empty for aggregate targets
  std::vector<std::string> children;  // dependency names
  int priority = 0;  // lower runs first; leaves are 1
  bool replica_eligible = false;
  std::optional<std::string> data_storage;  // store config path/string
  std::uint64_t size_hint = 0;
  MergeMode merge_mode = MergeMode::PutTogether;
  std::string merge_command;  // for MergeMode::UserCommand
};

// Shared dependencies make this a DAG; a shared node runs once.
struct TaskTree {
  std::string root;
  std::map<std::string, TaskNode> nodes;
};

struct MakefileRule {
  std::string target;
  std::vector<std::string> deps;
  std::vector<std::string> commands;
};

struct MakefileSpec {
  std::vector<MakefileRule> rules;
  std::map<std::string, std::string> store_annotations;   // #@store
  std::map<std::string, std::string> merge_annotations;   // #@merge
  std::map<std::string, std::uint64_t> size_annotations;  // #@size
};

class MakefileParseError : public std::runtime_error {
 public:
  MakefileParseError(int line, const std::string& w)
      : std::runtime_error("line " + std::to_string(line) + ": " + w),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

class DuplicateTarget : public std::runtime_error {
 public:
  explicit DuplicateTarget(const std::string& w) : std::runtime_error(w) {}
};
class CycleDetected : public std::runtime_error {
 public:
  explicit CycleDetected(const std::string& w) : std::runtime_error(w) {}
};
class MissingRoot : public std::runtime_error {
 public:
  explicit MissingRoot(const std::string& w) : std::runtime_error(w) {}
};
class AnnotationUnknownTarget : public std::runtime_error {
 public:
  explicit AnnotationUnknownTarget(const std::string& w)
      : std::runtime_error(w) {}
};

// Grammar: "target: dep dep ...", command lines start with a tab
// ("@"-prefixed commands allowed), "#@store|#@merge|#@size" directives,
// "#" comments. No variables, no pattern rules.
MakefileSpec parse_makefile(const std::string& text);
MakefileSpec load_makefile(const std::string& path);

// Dependency edges target -> dependency; priorities bottom-up, leaves
// first, siblings share priority. A command-less single-dependency first
// rule ("all: main") is treated as an alias and its dependency becomes
// the root.
TaskTree build_tree(const MakefileSpec& spec);

// Applies the spec's annotations: a declared data storage makes a node
// replica-eligible; merge modes put-together | reiterate | cmd:PATH.
void mark_replicable(TaskTree& tree, const MakefileSpec& spec);

// Nodes whose every descendant is completed and which are not themselves
// completed.
std::set<std::string> runnable_set(const TaskTree& tree,
                                   const std::set<std::string>& completed);

// All transitive dependencies of a node (not including the node).
std::set<std::string> descendants(const TaskTree& tree,
                                  const std::string& name);

}  // namespace replicanet

#endif  // REPLICANET_TASKMAP_HPP_
