#include "replicanet/taskmap.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

namespace replicanet {
namespace {

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::string rtrim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t'))
    s.pop_back();
  return s;
}

}  // namespace

MakefileSpec parse_makefile(const std::string& text) {
  MakefileSpec spec;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  MakefileRule* current = nullptr;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = rtrim(raw);
    if (line.empty()) {
      current = nullptr;
      continue;
    }
    if (line.rfind("#@", 0) == 0) {
      auto toks = split_ws(line.substr(2));
      if (toks.size() < 3)
        throw MakefileParseError(line_no, "directive needs target and value");
      const std::string& directive = toks[0];
      const std::string& target = toks[1];
      if (directive == "store") {
        // Everything after the target is the store config.
        auto pos = line.find(target) + target.size();
        std::string value = line.substr(pos);
        value.erase(0, value.find_first_not_of(" \t"));
        spec.store_annotations[target] = value;
      } else if (directive == "merge") {
        spec.merge_annotations[target] = toks[2];
      } else if (directive == "size") {
        spec.size_annotations[target] = std::stoull(toks[2]);
      } else {
        throw MakefileParseError(line_no, "unknown directive #@" + directive);
      }
      continue;
    }
    if (line[0] == '#') continue;
    if (line[0] == '\t') {
      if (!current)
        throw MakefileParseError(line_no, "command line outside a rule");
      std::string cmd = line.substr(1);
      if (!cmd.empty() && cmd[0] == '@') cmd.erase(0, 1);
      current->commands.push_back(cmd);
      continue;
    }
    auto colon = line.find(':');
    if (colon == std::string::npos)
      throw MakefileParseError(line_no,
                               "expected 'target: deps' or tab-indented command");
    std::string target = rtrim(line.substr(0, colon));
    if (target.empty() || target.find(' ') != std::string::npos)
      throw MakefileParseError(line_no, "bad target: '" + target + "'");
    for (const auto& r : spec.rules)
      if (r.target == target) throw DuplicateTarget(target);
    MakefileRule rule;
    rule.target = target;
    rule.deps = split_ws(line.substr(colon + 1));
    spec.rules.push_back(std::move(rule));
    current = &spec.rules.back();
  }
  return spec;
}

MakefileSpec load_makefile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MakefileParseError(0, "makefile unreadable: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_makefile(buf.str());
}

TaskTree build_tree(const MakefileSpec& spec) {
  if (spec.rules.empty()) throw MissingRoot("no rules");
  TaskTree tree;

  std::map<std::string, const MakefileRule*> by_target;
  for (const auto& r : spec.rules) by_target[r.target] = &r;

  for (const auto& r : spec.rules) {
    TaskNode node;
    node.name = r.target;
    node.commands = r.commands;
    node.children = r.deps;
    tree.nodes[r.target] = std::move(node);
    for (const auto& d : r.deps) {
      if (!by_target.count(d) && !tree.nodes.count(d))
        tree.nodes[d] = TaskNode{.name = d};  // terminal (file) leaf
    }
  }

  // Root: first rule's target, skipping command-less single-dep aliases.
  // A revisited target means the aliases form a cycle; stop and let the
  // cycle check below report it.
  std::string root = spec.rules.front().target;
  std::set<std::string> collapsed;
  while (collapsed.insert(root).second) {
    const auto* rule = by_target.count(root) ? by_target[root] : nullptr;
    if (rule && rule->commands.empty() && rule->deps.size() == 1 &&
        by_target.count(rule->deps[0])) {
      root = rule->deps[0];
    } else {
      break;
    }
  }
  tree.root = root;

  // Cycle check plus bottom-up priorities over the whole node set.
  std::map<std::string, int> mark;  // 0 unvisited, 1 in stack, 2 done
  std::function<int(const std::string&)> visit =
      [&](const std::string& name) -> int {
    int& m = mark[name];
    if (m == 1) throw CycleDetected("cycle through " + name);
    TaskNode& node = tree.nodes.at(name);
    if (m == 2) return node.priority;
    m = 1;
    int prio = 1;
    for (const auto& c : node.children)
      prio = std::max(prio, visit(c) + 1);
    node.priority = prio;
    m = 2;
    return prio;
  };
  for (auto& [name, _] : tree.nodes) visit(name);
  return tree;
}

void mark_replicable(TaskTree& tree, const MakefileSpec& spec) {
  auto require = [&](const std::string& target) -> TaskNode& {
    auto it = tree.nodes.find(target);
    if (it == tree.nodes.end())
      throw AnnotationUnknownTarget("annotation on unknown target: " + target);
    return it->second;
  };
  for (const auto& [target, store] : spec.store_annotations) {
    TaskNode& node = require(target);
    node.data_storage = store;
    node.replica_eligible = true;
  }
  for (const auto& [target, mode] : spec.merge_annotations) {
    TaskNode& node = require(target);
    if (mode == "put-together") {
      node.merge_mode = MergeMode::PutTogether;
    } else if (mode == "reiterate") {
      node.merge_mode = MergeMode::ReIterate;
    } else if (mode.rfind("cmd:", 0) == 0) {
      node.merge_mode = MergeMode::UserCommand;
      node.merge_command = mode.substr(4);
    } else {
      throw AnnotationUnknownTarget("unknown merge mode: " + mode);
    }
  }
  for (const auto& [target, size] : spec.size_annotations)
    require(target).size_hint = size;
}

std::set<std::string> descendants(const TaskTree& tree,
                                  const std::string& name) {
  std::set<std::string> out;
  std::function<void(const std::string&)> walk = [&](const std::string& n) {
    for (const auto& c : tree.nodes.at(n).children)
      if (out.insert(c).second) walk(c);
  };
  walk(name);
  return out;
}

std::set<std::string> runnable_set(const TaskTree& tree,
                                   const std::set<std::string>& completed) {
  std::set<std::string> out;
  for (const auto& [name, node] : tree.nodes) {
    if (completed.count(name)) continue;
    bool ready = true;
    for (const auto& d : descendants(tree, name)) {
      if (!completed.count(d)) {
        ready = false;
        break;
      }
    }
    if (ready) out.insert(name);
  }
  return out;
}

}  // namespace replicanet
