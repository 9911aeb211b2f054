#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace forksim::tasking {

enum class BtStatus { Success, Failure, Running };

// Behavior tree with memory semantics: composites remember the child they
// are waiting on instead of re-ticking finished children. Malformed trees
// are rejected at construction, never at tick time.
class BtNode {
 public:
  enum class Kind { Action, Condition, Sequence, Fallback, Repeat };
  using Ptr = std::unique_ptr<BtNode>;

  static Ptr action(std::string name, std::function<BtStatus()> fn);
  static Ptr condition(std::string name, std::function<bool()> fn);
  static Ptr sequence(std::string name, std::vector<Ptr> children);
  static Ptr fallback(std::string name, std::vector<Ptr> children);
  // count > 0: succeed after that many child successes, fail through.
  // count == -1: re-enter until the child fails, then succeed (drain mode).
  static Ptr repeat(std::string name, int count, Ptr child);

  // Ticks the tree; if trace is given, every leaf executed this tick is
  // appended as "name:S|F|R".
  BtStatus tick(std::vector<std::string>* trace = nullptr);
  void reset();

  Kind kind() const { return kind_; }
  const std::string& name() const { return name_; }
  const std::vector<Ptr>& children() const { return children_; }

 private:
  BtNode(Kind kind, std::string name);

  Kind kind_;
  std::string name_;
  std::vector<Ptr> children_;
  std::function<BtStatus()> leaf_;
  int repeat_count_ = 0;
  size_t current_ = 0;
  int completed_ = 0;
};

}  // namespace forksim::tasking
