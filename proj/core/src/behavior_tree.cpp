#include "forksim/behavior_tree.hpp"

#include <stdexcept>

namespace forksim::tasking {

BtNode::BtNode(Kind kind, std::string name)
    : kind_(kind), name_(std::move(name)) {}

BtNode::Ptr BtNode::action(std::string name, std::function<BtStatus()> fn) {
  if (!fn) throw std::invalid_argument("bt: action without a tick function");
  Ptr n(new BtNode(Kind::Action, std::move(name)));
  n->leaf_ = std::move(fn);
  return n;
}

BtNode::Ptr BtNode::condition(std::string name, std::function<bool()> fn) {
  if (!fn)
    throw std::invalid_argument("bt: condition without a tick function");
  Ptr n(new BtNode(Kind::Condition, std::move(name)));
  n->leaf_ = [f = std::move(fn)] {
    return f() ? BtStatus::Success : BtStatus::Failure;
  };
  return n;
}

BtNode::Ptr BtNode::sequence(std::string name, std::vector<Ptr> children) {
  if (children.empty())
    throw std::invalid_argument("bt: sequence needs at least one child");
  for (const auto& c : children)
    if (!c) throw std::invalid_argument("bt: null child");
  Ptr n(new BtNode(Kind::Sequence, std::move(name)));
  n->children_ = std::move(children);
  return n;
}

BtNode::Ptr BtNode::fallback(std::string name, std::vector<Ptr> children) {
  if (children.empty())
    throw std::invalid_argument("bt: fallback needs at least one child");
  for (const auto& c : children)
    if (!c) throw std::invalid_argument("bt: null child");
  Ptr n(new BtNode(Kind::Fallback, std::move(name)));
  n->children_ = std::move(children);
  return n;
}

BtNode::Ptr BtNode::repeat(std::string name, int count, Ptr child) {
  if (!child) throw std::invalid_argument("bt: repeat needs a child");
  if (count == 0 || count < -1)
    throw std::invalid_argument("bt: repeat count must be positive or -1");
  Ptr n(new BtNode(Kind::Repeat, std::move(name)));
  n->repeat_count_ = count;
  n->children_.push_back(std::move(child));
  return n;
}

void BtNode::reset() {
  current_ = 0;
  completed_ = 0;
  for (auto& c : children_) c->reset();
}

BtStatus BtNode::tick(std::vector<std::string>* trace) {
  switch (kind_) {
    case Kind::Action:
    case Kind::Condition: {
      const BtStatus s = leaf_();
      if (trace) {
        const char tag = s == BtStatus::Success   ? 'S'
                         : s == BtStatus::Failure ? 'F'
                                                  : 'R';
        trace->push_back(name_ + ":" + tag);
      }
      return s;
    }
    case Kind::Sequence: {
      while (current_ < children_.size()) {
        const BtStatus s = children_[current_]->tick(trace);
        if (s == BtStatus::Running) return BtStatus::Running;
        if (s == BtStatus::Failure) {
          reset();
          return BtStatus::Failure;
        }
        ++current_;
      }
      reset();
      return BtStatus::Success;
    }
    case Kind::Fallback: {
      while (current_ < children_.size()) {
        const BtStatus s = children_[current_]->tick(trace);
        if (s == BtStatus::Running) return BtStatus::Running;
        if (s == BtStatus::Success) {
          reset();
          return BtStatus::Success;
        }
        ++current_;
      }
      reset();
      return BtStatus::Failure;
    }
    case Kind::Repeat: {
      const BtStatus s = children_[0]->tick(trace);
      if (s == BtStatus::Running) return BtStatus::Running;
      if (s == BtStatus::Failure) {
        const BtStatus out =
            repeat_count_ == -1 ? BtStatus::Success : BtStatus::Failure;
        reset();
        return out;
      }
      ++completed_;
      if (repeat_count_ > 0 && completed_ >= repeat_count_) {
        reset();
        return BtStatus::Success;
      }
      return BtStatus::Running;
    }
  }
  return BtStatus::Failure;
}

}  // namespace forksim::tasking
