#pragma once

#include "food4all/chat.hpp"

namespace food4all {

// Rule-based stand-ins for the planner and executor models. They read the
// prompts the orchestrator builds and answer the way a well-behaved model
// would: the planner walks the canonical stage order and then emits
// TASK_DONE; the executor turns each stage's context into tool calls.
class HeuristicPlanner : public ChatBackend {
 public:
  ChatResponse complete(const ChatRequest& request) override;
};

class HeuristicExecutor : public ChatBackend {
 public:
  ChatResponse complete(const ChatRequest& request) override;
};

}  // namespace food4all
