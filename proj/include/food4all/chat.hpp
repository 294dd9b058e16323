#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "food4all/domain.hpp"

namespace food4all {

struct ChatMessage {
  std::string role;
  std::string content;
  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct TokenUsage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::int64_t total() const { return prompt_tokens + completion_tokens; }
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_tokens = 1024;
  std::optional<std::uint64_t> seed;
};

struct ChatResponse {
  std::string text;
  std::optional<TokenUsage> usage;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
};

inline ChatResponse chat_complete(ChatBackend& backend, const ChatRequest& request) {
  return backend.complete(request);
}

// Key for scripted replies: SHA-256 of the role/content list.
std::string message_digest(const std::vector<ChatMessage>& messages);

inline constexpr std::string_view kNoScriptedReply = "[NO_SCRIPTED_REPLY]";

// Replays replies keyed by message digest; a miss returns kNoScriptedReply.
// Fixture files: <dir>/<digest>.json = {"reply": "...", "usage": {...}?}
class ScriptedChatBackend : public ChatBackend {
 public:
  ScriptedChatBackend() = default;
  static ScriptedChatBackend from_directory(const std::filesystem::path& dir);

  void add(const std::vector<ChatMessage>& messages, ChatResponse response);
  void add_digest(std::string digest, ChatResponse response);
  ChatResponse complete(const ChatRequest& request) override;
  std::size_t misses() const { return misses_.load(); }
  std::size_t size() const { return replies_.size(); }

  ScriptedChatBackend(ScriptedChatBackend&& other) noexcept
      : replies_(std::move(other.replies_)), misses_(other.misses_.load()) {}

 private:
  std::map<std::string, ChatResponse> replies_;
  std::atomic<std::size_t> misses_{0};
};

// Wraps another backend and stores every exchange as a scripted fixture.
class RecordingChatBackend : public ChatBackend {
 public:
  RecordingChatBackend(ChatBackend& inner, std::filesystem::path dir) : inner_(inner), dir_(std::move(dir)) {}
  ChatResponse complete(const ChatRequest& request) override;

 private:
  ChatBackend& inner_;
  std::filesystem::path dir_;
  std::mutex mu_;
};

class FunctionChatBackend : public ChatBackend {
 public:
  using Fn = std::function<ChatResponse(const ChatRequest&)>;
  explicit FunctionChatBackend(Fn fn) : fn_(std::move(fn)) {}
  ChatResponse complete(const ChatRequest& request) override { return fn_(request); }

 private:
  Fn fn_;
};

// OpenAI-style chat-completion endpoint:
//   POST <url>/v1/chat/completions {model, messages, temperature, max_tokens[, seed]}
//   -> {choices: [{message: {content}}], usage: {prompt_tokens, completion_tokens}}
// A URL already ending in /chat/completions is used as is.
class HttpChatBackend : public ChatBackend {
 public:
  HttpChatBackend(std::string url, std::string model, std::string api_key = {},
                  std::chrono::milliseconds timeout = std::chrono::seconds(60));
  ChatResponse complete(const ChatRequest& request) override;

 private:
  std::string base_;
  std::string path_;
  std::string model_;
  std::string api_key_;
  std::chrono::milliseconds timeout_;
};

json chat_request_body(const ChatRequest& request, const std::string& model);
// Throws Error(kProtocol) on an unexpected shape.
ChatResponse parse_chat_response_body(const std::string& body);

}  // namespace food4all
