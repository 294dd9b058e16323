#include "food4all/chat.hpp"

#include "food4all/data_io.hpp"
#include "food4all/digest.hpp"
#include "food4all/error.hpp"
#include "food4all/http_client.hpp"

namespace food4all {

namespace fs = std::filesystem;

namespace {

json messages_json(const std::vector<ChatMessage>& messages) {
  json arr = json::array();
  for (const auto& m : messages) arr.push_back(json{{"role", m.role}, {"content", m.content}});
  return arr;
}

json response_json(const ChatResponse& r) {
  json j{{"reply", r.text}};
  if (r.usage) {
    j["usage"] = json{{"prompt_tokens", r.usage->prompt_tokens}, {"completion_tokens", r.usage->completion_tokens}};
  }
  return j;
}

std::optional<TokenUsage> usage_from(const json& j) {
  const auto it = j.find("usage");
  if (it == j.end() || !it->is_object()) return std::nullopt;
  TokenUsage u;
  u.prompt_tokens = it->value("prompt_tokens", std::int64_t{0});
  u.completion_tokens = it->value("completion_tokens", std::int64_t{0});
  return u;
}

}  // namespace

std::string message_digest(const std::vector<ChatMessage>& messages) {
  return sha256_hex(messages_json(messages).dump());
}

ScriptedChatBackend ScriptedChatBackend::from_directory(const fs::path& dir) {
  ScriptedChatBackend backend;
  if (!fs::is_directory(dir)) return backend;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    json j;
    try {
      j = json::parse(read_file(entry.path()));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParse, "bad chat fixture " + entry.path().string() + ": " + e.what());
    }
    backend.add_digest(entry.path().stem().string(), ChatResponse{j.at("reply").get<std::string>(), usage_from(j)});
  }
  return backend;
}

void ScriptedChatBackend::add(const std::vector<ChatMessage>& messages, ChatResponse response) {
  add_digest(message_digest(messages), std::move(response));
}

void ScriptedChatBackend::add_digest(std::string digest, ChatResponse response) {
  replies_[std::move(digest)] = std::move(response);
}

ChatResponse ScriptedChatBackend::complete(const ChatRequest& request) {
  const auto it = replies_.find(message_digest(request.messages));
  if (it == replies_.end()) {
    ++misses_;
    return ChatResponse{std::string(kNoScriptedReply), std::nullopt};
  }
  return it->second;
}

ChatResponse RecordingChatBackend::complete(const ChatRequest& request) {
  auto response = inner_.complete(request);
  std::lock_guard lock(mu_);
  write_file(dir_ / (message_digest(request.messages) + ".json"), response_json(response).dump(2) + "\n");
  return response;
}

HttpChatBackend::HttpChatBackend(std::string url, std::string model, std::string api_key,
                                 std::chrono::milliseconds timeout)
    : model_(std::move(model)), api_key_(std::move(api_key)), timeout_(timeout) {
  while (!url.empty() && url.back() == '/') url.pop_back();
  static constexpr std::string_view kSuffix = "/chat/completions";
  if (url.size() >= kSuffix.size() && url.compare(url.size() - kSuffix.size(), kSuffix.size(), kSuffix) == 0) {
    const auto scheme = url.find("://");
    const auto slash = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    base_ = url.substr(0, slash);
    path_ = url.substr(slash);
  } else {
    base_ = url;
    path_ = "/v1/chat/completions";
  }
}

json chat_request_body(const ChatRequest& request, const std::string& model) {
  json body{{"model", model},
            {"messages", messages_json(request.messages)},
            {"temperature", request.temperature},
            {"max_tokens", request.max_tokens}};
  if (request.seed) body["seed"] = *request.seed;
  return body;
}

ChatResponse parse_chat_response_body(const std::string& body) {
  try {
    const auto j = json::parse(body);
    ChatResponse r;
    r.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
    r.usage = usage_from(j);
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kProtocol, std::string("malformed chat response: ") + e.what(), body);
  }
}

ChatResponse HttpChatBackend::complete(const ChatRequest& request) {
  HttpClient client(base_, api_key_, timeout_);
  const auto res = client.post_json(path_, chat_request_body(request, model_).dump());
  if (res.status < 200 || res.status >= 300) {
    throw Error(ErrorCode::kTransport, "chat backend returned HTTP " + std::to_string(res.status), res.body,
                res.status);
  }
  return parse_chat_response_body(res.body);
}

}  // namespace food4all
