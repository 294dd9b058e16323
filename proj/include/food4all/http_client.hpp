#pragma once

#include <chrono>
#include <string>
#include <utility>
#include <vector>

namespace food4all {

struct HttpResponse {
  int status = 0;
  std::string body;
};

using QueryParams = std::vector<std::pair<std::string, std::string>>;

// Blocking JSON-over-HTTP client. `base_url` is scheme://host[:port][/prefix];
// request paths are appended to the prefix. Connection failures throw
// Error(kTransport); HTTP error statuses are returned to the caller.
class HttpClient {
 public:
  explicit HttpClient(const std::string& base_url, std::string bearer_token = {},
                      std::chrono::milliseconds timeout = std::chrono::seconds(30));

  HttpResponse get(const std::string& path, const QueryParams& params = {}) const;
  HttpResponse post_json(const std::string& path, const std::string& body) const;
  const std::string& origin() const { return origin_; }

 private:
  std::string origin_;
  std::string prefix_;
  std::string bearer_;
  std::chrono::milliseconds timeout_;
};

}  // namespace food4all
