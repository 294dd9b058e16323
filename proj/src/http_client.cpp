#include "food4all/http_client.hpp"

#include "food4all/error.hpp"
#include "httplib.h"

namespace food4all {

HttpClient::HttpClient(const std::string& base_url, std::string bearer_token, std::chrono::milliseconds timeout)
    : bearer_(std::move(bearer_token)), timeout_(timeout) {
  const auto scheme = base_url.find("://");
  if (scheme == std::string::npos) throw Error(ErrorCode::kInvalidArgument, "URL needs a scheme: " + base_url);
  const auto path = base_url.find('/', scheme + 3);
  origin_ = base_url.substr(0, path);
  prefix_ = path == std::string::npos ? std::string{} : base_url.substr(path);
  while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  if (origin_.rfind("http://", 0) != 0) {
    throw Error(ErrorCode::kInvalidArgument, "only http:// endpoints are supported: " + base_url);
  }
}

namespace {

httplib::Headers headers_for(const std::string& bearer) {
  httplib::Headers h;
  if (!bearer.empty()) h.emplace("Authorization", "Bearer " + bearer);
  return h;
}

void configure(httplib::Client& cli, std::chrono::milliseconds timeout) {
  const auto sec = timeout.count() / 1000;
  const auto usec = (timeout.count() % 1000) * 1000;
  cli.set_connection_timeout(sec, usec);
  cli.set_read_timeout(sec, usec);
  cli.set_write_timeout(sec, usec);
}

HttpResponse unwrap(httplib::Result res, const std::string& what) {
  if (!res) throw Error(ErrorCode::kTransport, what + ": " + httplib::to_string(res.error()));
  return HttpResponse{res->status, res->body};
}

}  // namespace

HttpResponse HttpClient::get(const std::string& path, const QueryParams& params) const {
  httplib::Client cli(origin_);
  configure(cli, timeout_);
  httplib::Params p(params.begin(), params.end());
  return unwrap(cli.Get(prefix_ + path, p, headers_for(bearer_)), "GET " + origin_ + prefix_ + path);
}

HttpResponse HttpClient::post_json(const std::string& path, const std::string& body) const {
  httplib::Client cli(origin_);
  configure(cli, timeout_);
  return unwrap(cli.Post(prefix_ + path, headers_for(bearer_), body, "application/json"),
                "POST " + origin_ + prefix_ + path);
}

}  // namespace food4all
