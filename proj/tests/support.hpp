#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <thread>

#include "food4all/config.hpp"
#include "food4all/service.hpp"
#include "food4all/synth.hpp"
#include "httplib.h"

namespace food4all::support {

namespace fs = std::filesystem;

inline fs::path fixture(const std::string& rel) { return fs::path(FOOD4ALL_FIXTURES) / rel; }

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("food4all-test-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

// A synthetic world written to disk, with data paths a ServiceConfig can use.
struct WorldOnDisk {
  explicit WorldOnDisk(WorldConfig wc = small_world()) : world(generate_world(wc)) { write_world(world, dir.path()); }

  static WorldConfig small_world() {
    WorldConfig wc;
    wc.zips = 6;
    return wc;
  }

  ServiceConfig service_config() const {
    ServiceConfig c;
    c.port = 0;
    c.data.registry = dir / "registry.csv";
    c.data.geocode = dir / "geocode.csv";
    c.data.nutrients = dir / "nutrients.jsonl";
    c.data.fixtures = dir / "fixtures";
    c.state_dir = dir / "state";
    c.today = world.as_of;
    return c;
  }

  TempDir dir;
  World world;
};

// Service mounted on an ephemeral loopback port.
class ServedService {
 public:
  explicit ServedService(ServiceConfig config) : service(std::make_unique<Service>(std::move(config))) {
    service->mount(server_);
    port = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~ServedService() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }

  std::unique_ptr<Service> service;
  int port = 0;

 private:
  httplib::Server server_;
  std::thread thread_;
};

}  // namespace food4all::support
