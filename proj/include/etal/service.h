// Copyright 2026 The etal Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>

namespace etal {

inline constexpr int kApiVersion = 1;

struct ServiceConfig {
  std::string data_root = "etal-data";
  std::string host = "127.0.0.1";
  int port = 8080;
};

// Reads {"data_root", "host", "port"} from a JSON file (when path is not
// empty), then applies ETAL_DATA_ROOT and ETAL_PORT from the environment.
ServiceConfig load_service_config(const std::string& path);

// Milliseconds since the epoch.
using Clock = std::function<std::int64_t()>;
std::int64_t system_clock_ms();

struct Request {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
};

struct Response {
  int status = 200;
  // JSON, empty for 204.
  std::string body;
};

// Routes:
//   POST /projects
//   GET  /projects/{p}
//   GET  /projects/{p}/metrics
//   POST /projects/{p}/rounds
//   GET  /rounds/{r}
//   POST /rounds/{r}/sessions
//   GET  /rounds/{r}/next?session={s}
//   POST /rounds/{r}/finalize
//   GET  /items/{i}
//   POST /items/{i}/annotation
//   POST /items/{i}/skip
// Project ids are names ([A-Za-z0-9_-]+), round ids "name.N", item ids "name.N.K".
class AnnotationService {
 public:
  explicit AnnotationService(ServiceConfig config, Clock clock = system_clock_ms);
  ~AnnotationService();
  AnnotationService(const AnnotationService&) = delete;
  AnnotationService& operator=(const AnnotationService&) = delete;

  Response handle(const Request& request);

  // Blocks until no retraining job is running.
  void wait_idle();

  const ServiceConfig& config() const { return config_; }

 private:
  struct Project;
  Project* find(const std::string& name);
  Project& require(const std::string& name);

  Response create_project(const Request& r);
  Response get_project(const std::string& name);
  Response metrics(const std::string& name);
  Response open_round(const std::string& name, const Request& r);
  Response get_round(const std::string& id);
  Response open_session(const std::string& id, const Request& r);
  Response next_item(const std::string& id, const Request& r);
  Response finalize(const std::string& id);
  Response get_item(const std::string& id);
  Response annotate(const std::string& id, const Request& r, bool skip);

  void retrain_job(Project& p, int round);

  ServiceConfig config_;
  Clock clock_;
  std::mutex projects_mu_;
  std::map<std::string, std::unique_ptr<Project>> projects_;
};

// HTTP front end over an AnnotationService.
class HttpServer {
 public:
  explicit HttpServer(AnnotationService& service);
  ~HttpServer();

  // Binds to host:port (port 0 picks a free port) and returns the bound port.
  int bind(const std::string& host, int port);
  // Serves until stop() is called.
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace etal
