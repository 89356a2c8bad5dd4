#pragma once

// HTTP facade over the library. Routing and payload handling live in
// Service::handle so they can be exercised without a socket; HttpServer
// binds it to httplib.
//
//   POST /simulate               patient + initial/activity + grid -> trajectory
//   POST /dose                   trajectory (inline or file) + patient -> dose report
//   POST /surrogate/train        training job -> {"job_id", "status"}
//   GET  /surrogate/jobs/{id}    status, report and checkpoint
//   POST /policy/load            policy + MDP config (inline or files)
//   GET  /policy                 currently loaded spec and reward config
//   POST /whatif                 one simulated cycle + recommendation
//   GET  /health

#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "tdt/errors.hpp"
#include "tdt/serialization.hpp"

namespace tdt::service {

struct Response {
  int status = 200;
  std::string body;
};

/// Loaded policy and the MDP it was solved for. Never mutated once shared.
struct PolicySnapshot {
  dss::Policy policy;
  io::MdpConfig config;
};

enum class JobStatus { queued, running, done, failed };
const char* to_string(JobStatus s);

class Service {
 public:
  Service();
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  Response handle(const std::string& method, const std::string& path, const std::string& body);

  void load_policy(dss::Policy policy, io::MdpConfig config);
  std::shared_ptr<const PolicySnapshot> policy() const;

  /// Blocks until no training job is queued or running.
  void wait_for_jobs();

 private:
  struct Job {
    JobStatus status = JobStatus::queued;
    io::TrainingJob spec;
    std::optional<surrogate::TrainResult> result;
    std::string error;
  };

  Response simulate(const io::json& body);
  Response dose(const io::json& body);
  Response train(const io::json& body);
  Response job(const std::string& id);
  Response whatif(const io::json& body);
  Response load(const io::json& body);
  Response current_policy();
  void run_job(std::uint64_t id);

  mutable std::mutex policy_mutex_;
  std::shared_ptr<const PolicySnapshot> policy_;

  std::mutex jobs_mutex_;
  std::condition_variable jobs_cv_;
  std::map<std::uint64_t, Job> jobs_;
  std::uint64_t next_job_ = 1;
  bool busy_ = false;
  std::thread worker_;
};

/// Thrown when the listening socket cannot be bound.
class BindError : public Error {
 public:
  using Error::Error;
};

class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();

  /// Binds host:port (port 0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop() is called.
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Port from the TDT_PORT environment variable, else `fallback`.
int default_port(int fallback = 8080);

}  // namespace tdt::service
