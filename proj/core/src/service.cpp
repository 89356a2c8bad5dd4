#include "tdt/service.hpp"

#include <cstdlib>
#include <sstream>

#include <httplib.h>

#include "tdt/errors.hpp"

namespace tdt::service {

namespace {

using io::json;

Response reply(int status, const json& j) { return {status, io::dump(j)}; }

Response error(int status, const std::string& message, const std::string* path = nullptr) {
  json j;
  j["error"] = message;
  j["path"] = path ? json(*path) : json(nullptr);
  return reply(status, j);
}

const json& object_body(const json& body) {
  if (!body.is_object()) throw SchemaError("", "request body must be a JSON object");
  return body;
}

const json& need(const json& body, const char* key) {
  const auto it = body.find(key);
  if (it == body.end()) throw SchemaError(key, "missing required field");
  return *it;
}

double number_field(const json& body, const char* key, double fallback) {
  const auto it = body.find(key);
  if (it == body.end()) return fallback;
  if (!it->is_number()) throw SchemaError(key, "expected a number");
  return it->get<double>();
}

std::string string_field(const json& body, const char* key, const std::string& fallback) {
  const auto it = body.find(key);
  if (it == body.end()) return fallback;
  if (!it->is_string()) throw SchemaError(key, "expected a string");
  return it->get<std::string>();
}

pbpk::PatientParams patient_field(const json& body) {
  return io::patient_from_json(need(body, "patient"), "patient");
}

pbpk::State initial_state(const json& body, const pbpk::PatientParams& p) {
  if (const auto it = body.find("initial"); it != body.end()) return io::state_from_json(*it, "initial");
  const double activity = number_field(body, "activity", 7400.0);
  if (activity < 0.0) throw SchemaError("activity", "must be >= 0");
  pbpk::State c{};
  c[pbpk::index(pbpk::Compartment::plasma)] = activity / p.volumes[pbpk::index(pbpk::Compartment::plasma)];
  return c;
}

std::size_t count_field(const json& body, const char* key, std::size_t fallback) {
  const auto it = body.find(key);
  if (it == body.end()) return fallback;
  if (!it->is_number_integer() || it->get<long long>() < 0) {
    throw SchemaError(key, "expected a non-negative integer");
  }
  return it->get<std::size_t>();
}

}  // namespace

const char* to_string(JobStatus s) {
  switch (s) {
    case JobStatus::queued: return "queued";
    case JobStatus::running: return "running";
    case JobStatus::done: return "done";
    case JobStatus::failed: return "failed";
  }
  return "unknown";
}

Service::Service() = default;

Service::~Service() {
  wait_for_jobs();
  if (worker_.joinable()) worker_.join();
}

Response Service::handle(const std::string& method, const std::string& path, const std::string& body) {
  try {
    auto parsed = [&] { return object_body(io::parse(body.empty() ? "{}" : body, "")); };
    if (method == "GET" && path == "/health") return reply(200, {{"status", "ok"}});
    if (method == "POST" && path == "/simulate") return simulate(parsed());
    if (method == "POST" && path == "/dose") return dose(parsed());
    if (method == "POST" && path == "/surrogate/train") return train(parsed());
    if (method == "GET" && path.rfind("/surrogate/jobs/", 0) == 0) return job(path.substr(16));
    if (method == "POST" && path == "/whatif") return whatif(parsed());
    if (method == "POST" && path == "/policy/load") return load(parsed());
    if (method == "GET" && path == "/policy") return current_policy();
    return error(404, "no route for " + method + " " + path);
  } catch (const SchemaError& e) {
    const std::string p = e.path();
    return error(422, e.what(), &p);
  } catch (const IntegrationError& e) {
    json j{{"error", e.what()}, {"path", nullptr}, {"time", e.time()}};
    return reply(500, j);
  } catch (const TailExtrapolationError& e) {
    return error(422, e.what());
  } catch (const DomainError& e) {
    return error(422, e.what());
  } catch (const ContractError& e) {
    return error(422, e.what());
  } catch (const std::exception& e) {
    return error(500, e.what());
  }
}

Response Service::simulate(const json& body) {
  const auto patient = patient_field(body);
  const auto initial = initial_state(body, patient);
  const double t_end = number_field(body, "t_end", 72.0);
  const double dt = number_field(body, "dt", 0.1);
  if (!(t_end > 0.0)) throw SchemaError("t_end", "must be > 0");
  if (!(dt > 0.0)) throw SchemaError("dt", "must be > 0");
  const auto method = io::method_from_string(string_field(body, "method", "rk4"), "method");
  return reply(200, io::to_json(pbpk::integrate(patient, initial, t_end, dt, method)));
}

Response Service::dose(const json& body) {
  const auto patient = patient_field(body);
  pbpk::Trajectory traj;
  if (const auto it = body.find("trajectory"); it != body.end()) {
    traj = io::trajectory_from_json(*it, "trajectory");
  } else if (const auto f = body.find("trajectory_file"); f != body.end()) {
    if (!f->is_string()) throw SchemaError("trajectory_file", "expected a path");
    std::istringstream in(io::read_text_file(f->get<std::string>()));
    traj = io::read_trajectory_csv(in);
  } else {
    throw SchemaError("trajectory", "missing required field");
  }
  const auto tail = io::tail_from_string(string_field(body, "tail", "none"), "tail");
  const auto tia = dosimetry::time_integrated_activity(traj, patient, tail);
  return reply(200, io::to_json(dosimetry::absorbed_dose(tia, patient)));
}

Response Service::train(const json& body) {
  io::TrainingJob spec = io::training_job_from_json(body, "");
  std::uint64_t id = 0;
  {
    std::lock_guard lock(jobs_mutex_);
    if (busy_) return error(409, "a training job is already queued or running");
    busy_ = true;
    id = next_job_++;
    jobs_[id].spec = std::move(spec);
    if (worker_.joinable()) worker_.join();
    worker_ = std::thread([this, id] { run_job(id); });
  }
  return reply(202, {{"job_id", std::to_string(id)}, {"status", "queued"}});
}

void Service::run_job(std::uint64_t id) {
  io::TrainingJob spec;
  {
    std::lock_guard lock(jobs_mutex_);
    auto& j = jobs_.at(id);
    j.status = JobStatus::running;
    spec = j.spec;
  }
  std::optional<surrogate::TrainResult> result;
  std::string failure;
  try {
    result = surrogate::train(spec.patient, spec.initial, spec.total_dose, spec.config);
  } catch (const std::exception& e) {
    failure = e.what();
  }
  {
    std::lock_guard lock(jobs_mutex_);
    auto& j = jobs_.at(id);
    if (result) {
      j.result = std::move(result);
      j.status = JobStatus::done;
    } else {
      j.error = failure;
      j.status = JobStatus::failed;
    }
    busy_ = false;
  }
  jobs_cv_.notify_all();
}

void Service::wait_for_jobs() {
  std::unique_lock lock(jobs_mutex_);
  jobs_cv_.wait(lock, [this] { return !busy_; });
}

Response Service::job(const std::string& id_text) {
  std::uint64_t id = 0;
  try {
    std::size_t used = 0;
    id = std::stoull(id_text, &used);
    if (used != id_text.size()) return error(404, "unknown job " + id_text);
  } catch (const std::exception&) {
    return error(404, "unknown job " + id_text);
  }
  std::lock_guard lock(jobs_mutex_);
  const auto it = jobs_.find(id);
  if (it == jobs_.end()) return error(404, "unknown job " + id_text);
  const Job& j = it->second;
  json out{{"job_id", id_text}, {"status", to_string(j.status)}};
  if (j.result) {
    out["report"] = io::to_json(j.result->report);
    out["checkpoint"] = io::to_json(j.result->params);
  }
  if (j.status == JobStatus::failed) out["error"] = j.error;
  return reply(200, out);
}

void Service::load_policy(dss::Policy policy, io::MdpConfig config) {
  config.spec.validate();
  const dss::StateSpace space(config.spec);
  if (policy.action.size() != space.n_states() || policy.q.size() != space.n_states()) {
    throw ContractError("policy has " + std::to_string(policy.action.size()) + " states, spec needs " +
                        std::to_string(space.n_states()));
  }
  for (std::size_t s = 0; s < policy.action.size(); ++s) {
    if (policy.action[s] >= config.spec.actions.size() || policy.q[s].size() != config.spec.actions.size()) {
      throw ContractError("policy row " + std::to_string(s) + " does not match the action set");
    }
  }
  auto snap = std::make_shared<const PolicySnapshot>(PolicySnapshot{std::move(policy), std::move(config)});
  std::lock_guard lock(policy_mutex_);
  policy_ = std::move(snap);
}

std::shared_ptr<const PolicySnapshot> Service::policy() const {
  std::lock_guard lock(policy_mutex_);
  return policy_;
}

Response Service::load(const json& body) {
  json policy_json, config_json;
  if (const auto it = body.find("policy"); it != body.end()) {
    policy_json = *it;
  } else {
    policy_json = io::read_json_file(string_field(body, "policy_file", ""));
  }
  if (const auto it = body.find("config"); it != body.end()) {
    config_json = *it;
  } else if (body.contains("config_file")) {
    config_json = io::read_json_file(string_field(body, "config_file", ""));
  } else {
    config_json = json::object();
  }
  auto policy = io::policy_from_json(policy_json, "policy");
  auto config = io::mdp_config_from_json(config_json, "config");
  load_policy(std::move(policy), std::move(config));
  return current_policy();
}

Response Service::current_policy() {
  const auto snap = policy();
  if (!snap) return error(409, "no policy loaded");
  json spec = io::to_json(snap->config.spec);
  return reply(200, {{"spec", spec}, {"n_states", snap->policy.action.size()}});
}

Response Service::whatif(const json& body) {
  const auto snap = policy();
  if (!snap) return error(409, "no policy loaded");
  const auto& spec = snap->config.spec;

  const auto patient = body.contains("patient") ? patient_field(body) : snap->config.patient;
  dosimetry::DoseReport cumulative;
  cumulative.cumulative = true;
  if (const auto it = body.find("cumulative"); it != body.end()) {
    cumulative = io::dose_report_from_json(*it, "cumulative");
    cumulative.cumulative = true;
  }
  const std::size_t cycle = count_field(body, "cycle", 0);
  if (cycle >= spec.max_cycles) {
    throw SchemaError("cycle", "must be below max_cycles (" + std::to_string(spec.max_cycles) + ")");
  }
  const double candidate = number_field(body, "candidate_activity", 0.0);
  if (!(candidate >= 0.0)) throw SchemaError("candidate_activity", "must be >= 0");
  const std::size_t horizon = count_field(body, "horizon_cycles", 1);
  if (horizon < 1) throw SchemaError("horizon_cycles", "must be >= 1");

  const dss::Recommendation rec = dss::recommend(snap->policy, cumulative, cycle, spec);

  const dss::MechanisticCycleModel model(spec);
  const dss::CycleOutcome first = model.simulate(patient, candidate);
  const dosimetry::DoseReport after = dosimetry::accumulate(cumulative, first.dose);
  const dss::StateSpace space(spec);
  const bool last = cycle + 1 >= spec.max_cycles;
  const auto binned = space.bin(after.dose);
  const std::size_t next_state = last ? space.terminal() : space.encode(binned.bins, cycle + 1);

  // Later cycles of the horizon follow the loaded policy.
  json projection = json::array();
  dosimetry::DoseReport running = after;
  for (std::size_t c = cycle + 1; c < cycle + horizon && c < spec.max_cycles; ++c) {
    const auto r = dss::recommend(snap->policy, running, c, spec);
    const auto d = model.cycle_dose(patient, r.activity_mbq);
    running = dosimetry::accumulate(running, d);
    projection.push_back({{"cycle", c}, {"action_index", r.action}, {"action_mbq", r.activity_mbq},
                          {"cycle_dose", io::to_json(d)}, {"cumulative", io::to_json(running)}});
  }

  json out;
  out["cycle"] = cycle;
  out["candidate_activity"] = candidate;
  out["cycle_dose"] = io::to_json(first.dose);
  out["cumulative"] = io::to_json(after);
  out["trajectory"] = io::to_json(first.trajectory);
  out["next_state"] = next_state;
  out["next_state_clamped"] = binned.clamped;
  out["reward"] = dss::reward(cumulative, after, spec.reward, last);
  out["recommendation"] = io::to_json(rec, spec);
  out["projection"] = projection;
  out["reward_config"] = io::to_json(spec.reward);
  return reply(200, out);
}

// -- http -------------------------------------------------------------------

struct HttpServer::Impl {
  Service& service;
  httplib::Server server;
  explicit Impl(Service& s) : service(s) {}
};

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>(service)) {
  auto route = [this](const httplib::Request& req, httplib::Response& res) {
    const Response r = impl_->service.handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  // httplib's default SO_REUSEPORT would let a second server share the port.
  impl_->server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  impl_->server.Get(R"(/.*)", route);
  impl_->server.Post(R"(/.*)", route);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw BindError("cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) {
    throw BindError("cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

int default_port(int fallback) {
  if (const char* env = std::getenv("TDT_PORT"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end == '\0' && v > 0 && v < 65536) return static_cast<int>(v);
  }
  return fallback;
}

}  // namespace tdt::service
