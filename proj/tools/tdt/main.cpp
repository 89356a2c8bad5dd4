// tdt: command-line driver for simulation, dosimetry, surrogate training,
// policy optimization, cohort evaluation and the HTTP service.
//
// Exit codes: 0 ok, 2 configuration error, 3 numeric failure, 4 port in use.

#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <pthread.h>

#include "manifest.hpp"
#include "tdt/errors.hpp"
#include "tdt/evalmetrics.hpp"
#include "tdt/serialization.hpp"
#include "tdt/service.hpp"

namespace fs = std::filesystem;
using tdt::io::json;

namespace {

enum Exit : int { kOk = 0, kConfig = 2, kNumeric = 3, kPort = 4 };

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

json read_config(const std::string& file) {
  if (file.empty()) return json::object();
  json j = tdt::io::read_json_file(file);
  if (!j.is_object()) throw tdt::SchemaError(file, "expected a JSON object");
  return j;
}

fs::path base_dir(const std::string& file) {
  return file.empty() ? fs::path() : fs::path(file).parent_path();
}

// A string value at `key` names a JSON file, relative to `base`; it is
// replaced by the file's contents.
void inline_file(json& j, const char* key, const fs::path& base) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_string()) return;
  fs::path p(it->get<std::string>());
  if (p.is_relative() && !base.empty()) p = base / p;
  *it = tdt::io::read_json_file(p.string());
}

void write_csv(const std::string& file, const std::function<void(std::ostream&)>& fn) {
  std::ostringstream os;
  fn(os);
  tdt::io::write_text_file(file, os.str());
}

template <class T>
void override_if(json& cfg, const char* key, CLI::Option* opt, const T& value) {
  if (opt->count() > 0) cfg[key] = value;
}

// -- simulate ---------------------------------------------------------------

struct SimulateArgs {
  std::string config, patient, out, method = "rk4";
  double t_end = 72.0, dt = 0.1, activity = 7400.0;
  CLI::Option *o_patient, *o_t_end, *o_dt, *o_activity, *o_method;
};

int run_simulate(const SimulateArgs& a) {
  const auto t0 = Clock::now();
  json cfg = read_config(a.config);
  override_if(cfg, "patient", a.o_patient, a.patient);
  override_if(cfg, "t_end", a.o_t_end, a.t_end);
  override_if(cfg, "dt", a.o_dt, a.dt);
  override_if(cfg, "activity", a.o_activity, a.activity);
  override_if(cfg, "method", a.o_method, a.method);
  if (!cfg.contains("patient")) throw tdt::SchemaError("--patient", "a patient file is required");
  inline_file(cfg, "patient", a.o_patient->count() ? fs::path() : base_dir(a.config));

  const auto patient = tdt::io::patient_from_json(cfg["patient"], "patient");
  tdt::pbpk::State c0{};
  if (cfg.contains("initial")) {
    c0 = tdt::io::state_from_json(cfg["initial"], "initial");
  } else {
    const double activity = cfg.value("activity", 7400.0);
    if (activity < 0.0) throw tdt::SchemaError("activity", "must be >= 0");
    c0[0] = activity / patient.volumes[0];
  }
  const auto method = tdt::io::method_from_string(cfg.value("method", std::string("rk4")), "method");
  const auto traj = tdt::pbpk::integrate(patient, c0, cfg.value("t_end", 72.0), cfg.value("dt", 0.1), method);

  write_csv(a.out, [&](std::ostream& os) { tdt::io::write_trajectory_csv(os, traj); });
  tdt::cli::RunManifest{"simulate", a.config, 0, {a.out}, seconds_since(t0)}.write(a.out);
  std::cout << "wrote " << traj.size() << " time points to " << a.out << "\n";
  return kOk;
}

// -- dose -------------------------------------------------------------------

struct DoseArgs {
  std::string traj, patient, tail = "none", out;
};

int run_dose(const DoseArgs& a) {
  const auto t0 = Clock::now();
  std::istringstream in(tdt::io::read_text_file(a.traj));
  const auto traj = tdt::io::read_trajectory_csv(in);
  const auto patient = tdt::io::patient_from_json(tdt::io::read_json_file(a.patient), a.patient);
  const auto tail = tdt::io::tail_from_string(a.tail, "--tail");
  const auto report =
      tdt::dosimetry::absorbed_dose(tdt::dosimetry::time_integrated_activity(traj, patient, tail), patient);
  tdt::io::write_text_file(a.out, tdt::io::dump(tdt::io::to_json(report)));
  tdt::cli::RunManifest{"dose", a.patient, 0, {a.out}, seconds_since(t0)}.write(a.out);
  std::cout << "liver " << report.dose[0] << " Gy, kidney " << report.dose[1] << " Gy, tumor "
            << report.dose[2] << " Gy\n";
  return kOk;
}

// -- train-surrogate --------------------------------------------------------

struct TrainArgs {
  std::string config, out, report;
  std::uint64_t seed = 0;
  std::size_t max_iters = 0;
  double learning_rate = 0.0;
  CLI::Option *o_seed, *o_iters, *o_lr;
};

int run_train(const TrainArgs& a) {
  const auto t0 = Clock::now();
  json cfg = read_config(a.config);
  override_if(cfg, "seed", a.o_seed, a.seed);
  override_if(cfg, "max_iters", a.o_iters, a.max_iters);
  override_if(cfg, "learning_rate", a.o_lr, a.learning_rate);
  inline_file(cfg, "patient", base_dir(a.config));
  const auto job = tdt::io::training_job_from_json(cfg, "");

  const auto result = tdt::surrogate::train(job.patient, job.initial, job.total_dose, job.config);
  tdt::io::write_text_file(a.out, tdt::io::dump(tdt::io::to_json(result.params)));
  std::vector<std::string> outputs{a.out};
  if (!a.report.empty()) {
    write_csv(a.report, [&](std::ostream& os) { tdt::io::write_loss_history_csv(os, result.report); });
    outputs.push_back(a.report);
  }
  tdt::cli::RunManifest{"train-surrogate", a.config, job.config.seed, outputs, seconds_since(t0)}.write(a.out);
  std::cout << "iterations " << result.report.iterations << ", final loss " << result.report.final_loss
            << (result.report.converged ? " (converged)" : " (not converged)") << "\n";
  return kOk;
}

// -- solve-policy -----------------------------------------------------------

struct SolveArgs {
  std::string config, out, solver = "pi";
  unsigned threads = 1;
  std::uint64_t seed = 0;
  std::size_t episodes = 10'000;
  double alpha = 0.1, epsilon = 0.2;
  CLI::Option* o_seed;
};

tdt::dss::Policy solve_dense(const json& model, const SolveArgs& a, std::uint64_t seed) {
  std::vector<std::vector<std::vector<double>>> p;
  std::vector<std::vector<double>> r;
  try {
    p = model.at("p").get<decltype(p)>();
    r = model.at("r").get<decltype(r)>();
  } catch (const json::exception& e) {
    throw tdt::SchemaError("model", std::string("expected dense \"p\" [s][a][s'] and \"r\" [s][a]: ") + e.what());
  }
  std::optional<std::size_t> terminal;
  if (model.contains("terminal") && !model["terminal"].is_null()) terminal = model["terminal"].get<std::size_t>();
  const double gamma = model.value("gamma", 0.95);
  const auto m = tdt::dss::MdpModel::from_dense(p, r, terminal);
  if (a.solver == "q") {
    tdt::dss::QLearningConfig q;
    q.episodes = a.episodes;
    q.alpha = a.alpha;
    q.epsilon = a.epsilon;
    q.gamma = gamma;
    q.seed = seed;
    return tdt::dss::q_learning(m, q);
  }
  tdt::dss::SolveOptions opts;
  opts.gamma = gamma;
  return tdt::dss::policy_iteration(m, opts);
}

int run_solve(const SolveArgs& a) {
  const auto t0 = Clock::now();
  if (a.solver != "pi" && a.solver != "q") throw tdt::SchemaError("--solver", "must be 'pi' or 'q'");
  json cfg = read_config(a.config);
  override_if(cfg, "seed", a.o_seed, a.seed);
  inline_file(cfg, "patient", base_dir(a.config));

  tdt::dss::Policy pol;
  std::uint64_t seed = cfg.value("seed", std::uint64_t{0});
  if (const auto it = cfg.find("model"); it != cfg.end()) {
    pol = solve_dense(*it, a, seed);
  } else {
    const auto mc = tdt::io::mdp_config_from_json(cfg, "");
    seed = mc.spec.seed;
    const tdt::dss::MechanisticCycleModel model(mc.spec);
    const auto m = tdt::dss::build_mdp(mc.patient, mc.spec, model, a.threads);
    pol = a.solver == "q" ? tdt::dss::q_learning(m, mc.spec, a.episodes, a.alpha, a.epsilon)
                          : tdt::dss::policy_iteration(m, mc.spec);
  }
  tdt::io::write_text_file(a.out, tdt::io::dump(tdt::io::to_json(pol)));
  tdt::cli::RunManifest{"solve-policy", a.config, seed, {a.out}, seconds_since(t0)}.write(a.out);
  std::cout << "solved " << pol.action.size() << " states in " << pol.iterations << " iterations\n";
  return kOk;
}

// -- evaluate ---------------------------------------------------------------

struct EvaluateArgs {
  std::string policy, cohort, config, out, episodes;
  bool baseline = false;
};

json summarize(const tdt::dss::CohortEvaluation& e) {
  return {{"mean_return", e.mean_return},
          {"returns", e.returns},
          {"kidney_violations", e.kidney_violations},
          {"kidney_violation_rate", e.kidney_violation_rate},
          {"return_median", tdt::evalmetrics::quantile(e.returns, 0.5)},
          {"return_iqr", tdt::evalmetrics::iqr(e.returns)},
          {"return_cvar_10", tdt::evalmetrics::cvar(e.returns, 0.1)}};
}

int run_evaluate(const EvaluateArgs& a) {
  const auto t0 = Clock::now();
  json cfg = read_config(a.config);
  inline_file(cfg, "patient", base_dir(a.config));
  const auto mc = tdt::io::mdp_config_from_json(cfg, "");
  const auto pol = tdt::io::policy_from_json(tdt::io::read_json_file(a.policy), a.policy);

  json cohort_json = read_config(a.cohort);
  inline_file(cohort_json, "base", base_dir(a.cohort));
  if (!cohort_json.contains("base")) cohort_json["base"] = tdt::io::to_json(mc.patient);
  const auto cohort_spec = tdt::io::cohort_from_json(cohort_json, "");
  const auto cohort = tdt::pbpk::sample_cohort(cohort_spec);

  const tdt::dss::MechanisticCycleModel model(mc.spec);
  const auto eval = tdt::dss::evaluate_policy(cohort, pol, mc.spec, model);
  json out{{"n_patients", cohort.size()}, {"seed", cohort_spec.seed}, {"policy", summarize(eval)}};
  if (a.baseline) {
    const auto base = tdt::dss::constant_policy(pol.action.size(), mc.spec.max_action());
    out["baseline"] = summarize(tdt::dss::evaluate_policy(cohort, base, mc.spec, model));
  }
  tdt::io::write_text_file(a.out, tdt::io::dump(out));
  std::vector<std::string> outputs{a.out};
  if (!a.episodes.empty()) {
    write_csv(a.episodes, [&](std::ostream& os) { tdt::io::write_episodes_csv(os, eval.episodes); });
    outputs.push_back(a.episodes);
  }
  tdt::cli::RunManifest{"evaluate", a.cohort, cohort_spec.seed, outputs, seconds_since(t0)}.write(a.out);
  std::cout << "mean return " << eval.mean_return << ", kidney violation rate " << eval.kidney_violation_rate
            << "\n";
  return kOk;
}

// -- profile ----------------------------------------------------------------

struct ProfileArgs {
  std::string scores, out;
};

int run_profile(const ProfileArgs& a) {
  const auto t0 = Clock::now();
  const json cfg = read_config(a.scores);
  tdt::evalmetrics::RunMatrix m;
  std::vector<double> thresholds;
  try {
    m.scores = cfg.at("scores").get<decltype(m.scores)>();
    thresholds = cfg.at("thresholds").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw tdt::SchemaError(a.scores, std::string("expected \"scores\" [run][task] and \"thresholds\": ") + e.what());
  }
  const std::uint64_t seed = cfg.value("seed", std::uint64_t{0});
  const auto profile = tdt::evalmetrics::performance_profile(m, thresholds, cfg.value("n_boot", std::size_t{2000}), seed);
  write_csv(a.out, [&](std::ostream& os) { tdt::io::write_profile_csv(os, profile); });
  tdt::cli::RunManifest{"profile", a.scores, seed, {a.out}, seconds_since(t0)}.write(a.out);
  return kOk;
}

// -- serve ------------------------------------------------------------------

struct ServeArgs {
  std::string host = "127.0.0.1", policy, config;
  int port = 8080;
};

int run_serve(const ServeArgs& a) {
  tdt::service::Service svc;
  if (!a.policy.empty()) {
    json cfg = read_config(a.config);
    inline_file(cfg, "patient", base_dir(a.config));
    svc.load_policy(tdt::io::policy_from_json(tdt::io::read_json_file(a.policy), a.policy),
                    tdt::io::mdp_config_from_json(cfg, ""));
  }
  tdt::service::HttpServer server(svc);

  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  const int port = server.bind(a.host, a.port);
  std::cout << "listening on http://" << a.host << ":" << port << std::endl;
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
  });
  server.listen();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Theranostic digital twin: PBPK simulation, dosimetry, surrogate training and dose scheduling"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Integrate the PBPK model and write a trajectory CSV");
  simulate->add_option("--config", sim.config, "JSON with patient, t_end, dt, activity, method, initial");
  sim.o_patient = simulate->add_option("--patient", sim.patient, "Patient parameter JSON");
  sim.o_t_end = simulate->add_option("--t-end", sim.t_end, "End time, h (default 72)");
  sim.o_dt = simulate->add_option("--dt", sim.dt, "Output grid spacing, h (default 0.1)");
  sim.o_activity = simulate->add_option("--activity", sim.activity, "Injected activity, MBq (default 7400)");
  sim.o_method = simulate->add_option("--method", sim.method, "rk4 or rk45 (default rk4)");
  simulate->add_option("--out", sim.out, "Trajectory CSV")->required();

  DoseArgs dose;
  auto* dose_cmd = app.add_subcommand("dose", "Time-integrated activity and absorbed dose from a trajectory");
  dose_cmd->add_option("--traj", dose.traj, "Trajectory CSV")->required();
  dose_cmd->add_option("--patient", dose.patient, "Patient parameter JSON")->required();
  dose_cmd->add_option("--tail", dose.tail, "none or mono-exp")->capture_default_str();
  dose_cmd->add_option("--out", dose.out, "Dose report JSON")->required();

  TrainArgs tr;
  auto* train = app.add_subcommand("train-surrogate", "Train the physics-informed surrogate");
  train->add_option("--config", tr.config, "Training job JSON")->required();
  train->add_option("--out", tr.out, "Checkpoint JSON")->required();
  train->add_option("--report", tr.report, "Loss history CSV");
  tr.o_seed = train->add_option("--seed", tr.seed, "Override the seed");
  tr.o_iters = train->add_option("--max-iters", tr.max_iters, "Override the iteration budget");
  tr.o_lr = train->add_option("--learning-rate", tr.learning_rate, "Override the learning rate");

  SolveArgs so;
  auto* solve = app.add_subcommand("solve-policy", "Build the dosing MDP and solve it");
  solve->add_option("--config", so.config, "MDP configuration JSON")->required();
  solve->add_option("--out", so.out, "Policy JSON")->required();
  solve->add_option("--solver", so.solver, "pi (policy iteration) or q (Q-learning)")->capture_default_str();
  solve->add_option("--threads", so.threads, "Rollout threads")->capture_default_str();
  so.o_seed = solve->add_option("--seed", so.seed, "Override the seed");
  solve->add_option("--episodes", so.episodes, "Q-learning episodes")->capture_default_str();
  solve->add_option("--alpha", so.alpha, "Q-learning step size")->capture_default_str();
  solve->add_option("--epsilon", so.epsilon, "Q-learning exploration rate")->capture_default_str();

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Run a policy on a virtual cohort");
  evaluate->add_option("--policy", ev.policy, "Policy JSON")->required();
  evaluate->add_option("--cohort", ev.cohort, "Cohort JSON")->required();
  evaluate->add_option("--config", ev.config, "MDP configuration JSON the policy was solved for");
  evaluate->add_option("--out", ev.out, "Evaluation JSON")->required();
  evaluate->add_option("--episodes", ev.episodes, "Per-cycle episode CSV");
  evaluate->add_flag("--baseline", ev.baseline, "Also evaluate the maximal-activity baseline");

  ProfileArgs pr;
  auto* profile = app.add_subcommand("profile", "Performance profile with bootstrap bands");
  profile->add_option("--scores", pr.scores, "JSON with scores [run][task], thresholds, n_boot, seed")->required();
  profile->add_option("--out", pr.out, "Profile CSV")->required();

  ServeArgs sv;
  sv.port = tdt::service::default_port(8080);
  auto* serve = app.add_subcommand("serve", "Start the HTTP service");
  serve->add_option("--port", sv.port, "Port (default 8080, or TDT_PORT)");
  serve->add_option("--host", sv.host, "Bind address")->capture_default_str();
  serve->add_option("--policy", sv.policy, "Policy JSON to load at startup");
  serve->add_option("--config", sv.config, "MDP configuration JSON for --policy");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*simulate) return run_simulate(sim);
    if (*dose_cmd) return run_dose(dose);
    if (*train) return run_train(tr);
    if (*solve) return run_solve(so);
    if (*evaluate) return run_evaluate(ev);
    if (*profile) return run_profile(pr);
    if (*serve) return run_serve(sv);
  } catch (const tdt::service::BindError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kPort;
  } catch (const tdt::SchemaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  } catch (const tdt::ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  } catch (const tdt::DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumeric;
  }
  return kConfig;
}
