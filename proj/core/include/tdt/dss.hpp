#pragma once

// Multi-cycle dose scheduling as a finite MDP.
//
// A decision state is (tumor bin, kidney bin, liver bin, cycle) over binned
// cumulative absorbed doses; one extra absorbing state follows the last
// cycle. Actions are administered activities. Transitions and expected
// rewards are estimated by Monte Carlo rollouts of a cycle model (by default
// the mechanistic PBPK simulator) over perturbed virtual patients.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "tdt/dosimetry.hpp"
#include "tdt/pbpk.hpp"
#include "tdt/surrogate.hpp"

namespace tdt::dss {

using dosimetry::DoseReport;
using dosimetry::DoseVector;

struct RewardConfig {
  double w_tumor = 1.0;
  double w_kidney = 1.0;
  double w_liver = 0.5;
  double kidney_limit = 23.0;  // Gy
  double liver_limit = 30.0;   // Gy
  double tumor_target = 100.0; // Gy
  double violation_penalty = 100.0;
  double completion_bonus = 50.0;

  void validate() const;
  bool operator==(const RewardConfig&) const = default;
};

/// `bins` equal-width bins over [0, upper]: bins + 1 edges.
std::vector<double> uniform_edges(double upper, std::size_t bins);

struct MdpSpec {
  std::vector<double> tumor_bins = uniform_edges(120.0, 10);  // edges, Gy
  std::vector<double> kidney_bins = uniform_edges(30.0, 8);
  std::vector<double> liver_bins = uniform_edges(36.0, 6);
  std::size_t max_cycles = 6;
  std::vector<double> actions{0.0, 3700.0, 7400.0};  // MBq; 0 withholds the cycle
  double cycle_interval = 8.0 * 7.0 * 24.0;          // h
  double gamma = 0.95;
  RewardConfig reward;
  std::size_t rollouts_per_sa = 8;
  std::uint64_t seed = 0;
  /// Per-rollout patient variability around the base patient.
  pbpk::ParamSpread variability = default_variability();
  /// Output grid spacing and integrator for one simulated cycle.
  double sim_dt = 0.5;
  pbpk::Method sim_method = pbpk::Method::rk45;

  static pbpk::ParamSpread default_variability();
  void validate() const;
  /// Index of the largest administered activity.
  std::size_t max_action() const;
};

/// Flattened indexing of (tumor, kidney, liver, cycle) plus the terminal
/// state, which is always the last index.
class StateSpace {
 public:
  struct Bins {
    std::size_t tumor = 0, kidney = 0, liver = 0;
    bool operator==(const Bins&) const = default;
  };
  struct Binned {
    Bins bins;
    bool clamped = false;  // some dose lay at or above the top edge
  };

  explicit StateSpace(const MdpSpec& spec);

  std::size_t n_states() const noexcept { return n_decision_ + 1; }
  std::size_t terminal() const noexcept { return n_decision_; }
  std::size_t max_cycles() const noexcept { return max_cycles_; }

  std::size_t encode(const Bins& b, std::size_t cycle) const;
  Bins bins_of(std::size_t state) const;
  std::size_t cycle_of(std::size_t state) const;

  /// Locates cumulative doses in the bin grid; doses at or beyond the top
  /// edge go to the last bin and set `clamped`.
  Binned bin(const DoseVector& cumulative) const;
  /// Bin midpoints, indexed like DoseVector (liver, kidney, tumor).
  DoseVector representative(std::size_t state) const;

 private:
  std::vector<double> tumor_, kidney_, liver_;
  std::size_t n_tumor_, n_kidney_, n_liver_, max_cycles_, n_decision_;
};

struct Outcome {
  std::size_t next = 0;
  double probability = 0.0;
};

/// Sparse transition model with expected immediate rewards.
class MdpModel {
 public:
  MdpModel() = default;
  MdpModel(std::size_t n_states, std::size_t n_actions, std::optional<std::size_t> terminal);

  /// Dense P[s][a][s'] and R[s][a].
  static MdpModel from_dense(const std::vector<std::vector<std::vector<double>>>& p,
                             const std::vector<std::vector<double>>& r,
                             std::optional<std::size_t> terminal = std::nullopt);

  std::size_t n_states() const noexcept { return n_states_; }
  std::size_t n_actions() const noexcept { return n_actions_; }
  std::optional<std::size_t> terminal() const noexcept { return terminal_; }

  void set(std::size_t s, std::size_t a, std::vector<Outcome> outcomes, double reward);
  std::span<const Outcome> transitions(std::size_t s, std::size_t a) const;
  double reward(std::size_t s, std::size_t a) const;
  double probability(std::size_t s, std::size_t a, std::size_t next) const;

  /// Throws ContractError unless every row sums to 1 within 1e-9 and the
  /// terminal state (if any) is absorbing with zero reward.
  void validate() const;

 private:
  std::size_t n_states_ = 0;
  std::size_t n_actions_ = 0;
  std::optional<std::size_t> terminal_;
  std::vector<std::vector<Outcome>> rows_;  // s * n_actions + a
  std::vector<double> rewards_;
};

struct Policy {
  std::vector<std::size_t> action;     // per state
  std::vector<double> value;           // V[s]
  std::vector<std::vector<double>> q;  // Q[s][a]
  std::size_t iterations = 0;          // improvement sweeps

  bool operator==(const Policy&) const = default;
};

/// r = w_t dT - w_k dK - w_l dL - penalty [an OAR limit is newly exceeded]
///     + bonus [terminal and tumor >= target].
/// Throws ContractError if any cumulative dose decreased.
double reward(const DoseVector& prev, const DoseVector& next, const RewardConfig& cfg,
              bool terminal);
double reward(const DoseReport& prev, const DoseReport& next, const RewardConfig& cfg,
              bool terminal);

/// Absorbed dose of one treatment cycle for a patient and administered
/// activity. Implementations must be safe to call concurrently.
class CycleModel {
 public:
  virtual ~CycleModel() = default;
  virtual DoseReport cycle_dose(const pbpk::PatientParams& patient, double activity_mbq) const = 0;
};

struct CycleOutcome {
  pbpk::Trajectory trajectory;
  DoseReport dose;
};

/// Simulates a bolus of `activity / V_plasma` into plasma over one cycle
/// interval and integrates the activity curves (trapezoid, no tail).
class MechanisticCycleModel final : public CycleModel {
 public:
  explicit MechanisticCycleModel(const MdpSpec& spec);
  DoseReport cycle_dose(const pbpk::PatientParams& patient, double activity_mbq) const override;
  CycleOutcome simulate(const pbpk::PatientParams& patient, double activity_mbq) const;

 private:
  double interval_, dt_;
  pbpk::Method method_;
};

/// Cycle doses from a trained surrogate. The surrogate is patient-specific:
/// the patient argument only supplies volumes and S-factors, and outputs are
/// scaled linearly from the activity the surrogate was trained at.
class SurrogateCycleModel final : public CycleModel {
 public:
  SurrogateCycleModel(surrogate::SurrogateParams net, double reference_activity_mbq,
                      const MdpSpec& spec);
  DoseReport cycle_dose(const pbpk::PatientParams& patient, double activity_mbq) const override;

 private:
  surrogate::SurrogateParams net_;
  double reference_activity_;
  std::vector<double> grid_;
};

/// Estimates the MDP from rollouts_per_sa perturbed patients per
/// (state, action). Each (s, a) uses its own sub-seed derived from spec.seed,
/// so the result does not depend on evaluation order or thread count.
MdpModel build_mdp(const pbpk::PatientParams& base, const MdpSpec& spec,
                   const CycleModel& model, unsigned threads = 1);
MdpModel build_mdp(const pbpk::PatientParams& base, const MdpSpec& spec);

/// Iterative evaluation of a fixed policy; stops once the sup-norm error
/// bound tol is guaranteed. gamma must lie in [0, 1).
std::vector<double> policy_evaluation(const MdpModel& m, std::span<const std::size_t> actions,
                                      double gamma, double tol);
std::vector<double> policy_evaluation(const MdpModel& m, const Policy& pol, double gamma,
                                      double tol);

/// Q[s][a] = R[s][a] + gamma sum_s' P[s][a][s'] V[s'].
std::vector<std::vector<double>> q_values(const MdpModel& m, std::span<const double> v,
                                          double gamma);
/// max_s |max_a Q[s][a] - V[s]|.
double bellman_residual(const MdpModel& m, std::span<const double> v, double gamma);

struct SolveOptions {
  double gamma = 0.95;
  double eval_tol = 1e-10;
  /// Starting policy; empty means the highest action index everywhere.
  std::vector<std::size_t> initial;
  std::size_t max_iterations = 10'000;
  /// Called after each evaluation with the policy and its value.
  std::function<void(std::span<const std::size_t>, std::span<const double>)> on_evaluation;
};

/// Howard policy iteration. The current action is kept unless another is
/// better by more than a small tolerance; among strictly better actions the
/// lowest index wins.
Policy policy_iteration(const MdpModel& m, const SolveOptions& opts);
/// Starts from the maximal-activity baseline of `spec`.
Policy policy_iteration(const MdpModel& m, const MdpSpec& spec);

struct QLearningConfig {
  std::size_t episodes = 10'000;
  double alpha = 0.1;
  double epsilon = 0.2;
  double gamma = 0.95;
  std::uint64_t seed = 0;
  std::size_t max_steps = 1'000;  // per episode
  /// Fixed start state; empty means a uniformly random non-terminal state.
  std::optional<std::size_t> start_state;
};

/// Tabular Q-learning with epsilon-greedy behaviour, sampling transitions
/// from `m`. Greedy ties go to the lowest action index.
Policy q_learning(const MdpModel& m, const QLearningConfig& cfg);
/// Episodes start at zero dose, cycle 0.
Policy q_learning(const MdpModel& m, const MdpSpec& spec, std::size_t episodes, double alpha,
                  double epsilon);

struct Recommendation {
  std::size_t action = 0;
  double activity_mbq = 0.0;
  std::vector<double> q_row;
  std::size_t state = 0;
  bool clamped = false;
};

Recommendation recommend(const Policy& pol, const DoseReport& cumulative, std::size_t cycle,
                         const MdpSpec& spec);

/// The same action in every state.
Policy constant_policy(std::size_t n_states, std::size_t action);

struct EpisodeStep {
  std::size_t cycle = 0;
  std::size_t state = 0;
  std::size_t action = 0;
  double activity_mbq = 0.0;
  double reward = 0.0;
  DoseVector cumulative{};  // after this cycle
};

struct Episode {
  std::vector<EpisodeStep> steps;
  double total_return = 0.0;  // sum_t gamma^t r_t
};

/// Treats one patient for spec.max_cycles cycles following `pol` on the
/// binned true cumulative doses.
Episode run_episode(const pbpk::PatientParams& patient, const Policy& pol, const MdpSpec& spec,
                    const CycleModel& model);

struct CohortEvaluation {
  std::vector<Episode> episodes;
  std::vector<double> returns;
  double mean_return = 0.0;
  std::size_t kidney_violations = 0;
  double kidney_violation_rate = 0.0;
};

CohortEvaluation evaluate_policy(std::span<const pbpk::PatientParams> cohort, const Policy& pol,
                                 const MdpSpec& spec, const CycleModel& model);

}  // namespace tdt::dss
