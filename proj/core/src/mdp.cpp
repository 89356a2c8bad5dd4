#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <string>
#include <thread>

#include "tdt/dss.hpp"
#include "tdt/errors.hpp"

namespace tdt::dss {

namespace {

constexpr std::size_t kLiver = pbpk::index(pbpk::Target::liver);
constexpr std::size_t kKidney = pbpk::index(pbpk::Target::kidney);
constexpr std::size_t kTumor = pbpk::index(pbpk::Target::tumor);

void check_edges(const std::vector<double>& edges, const char* name) {
  if (edges.size() < 2) throw ContractError(std::string(name) + " needs at least two edges");
  if (edges.front() != 0.0) throw ContractError(std::string(name) + " must start at 0");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1]) || !std::isfinite(edges[i])) {
      throw ContractError(std::string(name) + " must be strictly increasing");
    }
  }
}

std::size_t locate(const std::vector<double>& edges, double x, bool& clamped) {
  const std::size_t bins = edges.size() - 1;
  if (x >= edges.back()) {
    clamped = true;
    return bins - 1;
  }
  const auto it = std::upper_bound(edges.begin(), edges.end(), x);
  const auto i = static_cast<std::size_t>(std::distance(edges.begin(), it));
  return i == 0 ? 0 : std::min(i - 1, bins - 1);
}

double midpoint(const std::vector<double>& edges, std::size_t i) {
  return 0.5 * (edges[i] + edges[i + 1]);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

DoseReport zero_report() { return DoseReport{}; }

}  // namespace

void RewardConfig::validate() const {
  for (double w : {w_tumor, w_kidney, w_liver}) {
    if (!(std::isfinite(w) && w >= 0.0)) throw ContractError("reward weights must be >= 0");
  }
  for (double l : {kidney_limit, liver_limit, tumor_target}) {
    if (!(std::isfinite(l) && l > 0.0)) throw ContractError("dose limits and target must be > 0");
  }
  if (!(std::isfinite(violation_penalty) && violation_penalty >= 0.0)) {
    throw ContractError("violation_penalty must be >= 0");
  }
  if (!(std::isfinite(completion_bonus) && completion_bonus >= 0.0)) {
    throw ContractError("completion_bonus must be >= 0");
  }
}

std::vector<double> uniform_edges(double upper, std::size_t bins) {
  if (bins < 1 || !(upper > 0.0)) throw ContractError("uniform_edges needs bins >= 1, upper > 0");
  std::vector<double> e(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) {
    e[i] = upper * static_cast<double>(i) / static_cast<double>(bins);
  }
  return e;
}

pbpk::ParamSpread MdpSpec::default_variability() {
  pbpk::ParamSpread s;
  for (std::size_t i = 0; i < pbpk::kRateFields.size(); ++i) s.rates[i] = 1.2;
  s.rate("lambda_phys") = 1.0;  // physical decay does not vary between patients
  s.volumes = {1.1, 1.1, 1.1, 1.1};
  s.masses = {1.1, 1.1, 1.1};
  return s;
}

void MdpSpec::validate() const {
  check_edges(tumor_bins, "tumor_dose_bins");
  check_edges(kidney_bins, "kidney_dose_bins");
  check_edges(liver_bins, "liver_dose_bins");
  if (max_cycles < 1) throw ContractError("max_cycles must be >= 1");
  if (actions.empty()) throw ContractError("actions must not be empty");
  for (double a : actions) {
    if (!(std::isfinite(a) && a >= 0.0)) throw ContractError("actions must be >= 0 MBq");
  }
  if (!(std::isfinite(cycle_interval) && cycle_interval > 0.0)) {
    throw ContractError("cycle_interval must be > 0");
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ContractError("gamma must lie in [0, 1]");
  reward.validate();
  if (rollouts_per_sa < 1) throw ContractError("rollouts_per_sa must be >= 1");
  variability.validate();
  if (!(std::isfinite(sim_dt) && sim_dt > 0.0)) throw ContractError("sim_dt must be > 0");
}

std::size_t MdpSpec::max_action() const {
  if (actions.empty()) throw ContractError("actions must not be empty");
  return static_cast<std::size_t>(
      std::distance(actions.begin(), std::max_element(actions.begin(), actions.end())));
}

// ---------------------------------------------------------------------------

StateSpace::StateSpace(const MdpSpec& spec)
    : tumor_(spec.tumor_bins), kidney_(spec.kidney_bins), liver_(spec.liver_bins) {
  check_edges(tumor_, "tumor_dose_bins");
  check_edges(kidney_, "kidney_dose_bins");
  check_edges(liver_, "liver_dose_bins");
  if (spec.max_cycles < 1) throw ContractError("max_cycles must be >= 1");
  n_tumor_ = tumor_.size() - 1;
  n_kidney_ = kidney_.size() - 1;
  n_liver_ = liver_.size() - 1;
  max_cycles_ = spec.max_cycles;
  n_decision_ = n_tumor_ * n_kidney_ * n_liver_ * max_cycles_;
}

std::size_t StateSpace::encode(const Bins& b, std::size_t cycle) const {
  if (b.tumor >= n_tumor_ || b.kidney >= n_kidney_ || b.liver >= n_liver_ || cycle >= max_cycles_) {
    throw ContractError("state coordinates out of range");
  }
  return ((cycle * n_tumor_ + b.tumor) * n_kidney_ + b.kidney) * n_liver_ + b.liver;
}

StateSpace::Bins StateSpace::bins_of(std::size_t state) const {
  if (state >= n_decision_) throw ContractError("terminal state has no dose bins");
  Bins b;
  b.liver = state % n_liver_;
  state /= n_liver_;
  b.kidney = state % n_kidney_;
  state /= n_kidney_;
  b.tumor = state % n_tumor_;
  return b;
}

std::size_t StateSpace::cycle_of(std::size_t state) const {
  if (state >= n_decision_) return max_cycles_;
  return state / (n_tumor_ * n_kidney_ * n_liver_);
}

StateSpace::Binned StateSpace::bin(const DoseVector& d) const {
  Binned out;
  out.bins.tumor = locate(tumor_, d[kTumor], out.clamped);
  out.bins.kidney = locate(kidney_, d[kKidney], out.clamped);
  out.bins.liver = locate(liver_, d[kLiver], out.clamped);
  return out;
}

DoseVector StateSpace::representative(std::size_t state) const {
  const Bins b = bins_of(state);
  DoseVector d{};
  d[kTumor] = midpoint(tumor_, b.tumor);
  d[kKidney] = midpoint(kidney_, b.kidney);
  d[kLiver] = midpoint(liver_, b.liver);
  return d;
}

// ---------------------------------------------------------------------------

MdpModel::MdpModel(std::size_t n_states, std::size_t n_actions, std::optional<std::size_t> terminal)
    : n_states_(n_states),
      n_actions_(n_actions),
      terminal_(terminal),
      rows_(n_states * n_actions),
      rewards_(n_states * n_actions, 0.0) {
  if (n_states == 0 || n_actions == 0) throw ContractError("MDP needs states and actions");
  if (terminal && *terminal >= n_states) throw ContractError("terminal index out of range");
}

MdpModel MdpModel::from_dense(const std::vector<std::vector<std::vector<double>>>& p,
                              const std::vector<std::vector<double>>& r,
                              std::optional<std::size_t> terminal) {
  if (p.empty() || p.size() != r.size()) throw ContractError("P and R disagree on state count");
  const std::size_t ns = p.size();
  const std::size_t na = p[0].size();
  MdpModel m(ns, na, terminal);
  for (std::size_t s = 0; s < ns; ++s) {
    if (p[s].size() != na || r[s].size() != na) throw ContractError("ragged action dimension");
    for (std::size_t a = 0; a < na; ++a) {
      if (p[s][a].size() != ns) throw ContractError("ragged next-state dimension");
      std::vector<Outcome> row;
      for (std::size_t t = 0; t < ns; ++t) {
        if (p[s][a][t] != 0.0) row.push_back({t, p[s][a][t]});
      }
      m.set(s, a, std::move(row), r[s][a]);
    }
  }
  return m;
}

void MdpModel::set(std::size_t s, std::size_t a, std::vector<Outcome> outcomes, double reward) {
  if (s >= n_states_ || a >= n_actions_) throw ContractError("(state, action) out of range");
  for (const auto& o : outcomes) {
    if (o.next >= n_states_) throw ContractError("next state out of range");
  }
  rows_[s * n_actions_ + a] = std::move(outcomes);
  rewards_[s * n_actions_ + a] = reward;
}

std::span<const Outcome> MdpModel::transitions(std::size_t s, std::size_t a) const {
  return rows_.at(s * n_actions_ + a);
}

double MdpModel::reward(std::size_t s, std::size_t a) const {
  return rewards_.at(s * n_actions_ + a);
}

double MdpModel::probability(std::size_t s, std::size_t a, std::size_t next) const {
  double p = 0.0;
  for (const auto& o : transitions(s, a)) {
    if (o.next == next) p += o.probability;
  }
  return p;
}

void MdpModel::validate() const {
  for (std::size_t s = 0; s < n_states_; ++s) {
    for (std::size_t a = 0; a < n_actions_; ++a) {
      double sum = 0.0;
      for (const auto& o : transitions(s, a)) {
        if (!(o.probability >= 0.0)) throw ContractError("negative transition probability");
        sum += o.probability;
      }
      if (std::abs(sum - 1.0) > 1e-9) {
        throw ContractError("P[" + std::to_string(s) + "][" + std::to_string(a) +
                            "] sums to " + std::to_string(sum));
      }
      if (!std::isfinite(reward(s, a))) throw ContractError("non-finite reward");
    }
  }
  if (terminal_) {
    for (std::size_t a = 0; a < n_actions_; ++a) {
      if (probability(*terminal_, a, *terminal_) != 1.0 || reward(*terminal_, a) != 0.0) {
        throw ContractError("terminal state must be absorbing with zero reward");
      }
    }
  }
}

// ---------------------------------------------------------------------------

double reward(const DoseVector& prev, const DoseVector& next, const RewardConfig& cfg,
              bool terminal) {
  for (std::size_t t = 0; t < pbpk::kNumTargets; ++t) {
    if (next[t] < prev[t]) throw ContractError("cumulative dose decreased between states");
  }
  const double d_tumor = next[kTumor] - prev[kTumor];
  const double d_kidney = next[kKidney] - prev[kKidney];
  const double d_liver = next[kLiver] - prev[kLiver];
  const bool kidney_new = next[kKidney] > cfg.kidney_limit && !(prev[kKidney] > cfg.kidney_limit);
  const bool liver_new = next[kLiver] > cfg.liver_limit && !(prev[kLiver] > cfg.liver_limit);

  double r = cfg.w_tumor * d_tumor - cfg.w_kidney * d_kidney - cfg.w_liver * d_liver;
  if (kidney_new || liver_new) r -= cfg.violation_penalty;
  if (terminal && next[kTumor] >= cfg.tumor_target) r += cfg.completion_bonus;
  return r;
}

double reward(const DoseReport& prev, const DoseReport& next, const RewardConfig& cfg,
              bool terminal) {
  return reward(prev.dose, next.dose, cfg, terminal);
}

// ---------------------------------------------------------------------------

MechanisticCycleModel::MechanisticCycleModel(const MdpSpec& spec)
    : interval_(spec.cycle_interval), dt_(spec.sim_dt), method_(spec.sim_method) {}

CycleOutcome MechanisticCycleModel::simulate(const pbpk::PatientParams& patient,
                                             double activity_mbq) const {
  if (!(std::isfinite(activity_mbq) && activity_mbq >= 0.0)) {
    throw DomainError("administered activity must be >= 0");
  }
  pbpk::State initial{};
  initial[pbpk::index(pbpk::Compartment::plasma)] =
      activity_mbq / patient.volumes[pbpk::index(pbpk::Compartment::plasma)];
  CycleOutcome out;
  out.trajectory = pbpk::integrate(patient, initial, interval_, dt_, method_);
  const auto tia =
      dosimetry::time_integrated_activity(out.trajectory, patient, dosimetry::Tail::none);
  out.dose = dosimetry::absorbed_dose(tia, patient);
  return out;
}

DoseReport MechanisticCycleModel::cycle_dose(const pbpk::PatientParams& patient,
                                             double activity_mbq) const {
  if (activity_mbq == 0.0) return zero_report();
  return simulate(patient, activity_mbq).dose;
}

SurrogateCycleModel::SurrogateCycleModel(surrogate::SurrogateParams net,
                                         double reference_activity_mbq, const MdpSpec& spec)
    : net_(std::move(net)), reference_activity_(reference_activity_mbq) {
  net_.validate();
  if (!(std::isfinite(reference_activity_) && reference_activity_ > 0.0)) {
    throw DomainError("reference activity must be > 0");
  }
  const std::size_t n = pbpk::grid_size(spec.cycle_interval, spec.sim_dt);
  grid_.resize(n);
  for (std::size_t i = 0; i < n; ++i) grid_[i] = static_cast<double>(i) * spec.sim_dt;
  grid_.back() = spec.cycle_interval;
}

DoseReport SurrogateCycleModel::cycle_dose(const pbpk::PatientParams& patient,
                                           double activity_mbq) const {
  if (activity_mbq == 0.0) return zero_report();
  const double scale = activity_mbq / reference_activity_;
  const auto out = surrogate::evaluate(net_, grid_);
  pbpk::Trajectory traj;
  traj.times = grid_;
  traj.states = out.value;
  for (auto& s : traj.states) {
    for (double& c : s) c *= scale;
  }
  const auto tia = dosimetry::time_integrated_activity(traj, patient, dosimetry::Tail::none);
  return dosimetry::absorbed_dose(tia, patient);
}

// ---------------------------------------------------------------------------

MdpModel build_mdp(const pbpk::PatientParams& base, const MdpSpec& spec, const CycleModel& model,
                   unsigned threads) {
  spec.validate();
  base.validate();
  const StateSpace space(spec);
  const std::size_t n_actions = spec.actions.size();
  MdpModel m(space.n_states(), n_actions, space.terminal());

  for (std::size_t a = 0; a < n_actions; ++a) m.set(space.terminal(), a, {{space.terminal(), 1.0}}, 0.0);

  // Without variability every rollout sees the nominal patient, so each
  // action's cycle dose is computed once.
  const bool nominal_only = spec.variability.is_zero();
  std::vector<DoseReport> nominal;
  if (nominal_only) {
    for (std::size_t a = 0; a < n_actions; ++a) {
      try {
        nominal.push_back(model.cycle_dose(base, spec.actions[a]));
      } catch (const IntegrationError& e) {
        throw e.with_context("nominal rollout for action " + std::to_string(a));
      }
    }
  }

  const std::size_t n_decision = space.terminal();
  auto build_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      const std::size_t cycle = space.cycle_of(s);
      const bool last = cycle + 1 == spec.max_cycles;
      const DoseVector prev = space.representative(s);
      for (std::size_t a = 0; a < n_actions; ++a) {
        std::mt19937_64 rng(splitmix64(spec.seed ^ splitmix64(s * n_actions + a)));
        std::map<std::size_t, std::size_t> counts;
        double reward_sum = 0.0;
        for (std::size_t r = 0; r < spec.rollouts_per_sa; ++r) {
          DoseReport per;
          if (nominal_only) {
            per = nominal[a];
          } else {
            const pbpk::PatientParams patient = pbpk::perturb(base, spec.variability, rng);
            try {
              per = model.cycle_dose(patient, spec.actions[a]);
            } catch (const IntegrationError& e) {
              throw e.with_context("rollout for state " + std::to_string(s) + ", action " +
                                   std::to_string(a));
            }
          }
          DoseVector next;
          for (std::size_t t = 0; t < pbpk::kNumTargets; ++t) next[t] = prev[t] + per.dose[t];
          const std::size_t target =
              last ? space.terminal() : space.encode(space.bin(next).bins, cycle + 1);
          ++counts[target];
          reward_sum += reward(prev, next, spec.reward, last);
        }
        const double n = static_cast<double>(spec.rollouts_per_sa);
        std::vector<Outcome> row;
        row.reserve(counts.size());
        for (const auto& [next, count] : counts) row.push_back({next, static_cast<double>(count) / n});
        m.set(s, a, std::move(row), reward_sum / n);
      }
    }
  };

  threads = std::max(1u, threads);
  if (threads == 1) {
    build_range(0, n_decision);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    const std::size_t chunk = (n_decision + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t begin = std::min(n_decision, t * chunk);
      const std::size_t end = std::min(n_decision, begin + chunk);
      pool.emplace_back([&, t, begin, end] {
        try {
          build_range(begin, end);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return m;
}

MdpModel build_mdp(const pbpk::PatientParams& base, const MdpSpec& spec) {
  return build_mdp(base, spec, MechanisticCycleModel(spec));
}

}  // namespace tdt::dss
