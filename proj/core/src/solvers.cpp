#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "tdt/dss.hpp"
#include "tdt/errors.hpp"

namespace tdt::dss {

namespace {

constexpr std::size_t kMaxEvaluationSweeps = 10'000'000;

double backup(const MdpModel& m, std::size_t s, std::size_t a, std::span<const double> v,
              double gamma) {
  double expected = 0.0;
  for (const auto& o : m.transitions(s, a)) expected += o.probability * v[o.next];
  return m.reward(s, a) + gamma * expected;
}

std::size_t greedy(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t a = 1; a < row.size(); ++a) {
    if (row[a] > row[best]) best = a;
  }
  return best;
}

void check_gamma(double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ContractError("gamma must lie in [0, 1)");
}

}  // namespace

std::vector<double> policy_evaluation(const MdpModel& m, std::span<const std::size_t> actions,
                                      double gamma, double tol) {
  check_gamma(gamma);
  if (!(tol > 0.0)) throw ContractError("evaluation tolerance must be > 0");
  if (actions.size() != m.n_states()) throw ContractError("policy size does not match the MDP");
  for (std::size_t a : actions) {
    if (a >= m.n_actions()) throw ContractError("policy action index out of range");
  }
  const auto terminal = m.terminal();
  std::vector<double> v(m.n_states(), 0.0), next(m.n_states(), 0.0);
  // Stopping on delta <= tol (1 - gamma) / gamma bounds the distance to the
  // exact value by tol in the sup norm.
  const double stop = gamma == 0.0 ? std::numeric_limits<double>::infinity()
                                   : tol * (1.0 - gamma) / gamma;
  for (std::size_t sweep = 0; sweep < kMaxEvaluationSweeps; ++sweep) {
    double delta = 0.0;
    for (std::size_t s = 0; s < m.n_states(); ++s) {
      next[s] = (terminal && s == *terminal) ? 0.0 : backup(m, s, actions[s], v, gamma);
      delta = std::max(delta, std::abs(next[s] - v[s]));
    }
    v.swap(next);
    if (delta <= stop) break;
  }
  return v;
}

std::vector<double> policy_evaluation(const MdpModel& m, const Policy& pol, double gamma,
                                      double tol) {
  return policy_evaluation(m, pol.action, gamma, tol);
}

std::vector<std::vector<double>> q_values(const MdpModel& m, std::span<const double> v,
                                          double gamma) {
  if (v.size() != m.n_states()) throw ContractError("value vector size does not match the MDP");
  std::vector<std::vector<double>> q(m.n_states(), std::vector<double>(m.n_actions()));
  for (std::size_t s = 0; s < m.n_states(); ++s) {
    for (std::size_t a = 0; a < m.n_actions(); ++a) q[s][a] = backup(m, s, a, v, gamma);
  }
  return q;
}

double bellman_residual(const MdpModel& m, std::span<const double> v, double gamma) {
  const auto q = q_values(m, v, gamma);
  double r = 0.0;
  for (std::size_t s = 0; s < m.n_states(); ++s) {
    r = std::max(r, std::abs(*std::max_element(q[s].begin(), q[s].end()) - v[s]));
  }
  return r;
}

Policy policy_iteration(const MdpModel& m, const SolveOptions& opts) {
  check_gamma(opts.gamma);
  Policy pol;
  pol.action = opts.initial.empty() ? std::vector<std::size_t>(m.n_states(), m.n_actions() - 1)
                                    : opts.initial;
  if (pol.action.size() != m.n_states()) throw ContractError("initial policy has wrong size");

  for (std::size_t it = 1; it <= opts.max_iterations; ++it) {
    pol.value = policy_evaluation(m, pol.action, opts.gamma, opts.eval_tol);
    pol.q = q_values(m, pol.value, opts.gamma);
    pol.iterations = it;
    if (opts.on_evaluation) opts.on_evaluation(pol.action, pol.value);

    bool changed = false;
    for (std::size_t s = 0; s < m.n_states(); ++s) {
      const auto& row = pol.q[s];
      const double best = *std::max_element(row.begin(), row.end());
      const double eps = 1e-9 * std::max(1.0, std::abs(best));
      if (row[pol.action[s]] >= best - eps) continue;
      for (std::size_t a = 0; a < row.size(); ++a) {
        if (row[a] >= best - eps) {
          pol.action[s] = a;
          break;
        }
      }
      changed = true;
    }
    if (!changed) return pol;
  }
  return pol;
}

Policy policy_iteration(const MdpModel& m, const MdpSpec& spec) {
  if (spec.actions.size() != m.n_actions()) throw ContractError("spec and model disagree on actions");
  SolveOptions opts;
  opts.gamma = spec.gamma;
  opts.initial.assign(m.n_states(), spec.max_action());
  return policy_iteration(m, opts);
}

Policy q_learning(const MdpModel& m, const QLearningConfig& cfg) {
  check_gamma(cfg.gamma);
  if (cfg.episodes < 1) throw ContractError("episodes must be >= 1");
  if (!(cfg.alpha > 0.0 && cfg.alpha <= 1.0)) throw ContractError("alpha must lie in (0, 1]");
  if (!(cfg.epsilon >= 0.0 && cfg.epsilon <= 1.0)) throw ContractError("epsilon must lie in [0, 1]");

  const std::size_t ns = m.n_states();
  const std::size_t na = m.n_actions();
  const auto terminal = m.terminal();
  std::vector<std::size_t> starts;
  if (cfg.start_state) {
    if (*cfg.start_state >= ns) throw ContractError("start state out of range");
    starts.push_back(*cfg.start_state);
  } else {
    for (std::size_t s = 0; s < ns; ++s) {
      if (!(terminal && s == *terminal)) starts.push_back(s);
    }
  }
  if (starts.empty()) throw ContractError("MDP has no non-terminal start state");

  std::vector<std::vector<double>> q(ns, std::vector<double>(na, 0.0));
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick_start(0, starts.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_action(0, na - 1);

  for (std::size_t ep = 0; ep < cfg.episodes; ++ep) {
    std::size_t s = starts[pick_start(rng)];
    for (std::size_t step = 0; step < cfg.max_steps; ++step) {
      if (terminal && s == *terminal) break;
      const bool explore = unit(rng) < cfg.epsilon;
      const std::size_t a = explore ? pick_action(rng) : greedy(q[s]);

      const auto outcomes = m.transitions(s, a);
      double u = unit(rng);
      std::size_t next = outcomes.back().next;
      for (const auto& o : outcomes) {
        if (u < o.probability) {
          next = o.next;
          break;
        }
        u -= o.probability;
      }
      const double future =
          (terminal && next == *terminal) ? 0.0 : *std::max_element(q[next].begin(), q[next].end());
      q[s][a] += cfg.alpha * (m.reward(s, a) + cfg.gamma * future - q[s][a]);
      s = next;
    }
  }

  Policy pol;
  pol.q = std::move(q);
  pol.action.resize(ns);
  pol.value.resize(ns);
  for (std::size_t s = 0; s < ns; ++s) {
    pol.action[s] = greedy(pol.q[s]);
    pol.value[s] = pol.q[s][pol.action[s]];
  }
  return pol;
}

Policy q_learning(const MdpModel& m, const MdpSpec& spec, std::size_t episodes, double alpha,
                  double epsilon) {
  const StateSpace space(spec);
  QLearningConfig cfg;
  cfg.episodes = episodes;
  cfg.alpha = alpha;
  cfg.epsilon = epsilon;
  cfg.gamma = spec.gamma;
  cfg.seed = spec.seed;
  cfg.start_state = space.encode({}, 0);
  return q_learning(m, cfg);
}

Recommendation recommend(const Policy& pol, const DoseReport& cumulative, std::size_t cycle,
                         const MdpSpec& spec) {
  if (cycle >= spec.max_cycles) {
    throw ContractError("cycle " + std::to_string(cycle) + " is past the last treatment cycle");
  }
  const StateSpace space(spec);
  if (pol.action.size() != space.n_states() || pol.q.size() != space.n_states()) {
    throw ContractError("policy does not match the MDP spec");
  }
  const auto binned = space.bin(cumulative.dose);
  Recommendation rec;
  rec.state = space.encode(binned.bins, cycle);
  rec.clamped = binned.clamped;
  rec.action = pol.action[rec.state];
  if (rec.action >= spec.actions.size()) throw ContractError("policy action index out of range");
  rec.activity_mbq = spec.actions[rec.action];
  rec.q_row = pol.q[rec.state];
  return rec;
}

Policy constant_policy(std::size_t n_states, std::size_t action) {
  Policy pol;
  pol.action.assign(n_states, action);
  return pol;
}

}  // namespace tdt::dss
