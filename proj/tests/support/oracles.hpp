#pragma once

// Independent reference computations shared by the unit and acceptance
// tests. Nothing here calls the library routine it is used to check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "tdt/dss.hpp"
#include "tdt/pbpk.hpp"

namespace oracle {

using tdt::pbpk::PatientParams;
using tdt::pbpk::State;

/// Rates uniform in [0.01, 1] 1/h; reference volumes, masses and decay.
inline PatientParams random_patient(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> rate(0.01, 1.0);
  PatientParams p = tdt::pbpk::reference_patient();
  p.k_p_l = rate(rng);
  p.k_l_p = rate(rng);
  p.k_p_k = rate(rng);
  p.k_k_p = rate(rng);
  p.k_met = rate(rng);
  p.k_ex = rate(rng);
  p.k_p_t = rate(rng);
  p.k_t_p = rate(rng);
  return p;
}

/// Right-hand side written out term by term from the compartment balance.
inline State rhs(const State& c, const PatientParams& p) {
  const auto& v = p.volumes;
  const double P = c[0], L = c[1], K = c[2], T = c[3];
  State d;
  d[0] = -(p.k_p_l + p.k_p_k + p.k_p_t) * P + p.k_l_p * L * v[1] / v[0] +
         p.k_k_p * K * v[2] / v[0] + p.k_t_p * T * v[3] / v[0];
  d[1] = p.k_p_l * P * v[0] / v[1] - (p.k_l_p + p.k_met) * L;
  d[2] = p.k_p_k * P * v[0] / v[2] - (p.k_k_p + p.k_ex) * K;
  d[3] = p.k_p_t * P * v[0] / v[3] - p.k_t_p * T;
  for (std::size_t i = 0; i < 4; ++i) d[i] -= p.lambda_phys * c[i];
  return d;
}

/// Forward Euler with a fixed tiny step.
inline State euler(const PatientParams& p, State c, double t_end, double h) {
  const auto steps = static_cast<std::size_t>(std::llround(t_end / h));
  for (std::size_t s = 0; s < steps; ++s) {
    const State d = rhs(c, p);
    for (std::size_t i = 0; i < 4; ++i) c[i] += h * d[i];
  }
  return c;
}

/// Solves A x = b by Gaussian elimination with partial pivoting.
inline std::vector<double> solve(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    }
    std::swap(a[col], a[piv]);
    std::swap(b[col], b[piv]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      for (std::size_t k = col; k < n; ++k) a[r][k] -= f * a[col][k];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[i][k] * x[k];
    x[i] = s / a[i][i];
  }
  return x;
}

/// Exact value of a deterministic policy: (I - gamma P_pi) V = R_pi.
inline std::vector<double> exact_value(const tdt::dss::MdpModel& m,
                                       const std::vector<std::size_t>& pi, double gamma) {
  const std::size_t n = m.n_states();
  std::vector<std::vector<double>> a(n, std::vector<double>(n, 0.0));
  std::vector<double> b(n, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    a[s][s] = 1.0;
    if (m.terminal() && *m.terminal() == s) continue;
    b[s] = m.reward(s, pi[s]);
    for (std::size_t t = 0; t < n; ++t) a[s][t] -= gamma * m.probability(s, pi[s], t);
  }
  return solve(a, b);
}

struct Enumeration {
  std::vector<double> best;  // statewise max over all deterministic policies
  double best_sum = -1e300;  // max over policies of sum_s V[s]
};

/// Evaluates every one of |A|^|S| deterministic policies exactly.
inline Enumeration enumerate_policies(const tdt::dss::MdpModel& m, double gamma) {
  const std::size_t n = m.n_states(), na = m.n_actions();
  Enumeration out;
  out.best.assign(n, -1e300);
  std::vector<std::size_t> pi(n, 0);
  while (true) {
    const auto v = exact_value(m, pi, gamma);
    double sum = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      out.best[s] = std::max(out.best[s], v[s]);
      sum += v[s];
    }
    out.best_sum = std::max(out.best_sum, sum);
    std::size_t k = 0;
    while (k < n && ++pi[k] == na) pi[k++] = 0;
    if (k == n) break;
  }
  return out;
}

/// Dense random MDP with 1..4 states and 1..3 actions, no terminal state.
inline tdt::dss::MdpModel random_mdp(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> ns(1, 4), na(1, 3);
  std::uniform_real_distribution<double> u(0.0, 1.0), r(-5.0, 5.0);
  const std::size_t n = ns(rng), a = na(rng);
  std::vector<std::vector<std::vector<double>>> p(n, std::vector<std::vector<double>>(a));
  std::vector<std::vector<double>> rew(n, std::vector<double>(a));
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t k = 0; k < a; ++k) {
      auto& row = p[s][k];
      row.resize(n);
      double total = 0.0;
      for (auto& x : row) {
        // Sparse-ish rows: about a third of entries are zero.
        x = u(rng) < 0.33 ? 0.0 : u(rng);
        total += x;
      }
      if (total == 0.0) {
        row[s] = 1.0;
        total = 1.0;
      }
      for (auto& x : row) x /= total;
      rew[s][k] = r(rng);
    }
  }
  return tdt::dss::MdpModel::from_dense(p, rew);
}

/// Two-state chain: action 0 moves s0 -> s1 (reward 1) and s1 -> end
/// (reward 2); action 1 ends at once (1.5 from s0, 0.5 from s1). State 2 is
/// the absorbing terminal. Optimal is action 0 everywhere at gamma 0.5.
inline tdt::dss::MdpModel chain_mdp() {
  std::vector<std::vector<std::vector<double>>> p{
      {{0, 1, 0}, {0, 0, 1}},
      {{0, 0, 1}, {0, 0, 1}},
      {{0, 0, 1}, {0, 0, 1}},
  };
  std::vector<std::vector<double>> r{{1.0, 1.5}, {2.0, 0.5}, {0.0, 0.0}};
  return tdt::dss::MdpModel::from_dense(p, r, 2);
}

/// Linear-interpolation percentile on an already sorted vector.
inline double percentile_sorted(const std::vector<double>& s, double q) {
  const double pos = q * static_cast<double>(s.size() - 1);
  const auto i = static_cast<std::size_t>(pos);
  if (i + 1 >= s.size()) return s.back();
  return s[i] + (pos - static_cast<double>(i)) * (s[i + 1] - s[i]);
}

/// Bootstrap statistic "fraction above tau" over every stratified resample,
/// built task by task: each task contributes the count of draws above tau
/// for all runs^runs index tuples. Returns the sorted statistic values.
inline std::vector<double> enumerate_profile_stats(const std::vector<std::vector<double>>& scores,
                                                   double tau) {
  const std::size_t runs = scores.size(), tasks = scores.front().size();
  std::vector<std::size_t> totals{0};
  for (std::size_t task = 0; task < tasks; ++task) {
    std::vector<std::size_t> counts;
    std::vector<std::size_t> idx(runs, 0);
    while (true) {
      std::size_t c = 0;
      for (std::size_t d = 0; d < runs; ++d) c += scores[idx[d]][task] > tau;
      counts.push_back(c);
      std::size_t k = 0;
      while (k < runs && ++idx[k] == runs) idx[k++] = 0;
      if (k == runs) break;
    }
    std::vector<std::size_t> next;
    next.reserve(totals.size() * counts.size());
    for (auto t : totals)
      for (auto c : counts) next.push_back(t + c);
    totals.swap(next);
  }
  std::vector<double> stats;
  stats.reserve(totals.size());
  for (auto t : totals) stats.push_back(static_cast<double>(t) / static_cast<double>(runs * tasks));
  std::sort(stats.begin(), stats.end());
  return stats;
}

}  // namespace oracle
