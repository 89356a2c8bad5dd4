#include "tdt/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tdt/errors.hpp"

namespace tdt::evalmetrics {

namespace {

void require_samples(std::span<const double> s) {
  if (s.empty()) throw ContractError("at least one sample is required");
}

double sorted_quantile(const std::vector<double>& sorted, double q) {
  const double pos = static_cast<double>(sorted.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

// Number of stratified resamples, or 0 if it exceeds `cap`.
std::size_t resample_count(std::size_t runs, std::size_t tasks, std::size_t cap) {
  std::size_t total = 1;
  for (std::size_t i = 0; i < runs * tasks; ++i) {
    if (total > cap / runs) return 0;
    total *= runs;
  }
  return total;
}

}  // namespace

double quantile(std::span<const double> samples, double q) {
  require_samples(samples);
  if (!(q >= 0.0 && q <= 1.0)) throw ContractError("quantile level must lie in [0, 1]");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  return sorted_quantile(sorted, q);
}

double iqr(std::span<const double> samples) {
  require_samples(samples);
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  return sorted_quantile(sorted, 0.75) - sorted_quantile(sorted, 0.25);
}

double cvar(std::span<const double> samples, double alpha) {
  require_samples(samples);
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ContractError("alpha must lie in (0, 1]");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double want = std::ceil(alpha * static_cast<double>(sorted.size()) - 1e-12);
  const auto k = std::clamp<std::size_t>(static_cast<std::size_t>(want), 1, sorted.size());
  return std::accumulate(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), 0.0) /
         static_cast<double>(k);
}

double sampling_efficiency(std::span<const double> curve, double final_reward) {
  require_samples(curve);
  double lost = 0.0;
  for (double r : curve) lost += std::max(0.0, final_reward - r);
  return lost;
}

void RunMatrix::validate() const {
  if (scores.empty() || scores.front().empty()) throw ContractError("score matrix is empty");
  const std::size_t t = scores.front().size();
  for (const auto& row : scores) {
    if (row.size() != t) throw ContractError("score matrix is not rectangular");
    for (double x : row) {
      if (!std::isfinite(x)) throw ContractError("score matrix has a non-finite entry");
    }
  }
  for (const auto& c : learning_curves) {
    for (double x : c) {
      if (!std::isfinite(x)) throw ContractError("learning curve has a non-finite entry");
    }
  }
}

std::vector<ProfilePoint> performance_profile(const RunMatrix& m, std::span<const double> thresholds,
                                              std::size_t n_boot, std::uint64_t seed) {
  m.validate();
  if (n_boot < 1) throw ContractError("n_boot must be >= 1");
  for (std::size_t i = 1; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > thresholds[i - 1])) throw ContractError("thresholds must be increasing");
  }
  const std::size_t runs = m.runs();
  const std::size_t tasks = m.tasks();
  const double cells = static_cast<double>(runs * tasks);

  // A replicate is a run index per (task, draw) slot.
  std::vector<std::vector<std::size_t>> replicates;
  const std::size_t exhaustive = resample_count(runs, tasks, n_boot);
  if (exhaustive != 0) {
    replicates.reserve(exhaustive);
    std::vector<std::size_t> idx(runs * tasks, 0);
    for (std::size_t r = 0; r < exhaustive; ++r) {
      replicates.push_back(idx);
      for (std::size_t k = 0; k < idx.size(); ++k) {
        if (++idx[k] < runs) break;
        idx[k] = 0;
      }
    }
  } else {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, runs - 1);
    replicates.resize(n_boot, std::vector<std::size_t>(runs * tasks));
    for (auto& rep : replicates) {
      for (std::size_t task = 0; task < tasks; ++task) {
        for (std::size_t draw = 0; draw < runs; ++draw) rep[task * runs + draw] = pick(rng);
      }
    }
  }

  std::vector<ProfilePoint> profile;
  profile.reserve(thresholds.size());
  std::vector<double> stats(replicates.size());
  for (double tau : thresholds) {
    ProfilePoint pt;
    pt.tau = tau;
    std::size_t above = 0;
    for (const auto& row : m.scores) {
      for (double x : row) above += x > tau ? 1 : 0;
    }
    pt.point = static_cast<double>(above) / cells;

    for (std::size_t b = 0; b < replicates.size(); ++b) {
      const auto& rep = replicates[b];
      std::size_t count = 0;
      for (std::size_t task = 0; task < tasks; ++task) {
        for (std::size_t draw = 0; draw < runs; ++draw) {
          count += m.scores[rep[task * runs + draw]][task] > tau ? 1 : 0;
        }
      }
      stats[b] = static_cast<double>(count) / cells;
    }
    std::sort(stats.begin(), stats.end());
    pt.lo = sorted_quantile(stats, 0.025);
    pt.hi = sorted_quantile(stats, 0.975);
    profile.push_back(pt);
  }
  return profile;
}

}  // namespace tdt::evalmetrics
