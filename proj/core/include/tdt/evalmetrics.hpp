#pragma once

// Reliability metrics for comparing dosing policies or learning runs.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace tdt::evalmetrics {

/// Linear-interpolation quantile at position (n - 1) * q of the sorted
/// samples. Throws ContractError on empty input or q outside [0, 1].
double quantile(std::span<const double> samples, double q);

/// Q3 - Q1 under `quantile`.
double iqr(std::span<const double> samples);

/// Mean of the worst ceil(alpha n) samples, lower values being worse.
double cvar(std::span<const double> samples, double alpha);

/// sum_t max(0, final - curve[t]); lower is better.
double sampling_efficiency(std::span<const double> curve, double final_reward);

struct RunMatrix {
  std::vector<std::vector<double>> scores;           // [run][task]
  std::vector<std::vector<double>> learning_curves;  // [run][step], optional

  std::size_t runs() const { return scores.size(); }
  std::size_t tasks() const { return scores.empty() ? 0 : scores.front().size(); }
  /// Throws ContractError unless scores are rectangular, non-empty and finite.
  void validate() const;
};

struct ProfilePoint {
  double tau = 0.0;
  double point = 0.0;  // fraction of (run, task) scores > tau
  double lo = 0.0;     // 2.5th percentile of the bootstrap distribution
  double hi = 0.0;     // 97.5th percentile
};

/// Score-distribution profile with stratified bootstrap bands: each
/// replicate resamples runs with replacement independently within every
/// task. When the number of distinct stratified resamples, runs^(runs*tasks),
/// does not exceed n_boot, all of them are enumerated exactly (each once);
/// otherwise n_boot replicates are drawn with `seed`.
std::vector<ProfilePoint> performance_profile(const RunMatrix& m, std::span<const double> thresholds,
                                              std::size_t n_boot, std::uint64_t seed);

}  // namespace tdt::evalmetrics
