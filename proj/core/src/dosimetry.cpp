#include "tdt/dosimetry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tdt/errors.hpp"

namespace tdt::dosimetry {

namespace {

// Analytic integral to infinity of the mono-exponential fitted to the last
// segment of one compartment's activity curve.
double mono_exp_tail(const std::vector<double>& t, const std::vector<double>& a,
                     std::size_t compartment) {
  const std::size_t n = t.size();
  const std::size_t m = std::min(n, std::max<std::size_t>(2, static_cast<std::size_t>(
                                                                 std::ceil(0.2 * n))));
  const std::size_t first = n - m;

  if (std::all_of(a.begin() + first, a.end(), [](double x) { return x == 0.0; })) return 0.0;

  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  std::size_t k = 0;
  for (std::size_t i = first; i < n; ++i) {
    if (a[i] <= 0.0) continue;
    const double y = std::log(a[i]);
    sx += t[i];
    sy += y;
    sxx += t[i] * t[i];
    sxy += t[i] * y;
    ++k;
  }
  const std::string where = "compartment " + std::string(pbpk::kCompartmentNames[compartment]);
  if (k < 2) {
    throw TailExtrapolationError(compartment,
                                 "tail fit for " + where + " has fewer than 2 positive points");
  }
  const double kd = static_cast<double>(k);
  const double denom = kd * sxx - sx * sx;
  const double slope = (kd * sxy - sx * sy) / denom;
  const double intercept = (sy - slope * sx) / kd;
  const double rate = -slope;
  if (!(std::isfinite(rate) && rate > 0.0)) {
    throw TailExtrapolationError(compartment, "terminal segment of " + where + " does not decay");
  }
  return std::exp(intercept + slope * t.back()) / rate;
}

}  // namespace

TiaVector time_integrated_activity(const pbpk::Trajectory& traj, const pbpk::PatientParams& p,
                                   Tail tail) {
  traj.validate();
  p.validate();
  TiaVector tia{};
  const std::size_t n = traj.size();
  std::vector<double> activity(n);
  for (std::size_t c = 0; c < pbpk::kNumCompartments; ++c) {
    for (std::size_t i = 0; i < n; ++i) activity[i] = traj.states[i][c] * p.volumes[c];
    double integral = 0.0;
    for (std::size_t i = 1; i < n; ++i) {
      integral += 0.5 * (traj.times[i] - traj.times[i - 1]) * (activity[i] + activity[i - 1]);
    }
    if (tail == Tail::mono_exp && n >= 2) integral += mono_exp_tail(traj.times, activity, c);
    tia[c] = integral;
  }
  return tia;
}

DoseReport absorbed_dose(const TiaVector& tia, const pbpk::PatientParams& p) {
  for (double x : tia) {
    if (!(std::isfinite(x) && x >= 0.0)) throw DomainError("TIA entries must be finite and >= 0");
  }
  DoseReport report;
  report.tia = tia;
  for (std::size_t t = 0; t < pbpk::kNumTargets; ++t) {
    double d = 0.0;
    for (std::size_t s = 0; s < pbpk::kNumCompartments; ++s) d += tia[s] * p.s_factors[t][s];
    report.dose[t] = d;
  }
  return report;
}

double s_factor_from_energetics(double energy, double absorbed_fraction, double mass_kg) {
  if (!(absorbed_fraction >= 0.0 && absorbed_fraction <= 1.0)) {
    throw DomainError("absorbed fraction must lie in [0, 1]");
  }
  if (!(std::isfinite(mass_kg) && mass_kg > 0.0)) throw DomainError("target mass must be > 0");
  if (!(std::isfinite(energy) && energy >= 0.0)) throw DomainError("emitted energy must be >= 0");
  return energy * absorbed_fraction / mass_kg;
}

DoseReport accumulate(const DoseReport& total, const DoseReport& cycle) {
  DoseReport out;
  for (std::size_t s = 0; s < pbpk::kNumCompartments; ++s) out.tia[s] = total.tia[s] + cycle.tia[s];
  for (std::size_t t = 0; t < pbpk::kNumTargets; ++t) out.dose[t] = total.dose[t] + cycle.dose[t];
  out.cumulative = true;
  return out;
}

}  // namespace tdt::dosimetry
