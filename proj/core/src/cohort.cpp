#include <algorithm>
#include <cmath>
#include <string>

#include "tdt/errors.hpp"
#include "tdt/pbpk.hpp"

namespace tdt::pbpk {

namespace {

void check_spread(double s, const std::string& name) {
  if (!(std::isfinite(s) && s >= 1.0)) {
    throw DomainError("spread factor for " + name + " must be finite and >= 1");
  }
}

double lognormal_factor(double spread, std::normal_distribution<double>& normal,
                        std::mt19937_64& rng) {
  // Always draw so that the stream position does not depend on which
  // parameters happen to be variable.
  const double z = normal(rng);
  return spread == 1.0 ? 1.0 : std::exp(std::log(spread) * z);
}

}  // namespace

void ParamSpread::validate() const {
  for (std::size_t i = 0; i < rates.size(); ++i) check_spread(rates[i], std::string(kRateFields[i].name));
  for (std::size_t i = 0; i < volumes.size(); ++i) check_spread(volumes[i], "volumes");
  for (std::size_t i = 0; i < masses.size(); ++i) check_spread(masses[i], "masses");
}

bool ParamSpread::is_zero() const {
  auto one = [](double s) { return s == 1.0; };
  return std::all_of(rates.begin(), rates.end(), one) &&
         std::all_of(volumes.begin(), volumes.end(), one) &&
         std::all_of(masses.begin(), masses.end(), one);
}

double& ParamSpread::rate(std::string_view name) {
  for (std::size_t i = 0; i < kRateFields.size(); ++i) {
    if (kRateFields[i].name == name) return rates[i];
  }
  throw ContractError("unknown rate parameter '" + std::string(name) + "'");
}

void CohortSpec::validate() const {
  if (n < 1) throw DomainError("cohort size n must be >= 1");
  base.validate();
  variability.validate();
}

PatientParams perturb(const PatientParams& base, const ParamSpread& spread,
                      std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  PatientParams p = base;
  for (std::size_t i = 0; i < kRateFields.size(); ++i) {
    p.*kRateFields[i].member *= lognormal_factor(spread.rates[i], normal, rng);
  }
  for (std::size_t i = 0; i < kNumCompartments; ++i) {
    p.volumes[i] *= lognormal_factor(spread.volumes[i], normal, rng);
  }
  for (std::size_t i = 0; i < kNumTargets; ++i) {
    p.masses[i] *= lognormal_factor(spread.masses[i], normal, rng);
  }
  return p;
}

std::vector<PatientParams> sample_cohort(const CohortSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::vector<PatientParams> cohort;
  cohort.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) cohort.push_back(perturb(spec.base, spec.variability, rng));
  return cohort;
}

}  // namespace tdt::pbpk
