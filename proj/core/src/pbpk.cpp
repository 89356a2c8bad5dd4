#include "tdt/pbpk.hpp"

#include <cmath>
#include <string>

#include "tdt/errors.hpp"

namespace tdt::pbpk {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw DomainError(what);
}

bool finite_nonneg(double x) { return std::isfinite(x) && x >= 0.0; }
bool finite_pos(double x) { return std::isfinite(x) && x > 0.0; }

}  // namespace

void PatientParams::validate() const {
  for (const auto& f : kRateFields) {
    require(finite_nonneg(this->*f.member),
            std::string(f.name) + " must be finite and >= 0");
  }
  for (std::size_t i = 0; i < kNumCompartments; ++i) {
    require(finite_pos(volumes[i]), "volumes[" + std::to_string(i) + "] must be > 0");
  }
  for (std::size_t i = 0; i < kNumTargets; ++i) {
    require(finite_pos(masses[i]), "masses[" + std::to_string(i) + "] must be > 0");
  }
  for (std::size_t t = 0; t < kNumTargets; ++t) {
    for (std::size_t s = 0; s < kNumCompartments; ++s) {
      require(finite_nonneg(s_factors[t][s]), "s_factors[" + std::to_string(t) + "][" +
                                                  std::to_string(s) + "] must be >= 0");
    }
  }
}

PatientParams reference_patient() {
  PatientParams p;
  p.k_p_l = 0.15;
  p.k_l_p = 0.05;
  p.k_p_k = 0.25;
  p.k_k_p = 0.10;
  p.k_met = 0.03;
  p.k_ex = 0.30;
  p.k_p_t = 0.02;
  p.k_t_p = 0.02;
  p.lambda_phys = 0.00434;  // ~6.65 d half-life
  p.volumes = {5.0, 1.8, 0.31, 0.1};
  p.masses = {1.8, 0.31, 0.1};

  // Energy released per MBq h for a 0.147 MeV mean-emission beta emitter:
  // 3.6e9 decays * 0.147 MeV * 1.602176634e-13 J/MeV.
  const double energy_j = 3.6e9 * 0.147 * 1.602176634e-13;
  // Self-irradiation absorbs everything; blood-borne activity contributes 1%.
  for (std::size_t t = 0; t < kNumTargets; ++t) {
    p.s_factors[t][index(Compartment::plasma)] = energy_j * 0.01 / p.masses[t];
    p.s_factors[t][t + 1] = energy_j * 1.0 / p.masses[t];
  }
  return p;
}

void validate_state(const State& c) {
  for (std::size_t i = 0; i < kNumCompartments; ++i) {
    require(std::isfinite(c[i]), "concentration[" + std::to_string(i) + "] is not finite");
    require(c[i] >= 0.0, "concentration[" + std::to_string(i) + "] is negative");
  }
}

RateMatrix rate_matrix(const PatientParams& p) {
  const auto& v = p.volumes;
  constexpr std::size_t P = index(Compartment::plasma);
  constexpr std::size_t L = index(Compartment::liver);
  constexpr std::size_t K = index(Compartment::kidney);
  constexpr std::size_t T = index(Compartment::tumor);
  const double lam = p.lambda_phys;

  RateMatrix j{};
  j[P][P] = -(p.k_p_l + p.k_p_k + p.k_p_t) - lam;
  j[P][L] = p.k_l_p * (v[L] / v[P]);
  j[P][K] = p.k_k_p * (v[K] / v[P]);
  j[P][T] = p.k_t_p * (v[T] / v[P]);

  j[L][P] = p.k_p_l * (v[P] / v[L]);
  j[L][L] = -p.k_l_p - p.k_met - lam;

  j[K][P] = p.k_p_k * (v[P] / v[K]);
  j[K][K] = -p.k_k_p - p.k_ex - lam;

  j[T][P] = p.k_p_t * (v[P] / v[T]);
  j[T][T] = -p.k_t_p - lam;
  return j;
}

State derivative(const State& c, const PatientParams& p) {
  for (double x : c) {
    if (!std::isfinite(x)) throw DomainError("derivative: non-finite concentration");
  }
  for (const auto& f : kRateFields) {
    if (!std::isfinite(p.*f.member)) throw DomainError("derivative: non-finite rate constant");
  }
  const RateMatrix j = rate_matrix(p);
  State d{};
  for (std::size_t r = 0; r < kNumCompartments; ++r) {
    double acc = 0.0;
    for (std::size_t s = 0; s < kNumCompartments; ++s) acc += j[r][s] * c[s];
    d[r] = acc;
  }
  return d;
}

double total_activity(const State& c, const PatientParams& p) {
  double sum = 0.0;
  for (std::size_t i = 0; i < kNumCompartments; ++i) sum += c[i] * p.volumes[i];
  return sum;
}

void Trajectory::validate() const {
  if (times.empty()) throw ContractError("trajectory is empty");
  if (times.size() != states.size()) {
    throw ContractError("trajectory has " + std::to_string(times.size()) + " times but " +
                        std::to_string(states.size()) + " states");
  }
  if (times.front() != 0.0) throw ContractError("trajectory must start at t=0");
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) {
      throw ContractError("trajectory times must be strictly increasing (index " +
                          std::to_string(i) + ")");
    }
  }
  for (const auto& s : states) validate_state(s);
}

}  // namespace tdt::pbpk
