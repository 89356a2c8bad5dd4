#pragma once

// Four-compartment radiopharmaceutical PBPK model (plasma, liver, kidney,
// tumor) with first-order exchange, hepatic metabolism, renal excretion and
// physical decay. Concentrations are activity concentrations in MBq/L; time
// is in hours.

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace tdt::pbpk {

inline constexpr std::size_t kNumCompartments = 4;
inline constexpr std::size_t kNumTargets = 3;

/// Source compartments, in storage order.
enum class Compartment : std::size_t { plasma = 0, liver = 1, kidney = 2, tumor = 3 };
/// Target organs for dosimetry, in storage order.
enum class Target : std::size_t { liver = 0, kidney = 1, tumor = 2 };

inline constexpr std::array<std::string_view, kNumCompartments> kCompartmentNames{
    "plasma", "liver", "kidney", "tumor"};
inline constexpr std::array<std::string_view, kNumTargets> kTargetNames{"liver", "kidney",
                                                                        "tumor"};

/// Activity concentration per compartment, MBq/L.
using State = std::array<double, kNumCompartments>;
/// S(T<-S) in Gy/(MBq h); rows are targets, columns are source compartments.
using SFactorMatrix = std::array<std::array<double, kNumCompartments>, kNumTargets>;
/// Linear right-hand side: dC/dt = J C.
using RateMatrix = std::array<std::array<double, kNumCompartments>, kNumCompartments>;

constexpr std::size_t index(Compartment c) { return static_cast<std::size_t>(c); }
constexpr std::size_t index(Target t) { return static_cast<std::size_t>(t); }

struct PatientParams {
  // Transport, 1/h.
  double k_p_l = 0.0;
  double k_l_p = 0.0;
  double k_p_k = 0.0;
  double k_k_p = 0.0;
  double k_p_t = 0.0;
  double k_t_p = 0.0;
  // Elimination, 1/h.
  double k_met = 0.0;
  double k_ex = 0.0;
  double lambda_phys = 0.0;

  std::array<double, kNumCompartments> volumes{1.0, 1.0, 1.0, 1.0};  // L
  std::array<double, kNumTargets> masses{1.0, 1.0, 1.0};             // kg
  SFactorMatrix s_factors{};

  /// Throws DomainError naming the first violated invariant.
  void validate() const;

  bool operator==(const PatientParams&) const = default;
};

/// Named scalar rate fields, in the order used by serialization and cohorts.
struct RateField {
  std::string_view name;
  double PatientParams::*member;
};
inline constexpr std::array<RateField, 9> kRateFields{{
    {"k_p_l", &PatientParams::k_p_l},
    {"k_l_p", &PatientParams::k_l_p},
    {"k_p_k", &PatientParams::k_p_k},
    {"k_k_p", &PatientParams::k_k_p},
    {"k_met", &PatientParams::k_met},
    {"k_ex", &PatientParams::k_ex},
    {"k_p_t", &PatientParams::k_p_t},
    {"k_t_p", &PatientParams::k_t_p},
    {"lambda_phys", &PatientParams::lambda_phys},
}};

/// Default Lu-177-like virtual patient used by the demos and the decision
/// support defaults. Magnitudes are illustrative, not clinical.
PatientParams reference_patient();

/// Throws DomainError unless every entry is finite and non-negative.
void validate_state(const State& c);

/// dC/dt for the four compartments. Influx terms are scaled by
/// V_source / V_dest so that sum_i C_i V_i changes only through k_met,
/// k_ex and lambda_phys.
State derivative(const State& c, const PatientParams& p);

/// The constant matrix J with derivative(c, p) == J c.
RateMatrix rate_matrix(const PatientParams& p);

/// Total activity sum_i C_i V_i, MBq.
double total_activity(const State& c, const PatientParams& p);

struct Trajectory {
  std::vector<double> times;  // h, strictly increasing, times[0] == 0
  std::vector<State> states;

  std::size_t size() const noexcept { return times.size(); }
  /// Throws ContractError on shape/order violations, DomainError on bad values.
  void validate() const;
};

enum class Method { rk4, rk45 };

/// Number of samples on the uniform grid {0, dt, ..., t_end}. The last point
/// is t_end even when t_end is not an exact multiple of dt.
std::size_t grid_size(double t_end, double dt);

/// Integrates from `initial` on the uniform output grid. rk4 uses the grid
/// spacing as its step; rk45 is Dormand-Prince with adaptive steps
/// (atol 1e-9, rtol 1e-7) and dense output evaluated at grid points.
/// Throws IntegrationError carrying the failing time.
Trajectory integrate(const PatientParams& p, const State& initial, double t_end, double dt,
                     Method method = Method::rk4);

/// Log-normal spread factors (geometric standard deviations, >= 1) per
/// patient parameter. 1 means no variability.
struct ParamSpread {
  std::array<double, kRateFields.size()> rates{1, 1, 1, 1, 1, 1, 1, 1, 1};
  std::array<double, kNumCompartments> volumes{1, 1, 1, 1};
  std::array<double, kNumTargets> masses{1, 1, 1};

  void validate() const;
  bool is_zero() const;
  /// Spread for a named rate field; throws ContractError for unknown names.
  double& rate(std::string_view name);
  bool operator==(const ParamSpread&) const = default;
};

struct CohortSpec {
  std::size_t n = 1;
  PatientParams base;
  ParamSpread variability;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Multiplies each rate, volume and mass by an independent log-normal factor
/// with median 1. S-factors are left unchanged.
PatientParams perturb(const PatientParams& base, const ParamSpread& spread, std::mt19937_64& rng);

/// Deterministic for a fixed seed.
std::vector<PatientParams> sample_cohort(const CohortSpec& spec);

}  // namespace tdt::pbpk
