#pragma once

// Organ-level dosimetry with the S-value formalism: time-integrated activity
// per source compartment, then D(T) = sum_S A~(S) S(T<-S).

#include <array>

#include "tdt/pbpk.hpp"

namespace tdt::dosimetry {

/// A~(S) per source compartment, MBq h.
using TiaVector = std::array<double, pbpk::kNumCompartments>;
/// D(T) per target organ, Gy; indexed like PatientParams::masses.
using DoseVector = std::array<double, pbpk::kNumTargets>;

struct DoseReport {
  TiaVector tia{};
  DoseVector dose{};
  bool cumulative = false;

  double operator[](pbpk::Target t) const { return dose[pbpk::index(t)]; }
  bool operator==(const DoseReport&) const = default;
};

enum class Tail { none, mono_exp };

/// Trapezoidal integral of A_S(t) = C_S(t) V_S over the trajectory grid.
/// With Tail::mono_exp a log-linear fit to the last 20% of grid points (at
/// least two) is integrated analytically to infinity and added. A segment
/// that is identically zero contributes nothing; a non-decaying fit throws
/// TailExtrapolationError.
TiaVector time_integrated_activity(const pbpk::Trajectory& traj, const pbpk::PatientParams& p,
                                   Tail tail = Tail::none);

/// D(T) = sum_S tia[S] * S(T<-S). The report is per-cycle (cumulative = false).
DoseReport absorbed_dose(const TiaVector& tia, const pbpk::PatientParams& p);

/// S-value from energetics: energy * absorbed_fraction / mass_kg.
///
/// With energy in J per MBq h of source activity the result is in
/// Gy/(MBq h), the unit expected in PatientParams::s_factors. Callers that
/// use another energy unit must convert before building S-factor matrices.
/// Throws DomainError if absorbed_fraction is outside [0, 1], mass_kg <= 0
/// or energy < 0.
double s_factor_from_energetics(double energy, double absorbed_fraction, double mass_kg);

/// Adds a per-cycle report onto a running total (linear, no repair). The
/// result is flagged cumulative.
DoseReport accumulate(const DoseReport& total, const DoseReport& cycle);

}  // namespace tdt::dosimetry
