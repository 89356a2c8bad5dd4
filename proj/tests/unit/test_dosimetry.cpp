#include <doctest.h>

#include <cmath>

#include "tdt/dosimetry.hpp"
#include "tdt/errors.hpp"

using namespace tdt;
using namespace tdt::dosimetry;
using pbpk::PatientParams;
using pbpk::State;
using pbpk::Trajectory;

namespace {

PatientParams unit_patient() {
  PatientParams p;
  p.volumes = {1, 1, 1, 1};
  p.masses = {1, 1, 1};
  return p;
}

Trajectory sampled(double t_end, double dt, State (*f)(double)) {
  Trajectory t;
  const auto n = pbpk::grid_size(t_end, dt);
  for (std::size_t i = 0; i < n; ++i) {
    const double ti = i + 1 == n ? t_end : static_cast<double>(i) * dt;
    t.times.push_back(ti);
    t.states.push_back(f(ti));
  }
  return t;
}

}  // namespace

TEST_CASE("tia: rectangle") {
  PatientParams p = unit_patient();
  p.volumes[1] = 2.0;
  const auto t = sampled(5.0, 0.5, [](double) { return State{0, 1, 0, 0}; });
  const auto tia = time_integrated_activity(t, p);
  CHECK(tia[1] == doctest::Approx(10.0));
  CHECK(tia[0] == 0.0);
}

TEST_CASE("tia: zero activity") {
  const auto t = sampled(5.0, 0.5, [](double) { return State{}; });
  for (auto tail : {Tail::none, Tail::mono_exp}) {
    const auto tia = time_integrated_activity(t, unit_patient(), tail);
    for (double x : tia) CHECK(x == 0.0);
  }
}

TEST_CASE("tia: exponential with mono-exponential tail") {
  const auto t = sampled(40.0, 0.1, [](double s) { return State{0, 0, 10.0 * std::exp(-0.2 * s), 0}; });
  const auto with_tail = time_integrated_activity(t, unit_patient(), Tail::mono_exp);
  const auto without = time_integrated_activity(t, unit_patient(), Tail::none);
  CHECK(std::abs(with_tail[2] - 50.0) / 50.0 < 0.01);
  CHECK(with_tail[2] >= without[2]);
  // The closed-form tail after 40 h.
  CHECK(with_tail[2] - without[2] == doctest::Approx(50.0 * std::exp(-8.0)).epsilon(1e-3));

  PatientParams p = unit_patient();
  p.k_ex = 0.2;
  const auto sim = pbpk::integrate(p, {0, 0, 10, 0}, 40.0, 0.1);
  const auto tia = time_integrated_activity(sim, p, Tail::mono_exp);
  CHECK(std::abs(tia[2] - 50.0) / 50.0 < 0.01);
}

TEST_CASE("tia: tail never reduces the integral on decaying curves") {
  const auto sim = pbpk::integrate(pbpk::reference_patient(), {1480, 0, 0, 0}, 1344.0, 1.0);
  const auto a = time_integrated_activity(sim, pbpk::reference_patient(), Tail::none);
  const auto b = time_integrated_activity(sim, pbpk::reference_patient(), Tail::mono_exp);
  for (std::size_t c = 0; c < 4; ++c) CHECK(b[c] >= a[c]);
}

TEST_CASE("tia: non-decaying tail is rejected") {
  const auto t = sampled(10.0, 1.0, [](double s) { return State{1.0 + s, 0, 0, 0}; });
  CHECK_THROWS_AS(time_integrated_activity(t, unit_patient(), Tail::mono_exp),
                  TailExtrapolationError);
  CHECK_NOTHROW(time_integrated_activity(t, unit_patient(), Tail::none));
  try {
    time_integrated_activity(t, unit_patient(), Tail::mono_exp);
  } catch (const TailExtrapolationError& e) {
    CHECK(e.compartment() == 0);
  }
}

TEST_CASE("absorbed dose: unit identity") {
  PatientParams p = unit_patient();
  p.s_factors[1][2] = 1.0;
  const auto r = absorbed_dose({0, 0, 1, 0}, p);
  CHECK(r.dose[1] == 1.0);
  CHECK(r[pbpk::Target::kidney] == 1.0);
  CHECK(r.dose[0] == 0.0);
  CHECK(r.dose[2] == 0.0);
  CHECK(r.tia == TiaVector{0, 0, 1, 0});
  CHECK_FALSE(r.cumulative);
}

TEST_CASE("absorbed dose: linear under doubling") {
  const auto p = pbpk::reference_patient();
  const TiaVector tia{123.4, 56.7, 8.9, 0.12};
  const auto a = absorbed_dose(tia, p);
  const auto b = absorbed_dose({2 * tia[0], 2 * tia[1], 2 * tia[2], 2 * tia[3]}, p);
  for (std::size_t t = 0; t < 3; ++t) CHECK(std::abs(b.dose[t] - 2 * a.dose[t]) <= 1e-12 * a.dose[t]);
}

TEST_CASE("absorbed dose: sums over sources") {
  PatientParams p = unit_patient();
  p.s_factors[2] = {0.5, 0.0, 0.25, 2.0};
  const auto r = absorbed_dose({2, 7, 4, 3}, p);
  CHECK(r.dose[2] == doctest::Approx(0.5 * 2 + 0.25 * 4 + 2.0 * 3));
}

TEST_CASE("absorbed dose: rejects negative tia") {
  CHECK_THROWS_AS(absorbed_dose({-1, 0, 0, 0}, unit_patient()), DomainError);
}

TEST_CASE("s-factor from energetics") {
  CHECK(s_factor_from_energetics(0.0, 0.3, 2.0) == 0.0);
  CHECK(s_factor_from_energetics(1.0, 1.0, 1.0) == 1.0);
  CHECK(s_factor_from_energetics(0.5, 0.1, 2.0) == 0.5 * 0.1 / 2.0);
  CHECK(s_factor_from_energetics(0.5, 0.1, 2.0) == doctest::Approx(0.025));
  CHECK_THROWS_AS(s_factor_from_energetics(1.0, 1.1, 1.0), DomainError);
  CHECK_THROWS_AS(s_factor_from_energetics(1.0, -0.1, 1.0), DomainError);
  CHECK_THROWS_AS(s_factor_from_energetics(1.0, 0.5, 0.0), DomainError);
  CHECK_THROWS_AS(s_factor_from_energetics(-1.0, 0.5, 1.0), DomainError);
}

TEST_CASE("expanded form: dose equals a*phi/M substitution bit for bit") {
  PatientParams p = unit_patient();
  const double a = 0.5, phi = 0.1, m = 2.0;
  p.masses[0] = m;
  p.s_factors[0][1] = s_factor_from_energetics(a, phi, m);
  const auto r = absorbed_dose({0, 100, 0, 0}, p);
  CHECK(r.dose[0] == 100.0 * (a * phi / m));
  CHECK(r.dose[0] == doctest::Approx(2.5));
}

TEST_CASE("dose is linear in administered activity") {
  const auto p = pbpk::reference_patient();
  const auto one = pbpk::integrate(p, {100, 0, 0, 0}, 500.0, 0.5);
  const auto three = pbpk::integrate(p, {300, 0, 0, 0}, 500.0, 0.5);
  const auto d1 = absorbed_dose(time_integrated_activity(one, p, Tail::mono_exp), p);
  const auto d3 = absorbed_dose(time_integrated_activity(three, p, Tail::mono_exp), p);
  for (std::size_t t = 0; t < 3; ++t) CHECK(d3.dose[t] == doctest::Approx(3 * d1.dose[t]).epsilon(1e-6));
}

TEST_CASE("accumulate") {
  DoseReport a{{1, 2, 3, 4}, {1, 2, 3}, false};
  DoseReport b{{1, 1, 1, 1}, {0.5, 0.5, 0.5}, false};
  const auto c = accumulate(a, b);
  CHECK(c.cumulative);
  CHECK(c.dose == DoseVector{1.5, 2.5, 3.5});
  CHECK(c.tia == TiaVector{2, 3, 4, 5});
}
