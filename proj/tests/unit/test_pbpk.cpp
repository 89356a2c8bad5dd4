#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "tdt/errors.hpp"
#include "tdt/pbpk.hpp"

using namespace tdt;
using namespace tdt::pbpk;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

PatientParams unit_patient() {
  PatientParams p;
  p.volumes = {1, 1, 1, 1};
  p.masses = {1, 1, 1};
  return p;
}

PatientParams closed_reference() {
  PatientParams p = reference_patient();
  p.k_met = p.k_ex = p.lambda_phys = 0.0;
  return p;
}

}  // namespace

TEST_CASE("derivative: no flux gives zero rate") {
  const auto d = derivative({3, 1, 4, 1}, unit_patient());
  for (double x : d) CHECK(x == 0.0);
}

TEST_CASE("derivative: single plasma to liver path") {
  PatientParams p = unit_patient();
  p.k_p_l = 0.5;
  const auto d = derivative({1, 0, 0, 0}, p);
  CHECK(d[0] == doctest::Approx(-0.5));
  CHECK(d[1] == doctest::Approx(0.5));
  CHECK(d[2] == 0.0);
  CHECK(d[3] == 0.0);
}

TEST_CASE("derivative: activity leaves only through metabolism") {
  PatientParams p = unit_patient();
  p.k_met = 0.1;
  const auto d = derivative({0, 2, 0, 0}, p);
  double sum = 0.0;
  for (std::size_t i = 0; i < 4; ++i) sum += d[i] * p.volumes[i];
  CHECK(sum == doctest::Approx(-0.2));
}

TEST_CASE("derivative: matches term-by-term balance and rate matrix") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> c(0.0, 5.0);
  for (int k = 0; k < 20; ++k) {
    const auto p = oracle::random_patient(rng);
    const State s{c(rng), c(rng), c(rng), c(rng)};
    const auto d = derivative(s, p);
    const auto o = oracle::rhs(s, p);
    const auto j = rate_matrix(p);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(d[i] == doctest::Approx(o[i]).epsilon(1e-12));
      double jc = 0.0;
      for (std::size_t m = 0; m < 4; ++m) jc += j[i][m] * s[m];
      CHECK(d[i] == doctest::Approx(jc).epsilon(1e-12));
    }
  }
}

TEST_CASE("derivative: total activity changes only through losses") {
  std::mt19937_64 rng(5);
  auto p = oracle::random_patient(rng);
  const State s{2, 1, 0.5, 3};
  const auto d = derivative(s, p);
  double flux = 0.0;
  for (std::size_t i = 0; i < 4; ++i) flux += d[i] * p.volumes[i];
  const double loss = p.k_met * s[1] * p.volumes[1] + p.k_ex * s[2] * p.volumes[2] +
                      p.lambda_phys * total_activity(s, p);
  CHECK(flux == doctest::Approx(-loss).epsilon(1e-12));
}

TEST_CASE("derivative: rejects non-finite input") {
  CHECK_THROWS_AS(derivative({NAN, 0, 0, 0}, unit_patient()), DomainError);
  PatientParams p = unit_patient();
  p.k_ex = INFINITY;
  CHECK_THROWS_AS(derivative({1, 0, 0, 0}, p), DomainError);
}

TEST_CASE("patient validation") {
  CHECK_NOTHROW(reference_patient().validate());
  PatientParams p = reference_patient();
  p.k_p_l = -0.1;
  CHECK_THROWS_AS(p.validate(), DomainError);
  p = reference_patient();
  p.volumes[2] = 0.0;
  CHECK_THROWS_AS(p.validate(), DomainError);
  p = reference_patient();
  p.masses[0] = -1.0;
  CHECK_THROWS_AS(p.validate(), DomainError);
  p = reference_patient();
  p.s_factors[1][2] = -1e-9;
  CHECK_THROWS_AS(p.validate(), DomainError);
}

TEST_CASE("grid size") {
  CHECK(grid_size(72.0, 0.1) == 721);
  CHECK(grid_size(1.0, 0.3) == 5);
  CHECK(grid_size(5.0, 0.01) == 501);
}

TEST_CASE("integrate: grid and endpoint") {
  const auto t = integrate(reference_patient(), {1480, 0, 0, 0}, 72.0, 0.1);
  REQUIRE(t.size() == 721);
  CHECK(t.times.front() == 0.0);
  CHECK(t.times.back() == 72.0);
  CHECK_NOTHROW(t.validate());
  const auto odd = integrate(reference_patient(), {1, 0, 0, 0}, 1.0, 0.3);
  CHECK(odd.times.back() == 1.0);
}

TEST_CASE("integrate: no flux keeps the state constant") {
  for (auto m : {Method::rk4, Method::rk45}) {
    const auto t = integrate(unit_patient(), {1, 0, 0, 0}, 10.0, 0.5, m);
    for (const auto& s : t.states) {
      CHECK(s[0] == 1.0);
      CHECK(s[1] == 0.0);
    }
  }
}

TEST_CASE("integrate: closed-form single compartment") {
  PatientParams p = unit_patient();
  p.k_ex = 0.2;
  for (auto m : {Method::rk4, Method::rk45}) {
    const auto t = integrate(p, {0, 0, 10, 0}, 5.0, 0.01, m);
    CHECK(rel(t.states.back()[2], 10.0 * std::exp(-1.0)) < 1e-6);
    for (std::size_t i = 0; i < t.size(); i += 50)
      CHECK(rel(t.states[i][2], 10.0 * std::exp(-0.2 * t.times[i])) < 1e-6);
  }
  CHECK(integrate(p, {0, 0, 10, 0}, 5.0, 0.01).states.back()[2] ==
        doctest::Approx(3.67879).epsilon(1e-5));
}

TEST_CASE("integrate: mass conservation in a closed system") {
  const auto p = closed_reference();
  for (auto m : {Method::rk4, Method::rk45}) {
    const auto t = integrate(p, {1480, 10, 5, 1}, 72.0, 0.1, m);
    const double a0 = total_activity(t.states.front(), p);
    double worst = 0.0;
    for (const auto& s : t.states) worst = std::max(worst, rel(total_activity(s, p), a0));
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("integrate: rk4 against tiny-step Euler") {
  std::mt19937_64 rng(2024);
  for (int k = 0; k < 3; ++k) {
    const auto p = oracle::random_patient(rng);
    const State c0{10, 1, 0.5, 0.2};
    const double horizon = 2.0;
    const auto t = integrate(p, c0, horizon, 0.01);
    const auto e = oracle::euler(p, c0, horizon, 1e-5);
    for (std::size_t i = 0; i < 4; ++i) CHECK(rel(t.states.back()[i], e[i]) < 1e-4);
  }
}

TEST_CASE("integrate: linear in the initial state") {
  const auto p = reference_patient();
  const State c0{100, 3, 2, 1};
  const double a = 3.7;
  // The adaptive controller has an absolute tolerance, so scaling changes its
  // step sequence; it is linear only to within that tolerance.
  for (auto [m, bound] : {std::pair{Method::rk4, 1e-9}, std::pair{Method::rk45, 1e-6}}) {
    const auto t1 = integrate(p, c0, 72.0, 0.1, m);
    const auto t2 = integrate(p, {a * c0[0], a * c0[1], a * c0[2], a * c0[3]}, 72.0, 0.1, m);
    for (std::size_t i = 0; i < t1.size(); ++i)
      for (std::size_t c = 0; c < 4; ++c)
        CHECK(rel(t2.states[i][c], a * t1.states[i][c]) < bound);
  }
}

TEST_CASE("integrate: rk4 and rk45 agree") {
  std::mt19937_64 rng(99);
  for (int k = 0; k < 5; ++k) {
    const auto p = k == 0 ? reference_patient() : oracle::random_patient(rng);
    const auto a = integrate(p, {1480, 0, 0, 0}, 72.0, 0.1, Method::rk4);
    const auto b = integrate(p, {1480, 0, 0, 0}, 72.0, 0.1, Method::rk45);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double scale = total_activity(a.states[i], p);
      for (std::size_t c = 0; c < 4; ++c)
        worst = std::max(worst, std::abs(a.states[i][c] - b.states[i][c]) * p.volumes[c] / scale);
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("integrate: positivity and monotone decay") {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 5; ++k) {
    const auto p = oracle::random_patient(rng);
    for (auto m : {Method::rk4, Method::rk45}) {
      const auto t = integrate(p, {50, 0, 0, 0}, 200.0, 0.5, m);
      for (const auto& s : t.states)
        for (double x : s) CHECK(x >= 0.0);
    }
  }
  PatientParams p = unit_patient();
  p.lambda_phys = 0.3;
  const auto t = integrate(p, {5, 4, 3, 2}, 40.0, 0.1);
  for (std::size_t i = 1; i < t.size(); ++i)
    for (std::size_t c = 0; c < 4; ++c) CHECK(t.states[i][c] <= t.states[i - 1][c]);
}

TEST_CASE("integrate: argument checks") {
  CHECK_THROWS(integrate(reference_patient(), {1, 0, 0, 0}, 0.0, 0.1));
  CHECK_THROWS(integrate(reference_patient(), {1, 0, 0, 0}, 1.0, -0.1));
  CHECK_THROWS(integrate(reference_patient(), {-1, 0, 0, 0}, 1.0, 0.1));
}

TEST_CASE("trajectory validation") {
  Trajectory t;
  t.times = {0.0, 1.0, 1.0};
  t.states.assign(3, State{});
  CHECK_THROWS_AS(t.validate(), ContractError);
  t.times = {0.5, 1.0, 2.0};
  CHECK_THROWS_AS(t.validate(), ContractError);
  t.times = {0.0, 1.0, 2.0};
  t.states[1][0] = -1.0;
  CHECK_THROWS_AS(t.validate(), DomainError);
}

TEST_CASE("cohort: zero variability copies the base") {
  CohortSpec spec;
  spec.n = 3;
  spec.base = reference_patient();
  const auto c = sample_cohort(spec);
  REQUIRE(c.size() == 3);
  for (const auto& p : c) CHECK(p == spec.base);
}

TEST_CASE("cohort: deterministic and s-factors fixed") {
  CohortSpec spec;
  spec.n = 20;
  spec.base = reference_patient();
  spec.variability.rates.fill(1.3);
  spec.variability.volumes.fill(1.2);
  spec.variability.masses.fill(1.1);
  spec.seed = 42;
  const auto a = sample_cohort(spec);
  const auto b = sample_cohort(spec);
  CHECK(a == b);
  for (const auto& p : a) {
    CHECK(p.s_factors == spec.base.s_factors);
    CHECK_NOTHROW(p.validate());
  }
  CHECK(a[0] != a[1]);
  spec.seed = 43;
  CHECK(sample_cohort(spec) != a);
}

TEST_CASE("cohort: log-normal median") {
  CohortSpec spec;
  spec.n = 1000;
  spec.base = reference_patient();
  spec.variability.rate("k_ex") = 1.5;
  spec.seed = 7;
  const auto c = sample_cohort(spec);
  std::vector<double> k;
  for (const auto& p : c) {
    k.push_back(p.k_ex);
    CHECK(p.k_p_l == spec.base.k_p_l);
  }
  std::nth_element(k.begin(), k.begin() + 500, k.end());
  CHECK(rel(k[500], spec.base.k_ex) < 0.05);
}

TEST_CASE("cohort: invalid specs") {
  CohortSpec spec;
  spec.n = 0;
  CHECK_THROWS(spec.validate());
  spec.n = 1;
  spec.variability.volumes[0] = 0.9;
  CHECK_THROWS(spec.validate());
  CHECK_THROWS_AS(spec.variability.rate("k_nope"), ContractError);
}
