#include <algorithm>
#include <cmath>
#include <vector>

#include "tdt/errors.hpp"
#include "tdt/pbpk.hpp"

namespace tdt::pbpk {

namespace {

constexpr double kAbsTol = 1e-9;
constexpr double kRelTol = 1e-7;
constexpr double kClampFloor = -1e-12;
constexpr std::size_t kMaxSteps = 10'000'000;

State axpy(const State& y, double h, const State& k) {
  State r;
  for (std::size_t i = 0; i < kNumCompartments; ++i) r[i] = y[i] + h * k[i];
  return r;
}

State rhs(const RateMatrix& j, const State& c) {
  State d{};
  for (std::size_t r = 0; r < kNumCompartments; ++r) {
    double acc = 0.0;
    for (std::size_t s = 0; s < kNumCompartments; ++s) acc += j[r][s] * c[s];
    d[r] = acc;
  }
  return d;
}

// Round-off negatives above the floor become 0; anything below is a failure.
State clamp_output(const State& y, double t) {
  State out = y;
  for (double& x : out) {
    if (!std::isfinite(x)) throw IntegrationError(t, "non-finite concentration");
    if (x < 0.0) {
      if (x > kClampFloor) {
        x = 0.0;
      } else {
        throw IntegrationError(t, "negative concentration " + std::to_string(x));
      }
    }
  }
  return out;
}

std::vector<double> make_grid(double t_end, double dt) {
  const std::size_t n = grid_size(t_end, dt);
  std::vector<double> times(n);
  for (std::size_t i = 0; i < n; ++i) times[i] = static_cast<double>(i) * dt;
  times.back() = t_end;
  return times;
}

Trajectory integrate_rk4(const RateMatrix& j, const State& initial,
                         const std::vector<double>& times) {
  Trajectory traj;
  traj.times = times;
  traj.states.reserve(times.size());
  State y = initial;
  traj.states.push_back(y);
  for (std::size_t i = 1; i < times.size(); ++i) {
    const double h = times[i] - times[i - 1];
    const State k1 = rhs(j, y);
    const State k2 = rhs(j, axpy(y, 0.5 * h, k1));
    const State k3 = rhs(j, axpy(y, 0.5 * h, k2));
    const State k4 = rhs(j, axpy(y, h, k3));
    for (std::size_t c = 0; c < kNumCompartments; ++c) {
      y[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
    }
    y = clamp_output(y, times[i]);
    traj.states.push_back(y);
  }
  return traj;
}

// Dormand-Prince 5(4) tableau and the 4th-order continuous extension of
// Hairer, Norsett & Wanner (DOPRI5).
namespace dp {
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                 a75 = -2187.0 / 6784, a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                 d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                 d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;
}  // namespace dp

Trajectory integrate_rk45(const RateMatrix& j, const State& initial,
                          const std::vector<double>& times) {
  Trajectory traj;
  traj.times = times;
  traj.states.reserve(times.size());
  traj.states.push_back(initial);

  const double t_end = times.back();
  double t = 0.0;
  State y = initial;
  State k1 = rhs(j, y);
  double h = std::min(times.size() > 1 ? times[1] - times[0] : t_end, 0.1 * t_end);
  std::size_t next = 1;
  std::size_t steps = 0;

  while (next < times.size()) {
    if (++steps > kMaxSteps) throw IntegrationError(t, "rk45 exceeded step budget");
    h = std::min(h, t_end - t);
    if (h <= 1e-14 * std::max(1.0, t)) throw IntegrationError(t, "rk45 step size underflow");

    using namespace dp;
    State y2, y3, y4, y5, y6, y7;
    State k2, k3, k4, k5, k6, k7;
    for (std::size_t c = 0; c < kNumCompartments; ++c) y2[c] = y[c] + h * a21 * k1[c];
    k2 = rhs(j, y2);
    for (std::size_t c = 0; c < kNumCompartments; ++c)
      y3[c] = y[c] + h * (a31 * k1[c] + a32 * k2[c]);
    k3 = rhs(j, y3);
    for (std::size_t c = 0; c < kNumCompartments; ++c)
      y4[c] = y[c] + h * (a41 * k1[c] + a42 * k2[c] + a43 * k3[c]);
    k4 = rhs(j, y4);
    for (std::size_t c = 0; c < kNumCompartments; ++c)
      y5[c] = y[c] + h * (a51 * k1[c] + a52 * k2[c] + a53 * k3[c] + a54 * k4[c]);
    k5 = rhs(j, y5);
    for (std::size_t c = 0; c < kNumCompartments; ++c)
      y6[c] = y[c] + h * (a61 * k1[c] + a62 * k2[c] + a63 * k3[c] + a64 * k4[c] + a65 * k5[c]);
    k6 = rhs(j, y6);
    for (std::size_t c = 0; c < kNumCompartments; ++c)
      y7[c] = y[c] + h * (a71 * k1[c] + a73 * k3[c] + a74 * k4[c] + a75 * k5[c] + a76 * k6[c]);
    k7 = rhs(j, y7);

    double err_sq = 0.0;
    for (std::size_t c = 0; c < kNumCompartments; ++c) {
      const double e =
          h * (e1 * k1[c] + e3 * k3[c] + e4 * k4[c] + e5 * k5[c] + e6 * k6[c] + e7 * k7[c]);
      const double scale = kAbsTol + kRelTol * std::max(std::abs(y[c]), std::abs(y7[c]));
      err_sq += (e / scale) * (e / scale);
    }
    const double err = std::sqrt(err_sq / kNumCompartments);
    if (!std::isfinite(err)) throw IntegrationError(t, "rk45 error estimate is not finite");

    if (err <= 1.0) {
      const double t_new = (t_end - t - h <= 1e-12 * std::max(1.0, t_end)) ? t_end : t + h;
      // Dense output on [t, t_new] for every grid point inside the step.
      State r1 = y, r2, r3, r4, r5;
      for (std::size_t c = 0; c < kNumCompartments; ++c) {
        r2[c] = y7[c] - y[c];
        r3[c] = h * k1[c] - r2[c];
        r4[c] = r2[c] - h * k7[c] - r3[c];
        r5[c] = h * (d1 * k1[c] + d3 * k3[c] + d4 * k4[c] + d5 * k5[c] + d6 * k6[c] +
                     d7 * k7[c]);
      }
      // A step whose end point or interpolant dips below the clamp floor is
      // retried with half the step, so negatives never reach the output.
      std::vector<State> outs;
      bool negative = std::any_of(y7.begin(), y7.end(), [](double x) { return x <= kClampFloor; });
      for (std::size_t g = next; !negative && g < times.size() && times[g] <= t_new; ++g) {
        State out;
        if (times[g] == t_new) {
          out = y7;
        } else {
          const double theta = (times[g] - t) / h;
          const double theta1 = 1.0 - theta;
          for (std::size_t c = 0; c < kNumCompartments; ++c) {
            out[c] = r1[c] +
                     theta * (r2[c] + theta1 * (r3[c] + theta * (r4[c] + theta1 * r5[c])));
          }
        }
        negative = std::any_of(out.begin(), out.end(), [](double x) { return x <= kClampFloor; });
        outs.push_back(out);
      }
      if (negative) {
        h *= 0.5;
        continue;
      }
      for (const State& out : outs) {
        traj.states.push_back(clamp_output(out, times[next]));
        ++next;
      }
      t = t_new;
      y = y7;
      k1 = k7;  // FSAL
    }
    const double factor = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
    h *= factor;
  }
  return traj;
}

}  // namespace

std::size_t grid_size(double t_end, double dt) {
  if (!(std::isfinite(t_end) && t_end > 0.0)) throw DomainError("t_end must be > 0");
  if (!(std::isfinite(dt) && dt > 0.0)) throw DomainError("dt must be > 0");
  const double steps = t_end / dt;
  auto n = static_cast<std::size_t>(std::llround(steps));
  if (std::abs(steps - static_cast<double>(n)) > 1e-9 * std::max(1.0, steps)) {
    n = static_cast<std::size_t>(std::ceil(steps));
  }
  return std::max<std::size_t>(n, 1) + 1;
}

Trajectory integrate(const PatientParams& p, const State& initial, double t_end, double dt,
                     Method method) {
  p.validate();
  validate_state(initial);
  const std::vector<double> times = make_grid(t_end, dt);
  const RateMatrix j = rate_matrix(p);
  switch (method) {
    case Method::rk4:
      return integrate_rk4(j, initial, times);
    case Method::rk45:
      return integrate_rk45(j, initial, times);
  }
  throw ContractError("unknown integration method");
}

}  // namespace tdt::pbpk
