#pragma once

// Physics-informed neural surrogate C_NN(t) of the PBPK dynamics.
//
// The network maps normalized time x = t / t_scale through tanh hidden
// layers to a softplus output layer, so every predicted concentration is
// strictly positive. Training minimizes
//   w_ode * L_ode + w_phys * L_phys + w_ic * L_ic
// where L_ode is the mean squared residual of dC_NN/dt against the
// mechanistic right-hand side on collocation points, L_phys the mean squared
// mismatch of total activity against the decay-corrected administered dose,
// and L_ic the squared initial-condition error.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "tdt/pbpk.hpp"

namespace tdt::surrogate {

using pbpk::State;

/// Dense layer, y = W x + b with W stored row-major (out x in).
struct Layer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> w;
  std::vector<double> b;

  bool operator==(const Layer&) const = default;
};

struct SurrogateParams {
  std::vector<std::size_t> layer_sizes;  // {1, hidden..., 4}
  std::vector<Layer> layers;
  double t_scale = 1.0;  // hours mapped to x = 1

  /// Throws ContractError on inconsistent shapes or non-finite entries.
  void validate() const;
  std::size_t parameter_count() const;

  bool operator==(const SurrogateParams&) const = default;
};

/// Network with all weights and biases zero.
SurrogateParams zero_network(std::span<const std::size_t> layer_sizes, double t_scale);

/// Weights and biases uniform in +-1/sqrt(fan_in), seeded.
SurrogateParams random_network(std::span<const std::size_t> layer_sizes, double t_scale,
                               std::uint64_t seed);

/// Parameters in storage order (layer by layer, W then b).
std::vector<double> flatten(const SurrogateParams& p);
/// Inverse of flatten; `p` supplies the shape.
void unflatten(std::span<const double> theta, SurrogateParams& p);

/// C_NN(t), MBq/L.
State forward(const SurrogateParams& p, double t_h);

/// dC_NN/dt in MBq/L/h, propagated analytically through the layers.
State time_derivative(const SurrogateParams& p, double t_h);

/// Network outputs and their time derivatives on a batch of times.
struct BatchOutput {
  std::vector<State> value;
  std::vector<State> rate;
};

BatchOutput evaluate(const SurrogateParams& p, std::span<const double> times_h);

/// dLoss/dvalue and dLoss/drate for every time of a batch.
struct OutputAdjoint {
  std::vector<State> value;
  std::vector<State> rate;
};

/// Accumulates into `grad` (same shape as `p`) the reverse-mode gradient of
/// a loss whose sensitivity to the batch outputs is `adjoint`.
void backpropagate(const SurrogateParams& p, std::span<const double> times_h,
                   const OutputAdjoint& adjoint, SurrogateParams& grad);

/// A differentiable scalar objective over network parameters.
class Loss {
 public:
  virtual ~Loss() = default;
  /// Returns the loss at `p`; when `grad` is non-null its contents are
  /// overwritten with dLoss/dtheta (same shape as `p`).
  virtual double evaluate(const SurrogateParams& p, SurrogateParams* grad) const = 0;
  double operator()(const SurrogateParams& p) const { return evaluate(p, nullptr); }
};

/// (1/N) sum_i w_i || dC_NN(t_i)/dt - f(C_NN(t_i)) ||^2 with f = pbpk::derivative
/// and w_i = 1 + time_weight * t_i (1 everywhere by default).
class OdeResidualLoss final : public Loss {
 public:
  OdeResidualLoss(pbpk::PatientParams params, std::vector<double> t_batch, double time_weight = 0.0);
  double evaluate(const SurrogateParams& p, SurrogateParams* grad) const override;

 private:
  pbpk::PatientParams params_;
  pbpk::RateMatrix jac_;
  std::vector<double> t_batch_;
  double time_weight_;
};

/// mean_t ( sum_i C_NN,i(t) V_i - D e^{-lambda t} )^2.
class MassBalanceLoss final : public Loss {
 public:
  MassBalanceLoss(pbpk::PatientParams params, double total_dose, std::vector<double> t_batch);
  double evaluate(const SurrogateParams& p, SurrogateParams* grad) const override;

 private:
  pbpk::PatientParams params_;
  double total_dose_;
  std::vector<double> t_batch_;
};

/// || C_NN(0) - initial ||^2.
class InitialConditionLoss final : public Loss {
 public:
  explicit InitialConditionLoss(State initial);
  double evaluate(const SurrogateParams& p, SurrogateParams* grad) const override;

 private:
  State initial_;
};

/// Non-negative linear combination of losses.
class WeightedLoss final : public Loss {
 public:
  void add(double weight, std::shared_ptr<const Loss> term);
  double evaluate(const SurrogateParams& p, SurrogateParams* grad) const override;

 private:
  std::vector<std::pair<double, std::shared_ptr<const Loss>>> terms_;
};

struct LossWeights {
  double ode = 1.0;
  double phys = 0.0;
  double ic = 10.0;
  bool operator==(const LossWeights&) const = default;
};

enum class Optimizer { adam, gradient_descent };

struct TrainConfig {
  std::vector<double> t_batch;  // collocation times, h
  double tolerance = 1e-6;
  std::size_t max_iters = 20'000;
  double learning_rate = 1e-3;
  LossWeights loss_weights;
  std::uint64_t seed = 0;
  std::vector<std::size_t> layer_sizes{1, 32, 32, 4};
  Optimizer optimizer = Optimizer::adam;
  /// Residual at t_i is weighted by 1 + ode_time_weight * t_i (per hour).
  /// Slow modes accumulate error from small late residuals; a positive
  /// weight counters that. 0 trains on the plain residual.
  double ode_time_weight = 0.0;

  /// Throws ContractError when an invariant fails.
  void validate() const;
};

/// `n` uniformly spaced collocation points covering [0, horizon_h].
std::vector<double> uniform_collocation(double horizon_h, std::size_t n = 256);
/// t_i = horizon_h * (i / (n - 1))^power: power > 1 packs points near t = 0,
/// where bolus kinetics are fastest. power 1 is uniform.
std::vector<double> power_collocation(double horizon_h, std::size_t n, double power);

struct TrainReport {
  double final_loss = std::numeric_limits<double>::infinity();
  std::size_t iterations = 0;
  std::vector<double> loss_history;
  bool converged = false;
};

struct TrainResult {
  SurrogateParams params;
  TrainReport report;
};

double loss_ode(const SurrogateParams& p, const pbpk::PatientParams& params,
                std::span<const double> t_batch);
double loss_phys(const SurrogateParams& p, const pbpk::PatientParams& params, double total_dose,
                 std::span<const double> t_batch);
double loss_ic(const SurrogateParams& p, const State& initial);

/// True when the mass-balance constraint is physically valid
/// (k_met = k_ex = 0), the only case in which w_phys is applied.
bool is_closed_system(const pbpk::PatientParams& params);

/// The weighted training objective for `cfg`.
std::shared_ptr<const Loss> make_total_loss(const pbpk::PatientParams& params, const State& initial,
                                            double total_dose, const TrainConfig& cfg);

double loss_total(const SurrogateParams& p, const pbpk::PatientParams& params, const State& initial,
                  double total_dose, const TrainConfig& cfg);

/// Reverse-mode gradient of `loss` at `p`; throws GradientError if the loss
/// is not finite there.
SurrogateParams grad(const SurrogateParams& p, const Loss& loss);

/// Seeded Adam (beta1 0.9, beta2 0.999, eps 1e-8) or plain gradient descent
/// until the loss drops to the tolerance or max_iters is reached. Returns the
/// best parameters seen. Throws TrainingError if the loss becomes non-finite.
TrainResult train(const pbpk::PatientParams& params, const State& initial, double total_dose,
                  const TrainConfig& cfg);

}  // namespace tdt::surrogate
