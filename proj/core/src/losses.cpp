#include <cmath>
#include <string>

#include "tdt/errors.hpp"
#include "tdt/surrogate.hpp"

namespace tdt::surrogate {

namespace {

constexpr std::size_t kC = pbpk::kNumCompartments;

void zero_fill(const SurrogateParams& p, SurrogateParams* grad) {
  if (grad == nullptr) return;
  *grad = zero_network(p.layer_sizes, p.t_scale);
}

void check_batch(std::span<const double> t_batch) {
  if (t_batch.empty()) throw ContractError("t_batch must not be empty");
}

}  // namespace

OdeResidualLoss::OdeResidualLoss(pbpk::PatientParams params, std::vector<double> t_batch,
                                 double time_weight)
    : params_(std::move(params)),
      jac_(pbpk::rate_matrix(params_)),
      t_batch_(std::move(t_batch)),
      time_weight_(time_weight) {
  check_batch(t_batch_);
  if (!(std::isfinite(time_weight_) && time_weight_ >= 0.0)) {
    throw ContractError("residual time weight must be >= 0");
  }
}

double OdeResidualLoss::evaluate(const SurrogateParams& p, SurrogateParams* grad) const {
  const BatchOutput out = surrogate::evaluate(p, t_batch_);
  const std::size_t n = t_batch_.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  OutputAdjoint adj;
  if (grad) {
    adj.value.assign(n, State{});
    adj.rate.assign(n, State{});
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const State f = pbpk::derivative(out.value[i], params_);
    const double w = time_weight_ == 0.0 ? 1.0 : 1.0 + time_weight_ * t_batch_[i];
    State r;
    double sq = 0.0;
    for (std::size_t c = 0; c < kC; ++c) {
      r[c] = out.rate[i][c] - f[c];
      sq += r[c] * r[c];
    }
    total += w * sq;
    if (grad) {
      const double k = 2.0 * w * inv_n;
      for (std::size_t c = 0; c < kC; ++c) adj.rate[i][c] = k * r[c];
      // d f / d value = J, so the value adjoint is -J^T (2 w r / N).
      for (std::size_t s = 0; s < kC; ++s) {
        double acc = 0.0;
        for (std::size_t c = 0; c < kC; ++c) acc += jac_[c][s] * r[c];
        adj.value[i][s] = -k * acc;
      }
    }
  }
  if (grad) {
    zero_fill(p, grad);
    backpropagate(p, t_batch_, adj, *grad);
  }
  return total * inv_n;
}

MassBalanceLoss::MassBalanceLoss(pbpk::PatientParams params, double total_dose,
                                 std::vector<double> t_batch)
    : params_(std::move(params)), total_dose_(total_dose), t_batch_(std::move(t_batch)) {
  check_batch(t_batch_);
  if (!(std::isfinite(total_dose_) && total_dose_ > 0.0)) {
    throw DomainError("total administered dose must be > 0");
  }
}

double MassBalanceLoss::evaluate(const SurrogateParams& p, SurrogateParams* grad) const {
  const BatchOutput out = surrogate::evaluate(p, t_batch_);
  const std::size_t n = t_batch_.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  OutputAdjoint adj;
  if (grad) {
    adj.value.assign(n, State{});
    adj.rate.assign(n, State{});
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double remaining = total_dose_ * std::exp(-params_.lambda_phys * t_batch_[i]);
    const double mismatch = pbpk::total_activity(out.value[i], params_) - remaining;
    total += mismatch * mismatch;
    if (grad) {
      for (std::size_t c = 0; c < kC; ++c) {
        adj.value[i][c] = 2.0 * mismatch * params_.volumes[c] * inv_n;
      }
    }
  }
  if (grad) {
    zero_fill(p, grad);
    backpropagate(p, t_batch_, adj, *grad);
  }
  return total * inv_n;
}

InitialConditionLoss::InitialConditionLoss(State initial) : initial_(initial) {}

double InitialConditionLoss::evaluate(const SurrogateParams& p, SurrogateParams* grad) const {
  const double t0[1] = {0.0};
  const BatchOutput out = surrogate::evaluate(p, t0);
  double total = 0.0;
  OutputAdjoint adj{{State{}}, {State{}}};
  for (std::size_t c = 0; c < kC; ++c) {
    const double d = out.value[0][c] - initial_[c];
    total += d * d;
    adj.value[0][c] = 2.0 * d;
  }
  if (grad) {
    zero_fill(p, grad);
    backpropagate(p, t0, adj, *grad);
  }
  return total;
}

void WeightedLoss::add(double weight, std::shared_ptr<const Loss> term) {
  if (!(std::isfinite(weight) && weight >= 0.0)) throw ContractError("loss weight must be >= 0");
  terms_.emplace_back(weight, std::move(term));
}

double WeightedLoss::evaluate(const SurrogateParams& p, SurrogateParams* grad) const {
  zero_fill(p, grad);
  SurrogateParams part;
  double total = 0.0;
  for (const auto& [weight, term] : terms_) {
    if (weight == 0.0) continue;
    total += weight * term->evaluate(p, grad ? &part : nullptr);
    if (grad) {
      for (std::size_t l = 0; l < grad->layers.size(); ++l) {
        auto& g = grad->layers[l];
        const auto& q = part.layers[l];
        for (std::size_t k = 0; k < g.w.size(); ++k) g.w[k] += weight * q.w[k];
        for (std::size_t k = 0; k < g.b.size(); ++k) g.b[k] += weight * q.b[k];
      }
    }
  }
  return total;
}

double loss_ode(const SurrogateParams& p, const pbpk::PatientParams& params,
                std::span<const double> t_batch) {
  return OdeResidualLoss(params, {t_batch.begin(), t_batch.end()})(p);
}

double loss_phys(const SurrogateParams& p, const pbpk::PatientParams& params, double total_dose,
                 std::span<const double> t_batch) {
  return MassBalanceLoss(params, total_dose, {t_batch.begin(), t_batch.end()})(p);
}

double loss_ic(const SurrogateParams& p, const State& initial) {
  return InitialConditionLoss(initial)(p);
}

bool is_closed_system(const pbpk::PatientParams& params) {
  return params.k_met == 0.0 && params.k_ex == 0.0;
}

void TrainConfig::validate() const {
  if (t_batch.empty()) throw ContractError("t_batch must not be empty");
  for (double t : t_batch) {
    if (!(std::isfinite(t) && t >= 0.0)) throw ContractError("collocation times must be >= 0");
  }
  if (!(tolerance > 0.0)) throw ContractError("tolerance must be > 0");
  if (max_iters < 1) throw ContractError("max_iters must be >= 1");
  if (!(std::isfinite(learning_rate) && learning_rate > 0.0)) {
    throw ContractError("learning_rate must be > 0");
  }
  if (!(std::isfinite(ode_time_weight) && ode_time_weight >= 0.0)) {
    throw ContractError("ode_time_weight must be >= 0");
  }
  const auto& w = loss_weights;
  for (double x : {w.ode, w.phys, w.ic}) {
    if (!(std::isfinite(x) && x >= 0.0)) throw ContractError("loss weights must be >= 0");
  }
  if (w.ode == 0.0 && w.phys == 0.0 && w.ic == 0.0) {
    throw ContractError("at least one loss weight must be positive");
  }
  if (layer_sizes.size() < 2 || layer_sizes.front() != 1 ||
      layer_sizes.back() != pbpk::kNumCompartments) {
    throw ContractError("layer_sizes must run from 1 to 4");
  }
}

std::vector<double> uniform_collocation(double horizon_h, std::size_t n) {
  return power_collocation(horizon_h, n, 1.0);
}

std::vector<double> power_collocation(double horizon_h, std::size_t n, double power) {
  if (!(std::isfinite(horizon_h) && horizon_h > 0.0)) throw DomainError("horizon must be > 0");
  if (n < 2) throw DomainError("need at least two collocation points");
  if (!(std::isfinite(power) && power > 0.0)) throw DomainError("collocation power must be > 0");
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = static_cast<double>(i) / static_cast<double>(n - 1);
    t[i] = horizon_h * (power == 1.0 ? u : std::pow(u, power));
  }
  t.back() = horizon_h;
  return t;
}

std::shared_ptr<const Loss> make_total_loss(const pbpk::PatientParams& params, const State& initial,
                                            double total_dose, const TrainConfig& cfg) {
  cfg.validate();
  auto total = std::make_shared<WeightedLoss>();
  const auto& w = cfg.loss_weights;
  if (w.ode > 0.0) {
    total->add(w.ode, std::make_shared<OdeResidualLoss>(params, cfg.t_batch, cfg.ode_time_weight));
  }
  if (w.phys > 0.0 && is_closed_system(params)) {
    total->add(w.phys, std::make_shared<MassBalanceLoss>(params, total_dose, cfg.t_batch));
  }
  if (w.ic > 0.0) total->add(w.ic, std::make_shared<InitialConditionLoss>(initial));
  return total;
}

double loss_total(const SurrogateParams& p, const pbpk::PatientParams& params, const State& initial,
                  double total_dose, const TrainConfig& cfg) {
  return (*make_total_loss(params, initial, total_dose, cfg))(p);
}

SurrogateParams grad(const SurrogateParams& p, const Loss& loss) {
  SurrogateParams g;
  const double value = loss.evaluate(p, &g);
  if (!std::isfinite(value)) throw GradientError("loss is not finite at the requested parameters");
  return g;
}

}  // namespace tdt::surrogate
