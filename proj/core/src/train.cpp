#include <algorithm>
#include <cmath>

#include "tdt/errors.hpp"
#include "tdt/surrogate.hpp"

namespace tdt::surrogate {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEpsilon = 1e-8;

class AdamState {
 public:
  explicit AdamState(std::size_t n) : m_(n, 0.0), v_(n, 0.0) {}

  void step(std::vector<double>& theta, const std::vector<double>& g, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * g[i];
      v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * g[i] * g[i];
      const double m_hat = m_[i] / c1;
      const double v_hat = v_[i] / c2;
      theta[i] -= lr * m_hat / (std::sqrt(v_hat) + kEpsilon);
    }
  }

 private:
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace

TrainResult train(const pbpk::PatientParams& params, const State& initial, double total_dose,
                  const TrainConfig& cfg) {
  cfg.validate();
  params.validate();
  pbpk::validate_state(initial);

  const double horizon = *std::max_element(cfg.t_batch.begin(), cfg.t_batch.end());
  const double t_scale = horizon > 0.0 ? horizon : 1.0;
  const auto loss = make_total_loss(params, initial, total_dose, cfg);

  SurrogateParams p = random_network(cfg.layer_sizes, t_scale, cfg.seed);
  std::vector<double> theta = flatten(p);
  AdamState adam(theta.size());

  TrainResult result;
  result.params = p;
  TrainReport& report = result.report;
  report.loss_history.reserve(std::min<std::size_t>(cfg.max_iters, 1'000'000));

  SurrogateParams g;
  for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
    const double value = loss->evaluate(p, &g);
    if (!std::isfinite(value)) throw TrainingError(it, "training loss is not finite");
    report.loss_history.push_back(value);
    report.iterations = it;
    if (value < report.final_loss) {
      report.final_loss = value;
      result.params = p;
    }
    if (value <= cfg.tolerance) break;

    const std::vector<double> gv = flatten(g);
    if (cfg.optimizer == Optimizer::adam) {
      adam.step(theta, gv, cfg.learning_rate);
    } else {
      for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= cfg.learning_rate * gv[i];
    }
    unflatten(theta, p);
  }
  report.converged = report.final_loss <= cfg.tolerance;
  return result;
}

}  // namespace tdt::surrogate
