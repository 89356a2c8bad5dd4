#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <string>

#include "tdt/errors.hpp"
#include "tdt/surrogate.hpp"

namespace tdt::surrogate {

namespace {

using Eigen::ArrayXXd;
using Eigen::MatrixXd;
using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstWeights = Eigen::Map<const RowMajor>;
using Weights = Eigen::Map<RowMajor>;
using ConstBias = Eigen::Map<const Eigen::VectorXd>;
using Bias = Eigen::Map<Eigen::VectorXd>;

ArrayXXd softplus(const ArrayXXd& z) {
  return z.max(0.0) + (-z.abs()).exp().log1p();
}

ArrayXXd sigmoid(const ArrayXXd& z) {
  // Both branches are evaluated by Eigen's select; each is finite.
  const ArrayXXd e = (-z.abs()).exp();
  return (z >= 0.0).select(1.0 / (1.0 + e), e / (1.0 + e));
}

// Values and time tangents of every layer for one batch.
struct Trace {
  std::vector<MatrixXd> a;      // layer inputs (a[0] is normalized time)
  std::vector<MatrixXd> a_dot;  // d a / dt
  std::vector<MatrixXd> z;      // pre-activations
  std::vector<MatrixXd> z_dot;
  MatrixXd y, y_dot;            // outputs (4 x N)
};

Trace run_forward(const SurrogateParams& p, std::span<const double> times) {
  const auto n = static_cast<Eigen::Index>(times.size());
  Trace tr;
  MatrixXd a(1, n);
  for (Eigen::Index i = 0; i < n; ++i) a(0, i) = times[static_cast<std::size_t>(i)] / p.t_scale;
  MatrixXd a_dot = MatrixXd::Constant(1, n, 1.0 / p.t_scale);

  const std::size_t depth = p.layers.size();
  for (std::size_t l = 0; l < depth; ++l) {
    const Layer& layer = p.layers[l];
    const ConstWeights w(layer.w.data(), static_cast<Eigen::Index>(layer.out),
                         static_cast<Eigen::Index>(layer.in));
    const ConstBias b(layer.b.data(), static_cast<Eigen::Index>(layer.out));
    MatrixXd z = (w * a).colwise() + b;
    MatrixXd z_dot = w * a_dot;
    tr.a.push_back(std::move(a));
    tr.a_dot.push_back(std::move(a_dot));
    if (l + 1 < depth) {
      const ArrayXXd act = z.array().tanh();
      a = act.matrix();
      a_dot = ((1.0 - act.square()) * z_dot.array()).matrix();
    } else {
      tr.y = softplus(z.array()).matrix();
      tr.y_dot = (sigmoid(z.array()) * z_dot.array()).matrix();
    }
    tr.z.push_back(std::move(z));
    tr.z_dot.push_back(std::move(z_dot));
  }
  return tr;
}

BatchOutput to_output(const Trace& tr) {
  const auto n = static_cast<std::size_t>(tr.y.cols());
  BatchOutput out;
  out.value.resize(n);
  out.rate.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < pbpk::kNumCompartments; ++c) {
      out.value[i][c] = tr.y(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i));
      out.rate[i][c] = tr.y_dot(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i));
    }
  }
  return out;
}

void check_output_width(const SurrogateParams& p) {
  if (p.layer_sizes.empty() || p.layer_sizes.back() != pbpk::kNumCompartments) {
    throw ContractError("surrogate output width must be " +
                        std::to_string(pbpk::kNumCompartments));
  }
}

SurrogateParams shaped(std::span<const std::size_t> sizes, double t_scale) {
  if (sizes.size() < 2) throw ContractError("network needs at least an input and an output layer");
  if (sizes.front() != 1) throw ContractError("network input width must be 1");
  if (sizes.back() != pbpk::kNumCompartments) throw ContractError("network output width must be 4");
  if (!(std::isfinite(t_scale) && t_scale > 0.0)) throw ContractError("t_scale must be > 0");
  SurrogateParams p;
  p.layer_sizes.assign(sizes.begin(), sizes.end());
  p.t_scale = t_scale;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    if (sizes[l] == 0 || sizes[l + 1] == 0) throw ContractError("layer widths must be >= 1");
    Layer layer;
    layer.in = sizes[l];
    layer.out = sizes[l + 1];
    layer.w.assign(layer.in * layer.out, 0.0);
    layer.b.assign(layer.out, 0.0);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

}  // namespace

void SurrogateParams::validate() const {
  if (layer_sizes.size() < 2) throw ContractError("layer_sizes needs at least two entries");
  if (layer_sizes.front() != 1) throw ContractError("layer_sizes must start with 1");
  check_output_width(*this);
  if (layers.size() + 1 != layer_sizes.size()) {
    throw ContractError("expected " + std::to_string(layer_sizes.size() - 1) + " layers, got " +
                        std::to_string(layers.size()));
  }
  if (!(std::isfinite(t_scale) && t_scale > 0.0)) throw ContractError("t_scale must be > 0");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Layer& layer = layers[l];
    const std::string where = "layer " + std::to_string(l);
    if (layer.in != layer_sizes[l] || layer.out != layer_sizes[l + 1]) {
      throw ContractError(where + " shape does not match layer_sizes");
    }
    if (layer.w.size() != layer.in * layer.out || layer.b.size() != layer.out) {
      throw ContractError(where + " has wrong weight or bias count");
    }
    for (double x : layer.w) {
      if (!std::isfinite(x)) throw ContractError(where + " has a non-finite weight");
    }
    for (double x : layer.b) {
      if (!std::isfinite(x)) throw ContractError(where + " has a non-finite bias");
    }
  }
}

std::size_t SurrogateParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.w.size() + l.b.size();
  return n;
}

SurrogateParams zero_network(std::span<const std::size_t> layer_sizes, double t_scale) {
  return shaped(layer_sizes, t_scale);
}

SurrogateParams random_network(std::span<const std::size_t> layer_sizes, double t_scale,
                               std::uint64_t seed) {
  SurrogateParams p = shaped(layer_sizes, t_scale);
  std::mt19937_64 rng(seed);
  for (auto& layer : p.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& x : layer.w) x = u(rng);
    for (double& x : layer.b) x = u(rng);
  }
  return p;
}

std::vector<double> flatten(const SurrogateParams& p) {
  std::vector<double> theta;
  theta.reserve(p.parameter_count());
  for (const auto& l : p.layers) {
    theta.insert(theta.end(), l.w.begin(), l.w.end());
    theta.insert(theta.end(), l.b.begin(), l.b.end());
  }
  return theta;
}

void unflatten(std::span<const double> theta, SurrogateParams& p) {
  if (theta.size() != p.parameter_count()) throw ContractError("parameter vector has wrong length");
  std::size_t k = 0;
  for (auto& l : p.layers) {
    for (double& x : l.w) x = theta[k++];
    for (double& x : l.b) x = theta[k++];
  }
}

BatchOutput evaluate(const SurrogateParams& p, std::span<const double> times_h) {
  check_output_width(p);
  return to_output(run_forward(p, times_h));
}

State forward(const SurrogateParams& p, double t_h) {
  const double t[1] = {t_h};
  return evaluate(p, t).value.front();
}

State time_derivative(const SurrogateParams& p, double t_h) {
  const double t[1] = {t_h};
  return evaluate(p, t).rate.front();
}

void backpropagate(const SurrogateParams& p, std::span<const double> times_h,
                   const OutputAdjoint& adjoint, SurrogateParams& grad) {
  check_output_width(p);
  const std::size_t n = times_h.size();
  if (adjoint.value.size() != n || adjoint.rate.size() != n) {
    throw ContractError("adjoint batch size does not match the time batch");
  }
  if (grad.layers.size() != p.layers.size()) grad = zero_network(p.layer_sizes, p.t_scale);

  const Trace tr = run_forward(p, times_h);
  const auto cols = static_cast<Eigen::Index>(n);
  MatrixXd y_bar(pbpk::kNumCompartments, cols), y_dot_bar(pbpk::kNumCompartments, cols);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < pbpk::kNumCompartments; ++c) {
      y_bar(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i)) = adjoint.value[i][c];
      y_dot_bar(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i)) = adjoint.rate[i][c];
    }
  }

  // Output layer: y = softplus(z), y' = sigmoid(z) z'.
  const std::size_t last = p.layers.size() - 1;
  ArrayXXd z_bar, z_dot_bar;
  {
    const ArrayXXd s = sigmoid(tr.z[last].array());
    z_bar = y_bar.array() * s + y_dot_bar.array() * s * (1.0 - s) * tr.z_dot[last].array();
    z_dot_bar = y_dot_bar.array() * s;
  }

  for (std::size_t l = last + 1; l-- > 0;) {
    const Layer& layer = p.layers[l];
    Layer& g = grad.layers[l];
    const auto out = static_cast<Eigen::Index>(layer.out);
    const auto in = static_cast<Eigen::Index>(layer.in);
    const ConstWeights w(layer.w.data(), out, in);
    Weights gw(g.w.data(), out, in);
    Bias gb(g.b.data(), out);
    gw.noalias() += z_bar.matrix() * tr.a[l].transpose();
    gw.noalias() += z_dot_bar.matrix() * tr.a_dot[l].transpose();
    gb += z_bar.matrix().rowwise().sum();
    if (l == 0) break;

    const ArrayXXd a_bar = (w.transpose() * z_bar.matrix()).array();
    const ArrayXXd a_dot_bar = (w.transpose() * z_dot_bar.matrix()).array();
    // Previous hidden layer: a = tanh(z), a' = (1 - a^2) z'.
    const ArrayXXd act = tr.a[l].array();
    const ArrayXXd slope = 1.0 - act.square();
    z_bar = a_bar * slope - 2.0 * a_dot_bar * tr.z_dot[l - 1].array() * act * slope;
    z_dot_bar = a_dot_bar * slope;
  }
}

}  // namespace tdt::surrogate
