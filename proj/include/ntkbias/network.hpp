#pragma once

// Two-layer ReLU network f_W(x) = √m · W2 σ(W1 x) with He initialization, analytic
// gradients, full-batch gradient descent on L_S(W) = (1/n) Σ (y_i - θ f_W(x_i))², the
// linearized residual recursion u ← (I - (ρ/n) K) u and the activation-flip count.

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ntkbias/detail/fused_gd.hpp"
#include "ntkbias/errors.hpp"
#include "ntkbias/rng.hpp"
#include "ntkbias/sphere.hpp"

namespace ntkbias::network {

class NetworkState {
 public:
  NetworkState(Eigen::MatrixXd w1, Eigen::RowVectorXd w2)
      : w1(std::move(w1)), w2(std::move(w2)), w1_init_(this->w1), w2_init_(this->w2) {
    if (this->w1.rows() < 1) throw ParameterError("width m must be >= 1");
    if (this->w2.size() != this->w1.rows()) throw ParameterError("W2 must have m entries");
  }

  Eigen::Index width() const noexcept { return w1.rows(); }
  Eigen::Index input_dim() const noexcept { return w1.cols(); }
  int d() const noexcept { return static_cast<int>(w1.cols()) - 1; }

  const Eigen::MatrixXd& w1_init() const noexcept { return w1_init_; }
  const Eigen::RowVectorXd& w2_init() const noexcept { return w2_init_; }

  Eigen::MatrixXd w1;     // m × (d+1)
  Eigen::RowVectorXd w2;  // 1 × m

 private:
  Eigen::MatrixXd w1_init_;
  Eigen::RowVectorXd w2_init_;
};

/// W1 ~ N(0, 2/m), W2 ~ N(0, 1/m), one random stream per hidden unit.
inline NetworkState init(Eigen::Index m, int d, std::uint64_t seed) {
  if (m < 1) throw ParameterError("width m must be >= 1");
  if (d < 1) throw ParameterError("sphere dimension d must be >= 1");
  const double s1 = std::sqrt(2.0 / static_cast<double>(m));
  const double s2 = std::sqrt(1.0 / static_cast<double>(m));
  Eigen::MatrixXd w1(m, d + 1);
  Eigen::RowVectorXd w2(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    rng::CounterRng gen(seed, "network/init", static_cast<std::uint64_t>(j));
    for (int l = 0; l <= d; ++l) w1(j, l) = s1 * gen.normal();
    w2[j] = s2 * gen.normal();
  }
  return NetworkState(std::move(w1), std::move(w2));
}

namespace detail {

inline void check_input(const NetworkState& net, Eigen::Index size) {
  if (size != net.input_dim()) {
    throw ParameterError("input length " + std::to_string(size) + " does not match network input dimension " +
                         std::to_string(net.input_dim()));
  }
}

}  // namespace detail

inline double forward(const NetworkState& net, const Eigen::Ref<const Eigen::VectorXd>& x) {
  detail::check_input(net, x.size());
  const Eigen::VectorXd z = net.w1 * x;
  return std::sqrt(static_cast<double>(net.width())) * net.w2.dot(z.cwiseMax(0.0).transpose());
}

/// f at every row of `points`.
inline Eigen::VectorXd forward_batch(const NetworkState& net, const Eigen::MatrixXd& points) {
  detail::check_input(net, points.cols());
  const Eigen::MatrixXd z = points * net.w1.transpose();
  return std::sqrt(static_cast<double>(net.width())) * (z.cwiseMax(0.0) * net.w2.transpose());
}

struct Gradients {
  Eigen::MatrixXd w1;     // m × (d+1)
  Eigen::RowVectorXd w2;  // 1 × m
};

/// ∇_{W1} f = √m D W2ᵀ xᵀ with D = diag(1{W1 x > 0}); ∇_{W2} f = √m σ(W1 x)ᵀ.
/// The ReLU derivative at exactly 0 is taken as 0.
inline Gradients gradients(const NetworkState& net, const Eigen::Ref<const Eigen::VectorXd>& x) {
  detail::check_input(net, x.size());
  const double root_m = std::sqrt(static_cast<double>(net.width()));
  const Eigen::VectorXd z = net.w1 * x;
  Gradients g{Eigen::MatrixXd::Zero(net.width(), net.input_dim()), Eigen::RowVectorXd(net.width())};
  for (Eigen::Index j = 0; j < net.width(); ++j) {
    g.w2[j] = root_m * std::max(z[j], 0.0);
    if (z[j] > 0.0) g.w1.row(j) = root_m * net.w2[j] * x.transpose();
  }
  return g;
}

struct LossAndGrad {
  double loss = 0.0;
  Gradients grad;
};

/// Loss and exact gradient of L_S = (1/n) Σ (y_i - θ f(x_i))², accumulated sample by
/// sample in index order.
inline LossAndGrad loss_and_grad(const NetworkState& net, const sphere::SampleSet& samples,
                                 const Eigen::VectorXd& y, double theta) {
  const Eigen::Index n = samples.size();
  if (y.size() != n) throw ParameterError("label count does not match sample count");
  detail::check_input(net, samples.d() + 1);
  LossAndGrad out{0.0, {Eigen::MatrixXd::Zero(net.width(), net.input_dim()), Eigen::RowVectorXd::Zero(net.width())}};
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd x = samples.point(i);
    const double residual = y[i] - theta * forward(net, x);
    out.loss += residual * residual;
    if (theta != 0.0) {
      const Gradients g = gradients(net, x);
      const double c = -2.0 * theta * residual / static_cast<double>(n);
      out.grad.w1 += c * g.w1;
      out.grad.w2 += c * g.w2;
    }
  }
  out.loss /= static_cast<double>(n);
  return out;
}

/// The step size is derived from the effective rate: η = ρ / (2 m θ²), so that the
/// linearized residual map is u ← (I - (ρ/n) K) u.
struct TrainConfig {
  int steps = 0;
  double rho = 0.5;
  double theta = 0.1;
  int record_every = 10;
  double divergence_threshold = 1e6;

  double eta(Eigen::Index m) const { return rho / (2.0 * static_cast<double>(m) * theta * theta); }

  void validate() const {
    if (steps < 0) throw ParameterError("T must be >= 0");
    if (!(rho >= 0.0)) throw ParameterError("rho must be >= 0");
    if (!(theta > 0.0)) throw ParameterError("theta must be > 0");
    if (record_every < 1) throw ParameterError("record_every must be >= 1");
  }
};

struct ResidualTrajectory {
  std::vector<int> steps;
  std::vector<Eigen::VectorXd> residuals;  // u^(t) = y - ŷ^(t)
  std::vector<double> losses;              // ‖u‖² / n
  /// θ f on the optional monitor points, one vector per record.
  std::vector<Eigen::VectorXd> monitor_outputs;
  std::vector<std::string> warnings;

  std::size_t size() const noexcept { return steps.size(); }
};

/// Called at every recorded step with (step, residual).
using Observer = std::function<void(int, const Eigen::VectorXd&)>;

/// Thrown by train(); carries everything recorded before the failure.
class TrainingDiverged : public DivergenceError {
 public:
  TrainingDiverged(const std::string& what, int step, ResidualTrajectory partial)
      : DivergenceError(what, step), partial_(std::move(partial)) {}
  const ResidualTrajectory& partial() const noexcept { return partial_; }

 private:
  ResidualTrajectory partial_;
};

/// Full-batch gradient descent from the current weights for cfg.steps steps. Records
/// u^(t) at t = 0, s, 2s, ... and at the final step; `net` holds the final weights on
/// return. `monitor_points` (rows on S^d) are evaluated at every record.
inline ResidualTrajectory train(NetworkState& net, const sphere::SampleSet& samples, const Eigen::VectorXd& y,
                                const TrainConfig& cfg, const std::vector<Observer>& observers = {},
                                const Eigen::MatrixXd* monitor_points = nullptr) {
  cfg.validate();
  const Eigen::Index n = samples.size();
  if (y.size() != n) throw ParameterError("label count does not match sample count");
  detail::check_input(net, samples.d() + 1);
  if (monitor_points && monitor_points->cols() != net.input_dim()) {
    throw ParameterError("monitor points have the wrong dimension");
  }

  const double root_m = std::sqrt(static_cast<double>(net.width()));
  const double out_scale = cfg.theta * root_m;
  const double eta = cfg.eta(net.width());
  // ∇L = -(2θ/n) Σ u_i ∇f(x_i), and ∇f carries √m
  const double grad_scale = -2.0 * cfg.theta * root_m / static_cast<double>(n);

  ::ntkbias::detail::FusedGradientDescent kernel(net.w1, net.w2.transpose(), samples.points());
  ResidualTrajectory traj;
  if (n > 0 && y.cwiseAbs().maxCoeff() > 1.0) traj.warnings.emplace_back("labels exceed |y| <= 1");

  auto sync_weights = [&] {
    Eigen::VectorXd w2;
    kernel.export_weights(net.w1, w2);
    net.w2 = w2.transpose();
  };

  Eigen::VectorXd raw = kernel.forward_unscaled();
  for (int t = 0;; ++t) {
    const Eigen::VectorXd u = y - out_scale * raw;
    const double loss = u.squaredNorm() / static_cast<double>(n);
    if (!std::isfinite(loss) || loss > cfg.divergence_threshold) {
      sync_weights();
      throw TrainingDiverged("training diverged at step " + std::to_string(t) + " (loss " + std::to_string(loss) + ")",
                             t, std::move(traj));
    }
    if (t % cfg.record_every == 0 || t == cfg.steps) {
      traj.steps.push_back(t);
      traj.residuals.push_back(u);
      traj.losses.push_back(loss);
      if (monitor_points) traj.monitor_outputs.push_back(out_scale * kernel.forward_unscaled(*monitor_points));
      for (const auto& obs : observers) obs(t, u);
    }
    if (t == cfg.steps) break;
    raw = kernel.step(u, grad_scale, eta);
  }
  sync_weights();
  return traj;
}

/// u^(t+1) = (I - (ρ/n) K) u^(t), iterated densely.
inline ResidualTrajectory linear_dynamics(const Eigen::MatrixXd& k_inf, const Eigen::VectorXd& u0, double rho, int steps,
                                          int record_every) {
  const Eigen::Index n = k_inf.rows();
  if (k_inf.cols() != n || u0.size() != n) throw ParameterError("kernel and residual dimensions differ");
  if (steps < 0) throw ParameterError("T must be >= 0");
  if (record_every < 1) throw ParameterError("record_every must be >= 1");
  ResidualTrajectory traj;
  if (n == 0) return traj;
  const Eigen::MatrixXd scaled = k_inf / static_cast<double>(n);
  const double lambda_max = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(scaled, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  if (rho * lambda_max >= 2.0) traj.warnings.emplace_back("rho * lambda_max >= 2: the linear map is not a contraction");

  const Eigen::MatrixXd step_map = Eigen::MatrixXd::Identity(n, n) - rho * scaled;
  Eigen::VectorXd u = u0;
  for (int t = 0;; ++t) {
    if (t % record_every == 0 || t == steps) {
      traj.steps.push_back(t);
      traj.residuals.push_back(u);
      traj.losses.push_back(u.squaredNorm() / static_cast<double>(n));
    }
    if (t == steps) break;
    u = step_map * u;
  }
  return traj;
}

/// Number of hidden units whose activation 1{(W1 x)_j > 0} differs from initialization.
inline int activation_flip_count(const NetworkState& net, const Eigen::Ref<const Eigen::VectorXd>& x) {
  detail::check_input(net, x.size());
  const Eigen::VectorXd now = net.w1 * x;
  const Eigen::VectorXd before = net.w1_init() * x;
  int flips = 0;
  for (Eigen::Index j = 0; j < now.size(); ++j) flips += (now[j] > 0.0) != (before[j] > 0.0);
  return flips;
}

}  // namespace ntkbias::network
