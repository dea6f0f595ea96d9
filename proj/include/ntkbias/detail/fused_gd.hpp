#pragma once

// Full-batch gradient descent for f(x) = √m W2 σ(W1 x) on the square loss, fused
// per block of hidden units so that no n × m intermediate is ever materialized.
//
// Each block of kLanes units is processed by one vector register lane group. Per step
// and per block the kernel (1) recomputes pre-activations at the current weights,
// (2) accumulates the block's gradient over samples in index order, (3) updates the
// block in place and (4) accumulates the block's contribution to the next forward
// pass. Sample sums for f are added block by block in a fixed order, so the result is
// independent of any future parallel split over blocks.

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <vector>

namespace ntkbias::detail {

inline constexpr int kLanes = 8;
typedef double lane_vec __attribute__((vector_size(kLanes * sizeof(double))));
typedef long lane_mask __attribute__((vector_size(kLanes * sizeof(long))));

class FusedGradientDescent {
 public:
  /// w1: m × p, w2: length m, points: n × p (rows are samples).
  FusedGradientDescent(const Eigen::MatrixXd& w1, const Eigen::VectorXd& w2, const Eigen::MatrixXd& points)
      : m_(w1.rows()), p_(w1.cols()), n_(points.rows()), blocks_((w1.rows() + kLanes - 1) / kLanes) {
    w1_.assign(static_cast<std::size_t>(blocks_ * p_), lane_vec{});
    w2_.assign(static_cast<std::size_t>(blocks_), lane_vec{});
    for (Eigen::Index j = 0; j < m_; ++j) {
      const auto b = static_cast<std::size_t>(j / kLanes);
      const int lane = static_cast<int>(j % kLanes);
      for (Eigen::Index l = 0; l < p_; ++l) w1_[b * p_ + l][lane] = w1(j, l);
      w2_[b][lane] = w2[j];
    }
    x_.resize(static_cast<std::size_t>(n_ * p_));
    for (Eigen::Index i = 0; i < n_; ++i)
      for (Eigen::Index l = 0; l < p_; ++l) x_[static_cast<std::size_t>(i * p_ + l)] = points(i, l);
  }

  /// Raw network outputs f(x_i) (without the √m factor) at the current weights.
  Eigen::VectorXd forward_unscaled() const { return forward_unscaled_on(x_, n_); }

  /// Same for arbitrary points (rows), e.g. a held-out set.
  Eigen::VectorXd forward_unscaled(const Eigen::MatrixXd& points) const {
    std::vector<double> xs(static_cast<std::size_t>(points.rows() * p_));
    for (Eigen::Index i = 0; i < points.rows(); ++i)
      for (Eigen::Index l = 0; l < p_; ++l) xs[static_cast<std::size_t>(i * p_ + l)] = points(i, l);
    return forward_unscaled_on(xs, points.rows());
  }

  /// One step W ← W - step·G with G1_j = scale·W2_j Σ_i c_i 1{z_ij>0} x_i and
  /// G2_j = scale Σ_i c_i σ(z_ij). Returns unscaled outputs at the updated weights.
  Eigen::VectorXd step(const Eigen::VectorXd& c, double scale, double step_size) {
    const lane_vec zero{};
    std::vector<double> out(static_cast<std::size_t>(n_), 0.0);
    std::vector<lane_vec> g1(static_cast<std::size_t>(p_));
    const double* x = x_.data();
    const double factor = step_size * scale;
    for (Eigen::Index b = 0; b < blocks_; ++b) {
      lane_vec* w = &w1_[static_cast<std::size_t>(b * p_)];
      for (auto& g : g1) g = zero;
      lane_vec g2 = zero;
      for (Eigen::Index i = 0; i < n_; ++i) {
        const double* xi = x + i * p_;
        lane_vec z = w[0] * xi[0];
        for (Eigen::Index l = 1; l < p_; ++l) z += w[l] * xi[l];
        const lane_vec active = __builtin_convertvector(-(lane_mask)(z > zero), lane_vec);
        const double ci = c[i];
        g2 += (z * active) * ci;
        const lane_vec s = active * ci;
        for (Eigen::Index l = 0; l < p_; ++l) g1[static_cast<std::size_t>(l)] += s * xi[l];
      }
      lane_vec& w2 = w2_[static_cast<std::size_t>(b)];
      const lane_vec w2_old = w2;
      for (Eigen::Index l = 0; l < p_; ++l) w[l] -= factor * (w2_old * g1[static_cast<std::size_t>(l)]);
      w2 -= factor * g2;
      accumulate_block(w, w2, x, n_, out.data());
    }
    return Eigen::Map<Eigen::VectorXd>(out.data(), n_);
  }

  void export_weights(Eigen::MatrixXd& w1, Eigen::VectorXd& w2) const {
    w1.resize(m_, p_);
    w2.resize(m_);
    for (Eigen::Index j = 0; j < m_; ++j) {
      const auto b = static_cast<std::size_t>(j / kLanes);
      const int lane = static_cast<int>(j % kLanes);
      for (Eigen::Index l = 0; l < p_; ++l) w1(j, l) = w1_[b * p_ + l][lane];
      w2[j] = w2_[b][lane];
    }
  }

 private:
  void accumulate_block(const lane_vec* w, const lane_vec& w2, const double* x, Eigen::Index n, double* out) const {
    const lane_vec zero{};
    for (Eigen::Index i = 0; i < n; ++i) {
      const double* xi = x + i * p_;
      lane_vec z = w[0] * xi[0];
      for (Eigen::Index l = 1; l < p_; ++l) z += w[l] * xi[l];
      const lane_vec active = __builtin_convertvector(-(lane_mask)(z > zero), lane_vec);
      const lane_vec q = w2 * (z * active);
      double acc = 0.0;
      for (int lane = 0; lane < kLanes; ++lane) acc += q[lane];
      out[i] += acc;
    }
  }

  Eigen::VectorXd forward_unscaled_on(const std::vector<double>& xs, Eigen::Index n) const {
    std::vector<double> out(static_cast<std::size_t>(n), 0.0);
    for (Eigen::Index b = 0; b < blocks_; ++b) {
      accumulate_block(&w1_[static_cast<std::size_t>(b * p_)], w2_[static_cast<std::size_t>(b)], xs.data(), n, out.data());
    }
    return Eigen::Map<Eigen::VectorXd>(out.data(), n);
  }

  Eigen::Index m_, p_, n_, blocks_;
  std::vector<lane_vec> w1_;  // [block][l] lanes over units
  std::vector<lane_vec> w2_;  // [block]
  std::vector<double> x_;     // row-major samples
};

}  // namespace ntkbias::detail
