#pragma once

// The analytic NTK of the two-layer ReLU network and the finite-width gradient Gram matrix.
//   κ̂1(t) = (π - arccos t) / 2π,  κ̂2(t) = (t(π - arccos t) + √(1 - t²)) / 2π,
//   κ(x, x') = u κ̂1(u) + 2 κ̂2(u),  u = ⟨x, x'⟩.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>

#include "ntkbias/detail/format.hpp"
#include "ntkbias/errors.hpp"
#include "ntkbias/network.hpp"
#include "ntkbias/sphere.hpp"

namespace ntkbias::ntk {

namespace detail {

inline double clamp_argument(double t) {
  if (!(std::abs(t) <= 1.0 + 1e-9)) throw DomainError("kernel argument outside [-1,1]: " + std::to_string(t));
  return std::clamp(t, -1.0, 1.0);
}

/// Angle between two unit vectors, accurate also for nearly equal or opposite inputs.
inline double angle(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& x2) {
  return 2.0 * std::atan2((x - x2).norm(), (x + x2).norm());
}

inline double angle(const double* x, const double* x2, Eigen::Index p) {
  double minus = 0.0, plus = 0.0;
  for (Eigen::Index l = 0; l < p; ++l) {
    minus += (x[l] - x2[l]) * (x[l] - x2[l]);
    plus += (x[l] + x2[l]) * (x[l] + x2[l]);
  }
  return 2.0 * std::atan2(std::sqrt(minus), std::sqrt(plus));
}

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// κ̂ written in the angle a = arccos t.
inline double kappa_of_angle(double a) {
  return (3.0 * std::cos(a) * (std::numbers::pi - a) + 2.0 * std::sin(a)) / (2.0 * std::numbers::pi);
}

}  // namespace detail

inline double kappa1_hat(double t) {
  t = detail::clamp_argument(t);
  return (std::numbers::pi - std::acos(t)) / (2.0 * std::numbers::pi);
}

inline double kappa2_hat(double t) {
  t = detail::clamp_argument(t);
  return (t * (std::numbers::pi - std::acos(t)) + std::sqrt(std::max(0.0, 1.0 - t * t))) / (2.0 * std::numbers::pi);
}

/// κ̂(t) = t κ̂1(t) + 2 κ̂2(t) = (3t(π - arccos t) + 2√(1 - t²)) / 2π.
inline double kappa_hat(double t) {
  t = detail::clamp_argument(t);
  return t * kappa1_hat(t) + 2.0 * kappa2_hat(t);
}

inline double kappa(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& x2) {
  if (x.size() != x2.size()) throw ParameterError("kernel inputs have different lengths");
  if (std::abs(x.norm() - 1.0) > 1e-6 || std::abs(x2.norm() - 1.0) > 1e-6) {
    throw ParameterError("kernel inputs must be unit vectors");
  }
  return detail::kappa_of_angle(detail::angle(x, x2));
}

struct GramPair {
  Eigen::MatrixXd k_inf;
  std::optional<Eigen::MatrixXd> k_emp;
  Eigen::Index n = 0;
  int d = 0;
  std::uint64_t sample_seed = 0;
  std::optional<std::uint64_t> network_seed;
};

/// K^∞_ij = κ(x_i, x_j), each unordered pair evaluated once.
inline GramPair gram_ntk(const sphere::SampleSet& samples) {
  const Eigen::Index n = samples.size();
  if (n < 1) throw ParameterError("need at least one sample");
  const detail::RowMajor x = samples.points();
  const Eigen::Index p = x.cols();
  GramPair g;
  g.n = n;
  g.d = samples.d();
  g.sample_seed = samples.seed();
  g.k_inf.resize(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j; i < n; ++i) {
      const double v = detail::kappa_of_angle(detail::angle(x.row(i).data(), x.row(j).data(), p));
      g.k_inf(i, j) = v;
      g.k_inf(j, i) = v;
    }
  }
  return g;
}

enum class Layers { both, first, second };

/// K^(0)_ij = m^{-1} ⟨∇f(x_i), ∇f(x_j)⟩ restricted to the chosen layers. With the
/// gradient formulas this is ⟨x_i,x_j⟩ Σ_r W2_r² D_ir D_jr + Σ_r σ_ir σ_jr.
inline Eigen::MatrixXd gram_empirical(const network::NetworkState& net, const sphere::SampleSet& samples,
                                      Layers layers = Layers::both) {
  if (samples.d() + 1 != net.input_dim()) throw ParameterError("network input dimension does not match samples");
  const Eigen::Index n = samples.size();
  const Eigen::Index m = net.width();
  const Eigen::MatrixXd& x = samples.points();
  const Eigen::MatrixXd z = x * net.w1.transpose();  // n × m

  Eigen::MatrixXd lower = Eigen::MatrixXd::Zero(n, n);
  if (layers != Layers::second) {
    Eigen::MatrixXd a(n, m);
    for (Eigen::Index r = 0; r < m; ++r) {
      const double w = std::abs(net.w2[r]);
      for (Eigen::Index i = 0; i < n; ++i) a(i, r) = z(i, r) > 0.0 ? w : 0.0;
    }
    Eigen::MatrixXd act = Eigen::MatrixXd::Zero(n, n);
    act.selfadjointView<Eigen::Lower>().rankUpdate(a);
    Eigen::MatrixXd xx = Eigen::MatrixXd::Zero(n, n);
    xx.selfadjointView<Eigen::Lower>().rankUpdate(x);
    lower += xx.cwiseProduct(act);
  }
  if (layers != Layers::first) {
    lower.selfadjointView<Eigen::Lower>().rankUpdate(Eigen::MatrixXd(z.cwiseMax(0.0)));
  }
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = j + 1; i < n; ++i) lower(j, i) = lower(i, j);
  return lower;
}

/// First-layer limit ⟨x_i,x_j⟩ κ̂1(⟨x_i,x_j⟩).
inline Eigen::MatrixXd gram_first_layer_limit(const sphere::SampleSet& samples) {
  const Eigen::Index n = samples.size();
  const detail::RowMajor x = samples.points();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j; i < n; ++i) {
      const double a = detail::angle(x.row(i).data(), x.row(j).data(), x.cols());
      k(i, j) = k(j, i) = std::cos(a) * (std::numbers::pi - a) / (2.0 * std::numbers::pi);
    }
  }
  return k;
}

/// Row-major CSV preceded by a header line `n,d,seed`.
inline void write_gram_csv(std::ostream& os, const Eigen::MatrixXd& k, int d, std::uint64_t seed) {
  os << "# n=" << k.rows() << ",d=" << d << ",seed=" << seed << '\n';
  std::vector<double> row(static_cast<std::size_t>(k.cols()));
  for (Eigen::Index i = 0; i < k.rows(); ++i) {
    for (Eigen::Index j = 0; j < k.cols(); ++j) row[static_cast<std::size_t>(j)] = k(i, j);
    ntkbias::detail::write_row(os, row.data(), row.size());
  }
}

}  // namespace ntkbias::ntk
