#pragma once

// Legendre (Gegenbauer) polynomials in d+1 variables, harmonic multiplicities, sphere
// areas and quadrature against the one-dimensional sphere density
//   w_d(t) = (ω_{d-1} / ω_d) (1 - t²)^{(d-2)/2},  t ∈ [-1, 1],
// which is the law of ⟨ζ, x⟩ when x is uniform on S^d.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "ntkbias/detail/gauss_jacobi.hpp"
#include "ntkbias/errors.hpp"

namespace ntkbias::harmonics {

namespace detail {

inline double checked_argument(double t) {
  if (!(std::abs(t) <= 1.0 + 1e-12)) throw DomainError("Legendre argument outside [-1,1]: " + std::to_string(t));
  return std::clamp(t, -1.0, 1.0);
}

inline void check_dimension(int d) {
  if (d < 1) throw ParameterError("sphere dimension d must be >= 1");
}

}  // namespace detail

/// Degree-k Legendre polynomial in d+1 dimensions by upward recurrence,
///   P_{k+1}(t) = [(2k+d-1) t P_k(t) - k P_{k-1}(t)] / (k+d-1),  P_0 = 1, P_1 = t.
inline double legendre(int d, int k, double t) {
  detail::check_dimension(d);
  if (k < 0) throw ParameterError("degree must be nonnegative");
  t = detail::checked_argument(t);
  if (k == 0) return 1.0;
  double prev = 1.0, cur = t;
  for (int j = 1; j < k; ++j) {
    const double next = ((2.0 * j + d - 1) * t * cur - j * prev) / (j + d - 1);
    prev = cur;
    cur = next;
  }
  return cur;
}

/// Evaluates P_0..P_K for a fixed d; immutable and shareable.
class LegendreEvaluator {
 public:
  LegendreEvaluator(int d, int max_degree) : d_(d), max_degree_(max_degree) {
    detail::check_dimension(d);
    if (max_degree < 0) throw ParameterError("max_degree must be nonnegative");
  }

  int d() const noexcept { return d_; }
  int max_degree() const noexcept { return max_degree_; }

  double operator()(int k, double t) const {
    if (k > max_degree_) throw CapacityError("degree " + std::to_string(k) + " exceeds evaluator capacity " + std::to_string(max_degree_));
    return legendre(d_, k, t);
  }

  /// out[k] = P_k(t) for k = 0..K.
  void values(double t, std::vector<double>& out) const {
    t = detail::checked_argument(t);
    out.resize(static_cast<std::size_t>(max_degree_) + 1);
    out[0] = 1.0;
    if (max_degree_ >= 1) out[1] = t;
    for (int j = 1; j < max_degree_; ++j) {
      out[j + 1] = ((2.0 * j + d_ - 1) * t * out[j] - j * out[j - 1]) / (j + d_ - 1);
    }
  }

 private:
  int d_;
  int max_degree_;
};

inline constexpr std::uint64_t kMaxMultiplicity = std::uint64_t{1} << 62;

/// N(d,k) = (2k+d-1)/k · C(k+d-2, d-1), the dimension of degree-k harmonics on S^d.
/// Exact; throws CapacityError when the value exceeds 2^62.
inline std::uint64_t multiplicity(int d, int k) {
  detail::check_dimension(d);
  if (k < 0) throw ParameterError("degree must be nonnegative");
  if (k == 0) return 1;
  // C(k+d-2, k-1) built incrementally; every prefix is itself a binomial, so division is exact.
  using wide = unsigned __int128;
  const int top = k + d - 2;
  const int r = k - 1;
  wide binom = 1;
  for (int i = 1; i <= r; ++i) {
    binom = binom * static_cast<wide>(top - r + i) / static_cast<wide>(i);
    if (binom > static_cast<wide>(kMaxMultiplicity)) throw CapacityError("multiplicity N(d,k) overflows 2^62");
  }
  // C(k+d-2, d-1) = C(k+d-2, k-1); N = (2k+d-1) C / k.
  const wide n = binom * static_cast<wide>(2 * k + d - 1) / static_cast<wide>(k);
  if (n > static_cast<wide>(kMaxMultiplicity)) throw CapacityError("multiplicity N(d,k) overflows 2^62");
  return static_cast<std::uint64_t>(n);
}

/// N(d,k) in floating point via log-Gamma; never throws on size.
inline double multiplicity_real(int d, int k) {
  detail::check_dimension(d);
  if (k == 0) return 1.0;
  if (d == 1) return 2.0;
  const double log_binom = std::lgamma(k + d - 1.0) - std::lgamma(d * 1.0) - std::lgamma(k * 1.0);
  return (2.0 * k + d - 1.0) / k * std::exp(log_binom);
}

inline double log_surface_area(int d) {
  if (d < 0) throw ParameterError("sphere dimension must be nonnegative");
  const double h = 0.5 * (d + 1);
  return std::log(2.0) + h * std::log(std::numbers::pi) - std::lgamma(h);
}

/// ω_d = 2π^{(d+1)/2} / Γ((d+1)/2), the area of S^d.
inline double surface_area(int d) { return std::exp(log_surface_area(d)); }

/// ω_{d-1} / ω_d, the normalizing constant of the density w_d.
inline double density_constant(int d) {
  detail::check_dimension(d);
  return std::exp(log_surface_area(d - 1) - log_surface_area(d));
}

enum class RuleKind {
  gegenbauer,     // Gauss rule with w_d absorbed; exact for polynomials of degree ≤ 2Q-1
  angular,        // Gauss–Legendre in θ with t = cos θ; handles √(1-t²) endpoint behaviour
  positive_half,  // integrates over t ∈ [0, 1] only, against w_d
};

/// Σ_q weights[q] f(nodes[q]) ≈ ∫ f(t) w_d(t) dt over the rule's support.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  int d = 0;
  int order = 0;
  RuleKind kind = RuleKind::gegenbauer;

  template <class F>
  double integrate(F&& f) const {
    double sum = 0.0;
    for (std::size_t q = 0; q < nodes.size(); ++q) sum += weights[q] * f(nodes[q]);
    return sum;
  }
};

/// Gauss–Gegenbauer rule (Jacobi exponents (d-2)/2 on both ends) normalized to mass 1.
inline QuadratureRule quadrature_rule(int d, int order) {
  detail::check_dimension(d);
  if (order < 2) throw ParameterError("quadrature order must be >= 2");
  const double a = 0.5 * (d - 2);
  auto jr = ntkbias::detail::gauss_jacobi(a, a, order);
  return QuadratureRule{std::move(jr.nodes), std::move(jr.weights), d, order, RuleKind::gegenbauer};
}

/// Gauss–Legendre rule in θ ∈ [0, π] mapped to t = cos θ. The integrand f(cos θ) sin^{d-1} θ
/// is analytic in θ whenever f is a polynomial in t, arccos t and √(1-t²).
inline QuadratureRule angular_rule(int d, int order) {
  detail::check_dimension(d);
  if (order < 2) throw ParameterError("quadrature order must be >= 2");
  const auto gl = ntkbias::detail::gauss_jacobi(0.0, 0.0, order);
  const double c = density_constant(d);
  QuadratureRule rule{{}, {}, d, order, RuleKind::angular};
  rule.nodes.resize(order);
  rule.weights.resize(order);
  // ∫_0^π g(θ) dθ = π Σ ŵ_q g(θ_q) with θ_q = π (s_q + 1) / 2 and ŵ summing to 1.
  // Store nodes in ascending t, i.e. descending θ.
  for (int q = 0; q < order; ++q) {
    const int src = order - 1 - q;
    const double theta = 0.5 * std::numbers::pi * (gl.nodes[src] + 1.0);
    rule.nodes[q] = std::cos(theta);
    rule.weights[q] = std::numbers::pi * c * gl.weights[src] * std::pow(std::sin(theta), d - 1);
  }
  return rule;
}

/// Rule for ∫_0^1 f(t) w_d(t) dt: Gauss–Jacobi with (1-t)^{(d-2)/2} absorbed on [0,1]
/// and the smooth factor (1+t)^{(d-2)/2} folded into the weights.
inline QuadratureRule positive_half_rule(int d, int order) {
  detail::check_dimension(d);
  if (order < 2) throw ParameterError("quadrature order must be >= 2");
  const double a = 0.5 * (d - 2);
  const auto jr = ntkbias::detail::gauss_jacobi(a, 0.0, order);
  const double c = density_constant(d);
  QuadratureRule rule{{}, {}, d, order, RuleKind::positive_half};
  rule.nodes.resize(order);
  rule.weights.resize(order);
  // ∫_0^1 f(t)(1-t)^a(1+t)^a dt = 2^{-a-1} ∫_{-1}^{1} f((1+s)/2) (1+(1+s)/2)^a (1-s)^a ds,
  // and ∫(1-s)^a ds = 2^{a+1}/(a+1), so the weight is c ŵ (1+t)^a / (a+1).
  for (int q = 0; q < order; ++q) {
    const double t = 0.5 * (1.0 + jr.nodes[q]);
    rule.nodes[q] = t;
    rule.weights[q] = c * jr.weights[q] * std::pow(1.0 + t, a) / (a + 1.0);
  }
  return rule;
}

/// φ(x) = √N(d,k) · P_k(⟨ζ, x⟩), a zonal harmonic with unit L²(τ_d) norm.
inline double normalized_gegenbauer(int d, int k, const Eigen::Ref<const Eigen::VectorXd>& zeta,
                                    const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (zeta.size() != d + 1 || x.size() != d + 1) throw ParameterError("vector length must be d+1");
  const double u = std::clamp(zeta.dot(x), -1.0, 1.0);
  return std::sqrt(multiplicity_real(d, k)) * legendre(d, k, u);
}

}  // namespace ntkbias::harmonics
