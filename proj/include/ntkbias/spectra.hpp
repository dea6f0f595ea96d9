#pragma once

// Mercer eigenvalues μ_k of the NTK on S^d (direct quadrature of the profile, and the
// assembly from activation coefficients β), a dense symmetric eigensolver, empirical
// Gram spectra and the alignment between sampled harmonics and Gram eigenvectors.

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ntkbias/errors.hpp"
#include "ntkbias/harmonics.hpp"
#include "ntkbias/ntk.hpp"
#include "ntkbias/sphere.hpp"

namespace ntkbias::spectra {

inline constexpr int kDefaultQuadratureOrder = 200;

/// order 0: σ'(t) = 1{t > 0} (pairs with κ̂1); order 1: σ(t) = max(t, 0) (pairs with κ̂2).
enum class ActivationOrder { step = 0, relu = 1 };

/// Angular rule with enough nodes to resolve P_k for every k ≤ max_degree.
inline harmonics::QuadratureRule direct_rule(int d, int max_degree, int order = kDefaultQuadratureOrder) {
  return harmonics::angular_rule(d, std::max(order, max_degree + 64));
}

/// Rule on [0, 1] for the activation coefficients.
inline harmonics::QuadratureRule half_rule(int d, int max_degree, int order = kDefaultQuadratureOrder) {
  return harmonics::positive_half_rule(d, std::max(order, max_degree + 64));
}

/// β = ∫ σ_order(t) P_k(t) w_d(t) dt. Expects a positive_half rule; the activations vanish on [-1, 0].
inline double activation_coefficient(int d, int k, ActivationOrder order, const harmonics::QuadratureRule& rule) {
  if (rule.kind != harmonics::RuleKind::positive_half) throw ParameterError("activation coefficients need a positive-half rule");
  if (rule.d != d) throw ParameterError("quadrature rule built for a different d");
  if (k < 0) throw ParameterError("degree must be nonnegative");
  if (k > 2 * rule.order) throw CapacityError("degree exceeds quadrature capacity");
  const bool relu = order == ActivationOrder::relu;
  return rule.integrate([&](double t) { return (relu ? t : 1.0) * harmonics::legendre(d, k, t); });
}

/// μ_k = ∫ profile(t) P_k(t) w_d(t) dt over [-1, 1].
template <class Profile>
double mu_direct(int d, int k, const harmonics::QuadratureRule& rule, Profile&& profile) {
  if (rule.kind == harmonics::RuleKind::positive_half) throw ParameterError("direct route needs a full-interval rule");
  if (rule.d != d) throw ParameterError("quadrature rule built for a different d");
  if (k < 0) throw ParameterError("degree must be nonnegative");
  if (k > 2 * rule.order) throw CapacityError("degree exceeds quadrature capacity");
  return rule.integrate([&](double t) { return profile(t) * harmonics::legendre(d, k, t); });
}

inline double mu_direct(int d, int k, const harmonics::QuadratureRule& rule) {
  return mu_direct(d, k, rule, [](double t) { return ntk::kappa_hat(t); });
}

/// μ_{1,j} = β(step, j)², μ_{2,j} = (d+1) β(relu, j)², combined as
///   μ_k = k/(2k+d-1) μ_{1,k-1} + (k+d-1)/(2k+d-1) μ_{1,k+1} + 2 μ_{2,k}.
inline double mu_assembled(int d, int k, const harmonics::QuadratureRule& rule) {
  if (k < 0) throw ParameterError("degree must be nonnegative");
  if (k >= 3 && k % 2 == 1) return 0.0;
  auto mu1 = [&](int j) {
    const double b = activation_coefficient(d, j, ActivationOrder::step, rule);
    return b * b;
  };
  const double b2 = activation_coefficient(d, k, ActivationOrder::relu, rule);
  const double mu2 = (d + 1.0) * b2 * b2;
  if (k == 0) return mu1(1) + 2.0 * mu2;
  const double denom = 2.0 * k + d - 1.0;
  return k / denom * mu1(k - 1) + (k + d - 1.0) / denom * mu1(k + 1) + 2.0 * mu2;
}

struct SpectrumEntry {
  int k = 0;
  double mu = 0.0;            // direct route
  double mu_assembled = 0.0;  // β route
  std::uint64_t multiplicity = 0;
  double cumulative_trace = 0.0;  // Σ_{j ≤ k} μ_j N(d,j), β route
  bool underflow = false;         // |μ| < 1e-300
};

/// A distinct positive eigenvalue with the degrees that carry it.
struct EigenCluster {
  double value = 0.0;
  std::uint64_t multiplicity = 0;
  std::vector<int> degrees;
  std::uint64_t cumulative = 0;  // r
};

struct SpectrumTable {
  int d = 0;
  std::vector<SpectrumEntry> entries;
  std::vector<EigenCluster> clusters;  // descending

  /// λ_1 ≥ λ_2 ≥ ... with multiplicities expanded, truncated to `count`.
  std::vector<double> sorted_eigs(std::size_t count) const {
    std::vector<double> out;
    for (const auto& c : clusters) {
      for (std::uint64_t i = 0; i < c.multiplicity && out.size() < count; ++i) out.push_back(c.value);
      if (out.size() >= count) break;
    }
    return out;
  }

  /// r_j = total multiplicity of the first j distinct eigenvalues.
  std::uint64_t r(std::size_t j) const {
    if (j == 0) return 0;
    if (j > clusters.size()) throw ParameterError("fewer distinct eigenvalues than requested");
    return clusters[j - 1].cumulative;
  }
};

inline constexpr double kUnderflowFloor = 1e-300;
inline constexpr double kClusterTolerance = 1e-6;

inline SpectrumTable spectrum_table(int d, int max_degree, int order = kDefaultQuadratureOrder) {
  if (max_degree < 0) throw ParameterError("k_max must be nonnegative");
  const auto full = direct_rule(d, max_degree, order);
  const auto half = half_rule(d, max_degree + 1, order);
  SpectrumTable table;
  table.d = d;
  double trace = 0.0;
  for (int k = 0; k <= max_degree; ++k) {
    SpectrumEntry e;
    e.k = k;
    e.mu = mu_direct(d, k, full);
    e.mu_assembled = mu_assembled(d, k, half);
    e.multiplicity = harmonics::multiplicity(d, k);
    trace += e.mu_assembled * static_cast<double>(e.multiplicity);
    e.cumulative_trace = trace;
    e.underflow = std::abs(e.mu) < kUnderflowFloor;
    table.entries.push_back(e);
  }

  // Odd k ≥ 3 vanish; everything else is grouped by value.
  std::vector<const SpectrumEntry*> positive;
  for (const auto& e : table.entries) {
    if (e.k >= 3 && e.k % 2 == 1) continue;
    if (e.mu > kUnderflowFloor) positive.push_back(&e);
  }
  std::stable_sort(positive.begin(), positive.end(), [](auto* a, auto* b) { return a->mu > b->mu; });
  for (const auto* e : positive) {
    if (!table.clusters.empty() &&
        std::abs(table.clusters.back().value - e->mu) <= kClusterTolerance * table.clusters.back().value) {
      table.clusters.back().multiplicity += e->multiplicity;
      table.clusters.back().degrees.push_back(e->k);
    } else {
      table.clusters.push_back({e->mu, e->multiplicity, {e->k}, 0});
    }
  }
  std::uint64_t r = 0;
  for (auto& c : table.clusters) c.cumulative = r += c.multiplicity;
  return table;
}

struct OrderReport {
  std::vector<int> ks;
  std::vector<double> scaled_k;  // μ_k k^{d+1} / (first value)
  std::vector<int> ds;
  std::vector<double> scaled_d;  // μ_k(d) d^{k-1} / (first value)
  double min_ratio_k = 1.0;
  double min_ratio_d = 1.0;
  double spread_k = 1.0;  // max / min
  double spread_d = 1.0;
  bool passed = false;
};

/// Normalized μ_k k^{d+1} over even k at fixed d, and μ_k(d) d^{k-1} over d at fixed even k.
inline OrderReport order_check(int d, const std::vector<int>& k_range, int k, const std::vector<int>& d_range,
                               int order = kDefaultQuadratureOrder) {
  OrderReport rep;
  auto finish = [](const std::vector<double>& v, double& min_ratio, double& spread) {
    if (v.empty()) return;
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    min_ratio = *lo;
    spread = *hi / *lo;
  };
  if (!k_range.empty()) {
    const int kmax = *std::max_element(k_range.begin(), k_range.end());
    const auto rule = direct_rule(d, kmax, order);
    double first = 0.0;
    for (int kk : k_range) {
      if (kk % 2 != 0) throw ParameterError("order checks use even degrees only");
      const double v = mu_direct(d, kk, rule) * std::pow(kk, d + 1);
      if (rep.scaled_k.empty()) first = v;
      rep.ks.push_back(kk);
      rep.scaled_k.push_back(v / first);
    }
    finish(rep.scaled_k, rep.min_ratio_k, rep.spread_k);
  }
  if (!d_range.empty()) {
    if (k % 2 != 0) throw ParameterError("order checks use even degrees only");
    double first = 0.0;
    for (int dd : d_range) {
      const double v = mu_direct(dd, k, direct_rule(dd, k, order)) * std::pow(dd, k - 1);
      if (rep.scaled_d.empty()) first = v;
      rep.ds.push_back(dd);
      rep.scaled_d.push_back(v / first);
    }
    finish(rep.scaled_d, rep.min_ratio_d, rep.spread_d);
  }
  rep.passed = rep.min_ratio_k > 0.0 && rep.min_ratio_d > 0.0 && rep.spread_k < 10.0 && rep.spread_d < 10.0;
  return rep;
}

struct EigenSystem {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // columns
};

/// Dense symmetric eigendecomposition, values descending, the largest-magnitude entry
/// of every eigenvector made positive.
inline EigenSystem eig_sym(const Eigen::MatrixXd& k, bool with_vectors = true) {
  if (k.rows() != k.cols()) throw ParameterError("matrix is not square");
  const double scale = std::max(1.0, k.cwiseAbs().maxCoeff());
  if ((k - k.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) throw ParameterError("matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(k, with_vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw Error("symmetric eigensolver failed");
  const Eigen::Index n = k.rows();
  EigenSystem sys;
  sys.values = solver.eigenvalues().reverse();
  if (with_vectors) {
    sys.vectors = solver.eigenvectors().rowwise().reverse();
    for (Eigen::Index c = 0; c < n; ++c) {
      Eigen::Index arg = 0;
      sys.vectors.col(c).cwiseAbs().maxCoeff(&arg);
      if (sys.vectors(arg, c) < 0.0) sys.vectors.col(c) *= -1.0;
    }
  }
  return sys;
}

struct EmpiricalSpectrum {
  Eigen::VectorXd k_inf;                 // eigenvalues of K^∞ / n
  std::optional<Eigen::VectorXd> k_emp;  // eigenvalues of K^(0) / n
};

inline EmpiricalSpectrum empirical_spectrum(const ntk::GramPair& gram) {
  const double n = static_cast<double>(gram.k_inf.rows());
  EmpiricalSpectrum out;
  out.k_inf = eig_sym(gram.k_inf / n, false).values;
  if (gram.k_emp) out.k_emp = eig_sym(*gram.k_emp / n, false).values;
  return out;
}

struct Probe {
  int k = 0;
  Eigen::VectorXd zeta;
};

/// Columns n^{-1/2} √N(d,k) P_k(⟨ζ, x_i⟩), one per probe, in input order.
inline Eigen::MatrixXd build_V(const sphere::SampleSet& samples, const std::vector<Probe>& probes) {
  const Eigen::Index n = samples.size();
  const int d = samples.d();
  const double inv_root_n = 1.0 / std::sqrt(static_cast<double>(n));
  Eigen::MatrixXd v(n, static_cast<Eigen::Index>(probes.size()));
  for (std::size_t c = 0; c < probes.size(); ++c) {
    if (probes[c].zeta.size() != d + 1) throw ParameterError("probe direction has the wrong dimension");
    const Eigen::VectorXd proj = samples.points() * probes[c].zeta;
    const double root_n = std::sqrt(harmonics::multiplicity_real(d, probes[c].k));
    for (Eigen::Index i = 0; i < n; ++i) {
      v(i, static_cast<Eigen::Index>(c)) = inv_root_n * root_n * harmonics::legendre(d, probes[c].k, std::clamp(proj[i], -1.0, 1.0));
    }
  }
  return v;
}

/// An L²(τ_d)-orthonormal basis of the degree-k harmonics: N(d,k) zonal harmonics at
/// random poles ζ_a, recombined with G^{-1/2}, G_ab = P_k(⟨ζ_a, ζ_b⟩).
struct HarmonicBasis {
  int d = 0;
  int k = 0;
  Eigen::MatrixXd poles;         // N × (d+1)
  Eigen::MatrixXd coefficients;  // N × N
};

inline HarmonicBasis harmonic_basis(int d, int k, std::uint64_t seed) {
  const auto count = static_cast<Eigen::Index>(harmonics::multiplicity(d, k));
  if (count > 4096) throw CapacityError("harmonic basis too large");
  HarmonicBasis basis{d, k, Eigen::MatrixXd(count, d + 1), Eigen::MatrixXd()};
  for (Eigen::Index a = 0; a < count; ++a) {
    basis.poles.row(a) = sphere::random_direction(d, seed, "spectra/harmonic-basis", static_cast<std::uint64_t>(a)).coords().transpose();
  }
  Eigen::MatrixXd g(count, count);
  for (Eigen::Index a = 0; a < count; ++a)
    for (Eigen::Index b = 0; b < count; ++b)
      g(a, b) = harmonics::legendre(d, k, std::clamp(basis.poles.row(a).dot(basis.poles.row(b)), -1.0, 1.0));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(g);
  if (solver.eigenvalues().minCoeff() <= 1e-10 * solver.eigenvalues().maxCoeff()) {
    throw Error("random poles gave a singular harmonic Gram matrix");
  }
  basis.coefficients = solver.operatorInverseSqrt();
  return basis;
}

/// n^{-1/2} Y_{k,j}(x_i) for every basis function, one column each.
inline Eigen::MatrixXd evaluate_basis(const HarmonicBasis& basis, const sphere::SampleSet& samples) {
  const Eigen::Index n = samples.size();
  const Eigen::MatrixXd proj = samples.points() * basis.poles.transpose();
  const double scale = std::sqrt(harmonics::multiplicity_real(basis.d, basis.k) / static_cast<double>(n));
  Eigen::MatrixXd zonal(n, proj.cols());
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index a = 0; a < proj.cols(); ++a)
      zonal(i, a) = scale * harmonics::legendre(basis.d, basis.k, std::clamp(proj(i, a), -1.0, 1.0));
  return zonal * basis.coefficients;
}

/// V for the complete harmonic spaces of the listed degrees, columns grouped by degree.
inline Eigen::MatrixXd build_V_full(const sphere::SampleSet& samples, const std::vector<int>& degrees, std::uint64_t seed) {
  std::vector<Eigen::MatrixXd> blocks;
  Eigen::Index cols = 0;
  for (int k : degrees) {
    blocks.push_back(evaluate_basis(harmonic_basis(samples.d(), k, rng::derive_seed(seed, "spectra/degree", static_cast<std::uint64_t>(k))), samples));
    cols += blocks.back().cols();
  }
  Eigen::MatrixXd v(samples.size(), cols);
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    v.middleCols(at, b.cols()) = b;
    at += b.cols();
  }
  return v;
}

struct AlignmentReport {
  double orthonormality_defect = 0.0;  // ‖VᵀV - I‖_max
  double cross_energy = 0.0;           // ‖Vᵀ V̂⊥‖_F
  double projector_distance = 0.0;     // ‖VVᵀ - V̂V̂ᵀ‖_2
  std::vector<double> eigengaps;       // |λ_i - λ̂_i|
};

/// ‖P_A - P_B‖_2 for the spans' orthogonal projectors P = VVᵀ, computed in span[A, B].
inline double projector_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd both(a.rows(), a.cols() + b.cols());
  both << a, b;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(both);
  const Eigen::Index r = std::min(both.rows(), both.cols());
  const Eigen::MatrixXd basis = qr.householderQ() * Eigen::MatrixXd::Identity(both.rows(), r);
  const Eigen::MatrixXd pa = basis.transpose() * a;
  const Eigen::MatrixXd pb = basis.transpose() * b;
  const Eigen::MatrixXd diff = pa * pa.transpose() - pb * pb.transpose();
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(diff, Eigen::EigenvaluesOnly).eigenvalues().cwiseAbs().maxCoeff();
}

/// Diagnostics of V (n × r) against the leading r eigenvectors of `sys`. `reference`
/// holds the theoretical λ_1..λ_r when eigengaps are wanted.
inline AlignmentReport alignment(const Eigen::MatrixXd& v, const EigenSystem& sys, Eigen::Index r,
                                 const std::vector<double>& reference = {}) {
  const Eigen::Index n = sys.vectors.rows();
  if (r > n) throw ParameterError("r exceeds the number of samples");
  if (v.cols() != r || v.rows() != n) throw ParameterError("V must be n × r");
  AlignmentReport rep;
  rep.orthonormality_defect = (v.transpose() * v - Eigen::MatrixXd::Identity(r, r)).cwiseAbs().maxCoeff();
  const Eigen::MatrixXd lead = sys.vectors.leftCols(r);
  rep.cross_energy = r < n ? (v.transpose() * sys.vectors.rightCols(n - r)).norm() : 0.0;
  rep.projector_distance = projector_distance(v, lead);
  for (std::size_t i = 0; i < reference.size() && static_cast<Eigen::Index>(i) < sys.values.size(); ++i) {
    rep.eigengaps.push_back(std::abs(reference[i] - sys.values[static_cast<Eigen::Index>(i)]));
  }
  return rep;
}

/// Leading empirical eigenvalues grouped into blocks of the given sizes.
struct ClusterDiagnostics {
  std::vector<double> relative_errors;  // per eigenvalue, against its block's target
  double max_relative_error = 0.0;
  std::vector<double> within_spread;    // max - min inside each block
  std::vector<double> between_gap;      // min of block b minus max of block b+1
  bool separated = false;               // every spread below both neighbouring gaps
};

inline ClusterDiagnostics cluster_diagnostics(const Eigen::VectorXd& values, const std::vector<std::uint64_t>& sizes,
                                              const std::vector<double>& targets) {
  if (sizes.size() != targets.size()) throw ParameterError("block sizes and targets differ in length");
  ClusterDiagnostics diag;
  Eigen::Index at = 0;
  std::vector<std::pair<double, double>> ranges;
  for (std::size_t b = 0; b < sizes.size(); ++b) {
    const auto len = static_cast<Eigen::Index>(sizes[b]);
    if (at + len > values.size()) throw ParameterError("not enough eigenvalues for the requested blocks");
    const Eigen::VectorXd block = values.segment(at, len);
    for (Eigen::Index i = 0; i < len; ++i) {
      const double err = std::abs(block[i] - targets[b]) / std::abs(targets[b]);
      diag.relative_errors.push_back(err);
      diag.max_relative_error = std::max(diag.max_relative_error, err);
    }
    ranges.emplace_back(block.minCoeff(), block.maxCoeff());
    diag.within_spread.push_back(block.maxCoeff() - block.minCoeff());
    at += len;
  }
  diag.separated = true;
  for (std::size_t b = 0; b + 1 < ranges.size(); ++b) {
    const double gap = ranges[b].first - ranges[b + 1].second;
    diag.between_gap.push_back(gap);
    if (!(gap > diag.within_spread[b] && gap > diag.within_spread[b + 1])) diag.separated = false;
  }
  return diag;
}

}  // namespace ntkbias::spectra
