#pragma once

// Seeded input distributions on the unit sphere S^d in R^(d+1).

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "ntkbias/errors.hpp"
#include "ntkbias/rng.hpp"

namespace ntkbias::sphere {

inline constexpr double kUnitTolerance = 1e-12;

/// A unit vector in R^(d+1).
class SpherePoint {
 public:
  /// Wraps `v` after checking ‖v‖ = 1 within `tol`; the stored copy is renormalized.
  static SpherePoint checked(Eigen::VectorXd v, double tol = 1e-9) {
    const double norm = v.norm();
    if (!(std::abs(norm - 1.0) <= tol)) {
      throw ParameterError("expected a unit vector, got norm " + std::to_string(norm));
    }
    return SpherePoint(std::move(v) / norm);
  }

  /// Projects a nonzero vector onto the sphere.
  static SpherePoint normalize(Eigen::VectorXd v) {
    const double norm = v.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) throw ParameterError("cannot normalize a zero or non-finite vector");
    return SpherePoint(std::move(v) / norm);
  }

  const Eigen::VectorXd& coords() const noexcept { return coords_; }
  Eigen::Index ambient_dim() const noexcept { return coords_.size(); }
  int sphere_dim() const noexcept { return static_cast<int>(coords_.size()) - 1; }

  bool operator==(const SpherePoint&) const = default;

 private:
  explicit SpherePoint(Eigen::VectorXd v) : coords_(std::move(v)) {}
  Eigen::VectorXd coords_;
};

struct Uniform {};

/// Mass `positive_mass` on {⟨ζ0,x⟩ > 0}, the rest on {⟨ζ0,x⟩ ≤ 0}, uniform within each half.
struct PiecewiseUniform {
  SpherePoint split_direction;
  double positive_mass = 0.25;
};

/// z = mean + A·g with g ~ N(0, I_D), returned as z / ‖z‖. A is (d+1) × D.
struct NormalizedGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov_factor;
};

struct MixtureComponent {
  double weight = 0.0;
  NormalizedGaussian gaussian;
};

struct GaussianMixture {
  std::vector<MixtureComponent> components;
};

using DistributionSpec = std::variant<Uniform, PiecewiseUniform, NormalizedGaussian, GaussianMixture>;

inline std::string kind_name(const DistributionSpec& spec) {
  struct Visitor {
    std::string operator()(const Uniform&) const { return "uniform"; }
    std::string operator()(const PiecewiseUniform&) const { return "piecewise_uniform"; }
    std::string operator()(const NormalizedGaussian&) const { return "normalized_gaussian"; }
    std::string operator()(const GaussianMixture&) const { return "gaussian_mixture"; }
  };
  return std::visit(Visitor{}, spec);
}

/// n points on S^d, one per row of an n × (d+1) matrix.
class SampleSet {
 public:
  SampleSet(Eigen::MatrixXd points, int d, std::uint64_t seed, DistributionSpec spec)
      : points_(std::move(points)), d_(d), seed_(seed), spec_(std::move(spec)) {}

  Eigen::Index size() const noexcept { return points_.rows(); }
  int d() const noexcept { return d_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const DistributionSpec& spec() const noexcept { return spec_; }
  const Eigen::MatrixXd& points() const noexcept { return points_; }
  Eigen::VectorXd point(Eigen::Index i) const { return points_.row(i).transpose(); }

 private:
  Eigen::MatrixXd points_;
  int d_;
  std::uint64_t seed_;
  DistributionSpec spec_;
};

namespace detail {

using RowRef = Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;

inline constexpr const char* kUniformTag = "sphere/uniform";
inline constexpr const char* kPiecewiseTag = "sphere/piecewise";
inline constexpr const char* kGaussianTag = "sphere/gaussian";
inline constexpr const char* kMixtureSelectTag = "sphere/mixture-select";

inline void check_counts(int d, Eigen::Index n) {
  if (d < 1) throw ParameterError("sphere dimension d must be >= 1");
  if (n < 1) throw ParameterError("sample count n must be >= 1");
}

inline void draw_uniform(rng::CounterRng& gen, RowRef out) {
  for (;;) {
    for (Eigen::Index j = 0; j < out.size(); ++j) out[j] = gen.normal();
    const double norm = out.norm();
    if (norm > 0.0) {
      out /= norm;
      return;
    }
  }
}

inline void validate(const NormalizedGaussian& g, int d) {
  if (g.mean.size() != d + 1) throw ParameterError("gaussian mean must have length d+1");
  if (g.cov_factor.rows() != d + 1) throw ParameterError("covariance factor must have d+1 rows");
  if (g.cov_factor.cols() < 1) throw ParameterError("covariance factor needs at least one column");
}

inline void draw_gaussian(rng::CounterRng& gen, const NormalizedGaussian& g, RowRef out) {
  Eigen::VectorXd noise(g.cov_factor.cols());
  for (int attempt = 0; attempt < 2; ++attempt) {
    for (Eigen::Index j = 0; j < noise.size(); ++j) noise[j] = gen.normal();
    Eigen::VectorXd z = g.mean + g.cov_factor * noise;
    const double norm = z.norm();
    if (norm > 0.0) {
      out = (z / norm).transpose();
      return;
    }
  }
  throw ParameterError("normalized gaussian drew a zero vector twice");
}

inline void validate_weights(const GaussianMixture& mix) {
  if (mix.components.empty()) throw ParameterError("gaussian mixture needs at least one component");
  double total = 0.0;
  for (const auto& c : mix.components) {
    if (!(c.weight >= 0.0)) throw ParameterError("mixture weights must be nonnegative");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ParameterError("mixture weights must sum to 1");
}

/// Inverse-CDF component choice; zero-weight components are never selected.
inline std::size_t select_component(const GaussianMixture& mix, double u) {
  double cdf = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t c = 0; c < mix.components.size(); ++c) {
    if (mix.components[c].weight <= 0.0) continue;
    last_positive = c;
    cdf += mix.components[c].weight;
    if (u < cdf) return c;
  }
  return last_positive;
}

}  // namespace detail

/// Uniform measure τ_d, via normalized standard Gaussian vectors.
inline SampleSet sample_uniform(int d, Eigen::Index n, std::uint64_t seed) {
  detail::check_counts(d, n);
  Eigen::MatrixXd pts(n, d + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    rng::CounterRng gen(seed, detail::kUniformTag, static_cast<std::uint64_t>(i));
    detail::draw_uniform(gen, pts.row(i));
  }
  return SampleSet(std::move(pts), d, seed, Uniform{});
}

/// Each point lands in {⟨ζ0,x⟩ > 0} with probability `positive_mass`, else in the
/// complementary closed half; within a half it is uniform. A uniform draw on the wrong
/// side is reflected through the hyperplane ζ0^⊥.
inline SampleSet sample_piecewise_uniform(int d, Eigen::Index n, const PiecewiseUniform& spec, std::uint64_t seed) {
  detail::check_counts(d, n);
  const Eigen::VectorXd& zeta = spec.split_direction.coords();
  if (zeta.size() != d + 1) throw ParameterError("split direction must have length d+1");
  if (std::abs(zeta.norm() - 1.0) > kUnitTolerance) throw ParameterError("split direction must be a unit vector");
  if (!(spec.positive_mass >= 0.0 && spec.positive_mass <= 1.0)) throw ParameterError("positive_mass must lie in [0,1]");

  Eigen::MatrixXd pts(n, d + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    rng::CounterRng gen(seed, detail::kPiecewiseTag, static_cast<std::uint64_t>(i));
    const bool positive_side = gen.uniform() < spec.positive_mass;
    auto row = pts.row(i);
    detail::draw_uniform(gen, row);
    const double proj = row.dot(zeta.transpose());
    const bool is_positive = proj > 0.0;
    if (is_positive != positive_side) {
      row -= 2.0 * proj * zeta.transpose();
      row /= row.norm();
    }
  }
  return SampleSet(std::move(pts), d, seed, spec);
}

inline SampleSet sample_normalized_gaussian(int d, Eigen::Index n, const NormalizedGaussian& spec, std::uint64_t seed) {
  detail::check_counts(d, n);
  detail::validate(spec, d);
  Eigen::MatrixXd pts(n, d + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    rng::CounterRng gen(seed, detail::kGaussianTag, static_cast<std::uint64_t>(i));
    detail::draw_gaussian(gen, spec, pts.row(i));
  }
  return SampleSet(std::move(pts), d, seed, spec);
}

/// Component draws use the same per-point stream as sample_normalized_gaussian; the
/// component choice comes from a separate per-point stream.
inline SampleSet sample_gaussian_mixture(int d, Eigen::Index n, const GaussianMixture& spec, std::uint64_t seed,
                                         std::vector<std::size_t>* chosen = nullptr) {
  detail::check_counts(d, n);
  detail::validate_weights(spec);
  for (const auto& c : spec.components) detail::validate(c.gaussian, d);
  if (chosen) chosen->assign(static_cast<std::size_t>(n), 0);

  Eigen::MatrixXd pts(n, d + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    rng::CounterRng select(seed, detail::kMixtureSelectTag, static_cast<std::uint64_t>(i));
    const std::size_t c = detail::select_component(spec, select.uniform());
    if (chosen) (*chosen)[static_cast<std::size_t>(i)] = c;
    rng::CounterRng gen(seed, detail::kGaussianTag, static_cast<std::uint64_t>(i));
    detail::draw_gaussian(gen, spec.components[c].gaussian, pts.row(i));
  }
  return SampleSet(std::move(pts), d, seed, spec);
}

inline SampleSet sample(const DistributionSpec& spec, int d, Eigen::Index n, std::uint64_t seed) {
  struct Visitor {
    int d;
    Eigen::Index n;
    std::uint64_t seed;
    SampleSet operator()(const Uniform&) const { return sample_uniform(d, n, seed); }
    SampleSet operator()(const PiecewiseUniform& s) const { return sample_piecewise_uniform(d, n, s, seed); }
    SampleSet operator()(const NormalizedGaussian& s) const { return sample_normalized_gaussian(d, n, s, seed); }
    SampleSet operator()(const GaussianMixture& s) const { return sample_gaussian_mixture(d, n, s, seed); }
  };
  return std::visit(Visitor{d, n, seed}, spec);
}

/// A single uniformly random direction on S^d (used for ζ vectors).
inline SpherePoint random_direction(int d, std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) {
  if (d < 1) throw ParameterError("sphere dimension d must be >= 1");
  rng::CounterRng gen(seed, tag, index);
  Eigen::RowVectorXd v(d + 1);
  detail::draw_uniform(gen, v);
  return SpherePoint::checked(v.transpose());
}

/// Random non-isotropic Gaussian: mean entries ~ Unif[-1,1], factor entries ~ N(0,1).
inline NormalizedGaussian random_gaussian_spec(int d, int factor_width, std::uint64_t seed, std::uint64_t index = 0) {
  if (factor_width < 1) throw ParameterError("factor width D must be >= 1");
  rng::CounterRng gen(seed, "sphere/gaussian-spec", index);
  NormalizedGaussian g{Eigen::VectorXd(d + 1), Eigen::MatrixXd(d + 1, factor_width)};
  for (Eigen::Index j = 0; j < g.mean.size(); ++j) g.mean[j] = 2.0 * gen.uniform() - 1.0;
  for (Eigen::Index c = 0; c < g.cov_factor.cols(); ++c)
    for (Eigen::Index r = 0; r < g.cov_factor.rows(); ++r) g.cov_factor(r, c) = gen.normal();
  return g;
}

/// Equal-weight mixture of `components` random non-isotropic Gaussians.
inline GaussianMixture random_mixture_spec(int d, int factor_width, int components, std::uint64_t seed) {
  if (components < 1) throw ParameterError("mixture needs at least one component");
  GaussianMixture mix;
  for (int c = 0; c < components; ++c) {
    mix.components.push_back({1.0 / components, random_gaussian_spec(d, factor_width, seed, static_cast<std::uint64_t>(c))});
  }
  // Renormalize the last weight so the sum is 1 to the last ulp.
  double head = 0.0;
  for (int c = 0; c + 1 < components; ++c) head += mix.components[static_cast<std::size_t>(c)].weight;
  mix.components.back().weight = 1.0 - head;
  return mix;
}

}  // namespace ntkbias::sphere
