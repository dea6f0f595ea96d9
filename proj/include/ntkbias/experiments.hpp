#pragma once

// Target functions, residual projections onto zonal harmonics, smoothing and rate fits,
// and the end-to-end training run that records projection curves.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "ntkbias/detail/format.hpp"
#include "ntkbias/errors.hpp"
#include "ntkbias/harmonics.hpp"
#include "ntkbias/network.hpp"
#include "ntkbias/ntk.hpp"
#include "ntkbias/rng.hpp"
#include "ntkbias/spectra.hpp"
#include "ntkbias/sphere.hpp"

namespace ntkbias::experiments {

struct HarmonicTerm {
  int k = 0;
  double a = 0.0;
  Eigen::VectorXd zeta;
};

/// Σ a_k P_k(⟨ζ_k, x⟩)
struct HarmonicSum {
  std::vector<HarmonicTerm> terms;
};

/// Σ cos(a_i ⟨ζ, x⟩)
struct CosineSum {
  Eigen::VectorXd zeta;
  std::vector<double> a;
};

/// Σ ⟨ζ, x⟩^{p_i}
struct PowerSum {
  Eigen::VectorXd zeta;
  std::vector<int> p;
};

using TargetSpec = std::variant<HarmonicSum, CosineSum, PowerSum>;

inline std::string target_kind(const TargetSpec& t) {
  if (std::holds_alternative<HarmonicSum>(t)) return "harmonic_sum";
  if (std::holds_alternative<CosineSum>(t)) return "cosine_sum";
  return "power_sum";
}

namespace detail {

inline void check_direction(const Eigen::VectorXd& zeta, Eigen::Index dim) {
  if (zeta.size() != dim) throw ParameterError("target direction has the wrong dimension");
  if (std::abs(zeta.norm() - 1.0) > 1e-9) throw ParameterError("target direction must be a unit vector");
}

}  // namespace detail

inline void validate(const TargetSpec& spec, int d) {
  std::visit(
      [d](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, HarmonicSum>) {
          if (t.terms.empty()) throw ParameterError("harmonic_sum needs at least one term");
          for (const auto& term : t.terms) {
            if (term.k < 0) throw ParameterError("harmonic degree must be nonnegative");
            detail::check_direction(term.zeta, d + 1);
          }
        } else if constexpr (std::is_same_v<T, CosineSum>) {
          detail::check_direction(t.zeta, d + 1);
        } else {
          detail::check_direction(t.zeta, d + 1);
          for (int p : t.p)
            if (p < 0) throw ParameterError("power_sum exponents must be nonnegative");
        }
      },
      spec);
}

inline double eval_target(const TargetSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return std::visit(
      [&](const auto& t) -> double {
        using T = std::decay_t<decltype(t)>;
        double sum = 0.0;
        if constexpr (std::is_same_v<T, HarmonicSum>) {
          const int d = static_cast<int>(x.size()) - 1;
          for (const auto& term : t.terms) sum += term.a * harmonics::legendre(d, term.k, std::clamp(term.zeta.dot(x), -1.0, 1.0));
        } else if constexpr (std::is_same_v<T, CosineSum>) {
          const double u = t.zeta.dot(x);
          for (double a : t.a) sum += std::cos(a * u);
        } else {
          const double u = t.zeta.dot(x);
          for (int p : t.p) sum += std::pow(u, p);
        }
        return sum;
      },
      spec);
}

inline Eigen::VectorXd labels(const TargetSpec& spec, const Eigen::MatrixXd& points) {
  Eigen::VectorXd y(points.rows());
  for (Eigen::Index i = 0; i < points.rows(); ++i) y[i] = eval_target(spec, points.row(i).transpose());
  return y;
}

/// Probe directions implied by a target: its own ζ_k for harmonic sums, otherwise the
/// target's ζ at `degrees`.
inline std::vector<spectra::Probe> default_probes(const TargetSpec& spec, const std::vector<int>& degrees = {0, 2, 4}) {
  std::vector<spectra::Probe> out;
  if (const auto* h = std::get_if<HarmonicSum>(&spec)) {
    for (const auto& term : h->terms) out.push_back({term.k, term.zeta});
    return out;
  }
  const Eigen::VectorXd zeta = std::holds_alternative<CosineSum>(spec) ? std::get<CosineSum>(spec).zeta : std::get<PowerSum>(spec).zeta;
  for (int k : degrees) out.push_back({k, zeta});
  return out;
}

/// n^{-1/2} φ(x_i) with φ = √N(d,k) P_k(⟨ζ,·⟩) when normalized, else P_k(⟨ζ,·⟩).
inline Eigen::VectorXd projection_vector(const Eigen::MatrixXd& points, int k, const Eigen::VectorXd& zeta, bool normalized) {
  const Eigen::Index n = points.rows();
  const int d = static_cast<int>(points.cols()) - 1;
  if (zeta.size() != points.cols()) throw ParameterError("probe direction has the wrong dimension");
  const double scale = (normalized ? std::sqrt(harmonics::multiplicity_real(d, k)) : 1.0) / std::sqrt(static_cast<double>(n));
  const Eigen::VectorXd proj = points * zeta;
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * harmonics::legendre(d, k, std::clamp(proj[i], -1.0, 1.0));
  return v;
}

inline Eigen::VectorXd projection_vector(const sphere::SampleSet& samples, int k, const Eigen::VectorXd& zeta, bool normalized) {
  return projection_vector(samples.points(), k, zeta, normalized);
}

struct ProjectionCurve {
  int k = 0;
  Eigen::VectorXd zeta;
  std::vector<double> values;  // |v_kᵀ u^(t)|
  bool normalized = true;
  bool test = false;
};

/// â_k(t) = |v_kᵀ u^(t)| at every recorded step, one curve per probe vector.
inline std::vector<std::vector<double>> track_projections(const std::vector<Eigen::VectorXd>& residuals,
                                                          const std::vector<Eigen::VectorXd>& probes) {
  std::vector<std::vector<double>> curves(probes.size());
  for (std::size_t p = 0; p < probes.size(); ++p) {
    curves[p].reserve(residuals.size());
    for (const auto& u : residuals) {
      if (u.size() != probes[p].size()) throw ParameterError("probe length does not match residual length");
      curves[p].push_back(std::abs(probes[p].dot(u)));
    }
  }
  return curves;
}

inline std::vector<std::vector<double>> track_projections(const network::ResidualTrajectory& traj,
                                                          const std::vector<Eigen::VectorXd>& probes) {
  return track_projections(traj.residuals, probes);
}

/// Trailing mean over `window` entries; the first window-1 outputs average the available prefix.
inline std::vector<double> moving_average(const std::vector<double>& series, int window = 20) {
  if (series.empty()) throw ParameterError("moving average of an empty series");
  if (window < 1) throw ParameterError("window must be >= 1");
  std::vector<double> out(series.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    sum += series[i];
    if (i >= static_cast<std::size_t>(window)) sum -= series[i - static_cast<std::size_t>(window)];
    const std::size_t count = std::min(i + 1, static_cast<std::size_t>(window));
    out[i] = sum / static_cast<double>(count);
  }
  return out;
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 1.0;
  std::size_t points = 0;
};

/// Least-squares line through (steps[i], log values[i]) for i in [begin, end); entries
/// below 1e-14 are skipped.
inline LinearFit fit_log_linear(const std::vector<double>& steps, const std::vector<double>& values, std::size_t begin,
                                std::size_t end) {
  if (steps.size() != values.size()) throw ParameterError("step and value series differ in length");
  end = std::min(end, values.size());
  std::vector<double> xs, ys;
  for (std::size_t i = begin; i < end; ++i) {
    if (values[i] < 1e-14) continue;
    xs.push_back(steps[i]);
    ys.push_back(std::log(values[i]));
  }
  if (xs.size() < 2) throw FitError("fewer than two usable points for a rate fit");
  const double count = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= count;
  my /= count;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0) throw FitError("rate fit needs at least two distinct steps");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  fit.points = xs.size();
  return fit;
}

/// Slope of log(curve) per step over records [begin, end).
inline double fit_rate(const std::vector<double>& steps, const std::vector<double>& values, std::size_t begin = 0,
                       std::size_t end = static_cast<std::size_t>(-1)) {
  return fit_log_linear(steps, values, begin, end).slope;
}

/// Index of the first record with curve(t) ≤ frac · curve(0).
inline std::optional<std::size_t> time_to_fraction(const std::vector<double>& curve, double frac) {
  if (curve.empty()) throw ParameterError("empty curve");
  if (!(frac > 0.0 && frac < 1.0)) throw ParameterError("fraction must lie in (0, 1)");
  const double target = frac * curve.front();
  for (std::size_t i = 1; i < curve.size(); ++i)
    if (curve[i] <= target) return i;
  return std::nullopt;
}

/// Records [begin, end) of the main descent of a smoothed curve: from `begin` until the
/// first record at or below `floor_fraction` of the value at `begin`.
inline std::pair<std::size_t, std::size_t> descent_phase(const std::vector<double>& smoothed, std::size_t begin,
                                                         double floor_fraction = 0.05) {
  if (begin >= smoothed.size()) throw ParameterError("descent phase starts past the end of the curve");
  const double floor = floor_fraction * smoothed[begin];
  for (std::size_t i = begin + 1; i < smoothed.size(); ++i)
    if (smoothed[i] <= floor) return {begin, i + 1};
  return {begin, smoothed.size()};
}

struct ExperimentConfig {
  int d = 9;
  Eigen::Index n = 1000;
  Eigen::Index m = 4096;
  int steps = 2000;
  double rho = 0.5;
  double theta = 0.1;
  int record_every = 10;
  std::uint64_t seed = 0;
  sphere::DistributionSpec distribution = sphere::Uniform{};
  TargetSpec target;
  std::vector<spectra::Probe> probes;  // empty: default_probes(target)
  bool normalized_probes = true;
  bool test_set = false;
  bool linearized = false;
};

/// Sub-seeds for every random ingredient of a run.
struct RunSeeds {
  std::uint64_t data = 0;
  std::uint64_t network = 0;
  std::uint64_t test = 0;

  static RunSeeds from(std::uint64_t seed) {
    return {rng::derive_seed(seed, "experiment/data", 0), rng::derive_seed(seed, "experiment/network", 0),
            rng::derive_seed(seed, "experiment/test", 0)};
  }
};

struct RunRecord {
  ExperimentConfig config;
  RunSeeds seeds;
  std::vector<int> steps;
  std::vector<double> losses;
  std::vector<ProjectionCurve> curves;       // train
  std::vector<ProjectionCurve> test_curves;  // fresh uniform sample
  std::vector<std::string> warnings;
  std::optional<int> diverged_at;
  double max_flip_fraction = 0.0;  // over training samples, at the last record

  const ProjectionCurve& curve(int k, bool test = false) const {
    for (const auto& c : test ? test_curves : curves)
      if (c.k == k) return c;
    throw ParameterError("no curve for degree " + std::to_string(k));
  }
};

using ProgressFn = std::function<void(int, double)>;

/// Samples data, labels it with the target, trains (or iterates the linearized dynamics)
/// and projects the residual onto every probe at every record.
inline RunRecord run_experiment(const ExperimentConfig& cfg, const ProgressFn& progress = {}) {
  if (cfg.d < 1) throw ParameterError("d must be >= 1");
  if (cfg.n < 1) throw ParameterError("n must be >= 1");
  if (cfg.m < 1) throw ParameterError("m must be >= 1");
  validate(cfg.target, cfg.d);

  RunRecord rec;
  rec.config = cfg;
  rec.seeds = RunSeeds::from(cfg.seed);
  const auto probes = cfg.probes.empty() ? default_probes(cfg.target) : cfg.probes;
  for (const auto& p : probes) {
    if (p.k >= 3 && p.k % 2 == 1) {
      rec.warnings.push_back("probe degree " + std::to_string(p.k) + " has a zero NTK eigenvalue; expect no decay signal");
    }
  }

  const auto samples = sphere::sample(cfg.distribution, cfg.d, cfg.n, rec.seeds.data);
  const Eigen::VectorXd y = labels(cfg.target, samples.points());
  network::NetworkState net = network::init(cfg.m, cfg.d, rec.seeds.network);

  std::vector<Eigen::VectorXd> probe_vecs;
  for (const auto& p : probes) probe_vecs.push_back(projection_vector(samples, p.k, p.zeta, cfg.normalized_probes));

  std::optional<sphere::SampleSet> test;
  std::vector<Eigen::VectorXd> test_vecs;
  Eigen::VectorXd y_test;
  if (cfg.test_set) {
    test = sphere::sample_uniform(cfg.d, cfg.n, rec.seeds.test);
    y_test = labels(cfg.target, test->points());
    for (const auto& p : probes) test_vecs.push_back(projection_vector(*test, p.k, p.zeta, cfg.normalized_probes));
  }

  network::TrainConfig tc;
  tc.steps = cfg.steps;
  tc.rho = cfg.rho;
  tc.theta = cfg.theta;
  tc.record_every = cfg.record_every;

  network::ResidualTrajectory traj;
  std::vector<network::Observer> observers;
  if (progress) observers.push_back([&](int t, const Eigen::VectorXd& u) { progress(t, u.squaredNorm() / static_cast<double>(u.size())); });
  if (cfg.linearized) {
    if (cfg.test_set) rec.warnings.emplace_back("test projections are unavailable under linearized dynamics");
    const Eigen::VectorXd u0 = y - cfg.theta * network::forward_batch(net, samples.points());
    const auto gram = ntk::gram_ntk(samples);
    traj = network::linear_dynamics(gram.k_inf, u0, cfg.rho, cfg.steps, cfg.record_every);
    if (progress)
      for (std::size_t i = 0; i < traj.size(); ++i) progress(traj.steps[i], traj.losses[i]);
  } else {
    try {
      traj = network::train(net, samples, y, tc, observers, test ? &test->points() : nullptr);
    } catch (const network::TrainingDiverged& e) {
      traj = e.partial();
      rec.diverged_at = e.step();
      rec.warnings.emplace_back(e.what());
    }
  }
  rec.warnings.insert(rec.warnings.end(), traj.warnings.begin(), traj.warnings.end());
  rec.steps = traj.steps;
  rec.losses = traj.losses;

  const auto train_curves = track_projections(traj, probe_vecs);
  for (std::size_t p = 0; p < probes.size(); ++p) {
    rec.curves.push_back({probes[p].k, probes[p].zeta, train_curves[p], cfg.normalized_probes, false});
  }
  if (test && !cfg.linearized) {
    std::vector<Eigen::VectorXd> test_residuals;
    for (const auto& out : traj.monitor_outputs) test_residuals.push_back(y_test - out);
    const auto curves = track_projections(test_residuals, test_vecs);
    for (std::size_t p = 0; p < probes.size(); ++p) {
      rec.test_curves.push_back({probes[p].k, probes[p].zeta, curves[p], cfg.normalized_probes, true});
    }
  }
  if (!cfg.linearized) {
    int worst = 0;
    for (Eigen::Index i = 0; i < samples.size(); ++i) worst = std::max(worst, network::activation_flip_count(net, samples.point(i)));
    rec.max_flip_fraction = static_cast<double>(worst) / static_cast<double>(cfg.m);
  }
  return rec;
}

/// Column names: step, loss, proj_k{degree}[_test]. Repeated degrees get a _p{index} suffix.
inline std::vector<std::string> curve_columns(const RunRecord& rec) {
  std::vector<std::string> cols{"step", "loss"};
  auto name = [&](const std::vector<ProjectionCurve>& curves, std::size_t i, const char* suffix) {
    int same = 0;
    for (const auto& c : curves) same += c.k == curves[i].k;
    std::string s = "proj_k" + std::to_string(curves[i].k);
    if (same > 1) s += "_p" + std::to_string(i);
    return s + suffix;
  };
  for (std::size_t i = 0; i < rec.curves.size(); ++i) cols.push_back(name(rec.curves, i, ""));
  for (std::size_t i = 0; i < rec.test_curves.size(); ++i) cols.push_back(name(rec.test_curves, i, "_test"));
  return cols;
}

inline void write_curves_csv(std::ostream& os, const RunRecord& rec) {
  const auto cols = curve_columns(rec);
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  std::vector<double> row;
  for (std::size_t r = 0; r < rec.steps.size(); ++r) {
    os << rec.steps[r];
    row.clear();
    row.push_back(rec.losses[r]);
    for (const auto& c : rec.curves) row.push_back(c.values[r]);
    for (const auto& c : rec.test_curves) row.push_back(c.values[r]);
    os << ',';
    ntkbias::detail::write_row(os, row.data(), row.size());
  }
}

}  // namespace ntkbias::experiments
