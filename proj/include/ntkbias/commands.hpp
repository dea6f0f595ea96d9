#pragma once

// The command surface: spectrum, gram, train, verify and print-config. Every command
// is a pure function of its configuration; data goes to files, progress to stderr.

#include <json.hpp>

#include <Eigen/Core>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <string>
#include <vector>

#include "ntkbias/config.hpp"
#include "ntkbias/detail/format.hpp"
#include "ntkbias/errors.hpp"
#include "ntkbias/experiments.hpp"
#include "ntkbias/harmonics.hpp"
#include "ntkbias/network.hpp"
#include "ntkbias/ntk.hpp"
#include "ntkbias/spectra.hpp"
#include "ntkbias/sphere.hpp"

#ifndef NTKBIAS_EIGEN_VERSION
#define NTKBIAS_EIGEN_VERSION_STR_(a, b, c) #a "." #b "." #c
#define NTKBIAS_EIGEN_VERSION_STR(a, b, c) NTKBIAS_EIGEN_VERSION_STR_(a, b, c)
#define NTKBIAS_EIGEN_VERSION NTKBIAS_EIGEN_VERSION_STR(EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION)
#endif

namespace ntkbias::commands {

using nlohmann::json;

enum ExitCode : int { ok = 0, failure = 1, config_error = 2, divergence = 3, verification_failure = 4 };

inline constexpr int kFormatVersion = 1;

namespace detail {

inline std::filesystem::path prepare_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  std::filesystem::create_directories(p);
  return p;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os << text;
}

inline json runtime_info() {
  return json{{"compiler", __VERSION__}, {"cxx_standard", static_cast<long>(__cplusplus)}, {"eigen", NTKBIAS_EIGEN_VERSION}};
}

/// Writes a JSON document with a trailing newline and fixed key order.
inline void write_json(const std::filesystem::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

}  // namespace detail

struct SpectrumOptions {
  int d = 2;
  int k_max = 50;
  int quadrature_order = spectra::kDefaultQuadratureOrder;
  std::string output = "spectrum.csv";
  double tolerance = 1e-8;
};

/// Writes k, mu, mu_assembled, N, mu_times_N, cumulative_trace. Fails when the two
/// routes disagree by more than the tolerance at any k.
inline int cmd_spectrum(const SpectrumOptions& opt, std::ostream& log = std::cerr) {
  if (opt.d < 1 || opt.k_max < 0 || opt.quadrature_order < 2) throw ConfigError("spectrum needs d >= 1, k_max >= 0, Q >= 2");
  const auto table = spectra::spectrum_table(opt.d, opt.k_max, opt.quadrature_order);
  std::ostringstream os;
  os << "k,mu,mu_assembled,N,mu_times_N,cumulative_trace\n";
  int worst_k = -1;
  double worst = 0.0;
  for (const auto& e : table.entries) {
    using ntkbias::detail::format_double;
    os << e.k << ',' << format_double(e.mu) << ',' << format_double(e.mu_assembled) << ',' << e.multiplicity << ','
       << format_double(e.mu * static_cast<double>(e.multiplicity)) << ',' << format_double(e.cumulative_trace) << '\n';
    if (e.underflow) log << "warning: mu_" << e.k << " is below 1e-300\n";
    const double gap = std::abs(e.mu - e.mu_assembled);
    if (!(gap <= opt.tolerance) && (worst_k < 0 || gap > worst)) {
      worst = gap;
      worst_k = e.k;
    }
  }
  const std::filesystem::path out(opt.output);
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  detail::write_text(out, os.str());
  if (worst_k >= 0) {
    log << "routes disagree at k=" << worst_k << " by " << worst << "\n";
    return verification_failure;
  }
  return ok;
}

/// Eigenvalues of K^∞/n (and K^(0)/n when requested) plus alignment diagnostics against
/// complete harmonic bases of the configured degrees.
inline int cmd_gram(const config::CliConfig& cfg, std::ostream& log = std::cerr) {
  config::validate(cfg);
  const auto seeds = experiments::RunSeeds::from(cfg.seed);
  const auto dist = config::resolve_distribution(cfg.distribution, cfg.d, cfg.seed);
  const auto samples = sphere::sample(dist, cfg.d, cfg.n, seeds.data);
  auto gram = ntk::gram_ntk(samples);
  const double n = static_cast<double>(cfg.n);
  log << "gram: n=" << cfg.n << " d=" << cfg.d << "\n";
  if (cfg.empirical_gram) {
    const auto layers = cfg.layers == "first" ? ntk::Layers::first : cfg.layers == "second" ? ntk::Layers::second : ntk::Layers::both;
    const auto net = network::init(cfg.m, cfg.d, seeds.network);
    gram.k_emp = ntk::gram_empirical(net, samples, layers);
    gram.network_seed = seeds.network;
  }
  const auto sys = spectra::eig_sym(gram.k_inf / n);
  std::optional<Eigen::VectorXd> emp;
  if (gram.k_emp) emp = spectra::eig_sym(*gram.k_emp / n, false).values;

  std::ostringstream csv;
  csv << "index,lambda_inf" << (emp ? ",lambda_emp" : "") << '\n';
  for (Eigen::Index i = 0; i < sys.values.size(); ++i) {
    csv << i << ',' << ntkbias::detail::format_double(sys.values[i]);
    if (emp) csv << ',' << ntkbias::detail::format_double((*emp)[i]);
    csv << '\n';
  }

  json report{{"schema_version", config::kSchemaVersion}, {"format_version", kFormatVersion}, {"run_id", config::run_id(cfg)},
              {"config", config::to_json(cfg)},
              {"seeds", {{"seed", cfg.seed}, {"data", seeds.data}}},
              {"runtime", detail::runtime_info()}};
  if (gram.k_emp) {
    report["seeds"]["network"] = seeds.network;
    report["max_abs_emp_minus_inf"] = (*gram.k_emp - gram.k_inf).cwiseAbs().maxCoeff();
  }

  // Degrees ordered by eigenvalue, one block of N(d,k) columns each.
  auto degrees = cfg.alignment_degrees;
  const int kmax = degrees.empty() ? 0 : *std::max_element(degrees.begin(), degrees.end());
  const auto table = spectra::spectrum_table(cfg.d, kmax, cfg.quadrature_order);
  std::stable_sort(degrees.begin(), degrees.end(), [&](int a, int b) { return table.entries[a].mu > table.entries[b].mu; });
  std::uint64_t r = 0;
  std::vector<double> reference, targets;
  std::vector<std::uint64_t> sizes;
  for (int k : degrees) {
    const auto mult = harmonics::multiplicity(cfg.d, k);
    r += mult;
    sizes.push_back(mult);
    targets.push_back(table.entries[k].mu);
    for (std::uint64_t i = 0; i < mult; ++i) reference.push_back(table.entries[k].mu);
  }
  if (degrees.empty() || r > static_cast<std::uint64_t>(cfg.n)) {
    report["alignment"] = nullptr;
    report["alignment_note"] = "harmonic basis larger than the sample; alignment skipped";
  } else {
    const Eigen::MatrixXd v = spectra::build_V_full(samples, degrees, rng::derive_seed(cfg.seed, "gram/basis", 0));
    const auto rep = spectra::alignment(v, sys, static_cast<Eigen::Index>(r), reference);
    const auto clusters = spectra::cluster_diagnostics(sys.values, sizes, targets);
    report["alignment"] = {{"degrees", degrees},
                           {"r", r},
                           {"orthonormality_defect", rep.orthonormality_defect},
                           {"cross_energy", rep.cross_energy},
                           {"projector_distance", rep.projector_distance},
                           {"eigengaps", rep.eigengaps},
                           {"cluster_relative_errors", clusters.relative_errors},
                           {"cluster_max_relative_error", clusters.max_relative_error},
                           {"clusters_separated", clusters.separated}};
  }

  const auto dir = detail::prepare_dir(cfg.output_dir);
  detail::write_text(dir / "eigenvalues.csv", csv.str());
  detail::write_json(dir / "alignment.json", report);
  return ok;
}

/// Runs one training experiment and writes curves.csv and manifest.json.
inline int cmd_train(const config::CliConfig& cfg, std::ostream& log = std::cerr) {
  const auto exp = config::to_experiment(cfg);
  const int stride = std::max(cfg.record_every, (cfg.steps / 20 / cfg.record_every) * cfg.record_every);
  auto progress = [&](int step, double loss) {
    if (step % stride == 0 || step == cfg.steps) log << "step " << step << " loss " << loss << '\n';
  };
  const auto rec = experiments::run_experiment(exp, progress);

  std::ostringstream csv;
  experiments::write_curves_csv(csv, rec);
  json probes = json::array();
  for (const auto& c : rec.curves) probes.push_back({{"k", c.k}, {"zeta", config::detail::vector_json(c.zeta)}});
  json manifest{{"schema_version", config::kSchemaVersion},
                {"format_version", kFormatVersion},
                {"run_id", config::run_id(cfg)},
                {"command", "train"},
                {"config", config::to_json(cfg)},
                {"seeds", {{"seed", cfg.seed}, {"data", rec.seeds.data}, {"network", rec.seeds.network}, {"test", rec.seeds.test}}},
                {"probes", probes},
                {"records", rec.steps.size()},
                {"truncated", rec.diverged_at.has_value()},
                {"diverged_at", rec.diverged_at ? json(*rec.diverged_at) : json(nullptr)},
                {"max_flip_fraction", rec.max_flip_fraction},
                {"warnings", rec.warnings},
                {"runtime", detail::runtime_info()},
                {"files", {"curves.csv", "manifest.json"}}};
  const auto dir = detail::prepare_dir(cfg.output_dir);
  detail::write_text(dir / "curves.csv", csv.str());
  detail::write_json(dir / "manifest.json", manifest);
  for (const auto& w : rec.warnings) log << "warning: " << w << '\n';
  if (rec.diverged_at) {
    log << "diverged at step " << *rec.diverged_at << '\n';
    return divergence;
  }
  return ok;
}

enum class Fault { none, kappa2_sign };

struct CheckResult {
  std::string name;
  bool passed = false;
  json measured;
};

/// Runs the property suites. `quick` skips the Monte-Carlo heavy checks.
inline std::vector<CheckResult> verify_checks(bool full, Fault fault = Fault::none) {
  std::vector<CheckResult> out;
  auto add = [&](std::string name, bool passed, json measured) { out.push_back({std::move(name), passed, std::move(measured)}); };

  const std::function<double(double)> profile = [fault](double t) {
    const double k2 = fault == Fault::kappa2_sign ? -ntk::kappa2_hat(t) : ntk::kappa2_hat(t);
    return t * ntk::kappa1_hat(t) + 2.0 * k2;
  };

  {
    const double same = profile(1.0), opposite = profile(-1.0), orth = profile(0.0);
    add("kernel_values",
        std::abs(same - 1.5) <= 1e-12 && std::abs(opposite) <= 1e-12 && std::abs(orth - 1.0 / std::numbers::pi) <= 1e-12,
        {{"kappa_same", same}, {"kappa_opposite", opposite}, {"kappa_orthogonal", orth}});
  }
  {
    const auto rule = spectra::direct_rule(2, 200);
    double trace = 0.0, worst_odd = 0.0;
    bool monotone = true;
    for (int k = 0; k <= 200; ++k) {
      const double mu = spectra::mu_direct(2, k, rule, profile);
      const double term = mu * static_cast<double>(harmonics::multiplicity(2, k));
      if (term < -1e-12) monotone = false;
      trace += term;
      if (k >= 3 && k % 2 == 1) worst_odd = std::max(worst_odd, std::abs(mu));
    }
    add("mercer_trace", monotone && trace >= 0.98 * 1.5 && trace <= 1.5 + 1e-8 && worst_odd <= 1e-10,
        {{"trace", trace}, {"monotone", monotone}, {"max_abs_odd_mu", worst_odd}});
  }
  {
    double worst = 0.0;
    for (int d : {2, 5, 10}) {
      const auto full_rule = spectra::direct_rule(d, 20);
      const auto half = spectra::half_rule(d, 21);
      for (int k = 0; k <= 20; ++k) worst = std::max(worst, std::abs(spectra::mu_direct(d, k, full_rule, profile) - spectra::mu_assembled(d, k, half)));
    }
    add("cross_route", worst <= 1e-8, {{"max_abs_difference", worst}});
  }
  {
    double worst = 0.0;
    const auto r200 = harmonics::angular_rule(2, 200), r400 = harmonics::angular_rule(2, 400);
    for (int k = 0; k <= 60; ++k) worst = std::max(worst, std::abs(spectra::mu_direct(2, k, r200, profile) - spectra::mu_direct(2, k, r400, profile)));
    add("quadrature_doubling", worst < 1e-10, {{"max_abs_change", worst}});
  }
  {
    const auto rep = spectra::order_check(2, {10, 20, 30, 40, 50, 60}, 2, {5, 10, 15, 20, 25, 30});
    add("order_checks", rep.passed, {{"spread_k", rep.spread_k}, {"spread_d", rep.spread_d}});
  }
  {
    double worst = 0.0;
    for (int d : {2, 5, 9}) {
      const auto rule = harmonics::quadrature_rule(d, 40);
      for (int k = 0; k <= 20; ++k) {
        const double v = static_cast<double>(harmonics::multiplicity(d, k)) *
                         rule.integrate([&](double t) { const double p = harmonics::legendre(d, k, t); return p * p; });
        worst = std::max(worst, std::abs(v - 1.0));
      }
    }
    add("addition_formula", worst <= 1e-10, {{"max_abs_error", worst}});
  }
  {
    // Central differences of the loss along random directions.
    double worst = 0.0;
    int cases = 0;
    for (std::uint64_t c = 0; cases < (full ? 100 : 20) && c < 1000; ++c) {
      const auto net = network::init(16, 3, rng::derive_seed(c, "verify/net", 0));
      const auto x = sphere::sample_uniform(3, 1, rng::derive_seed(c, "verify/x", 0));
      const Eigen::VectorXd z = net.w1 * x.point(0);
      if (z.cwiseAbs().minCoeff() < 1e-3) continue;
      const auto g = network::gradients(net, x.point(0));
      rng::CounterRng gen(c, "verify/direction");
      Eigen::MatrixXd dir1(net.w1.rows(), net.w1.cols());
      Eigen::RowVectorXd dir2(net.w2.size());
      for (Eigen::Index i = 0; i < dir1.size(); ++i) dir1.data()[i] = gen.normal();
      for (Eigen::Index i = 0; i < dir2.size(); ++i) dir2[i] = gen.normal();
      const double h = 1e-4;
      auto shifted = [&](double s) {
        network::NetworkState moved(net.w1 + s * dir1, net.w2 + s * dir2);
        return network::forward(moved, x.point(0));
      };
      const double fd = (shifted(h) - shifted(-h)) / (2.0 * h);
      const double an = (g.w1.cwiseProduct(dir1)).sum() + g.w2.dot(dir2);
      worst = std::max(worst, std::abs(fd - an) / std::max(1e-12, std::abs(an)));
      ++cases;
    }
    add("gradient_check", worst <= 1e-5, {{"cases", cases}, {"max_relative_error", worst}});
  }
  {
    const auto a = sphere::sample_uniform(4, 50, 11), b = sphere::sample_uniform(4, 50, 11);
    add("sampling_determinism", a.points() == b.points(), {{"n", 50}});
  }

  if (full) {
    const auto table = spectra::spectrum_table(2, 2);
    const std::vector<double> targets{table.entries[0].mu, table.entries[1].mu, table.entries[2].mu};
    std::vector<double> errors;
    bool separated = true;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto s = sphere::sample_uniform(2, 2000, rng::derive_seed(seed, "verify/gram", 0));
      const auto ev = spectra::eig_sym(ntk::gram_ntk(s).k_inf / 2000.0, false).values;
      const auto diag = spectra::cluster_diagnostics(ev, {1, 3, 5}, targets);
      errors.push_back(diag.max_relative_error);
      separated = separated && diag.separated;
    }
    std::vector<double> sorted = errors;
    std::sort(sorted.begin(), sorted.end());
    add("gram_clusters", sorted[2] <= 0.15, {{"per_seed_max_relative_error", errors}, {"median", sorted[2]}, {"separated", separated}});
  }
  return out;
}

inline int cmd_verify(bool full, const std::string& output_dir, Fault fault = Fault::none, std::ostream& log = std::cerr) {
  const auto checks = verify_checks(full, fault);
  json report{{"schema_version", config::kSchemaVersion}, {"level", full ? "full" : "quick"}, {"checks", json::array()}};
  bool all = true;
  for (const auto& c : checks) {
    report["checks"].push_back({{"name", c.name}, {"passed", c.passed}, {"measured", c.measured}});
    log << (c.passed ? "PASS " : "FAIL ") << c.name << '\n';
    all = all && c.passed;
  }
  report["passed"] = all;
  const auto dir = detail::prepare_dir(output_dir);
  detail::write_json(dir / "verify.json", report);
  return all ? ok : verification_failure;
}

}  // namespace ntkbias::commands
