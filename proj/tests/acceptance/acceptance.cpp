// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "ntkbias/ntkbias.hpp"

using namespace ntkbias;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

// Spectral-bias experiment: d=9, n=1000, m=4096, harmonic target of degrees 1, 2, 4.
constexpr double kRho = 4.0;
constexpr double kTheta = 0.1;
constexpr int kSteps = 4000;
constexpr int kSeeds = 5;

config::CliConfig bias_config(std::uint64_t seed, const std::vector<double>& amplitudes, const char* distribution,
                                bool test_set) {
  config::CliConfig c;
  c.rho = kRho;
  c.theta = kTheta;
  c.steps = kSteps;
  c.record_every = 1;
  c.seed = seed;
  c.test_set = test_set;
  c.distribution = nlohmann::json{{"kind", distribution}};
  nlohmann::json terms = nlohmann::json::array();
  const int degrees[] = {1, 2, 4};
  for (std::size_t i = 0; i < 3; ++i) terms.push_back({{"k", degrees[i]}, {"a", amplitudes[i]}});
  c.target = nlohmann::json{{"kind", "harmonic_sum"}, {"terms", terms}};
  return c;
}

struct HalfLives {
  std::vector<long> t;  // step of first halving per degree 1, 2, 4; -1 when never
  bool ordered() const { return t[0] >= 0 && t[1] >= 0 && t[2] >= 0 && t[0] < t[1] && t[1] < t[2]; }
  std::string str() const { return fmt("%ld/%ld/%ld", t[0], t[1], t[2]); }
};

HalfLives half_lives(const experiments::RunRecord& rec) {
  HalfLives h;
  for (int k : {1, 2, 4}) {
    const auto idx = experiments::time_to_fraction(rec.curve(k).values, 0.5);
    h.t.push_back(idx ? rec.steps[*idx] : -1);
  }
  return h;
}

experiments::RunRecord run(const config::CliConfig& c) {
  const auto start = std::chrono::steady_clock::now();
  auto rec = experiments::run_experiment(config::to_experiment(c));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cerr << "  run seed=" << c.seed << " " << c.distribution["kind"].get<std::string>() << " (" << fmt("%.0f", secs)
            << " s)\n";
  return rec;
}

Outcome kernel_exactness() {
  const auto x = sphere::random_direction(9, 1, "acceptance/x").coords();
  Eigen::VectorXd y = sphere::random_direction(9, 2, "acceptance/y").coords();
  y -= y.dot(x) * x;
  y.normalize();
  const double e1 = std::abs(ntk::kappa(x, x) - 1.5);
  const double e2 = std::abs(ntk::kappa(x, -x));
  const double e3 = std::abs(ntk::kappa(x, y) - 1.0 / std::numbers::pi);
  const double worst = std::max({e1, e2, e3});
  return {worst <= 1e-12, fmt("max error %.2e (tol 1e-12)", worst)};
}

Outcome mercer_trace() {
  const auto table = spectra::spectrum_table(2, 200);
  bool monotone = true;
  double prev = 0.0, odd = 0.0;
  for (const auto& e : table.entries) {
    monotone = monotone && e.cumulative_trace >= prev;
    prev = e.cumulative_trace;
    if (e.k >= 3 && e.k % 2 == 1) odd = std::max(odd, std::abs(e.mu * static_cast<double>(e.multiplicity)));
  }
  const bool pass = monotone && prev >= 0.98 * 1.5 && odd <= 1e-10;
  return {pass, fmt("trace %.6f (need >= %.4f), monotone %s, max odd term %.1e", prev, 0.98 * 1.5, monotone ? "yes" : "no", odd)};
}

Outcome cross_route() {
  double worst = 0.0;
  for (int d : {2, 5, 10}) {
    const auto table = spectra::spectrum_table(d, 20);
    for (const auto& e : table.entries)
      if (e.k % 2 == 0) worst = std::max(worst, std::abs(e.mu - e.mu_assembled));
  }
  return {worst <= 1e-8, fmt("max |direct - assembled| %.2e (tol 1e-8)", worst)};
}

Outcome order_checks() {
  std::vector<int> ks, ds;
  for (int k = 10; k <= 60; k += 2) ks.push_back(k);
  for (int d = 5; d <= 30; ++d) ds.push_back(d);
  const auto rep = spectra::order_check(2, ks, 2, ds);
  const bool pass = rep.spread_k < 10.0 && rep.spread_d < 10.0;
  return {pass, fmt("spread over k %.3f, over d %.3f (need < 10)", rep.spread_k, rep.spread_d)};
}

Outcome gram_concentration() {
  const auto table = spectra::spectrum_table(2, 2);
  const std::vector<double> targets{table.entries[0].mu, table.entries[1].mu, table.entries[2].mu};
  std::vector<double> errors;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto s = sphere::sample_uniform(2, 2000, rng::derive_seed(seed, "acceptance/gram", 0));
    const auto ev = spectra::empirical_spectrum(ntk::gram_ntk(s)).k_inf;
    errors.push_back(spectra::cluster_diagnostics(ev, {1, 3, 5}, targets).max_relative_error);
  }
  const double med = median(errors);
  return {med <= 0.15, fmt("median max relative error %.4f (tol 0.15)", med)};
}

Outcome ntk_limit() {
  std::vector<double> small, large;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto s = sphere::sample_uniform(9, 200, rng::derive_seed(seed, "acceptance/limit", 0));
    const Eigen::MatrixXd k_inf = ntk::gram_ntk(s).k_inf;
    small.push_back((ntk::gram_empirical(network::init(1024, 9, rng::derive_seed(seed, "acceptance/net1024", 0)), s) - k_inf)
                        .cwiseAbs()
                        .maxCoeff());
    large.push_back((ntk::gram_empirical(network::init(16384, 9, rng::derive_seed(seed, "acceptance/net16384", 0)), s) - k_inf)
                        .cwiseAbs()
                        .maxCoeff());
  }
  const double ratio = median(large) / median(small);
  return {ratio <= 0.6, fmt("median max deviation %.4f (m=16384) vs %.4f (m=1024), ratio %.3f (tol 0.6)", median(large),
                            median(small), ratio)};
}

Outcome orthonormality_rate() {
  auto defect = [](Eigen::Index n, std::uint64_t seed) {
    const auto s = sphere::sample_uniform(2, n, rng::derive_seed(seed, "acceptance/ortho", static_cast<std::uint64_t>(n)));
    const Eigen::MatrixXd v = spectra::build_V_full(s, {0, 1}, seed);
    return (v.transpose() * v - Eigen::MatrixXd::Identity(v.cols(), v.cols())).cwiseAbs().maxCoeff();
  };
  std::vector<double> a, b;
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    a.push_back(defect(2000, seed));
    b.push_back(defect(8000, seed));
  }
  const double ratio = median(b) / median(a);
  return {ratio >= 0.3 && ratio <= 0.8, fmt("median defect %.4f (n=8000) / %.4f (n=2000) = %.3f (need [0.3, 0.8])", median(b),
                                            median(a), ratio)};
}

Outcome gradient_correctness() {
  rng::CounterRng gen(0, "acceptance/gradient");
  int checked = 0, attempts = 0;
  double worst = 0.0;
  const double h = 1e-6;
  while (checked < 100 && attempts < 10000) {
    ++attempts;
    const int d = 2 + static_cast<int>(gen.uniform() * 5);
    const Eigen::Index m = 4 + static_cast<Eigen::Index>(gen.uniform() * 12);
    const auto net = network::init(m, d, rng::derive_seed(static_cast<std::uint64_t>(attempts), "acceptance/gradnet", 0));
    const auto x = sphere::random_direction(d, static_cast<std::uint64_t>(attempts), "acceptance/gradx").coords();
    // Kink-free: every preactivation stays on one side under the perturbation.
    if ((net.w1 * x).cwiseAbs().minCoeff() < 1e-3) continue;
    const auto g = network::gradients(net, x);
    double num = 0.0, den = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      for (Eigen::Index l = 0; l <= d; ++l) {
        auto p = net, q = net;
        p.w1(j, l) += h;
        q.w1(j, l) -= h;
        const double fd = (network::forward(p, x) - network::forward(q, x)) / (2 * h);
        num += (fd - g.w1(j, l)) * (fd - g.w1(j, l));
        den += g.w1(j, l) * g.w1(j, l);
      }
      auto p = net, q = net;
      p.w2[j] += h;
      q.w2[j] -= h;
      const double fd = (network::forward(p, x) - network::forward(q, x)) / (2 * h);
      num += (fd - g.w2[j]) * (fd - g.w2[j]);
      den += g.w2[j] * g.w2[j];
    }
    worst = std::max(worst, std::sqrt(num / den));
    ++checked;
  }
  return {checked == 100 && worst <= 1e-5, fmt("%d cases, worst relative error %.2e (tol 1e-5)", checked, worst)};
}

Outcome linearized_tracking() {
  std::vector<double> worst;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto s = sphere::sample_uniform(9, 200, rng::derive_seed(seed, "acceptance/linear", 0));
    experiments::HarmonicSum target;
    int idx = 0;
    for (int k : {1, 2, 4})
      target.terms.push_back({k, 1.0, sphere::random_direction(9, seed, "acceptance/linear-target", static_cast<std::uint64_t>(idx++)).coords()});
    const Eigen::VectorXd y = experiments::labels(target, s.points());
    auto net = network::init(8192, 9, rng::derive_seed(seed, "acceptance/linear-net", 0));
    network::TrainConfig tc;
    tc.steps = 500;
    tc.rho = 0.5;
    tc.theta = kTheta;
    tc.record_every = 1;
    const Eigen::VectorXd u0 = y - tc.theta * network::forward_batch(net, s.points());
    const auto actual = network::train(net, s, y, tc);
    const auto lin = network::linear_dynamics(ntk::gram_ntk(s).k_inf, u0, tc.rho, tc.steps, 1);
    double w = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i)
      w = std::max(w, (actual.residuals[i] - lin.residuals[i]).norm() / lin.residuals[i].norm());
    worst.push_back(w);
  }
  const double med = median(worst);
  return {med <= 0.1, fmt("median worst relative L2 distance %.4f over 500 steps (tol 0.10)", med)};
}

// Criteria 8, 9 and 12 share the same training runs.
struct BiasOutcomes {
  Outcome ordering, log_linear, overfit;
};

BiasOutcomes bias_runs() {
  const std::vector<std::vector<double>> panels{{1, 1, 1}, {1, 3, 5}};
  std::vector<int> ordered(2, 0), overfit(2, 0);
  std::string order_detail, fit_detail, overfit_detail;
  double min_r2 = 1.0;
  for (std::size_t p = 0; p < panels.size(); ++p) {
    order_detail += p ? "; " : "";
    order_detail += p ? "a=(1,3,5):" : "a=(1,1,1):";
    overfit_detail += p ? "; a=(1,3,5): " : "a=(1,1,1): ";
    for (int seed = 1; seed <= kSeeds; ++seed) {
      const auto rec = run(bias_config(static_cast<std::uint64_t>(seed), panels[p], "uniform", true));
      const auto h = half_lives(rec);
      ordered[p] += h.ordered();
      order_detail += " " + h.str();
      const double train4 = rec.curve(4).values.back(), test4 = rec.curve(4, true).values.back();
      overfit[p] += test4 > train4;
      if (seed == 1) overfit_detail += fmt("seed 1 k=4 test %.3f vs train %.3f", test4, train4);
      if (p == 0 && seed == 1) {
        const std::vector<double> steps(rec.steps.begin(), rec.steps.end());
        for (int k : {1, 2, 4}) {
          const auto smooth = experiments::moving_average(rec.curve(k).values, 20);
          const auto [b, e] = experiments::descent_phase(smooth, 19);
          double r2 = 0.0;
          try {
            r2 = e - b >= 3 ? experiments::fit_log_linear(steps, smooth, b, e).r2 : 0.0;
          } catch (const FitError&) {
          }
          min_r2 = std::min(min_r2, r2);
          fit_detail += fmt("%sk=%d R2 %.4f over steps %zu..%zu", k == 1 ? "" : ", ", k, r2, b, e - 1);
        }
      }
    }
    overfit_detail += fmt(" (%d/%d seeds)", overfit[p], kSeeds);
  }
  BiasOutcomes out;
  out.ordering = {ordered[0] >= 4 && ordered[1] >= 4,
                  fmt("ordered in %d/5 and %d/5 seeds; half-lives ", ordered[0], ordered[1]) + order_detail};
  out.log_linear = {min_r2 >= 0.9, fit_detail + " (need >= 0.9)"};
  out.overfit = {overfit[0] >= 4 && overfit[1] >= 4, overfit_detail};
  return out;
}

Outcome nonuniform_robustness() {
  std::string detail;
  bool pass = true;
  for (const char* kind : {"piecewise_uniform", "normalized_gaussian", "gaussian_mixture"}) {
    int ordered = 0;
    std::string lives;
    for (int seed = 1; seed <= kSeeds; ++seed) {
      const auto h = half_lives(run(bias_config(static_cast<std::uint64_t>(seed), {1, 1, 1}, kind, false)));
      ordered += h.ordered();
      lives += " " + h.str();
    }
    pass = pass && ordered >= 4;
    detail += fmt("%s%s %d/5 (", detail.empty() ? "" : "; ", kind, ordered) + lives.substr(1) + ")";
  }
  return {pass, detail};
}

std::map<std::string, std::string> read_tree(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::ifstream is(entry.path(), std::ios::binary);
    files[fs::relative(entry.path(), dir).string()] = std::string(std::istreambuf_iterator<char>(is), {});
  }
  return files;
}

Outcome determinism(const fs::path& root) {
  std::ostringstream sink;
  auto produce = [&](const fs::path& dir) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    commands::SpectrumOptions so;
    so.d = 3;
    so.k_max = 30;
    so.output = (dir / "spectrum.csv").string();
    commands::cmd_spectrum(so, sink);
    config::CliConfig c;
    c.d = 3;
    c.n = 120;
    c.m = 256;
    c.steps = 40;
    c.record_every = 5;
    c.seed = 7;
    c.test_set = true;
    c.empirical_gram = true;
    c.output_dir = (dir / "gram").string();
    commands::cmd_gram(c, sink);
    c.output_dir = (dir / "train").string();
    commands::cmd_train(c, sink);
    commands::cmd_verify(false, (dir / "verify").string(), commands::Fault::none, sink);
  };
  produce(root);
  const auto a = read_tree(root);
  produce(root);
  const auto b = read_tree(root);
  std::size_t same = 0;
  for (const auto& [name, bytes] : a) {
    const auto it = b.find(name);
    same += it != b.end() && it->second == bytes;
  }
  const bool pass = !a.empty() && a.size() == b.size() && same == a.size();
  return {pass, fmt("%zu of %zu files byte-identical across repeated runs", same, a.size())};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string output_dir = "acceptance_out";
  std::vector<int> only;
  app.add_option("--output-dir", output_dir, "Scratch directory for command outputs");
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(output_dir);

  auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };
  std::map<int, std::pair<std::string, std::function<Outcome()>>> criteria{
      {1, {"kernel exactness", kernel_exactness}},
      {2, {"Mercer trace", mercer_trace}},
      {3, {"cross-route spectrum", cross_route}},
      {4, {"eigenvalue decay orders", order_checks}},
      {5, {"Gram concentration", gram_concentration}},
      {6, {"NTK limit", ntk_limit}},
      {7, {"orthonormality rate", orthonormality_rate}},
      {10, {"linearized tracking", linearized_tracking}},
      {11, {"non-uniform robustness", nonuniform_robustness}},
      {13, {"gradient correctness", gradient_correctness}},
      {14, {"determinism", [&] { return determinism(fs::path(output_dir) / "determinism"); }}},
  };

  std::map<int, std::pair<std::string, Outcome>> results;
  for (const auto& [id, entry] : criteria) {
    if (!wanted(id)) continue;
    std::cerr << "criterion " << id << ": " << entry.first << "\n";
    results[id] = {entry.first, entry.second()};
  }
  if (wanted(8) || wanted(9) || wanted(12)) {
    std::cerr << "criteria 8, 9, 12: spectral-bias runs\n";
    const auto fig = bias_runs();
    if (wanted(8)) results[8] = {"spectral-bias ordering", fig.ordering};
    if (wanted(9)) results[9] = {"near-linear log decay", fig.log_linear};
    if (wanted(12)) results[12] = {"train/test divergence at k=4", fig.overfit};
  }

  nlohmann::json report = nlohmann::json::object();
  int failures = 0;
  for (const auto& [id, r] : results) {
    const auto& [name, outcome] = r;
    std::cout << (outcome.pass ? "PASS" : "FAIL") << " " << id << " " << name << ": " << outcome.detail << std::endl;
    failures += !outcome.pass;
    report[std::to_string(id)] = {{"name", name}, {"pass", outcome.pass}, {"detail", outcome.detail}};
  }
  std::ofstream(fs::path(output_dir) / "acceptance.json") << report.dump(2) << "\n";
  return failures == 0 ? 0 : 1;
}
