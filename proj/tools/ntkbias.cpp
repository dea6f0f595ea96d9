// Command-line front end: spectrum | gram | train | verify | print-config.

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "ntkbias/commands.hpp"
#include "ntkbias/config.hpp"

namespace {

using nlohmann::json;
using ntkbias::commands::ExitCode;

/// Flags that override fields of the JSON config.
struct Overrides {
  std::string config_path;
  std::optional<int> d, steps, record_every, quadrature_order, k_max;
  std::optional<long long> n, m;
  std::optional<double> rho, theta;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir, layers;
  bool test_set = false, linearized = false, empirical_gram = false, raw_probes = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON config file");
    app->add_option("--d", d, "sphere dimension");
    app->add_option("--n", n, "sample count");
    app->add_option("--m", m, "network width");
    app->add_option("--T", steps, "gradient-descent steps");
    app->add_option("--rho", rho, "effective rate");
    app->add_option("--theta", theta, "output scale");
    app->add_option("--record-every", record_every, "record stride");
    app->add_option("--seed", seed, "run seed");
    app->add_option("--quadrature-order", quadrature_order, "quadrature nodes");
    app->add_option("--k-max", k_max, "largest degree");
    app->add_option("--output-dir", output_dir, "output directory");
    app->add_option("--layers", layers, "both, first or second");
    app->add_flag("--test-set", test_set, "also project on a fresh uniform sample");
    app->add_flag("--linearized", linearized, "iterate the linearized dynamics instead of training");
    app->add_flag("--empirical-gram", empirical_gram, "also build the finite-width Gram matrix");
    app->add_flag("--raw-probes", raw_probes, "project on P_k without the sqrt(N) normalization");
  }

  ntkbias::config::CliConfig resolve() const {
    json j = json::object();
    if (!config_path.empty()) {
      std::ifstream is(config_path);
      if (!is) throw ntkbias::ConfigError("cannot read config file " + config_path);
      std::stringstream ss;
      ss << is.rdbuf();
      try {
        j = json::parse(ss.str());
      } catch (const json::parse_error& e) {
        throw ntkbias::ConfigError(std::string("config is not valid JSON: ") + e.what());
      }
    }
    if (d) j["d"] = *d;
    if (n) j["n"] = *n;
    if (m) j["m"] = *m;
    if (steps) j["T"] = *steps;
    if (rho) j["rho"] = *rho;
    if (theta) j["theta"] = *theta;
    if (record_every) j["record_every"] = *record_every;
    if (seed) j["seed"] = *seed;
    if (quadrature_order) j["quadrature_order"] = *quadrature_order;
    if (k_max) j["k_max"] = *k_max;
    if (output_dir) j["output_dir"] = *output_dir;
    if (layers) j["layers"] = *layers;
    if (test_set) j["test_set"] = true;
    if (linearized) j["linearized"] = true;
    if (empirical_gram) j["empirical_gram"] = true;
    if (raw_probes) j["normalized_probes"] = false;
    return ntkbias::config::from_json(j);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NTK spectra, Gram diagnostics and spectral-bias training runs"};
  app.require_subcommand(1);

  auto* spectrum = app.add_subcommand("spectrum", "Mercer eigenvalues by both routes");
  ntkbias::commands::SpectrumOptions sopt;
  std::string spectrum_config;
  spectrum->add_option("--config", spectrum_config, "JSON config file (d, k_max, quadrature_order, output_dir)");
  std::optional<int> s_d, s_k, s_q;
  std::optional<std::string> s_out;
  spectrum->add_option("--d", s_d, "sphere dimension");
  spectrum->add_option("--k-max", s_k, "largest degree");
  spectrum->add_option("-Q,--quadrature-order", s_q, "quadrature nodes");
  spectrum->add_option("--output", s_out, "CSV path");

  Overrides gram_opt, train_opt, print_opt;
  auto* gram = app.add_subcommand("gram", "Gram eigenvalues and alignment report");
  gram_opt.attach(gram);
  auto* train = app.add_subcommand("train", "train and record projection curves");
  train_opt.attach(train);
  auto* print = app.add_subcommand("print-config", "print the full config with defaults");
  print_opt.attach(print);

  auto* verify = app.add_subcommand("verify", "run the property suites");
  std::string level = "quick", verify_dir = "out", fault;
  verify->add_option("level", level, "quick or full")->check(CLI::IsMember({"quick", "full"}));
  verify->add_option("--output-dir", verify_dir, "directory for verify.json");
  verify->add_option("--inject-fault", fault, "deliberately break a component")->check(CLI::IsMember({"kappa2-sign"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ExitCode::ok : ExitCode::config_error;
  }

  try {
    if (*spectrum) {
      if (!spectrum_config.empty()) {
        Overrides o;
        o.config_path = spectrum_config;
        const auto c = o.resolve();
        sopt.d = c.d;
        sopt.k_max = c.k_max;
        sopt.quadrature_order = c.quadrature_order;
        sopt.output = (std::filesystem::path(c.output_dir) / "spectrum.csv").string();
      }
      if (s_d) sopt.d = *s_d;
      if (s_k) sopt.k_max = *s_k;
      if (s_q) sopt.quadrature_order = *s_q;
      if (s_out) sopt.output = *s_out;
      return ntkbias::commands::cmd_spectrum(sopt);
    }
    if (*gram) return ntkbias::commands::cmd_gram(gram_opt.resolve());
    if (*train) return ntkbias::commands::cmd_train(train_opt.resolve());
    if (*print) {
      std::cout << ntkbias::config::to_json(print_opt.resolve()).dump(2) << '\n';
      return ExitCode::ok;
    }
    if (*verify) {
      const auto f = fault == "kappa2-sign" ? ntkbias::commands::Fault::kappa2_sign : ntkbias::commands::Fault::none;
      return ntkbias::commands::cmd_verify(level == "full", verify_dir, f);
    }
  } catch (const ntkbias::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return ExitCode::config_error;
  } catch (const ntkbias::ParameterError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return ExitCode::config_error;
  } catch (const ntkbias::DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return ExitCode::divergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ExitCode::failure;
  }
  return ExitCode::failure;
}
