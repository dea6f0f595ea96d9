#pragma once

// Strict JSON configuration shared by every command, its defaults, and the conversion
// into library types. Random ingredients left unspecified (directions, Gaussian
// parameters) are drawn from the run seed.

#include <json.hpp>

#include <Eigen/Core>

#include <cstdint>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ntkbias/errors.hpp"
#include "ntkbias/experiments.hpp"
#include "ntkbias/rng.hpp"
#include "ntkbias/sphere.hpp"

namespace ntkbias::config {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

struct CliConfig {
  int d = 9;
  long long n = 1000;
  long long m = 4096;
  int steps = 2000;
  double rho = 0.5;
  double theta = 0.1;
  int record_every = 10;
  std::uint64_t seed = 0;
  int quadrature_order = 200;
  int k_max = 20;
  json distribution = json{{"kind", "uniform"}};
  json target = json{{"kind", "harmonic_sum"},
                     {"terms", json::array({json{{"k", 1}, {"a", 1.0}}, json{{"k", 2}, {"a", 1.0}}, json{{"k", 4}, {"a", 1.0}}})}};
  json probes = nullptr;  // null: derived from the target
  bool normalized_probes = true;
  bool test_set = false;
  bool linearized = false;
  bool empirical_gram = false;
  std::string layers = "both";
  std::vector<int> alignment_degrees{0, 1, 2};
  std::string output_dir = "out";
};

namespace detail {

inline void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <class T>
T get(const json& obj, const char* key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

inline Eigen::VectorXd to_vector(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + " must be an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(where + " must be an array of numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

inline Eigen::MatrixXd to_matrix(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where + " must be a non-empty array of rows");
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  Eigen::MatrixXd a(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    const Eigen::VectorXd row = to_vector(j[r], where);
    if (static_cast<std::size_t>(row.size()) != cols) throw ConfigError(where + " rows differ in length");
    a.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return a;
}

inline Eigen::VectorXd unit_vector(const json& j, int d, const std::string& where) {
  const Eigen::VectorXd v = to_vector(j, where);
  if (v.size() != d + 1) throw ConfigError(where + " must have d+1 entries");
  if (!(std::abs(v.norm() - 1.0) <= 1e-6)) throw ConfigError(where + " must be a unit vector");
  return v / v.norm();
}

inline json vector_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

}  // namespace detail

inline json to_json(const CliConfig& c) {
  return json{{"schema_version", kSchemaVersion},
              {"d", c.d},
              {"n", c.n},
              {"m", c.m},
              {"T", c.steps},
              {"rho", c.rho},
              {"theta", c.theta},
              {"record_every", c.record_every},
              {"seed", c.seed},
              {"quadrature_order", c.quadrature_order},
              {"k_max", c.k_max},
              {"distribution", c.distribution},
              {"target", c.target},
              {"probes", c.probes},
              {"normalized_probes", c.normalized_probes},
              {"test_set", c.test_set},
              {"linearized", c.linearized},
              {"empirical_gram", c.empirical_gram},
              {"layers", c.layers},
              {"alignment_degrees", c.alignment_degrees},
              {"output_dir", c.output_dir}};
}

/// Validates every range before any computation starts.
inline void validate(const CliConfig& c) {
  if (c.d < 1) throw ConfigError("d must be >= 1");
  if (c.n < 1) throw ConfigError("n must be >= 1");
  if (c.m < 1) throw ConfigError("m must be >= 1");
  if (c.steps < 0) throw ConfigError("T must be >= 0");
  if (!(c.rho >= 0.0)) throw ConfigError("rho must be >= 0");
  if (!(c.theta > 0.0)) throw ConfigError("theta must be > 0");
  if (c.record_every < 1) throw ConfigError("record_every must be >= 1");
  if (c.quadrature_order < 2) throw ConfigError("quadrature_order must be >= 2");
  if (c.k_max < 0) throw ConfigError("k_max must be >= 0");
  if (c.layers != "both" && c.layers != "first" && c.layers != "second") throw ConfigError("layers must be both, first or second");
  for (int k : c.alignment_degrees)
    if (k < 0) throw ConfigError("alignment_degrees must be nonnegative");
  if (c.output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

/// Parses a document; absent keys keep their defaults, unknown keys are rejected.
inline CliConfig from_json(const json& j) {
  static const std::set<std::string> keys{"schema_version", "d", "n", "m", "T", "rho", "theta", "record_every", "seed",
                                          "quadrature_order", "k_max", "distribution", "target", "probes",
                                          "normalized_probes", "test_set", "linearized", "empirical_gram", "layers",
                                          "alignment_degrees", "output_dir"};
  detail::check_keys(j, keys, "config");
  CliConfig c;
  const std::string at = "config";
  if (j.contains("schema_version") && detail::get<int>(j, "schema_version", at) != kSchemaVersion) {
    throw ConfigError("unsupported schema_version");
  }
  if (j.contains("d")) c.d = detail::get<int>(j, "d", at);
  if (j.contains("n")) c.n = detail::get<long long>(j, "n", at);
  if (j.contains("m")) c.m = detail::get<long long>(j, "m", at);
  if (j.contains("T")) c.steps = detail::get<int>(j, "T", at);
  if (j.contains("rho")) c.rho = detail::get<double>(j, "rho", at);
  if (j.contains("theta")) c.theta = detail::get<double>(j, "theta", at);
  if (j.contains("record_every")) c.record_every = detail::get<int>(j, "record_every", at);
  if (j.contains("seed")) c.seed = detail::get<std::uint64_t>(j, "seed", at);
  if (j.contains("quadrature_order")) c.quadrature_order = detail::get<int>(j, "quadrature_order", at);
  if (j.contains("k_max")) c.k_max = detail::get<int>(j, "k_max", at);
  if (j.contains("distribution")) c.distribution = j.at("distribution");
  if (j.contains("target")) c.target = j.at("target");
  if (j.contains("probes")) c.probes = j.at("probes");
  if (j.contains("normalized_probes")) c.normalized_probes = detail::get<bool>(j, "normalized_probes", at);
  if (j.contains("test_set")) c.test_set = detail::get<bool>(j, "test_set", at);
  if (j.contains("linearized")) c.linearized = detail::get<bool>(j, "linearized", at);
  if (j.contains("empirical_gram")) c.empirical_gram = detail::get<bool>(j, "empirical_gram", at);
  if (j.contains("layers")) c.layers = detail::get<std::string>(j, "layers", at);
  if (j.contains("alignment_degrees")) c.alignment_degrees = detail::get<std::vector<int>>(j, "alignment_degrees", at);
  if (j.contains("output_dir")) c.output_dir = detail::get<std::string>(j, "output_dir", at);
  validate(c);
  return c;
}

inline CliConfig parse(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return from_json(j);
}

inline sphere::DistributionSpec resolve_distribution(const json& j, int d, std::uint64_t seed) {
  const std::string at = "distribution";
  if (!j.is_object() || !j.contains("kind")) throw ConfigError("distribution needs a kind");
  const auto kind = detail::get<std::string>(j, "kind", at);
  const std::uint64_t dseed = rng::derive_seed(seed, "config/distribution", 0);
  try {
    if (kind == "uniform") {
      detail::check_keys(j, {"kind"}, at);
      return sphere::Uniform{};
    }
    if (kind == "piecewise_uniform") {
      detail::check_keys(j, {"kind", "zeta0", "positive_mass"}, at);
      const auto zeta = j.contains("zeta0") ? sphere::SpherePoint::normalize(detail::unit_vector(j["zeta0"], d, at + ".zeta0"))
                                            : sphere::random_direction(d, dseed, "config/zeta0");
      const double mass = j.contains("positive_mass") ? detail::get<double>(j, "positive_mass", at) : 0.25;
      if (!(mass >= 0.0 && mass <= 1.0)) throw ConfigError("positive_mass must lie in [0, 1]");
      return sphere::PiecewiseUniform{zeta, mass};
    }
    if (kind == "normalized_gaussian") {
      detail::check_keys(j, {"kind", "mean", "cov_factor", "factor_width"}, at);
      const int width = j.contains("factor_width") ? detail::get<int>(j, "factor_width", at) : 20;
      if (width < 1) throw ConfigError("factor_width must be >= 1");
      auto g = sphere::random_gaussian_spec(d, width, dseed);
      if (j.contains("mean")) g.mean = detail::to_vector(j["mean"], at + ".mean");
      if (j.contains("cov_factor")) g.cov_factor = detail::to_matrix(j["cov_factor"], at + ".cov_factor");
      return g;
    }
    if (kind == "gaussian_mixture") {
      detail::check_keys(j, {"kind", "components", "count", "factor_width"}, at);
      if (j.contains("components")) {
        sphere::GaussianMixture mix;
        for (const auto& cj : j["components"]) {
          detail::check_keys(cj, {"weight", "mean", "cov_factor"}, at + ".components[]");
          mix.components.push_back({detail::get<double>(cj, "weight", at),
                                    {detail::to_vector(cj.at("mean"), at + ".mean"), detail::to_matrix(cj.at("cov_factor"), at + ".cov_factor")}});
        }
        return mix;
      }
      const int count = j.contains("count") ? detail::get<int>(j, "count", at) : 3;
      const int width = j.contains("factor_width") ? detail::get<int>(j, "factor_width", at) : 20;
      if (count < 1 || width < 1) throw ConfigError("count and factor_width must be >= 1");
      return sphere::random_mixture_spec(d, width, count, dseed);
    }
  } catch (const json::exception& e) {
    throw ConfigError(at + ": " + e.what());
  }
  throw ConfigError("unknown distribution kind '" + kind + "'");
}

/// Direction given in the config, else a uniform draw keyed by (seed, index).
inline Eigen::VectorXd direction_or_random(const json& j, const char* key, int d, std::uint64_t seed, std::uint64_t index,
                                           const std::string& where) {
  if (j.contains(key) && !j[key].is_null()) return detail::unit_vector(j[key], d, where + "." + key);
  return sphere::random_direction(d, rng::derive_seed(seed, "config/target", 0), "config/zeta", index).coords();
}

inline experiments::TargetSpec resolve_target(const json& j, int d, std::uint64_t seed) {
  const std::string at = "target";
  if (!j.is_object() || !j.contains("kind")) throw ConfigError("target needs a kind");
  const auto kind = detail::get<std::string>(j, "kind", at);
  try {
    if (kind == "harmonic_sum") {
      detail::check_keys(j, {"kind", "terms"}, at);
      experiments::HarmonicSum h;
      std::uint64_t index = 0;
      for (const auto& tj : j.at("terms")) {
        detail::check_keys(tj, {"k", "a", "zeta"}, at + ".terms[]");
        const int k = detail::get<int>(tj, "k", at);
        if (k < 0) throw ConfigError("harmonic degree must be >= 0");
        h.terms.push_back({k, detail::get<double>(tj, "a", at), direction_or_random(tj, "zeta", d, seed, index++, at)});
      }
      if (h.terms.empty()) throw ConfigError("harmonic_sum needs at least one term");
      return h;
    }
    if (kind == "cosine_sum") {
      detail::check_keys(j, {"kind", "a", "zeta"}, at);
      return experiments::CosineSum{direction_or_random(j, "zeta", d, seed, 0, at), detail::get<std::vector<double>>(j, "a", at)};
    }
    if (kind == "power_sum") {
      detail::check_keys(j, {"kind", "p", "zeta"}, at);
      const auto p = detail::get<std::vector<int>>(j, "p", at);
      for (int v : p)
        if (v < 0) throw ConfigError("power_sum exponents must be >= 0");
      return experiments::PowerSum{direction_or_random(j, "zeta", d, seed, 0, at), p};
    }
  } catch (const json::exception& e) {
    throw ConfigError(at + ": " + e.what());
  }
  throw ConfigError("unknown target kind '" + kind + "'");
}

inline std::vector<spectra::Probe> resolve_probes(const json& j, const experiments::TargetSpec& target, int d) {
  if (j.is_null()) return experiments::default_probes(target);
  if (!j.is_array()) throw ConfigError("probes must be an array or null");
  const auto defaults = experiments::default_probes(target);
  std::vector<spectra::Probe> out;
  for (const auto& pj : j) {
    detail::check_keys(pj, {"k", "zeta"}, "probes[]");
    const int k = detail::get<int>(pj, "k", "probes[]");
    if (k < 0) throw ConfigError("probe degree must be >= 0");
    if (pj.contains("zeta")) {
      out.push_back({k, detail::unit_vector(pj["zeta"], d, "probes[].zeta")});
      continue;
    }
    // Use the target direction of the same degree, else the first target direction.
    const spectra::Probe* match = nullptr;
    for (const auto& p : defaults)
      if (p.k == k && !match) match = &p;
    out.push_back({k, match ? match->zeta : defaults.front().zeta});
  }
  return out;
}

inline experiments::ExperimentConfig to_experiment(const CliConfig& c) {
  validate(c);
  experiments::ExperimentConfig e;
  e.d = c.d;
  e.n = c.n;
  e.m = c.m;
  e.steps = c.steps;
  e.rho = c.rho;
  e.theta = c.theta;
  e.record_every = c.record_every;
  e.seed = c.seed;
  e.distribution = resolve_distribution(c.distribution, c.d, c.seed);
  e.target = resolve_target(c.target, c.d, c.seed);
  e.probes = resolve_probes(c.probes, e.target, c.d);
  e.normalized_probes = c.normalized_probes;
  e.test_set = c.test_set;
  e.linearized = c.linearized;
  return e;
}

/// Stable identifier of a configuration: FNV-1a of its canonical serialization,
/// without the output directory.
inline std::string run_id(const CliConfig& c) {
  json j = to_json(c);
  j.erase("output_dir");
  std::ostringstream os;
  os << std::hex << rng::fnv1a(j.dump());
  return os.str();
}

}  // namespace ntkbias::config
