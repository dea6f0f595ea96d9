#include <gtest/gtest.h>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include <cmath>
#include <numbers>

#include "ntkbias/spectra.hpp"

using namespace ntkbias;

namespace {

// Independent oracle: tanh-sinh quadrature of the closed-form profile against the
// explicitly written sphere density.
double mu_oracle(int d, int k) {
  boost::math::quadrature::tanh_sinh<double> integrator;
  const double c = std::exp(std::lgamma((d + 1) / 2.0) - std::lgamma(d / 2.0)) / std::sqrt(std::numbers::pi);
  auto f = [&](double t) {
    const double a = std::acos(t);
    const double s = std::sqrt(std::max(0.0, 1.0 - t * t));
    const double profile = (3.0 * t * (std::numbers::pi - a) + 2.0 * s) / (2.0 * std::numbers::pi);
    return profile * harmonics::legendre(d, k, t) * c * std::pow(1.0 - t * t, 0.5 * (d - 2));
  };
  return integrator.integrate(f, -1.0, 1.0, 1e-14);
}

}  // namespace

TEST(ActivationCoefficient, KnownValues) {
  for (int d : {1, 2, 5, 9, 10}) {
    const auto rule = spectra::half_rule(d, 10);
    EXPECT_NEAR(spectra::activation_coefficient(d, 0, spectra::ActivationOrder::step, rule), 0.5, 1e-10);
    EXPECT_NEAR(spectra::activation_coefficient(d, 1, spectra::ActivationOrder::relu, rule), 1.0 / (2.0 * (d + 1)), 1e-10);
  }
  EXPECT_NEAR(spectra::activation_coefficient(5, 2, spectra::ActivationOrder::step, spectra::half_rule(5, 10)), 0.0, 1e-10);
}

TEST(MuDirect, AgreesWithTanhSinh) {
  for (int d : {2, 3, 5, 9, 10}) {
    const auto rule = spectra::direct_rule(d, 20);
    for (int k = 0; k <= 12; ++k) EXPECT_NEAR(spectra::mu_direct(d, k, rule), mu_oracle(d, k), 1e-10) << d << "," << k;
  }
}

TEST(MuDirect, SmallDimensionValues) {
  // d = 2 values by the tanh-sinh oracle, frozen as exact fractions.
  const auto rule = spectra::direct_rule(2, 4);
  EXPECT_NEAR(spectra::mu_direct(2, 0, rule), 7.0 / 16.0, 1e-12);
  EXPECT_NEAR(spectra::mu_direct(2, 1, rule), 0.25, 1e-12);
  EXPECT_NEAR(spectra::mu_direct(2, 2, rule), 13.0 / 256.0, 1e-12);
  EXPECT_NEAR(spectra::mu_direct(2, 4, rule), 3.0 / 1024.0, 1e-12);
  EXPECT_NEAR(mu_oracle(2, 2), 13.0 / 256.0, 1e-12);
}

TEST(MuDirect, OddDegreesVanishAndEvenDecay) {
  for (int d : {2, 5, 10}) {
    const auto rule = spectra::direct_rule(d, 40);
    for (int k = 3; k <= 39; k += 2) EXPECT_LE(std::abs(spectra::mu_direct(d, k, rule)), 1e-10);
  }
  const auto rule = spectra::direct_rule(2, 4);
  EXPECT_GT(spectra::mu_direct(2, 0, rule), spectra::mu_direct(2, 2, rule));
  EXPECT_GT(spectra::mu_direct(2, 2, rule), spectra::mu_direct(2, 4, rule));
  EXPECT_GT(spectra::mu_direct(2, 4, rule), 0.0);
}

TEST(MuAssembled, MatchesDirectRoute) {
  for (int d : {2, 5, 10}) {
    const auto full = spectra::direct_rule(d, 20);
    const auto half = spectra::half_rule(d, 21);
    for (int k = 0; k <= 20; ++k) EXPECT_NEAR(spectra::mu_assembled(d, k, half), spectra::mu_direct(d, k, full), 1e-8);
  }
  const auto half = spectra::half_rule(10, 5);
  EXPECT_EQ(spectra::mu_assembled(10, 3, half), 0.0);
  EXPECT_GT(spectra::mu_assembled(10, 2, half), spectra::mu_assembled(10, 4, half));
  EXPECT_GT(spectra::mu_assembled(10, 4, half), 0.0);
}

TEST(MuDirect, QuadratureDoublingGate) {
  const auto r200 = harmonics::angular_rule(2, 200), r400 = harmonics::angular_rule(2, 400);
  for (int k = 0; k <= 130; ++k) EXPECT_LT(std::abs(spectra::mu_direct(2, k, r200) - spectra::mu_direct(2, k, r400)), 1e-10);
}

TEST(SpectrumTable, MercerTrace) {
  const auto table = spectra::spectrum_table(2, 200);
  double prev = 0.0;
  for (const auto& e : table.entries) {
    EXPECT_GE(e.mu, -1e-12);
    EXPECT_GE(e.cumulative_trace, prev - 1e-15);
    EXPECT_LE(e.cumulative_trace, 1.5 + 1e-8);
    prev = e.cumulative_trace;
  }
  EXPECT_GE(table.entries.back().cumulative_trace, 0.98 * 1.5);
}

TEST(SpectrumTable, ClustersAndR) {
  const auto table = spectra::spectrum_table(2, 8);
  ASSERT_GE(table.clusters.size(), 3u);
  EXPECT_EQ(table.clusters[0].multiplicity, 1u);
  EXPECT_EQ(table.clusters[1].multiplicity, 3u);
  EXPECT_EQ(table.clusters[2].multiplicity, 5u);
  EXPECT_EQ(table.r(3), 9u);
  const auto eigs = table.sorted_eigs(4);
  EXPECT_EQ(eigs.size(), 4u);
  EXPECT_EQ(eigs[1], eigs[3]);
}

TEST(OrderCheck, DecayOrders) {
  const auto rep = spectra::order_check(2, {10, 20, 30, 40, 50, 60}, 2, {5, 10, 15, 20, 25, 30});
  EXPECT_GE(rep.min_ratio_k, 0.1);
  EXPECT_LT(rep.spread_k, 10.0);
  EXPECT_LT(rep.spread_d, 10.0);
  EXPECT_TRUE(rep.passed);
  const auto one = spectra::order_check(2, {10}, 2, {});
  EXPECT_EQ(one.scaled_k.front(), 1.0);
}

TEST(EigSym, SimpleMatrices) {
  const auto id = spectra::eig_sym(Eigen::MatrixXd::Identity(5, 5));
  for (Eigen::Index i = 0; i < 5; ++i) EXPECT_NEAR(id.values[i], 1.0, 1e-14);
  Eigen::MatrixXd diag = Eigen::Vector3d(3, 1, 2).asDiagonal();
  const auto sys = spectra::eig_sym(diag);
  EXPECT_NEAR(sys.values[0], 3.0, 1e-14);
  EXPECT_NEAR(sys.values[1], 2.0, 1e-14);
  EXPECT_NEAR(sys.values[2], 1.0, 1e-14);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(2, 2);
  bad(0, 1) = 1.0;
  EXPECT_THROW(spectra::eig_sym(bad), ParameterError);
}

TEST(EigSym, ReconstructionAndSigns) {
  Eigen::MatrixXd a(50, 50);
  rng::CounterRng gen(1, "test/sym");
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = gen.normal();
  const Eigen::MatrixXd k = a + a.transpose();
  const auto sys = spectra::eig_sym(k);
  const Eigen::MatrixXd rebuilt = sys.vectors * sys.values.asDiagonal() * sys.vectors.transpose();
  EXPECT_LE((rebuilt - k).cwiseAbs().maxCoeff(), 1e-9 * k.cwiseAbs().maxCoeff());
  EXPECT_LE((sys.vectors.transpose() * sys.vectors - Eigen::MatrixXd::Identity(50, 50)).cwiseAbs().maxCoeff(), 1e-10);
  for (Eigen::Index i = 0; i + 1 < 50; ++i) EXPECT_GE(sys.values[i], sys.values[i + 1]);
  for (Eigen::Index c = 0; c < 50; ++c) {
    Eigen::Index arg;
    sys.vectors.col(c).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(sys.vectors(arg, c), 0.0);
  }
}

TEST(EmpiricalSpectrum, TraceAndSingleton) {
  const auto one = spectra::empirical_spectrum(ntk::gram_ntk(sphere::sample_uniform(2, 1, 3)));
  EXPECT_NEAR(one.k_inf[0], 1.5, 1e-12);
  const auto many = spectra::empirical_spectrum(ntk::gram_ntk(sphere::sample_uniform(2, 300, 3)));
  EXPECT_NEAR(many.k_inf.sum(), 1.5, 1e-9);
}

TEST(EmpiricalSpectrum, LeadingClustersMatchMercerValues) {
  const auto table = spectra::spectrum_table(2, 2);
  const std::vector<double> targets{table.entries[0].mu, table.entries[1].mu, table.entries[2].mu};
  std::vector<double> errors;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto ev = spectra::empirical_spectrum(ntk::gram_ntk(sphere::sample_uniform(2, 2000, seed))).k_inf;
    const auto diag = spectra::cluster_diagnostics(ev, {1, 3, 5}, targets);
    errors.push_back(diag.max_relative_error);
    EXPECT_TRUE(diag.separated);
  }
  std::sort(errors.begin(), errors.end());
  EXPECT_LE(errors[2], 0.15);
}

TEST(BuildV, ColumnsAndNorms) {
  const auto s1 = sphere::sample_uniform(2, 1, 1);
  const auto zeta = sphere::random_direction(2, 5, "z").coords();
  const Eigen::MatrixXd v1 = spectra::build_V(s1, {{2, zeta}});
  EXPECT_NEAR(v1(0, 0), harmonics::normalized_gegenbauer(2, 2, zeta, s1.point(0)), 1e-14);

  const auto s = sphere::sample_uniform(2, 2000, 2);
  const Eigen::MatrixXd v = spectra::build_V(s, {{1, zeta}, {2, zeta}, {2, zeta}});
  EXPECT_EQ(v.col(1), v.col(2));
  for (Eigen::Index c = 0; c < 3; ++c) EXPECT_NEAR(v.col(c).norm(), 1.0, 0.05);
}

TEST(HarmonicBasis, OrthonormalUnderQuadrature) {
  const auto b = spectra::harmonic_basis(3, 2, 7);
  // Gram of the basis functions via Monte Carlo with many points.
  const auto s = sphere::sample_uniform(3, 200000, 8);
  const Eigen::MatrixXd v = spectra::evaluate_basis(b, s);
  const Eigen::MatrixXd g = v.transpose() * v;
  EXPECT_LT((g - Eigen::MatrixXd::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff(), 0.02);
}

TEST(Alignment, PerfectAlignment) {
  const auto s = sphere::sample_uniform(2, 200, 3);
  const auto sys = spectra::eig_sym(ntk::gram_ntk(s).k_inf / 200.0);
  const auto rep = spectra::alignment(sys.vectors.leftCols(4), sys, 4);
  EXPECT_NEAR(rep.projector_distance, 0.0, 1e-10);
  EXPECT_NEAR(rep.cross_energy, 0.0, 1e-10);
  EXPECT_THROW(spectra::alignment(sys.vectors, sys, 201), ParameterError);
}

TEST(Alignment, EigengapsSmallAtModerateSize) {
  const auto table = spectra::spectrum_table(2, 2);
  const auto ref = table.sorted_eigs(9);
  std::vector<double> worst;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto s = sphere::sample_uniform(2, 2000, 10 + seed);
    const auto sys = spectra::eig_sym(ntk::gram_ntk(s).k_inf / 2000.0);
    const auto v = spectra::build_V_full(s, {0, 1, 2}, seed);
    const auto rep = spectra::alignment(v, sys, 9, ref);
    worst.push_back(*std::max_element(rep.eigengaps.begin(), rep.eigengaps.end()));
    EXPECT_GE(rep.orthonormality_defect, 0.0);
    EXPECT_LE(rep.projector_distance, 2.0);
  }
  std::sort(worst.begin(), worst.end());
  EXPECT_LE(worst[1], 0.1);
}
