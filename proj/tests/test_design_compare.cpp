#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "twostage/design_compare.hpp"
#include "twostage/error.hpp"
#include "twostage/simulation.hpp"

using namespace twostage;

namespace {

// Single-arm potential outcomes copied into every mechanism column so the
// enumeration oracle can run without interference.
PotentialOutcomeTable replicate(const NoInterferencePopulation& pop, int m) {
  PotentialOutcomeTable table;
  table.mechanisms = m;
  for (int j = 0; j < pop.clusters(); ++j) {
    Eigen::MatrixXd y(pop.cluster_size(), 2 * m);
    for (int a = 0; a < m; ++a) {
      y.col(2 * a) = pop.treated.row(j).transpose();
      y.col(2 * a + 1) = pop.control.row(j).transpose();
    }
    table.clusters.push_back(y);
  }
  return table;
}

NoInterferencePopulation random_population(int J, int n, double r, std::uint64_t seed) {
  PowerConfig cfg;
  cfg.p = {0.5};
  cfg.q = {1.0};
  cfg.n = n;
  cfg.r = r;
  cfg.rho = 0.5;
  auto dgp = dgp_from_power(cfg, J);
  dgp.theta = Eigen::Vector2d(0.7, 0.0);
  Rng rng = make_stream(seed, 0);
  return population_from_table(generate_potential_outcomes(dgp, rng));
}

}  // namespace

TEST_CASE("estimators on simple data") {
  ExperimentData data;
  data.mechanisms = 1;
  data.mechanism_labels = {1};
  data.clusters.push_back({"a", 0, {3.0, 4.0}, {1.0, 2.0, 0.5}});
  data.clusters.push_back({"b", 0, {-1.0}, {-3.0, -4.0}});
  CHECK(ate_two_stage(data) == doctest::Approx(((3.5 - 7.0 / 6) + (-1.0 + 3.5)) / 2));
  CHECK(ate_complete(data) == doctest::Approx(2.0 - (-3.5 / 5)));

  ExperimentData constant = data;
  for (auto& c : constant.clusters) {
    for (auto& y : c.treated) y = 5.0;
    for (auto& y : c.control) y = 5.0;
  }
  CHECK(ate_two_stage(constant) == 0.0);
  CHECK(ate_complete(constant) == 0.0);

  // Constant unit effect 2.5 on top of cluster-constant baselines.
  ExperimentData shifted;
  shifted.mechanisms = 1;
  shifted.clusters.push_back({"a", 0, {1.0 + 2.5}, {1.0, 1.0}});
  shifted.clusters.push_back({"b", 0, {-2.0 + 2.5, -2.0 + 2.5}, {-2.0}});
  CHECK(ate_two_stage(shifted) == 2.5);

  ExperimentData clustered;
  clustered.mechanisms = 1;
  clustered.clusters.push_back({"t", 0, {2.0, 4.0}, {}});
  clustered.clusters.push_back({"c", 0, {}, {1.0, 1.0}});
  CHECK(ate_cluster(clustered) == doctest::Approx(2.0));
  CHECK_THROWS_AS(ate_cluster(data), Error);
}

TEST_CASE("two-stage design is unbiased and its exact variance matches enumeration") {
  std::mt19937_64 rng(51);
  std::normal_distribution<double> normal(0.0, 1.0);
  NoInterferencePopulation pop;
  pop.treated.resize(4, 3);
  pop.control.resize(4, 3);
  for (int j = 0; j < 4; ++j) {
    const double shift = normal(rng);
    for (int i = 0; i < 3; ++i) {
      pop.control(j, i) = shift + normal(rng);
      pop.treated(j, i) = pop.control(j, i) + 1.0 + 0.5 * normal(rng);
    }
  }
  DesignSpec spec;
  spec.cluster_counts = {2, 2};
  spec.cluster_sizes = {3, 3, 3, 3};
  spec.treated_fraction = {1.0 / 3, 2.0 / 3};
  spec = validate_design(spec);
  const auto table = replicate(pop, 2);
  double mean = 0.0, second = 0.0;
  oracle::for_each_realization(spec, [&](const oracle::Realization& r) {
    const double est = ate_two_stage(oracle::observed(table, r));
    mean += r.weight * est;
    second += r.weight * est * est;
  });
  const auto stats = population_statistics(pop);
  CHECK(mean == doctest::Approx(stats.ate).epsilon(1e-12));
  CHECK(second - mean * mean ==
        doctest::Approx(var_two_stage(pop, spec, VarianceForm::Exact)).epsilon(1e-10));
}

TEST_CASE("population statistics") {
  const auto pop = random_population(30, 10, 0.4, 3);
  const auto s = population_statistics(pop);
  for (int z = 0; z < 2; ++z) {
    // Total = within + between, with the (N - 1) normalizations.
    const double N = 300.0;
    CHECK(s.eta2[z] * (N - 1) == doctest::Approx(s.eta2_w[z] * (N - 1) + s.eta2_b[z] * 29 * 10));
    CHECK(s.icc_outcome[z].size() == 30);
  }
  CHECK(s.pooled_icc > 0.2);
  CHECK(s.pooled_icc < 0.6);
  CHECK(s.ate == doctest::Approx(0.7));
}

TEST_CASE("analytic variances against Monte Carlo") {
  const auto pop = random_population(30, 10, 0.3, 4);
  const auto spec = make_design({10, 10, 10}, std::vector<int>(30, 10), {0.3, 0.5, 0.7});
  const auto mc = randomization_variances(pop, spec, 20000, 9);
  const long long units = matched_treated_units(spec);
  const long long clusters = matched_treated_clusters(spec);
  CHECK(units == 150);
  CHECK(clusters == 15);
  auto rel = [](double a, double b) { return std::abs(a / b - 1.0); };
  CHECK(rel(var_two_stage(pop, spec, VarianceForm::Exact), mc.two_stage) <= 0.05);
  CHECK(rel(var_complete(pop, units), mc.complete) <= 0.05);
  CHECK(rel(var_cluster(pop, clusters, VarianceForm::Exact), mc.cluster) <= 0.05);
  const double approx = var_two_stage(pop, spec, VarianceForm::Approximate);
  MESSAGE("approximate two-stage form off by " << (approx / mc.two_stage - 1.0));
  CHECK(rel(approx, mc.two_stage) <= 0.20);
  const auto serial = randomization_variances_serial(pop, spec, 500, 9);
  const auto parallel = randomization_variances(pop, spec, 500, 9);
  CHECK(serial.two_stage == parallel.two_stage);
  CHECK(serial.cluster == parallel.cluster);
}

TEST_CASE("approximate forms") {
  const auto pop = random_population(12, 6, 0.3, 5);
  const auto spec = make_design({6, 6}, std::vector<int>(12, 6), {0.5, 0.5});
  SUBCASE("r = 0 leaves only within terms, cluster design vanishes") {
    const auto s = population_statistics(pop);
    const double expected =
        (1.0 / 144.0) * 12 * (s.eta2[1] / 3 + s.eta2[0] / 3) - s.tau2 / (6 * 12.0);
    CHECK(var_two_stage(pop, spec, VarianceForm::Approximate, 0.0) == doctest::Approx(expected));
    CHECK(var_cluster(pop, 6, VarianceForm::Approximate, 0.0) == 0.0);
  }
  SUBCASE("identities listed only for the approximate form") {
    CHECK(approximation_identities(VarianceForm::Exact).empty());
    CHECK(approximation_identities(VarianceForm::Approximate).size() == 5);
  }
  SUBCASE("bad counts") {
    CHECK_THROWS_AS(var_complete(pop, 0), Error);
    CHECK_THROWS_AS(var_cluster(pop, 12, VarianceForm::Exact), Error);
    const auto odd = make_design({1, 2}, std::vector<int>(3, 4), {0.25, 0.5});
    try {
      matched_treated_clusters(odd);
      FAIL("expected BadCounts");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::BadCounts);
    }
  }
}

TEST_CASE("efficiency ratios") {
  const auto flat = efficiency_ratios(0.3, 10, {0.4, 0.4, 0.4}, {0.2, 0.3, 0.5});
  CHECK(flat.complete == 1.0 - 0.3);
  CHECK(flat.cluster == doctest::Approx(0.7 / 3.0));
  const auto zero = efficiency_ratios(0.0, 10, {0.4, 0.6}, {0.5, 0.5});
  CHECK(zero.cluster_infinite);
  std::mt19937_64 rng(52);
  std::uniform_real_distribution<double> unit(0.01, 1.0);
  for (int t = 0; t < 1000; ++t) {
    const int m = 2 + t % 4;
    std::vector<double> p(m), q(m);
    double total = 0.0;
    for (int a = 0; a < m; ++a) {
      p[a] = unit(rng);
      q[a] = unit(rng);
      total += q[a];
    }
    for (auto& x : q) x /= total;
    const double r = unit(rng) * 0.99;
    const auto ratio = efficiency_ratios(r, 20, p, q);
    CHECK(ratio.complete >= (1.0 - r) * (1.0 - 1e-12));
    CHECK(ratio.cluster == doctest::Approx(ratio.complete / (20 * r)));
  }
  CHECK_THROWS_AS(efficiency_ratios(0.3, 10, {0.0, 0.5}, {0.5, 0.5}), Error);
}

TEST_CASE("complete design variance ignores the cluster layout") {
  auto pop = random_population(6, 4, 0.5, 6);
  const double before = var_complete(pop, 12);
  // Moving units between clusters changes nothing the formula sees.
  std::swap(pop.treated(0, 0), pop.treated(5, 3));
  std::swap(pop.control(0, 0), pop.control(5, 3));
  CHECK(var_complete(pop, 12) == doctest::Approx(before).epsilon(1e-14));
}
