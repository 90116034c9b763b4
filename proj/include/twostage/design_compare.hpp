#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "twostage/data.hpp"
#include "twostage/design.hpp"
#include "twostage/estimation.hpp"
#include "twostage/rng.hpp"

namespace twostage {

// Y_ij(1), Y_ij(0) without interference; J x n, equal cluster sizes.
struct NoInterferencePopulation {
  Eigen::MatrixXd treated;
  Eigen::MatrixXd control;

  int clusters() const noexcept { return static_cast<int>(treated.rows()); }
  int cluster_size() const noexcept { return static_cast<int>(treated.cols()); }
};

// Mechanism-0 columns of a single-mechanism potential-outcome table.
// Throws UnequalClusters when cluster sizes differ.
NoInterferencePopulation population_from_table(const PotentialOutcomeTable& table);

struct PopulationStatistics {
  double eta2[2] = {0.0, 0.0};    // η²(z), indexed by z
  double eta2_w[2] = {0.0, 0.0};  // η²_w(z)
  double eta2_b[2] = {0.0, 0.0};  // η²_b(z)
  double tau2 = 0.0, tau2_w = 0.0, tau2_b = 0.0;
  double ate = 0.0;
  std::vector<double> icc_outcome[2];  // r_j(z)
  std::vector<double> icc_effect;      // r'_j
  // 1 - (η²_w(1) + η²_w(0)) / (η²(1) + η²(0)); the r used by the
  // approximate forms unless one is supplied.
  double pooled_icc = 0.0;
};

PopulationStatistics population_statistics(const NoInterferencePopulation& pop);

// (1/J) Σ_j {treated mean - control mean}.
double ate_two_stage(const ExperimentData& data);
// Pooled treated mean minus pooled control mean.
double ate_complete(const ExperimentData& data);
// Mean of fully treated cluster means minus mean of fully control ones;
// every cluster must sit entirely in one arm.
double ate_cluster(const ExperimentData& data);

enum class VarianceForm { Exact, Approximate };

// Exact: (nJ-1)/(J³(n-1)) Σ_a J_a {η²_w(1)/n_{1a} + η²_w(0)/n_{0a} - τ²_w/n}.
// Approximate: η²_w ≈ (1-r)η² and nJ-1 ≈ nJ ≈ n(J-1) substituted.
double var_two_stage(const NoInterferencePopulation& pop, const DesignSpec& spec,
                     VarianceForm form, std::optional<double> r = std::nullopt);
// η²(1)/N₁ + η²(0)/N₀ - τ²/N; exact in both forms.
double var_complete(const NoInterferencePopulation& pop, long long total_treated);
// Exact: η²_b(1)/J₁ + η²_b(0)/J₀ - τ²_b/J. Approximate: η²_b ≈ rη².
double var_cluster(const NoInterferencePopulation& pop, long long treated_clusters,
                   VarianceForm form, std::optional<double> r = std::nullopt);

// Treated totals that keep the three designs comparable: Σ_a J_a n_{1a} units
// and Σ_a J_a p_a clusters (BadCounts unless integral).
long long matched_treated_units(const DesignSpec& spec);
long long matched_treated_clusters(const DesignSpec& spec);

std::vector<std::string> approximation_identities(VarianceForm form);

struct EfficiencyRatios {
  double complete = 0.0;  // (1-r) Σ q_a p_a Σ q_a / p_a
  double cluster = 0.0;   // complete / (n r)
  bool cluster_infinite = false;
};

EfficiencyRatios efficiency_ratios(double r, int n, const std::vector<double>& p,
                                   const std::vector<double>& q);

struct RandomizationVariances {
  double two_stage = 0.0;
  double complete = 0.0;
  double cluster = 0.0;
  double mean_two_stage = 0.0;
  double mean_complete = 0.0;
  double mean_cluster = 0.0;
  int draws = 0;
};

// Empirical variances of the three estimators over independent randomizations;
// draw d uses make_stream(seed, d).
RandomizationVariances randomization_variances(const NoInterferencePopulation& pop,
                                               const DesignSpec& spec, int draws,
                                               std::uint64_t seed = kDefaultSeed);
RandomizationVariances randomization_variances_serial(const NoInterferencePopulation& pop,
                                                      const DesignSpec& spec, int draws,
                                                      std::uint64_t seed = kDefaultSeed);

}  // namespace twostage
