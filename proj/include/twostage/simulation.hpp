#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string_view>
#include <vector>

#include "twostage/data.hpp"
#include "twostage/design.hpp"
#include "twostage/estimation.hpp"
#include "twostage/power.hpp"
#include "twostage/rng.hpp"

namespace twostage {

// How θ is chosen. The alternative schemes put a worst-case effect of size μ
// on the DE, MDE or SE contrast; Null sets every θ_{za} to zero.
enum class EffectScheme { Explicit, DeAlt, MdeAlt, SeAlt, Null };

std::string_view to_string(EffectScheme scheme) noexcept;
EffectScheme parse_scheme(std::string_view name);
// Alternative matching a test target (DE -> DeAlt, ...).
EffectScheme scheme_for(EffectKind kind);

struct DGPConfig {
  Eigen::VectorXd theta;  // θ_{za}, laid out by index_of
  double sigma_b2 = 0.0;
  double sigma_w2 = 1.0;
  double rho = 0.0;
  DesignSpec spec;
  bool center = true;
  EffectScheme scheme = EffectScheme::Explicit;
  double mu = 0.5;

  double icc() const { return sigma_b2 / (sigma_b2 + sigma_w2); }
};

// The uniform schemes are defined for three mechanisms and extended to any m
// by cycling the DE/MDE offsets; `q` weights the MDE rescaling.
Eigen::VectorXd generate_theta(EffectScheme scheme, double mu, int mechanisms,
                               const std::vector<double>& q, Rng& rng);

// Bivariate-normal cluster means around θ, units bivariate normal around their
// cluster means; with `center`, every (z, a) column is shifted so its
// cluster-weighted mean is θ_{za}.
PotentialOutcomeTable generate_potential_outcomes(const DGPConfig& cfg, Rng& rng);

// Observed data for a given assignment: Y_ij = Y_ij(Z_ij, A_j). Cluster ids are
// "c1", "c2", ...; mechanism labels 1..m.
ExperimentData observe(const PotentialOutcomeTable& table, const DesignSpec& spec,
                       const AssignmentRealization& assignment);

ExperimentData realize_data(const PotentialOutcomeTable& table, const DesignSpec& spec, Rng& rng);

enum class SizePattern { Equal, Unequal };

// Cluster sizes for J clusters: all n, or 0.6n, n, 1.4n in turn.
std::vector<int> cluster_sizes(long long clusters, int n, SizePattern pattern);

// σ²_b = rσ², σ²_w = (1 - r)σ², J_a = q_a J. θ is left empty.
DGPConfig dgp_from_power(const PowerConfig& cfg, long long clusters,
                         SizePattern pattern = SizePattern::Equal);
// Inverse of dgp_from_power on equal-size designs (UnequalClusters otherwise).
PowerConfig power_from_dgp(const DGPConfig& dgp);

struct PowerSimulation {
  PowerConfig power;
  long long clusters = 0;
  EffectKind kind = EffectKind::DE;
  EffectScheme scheme = EffectScheme::DeAlt;
  Eigen::VectorXd theta;  // used when scheme is Explicit
  int reps = 1000;
  std::uint64_t seed = kDefaultSeed;
  SizePattern sizes = SizePattern::Equal;
  bool fixed_population = false;  // draw the table once, redraw only assignments
  bool redraw_theta = false;      // new θ every replicate
};

struct PowerEstimate {
  double power = 0.0;
  double standard_error = 0.0;
  int reps = 0;
  int rejections = 0;
  int failures = 0;  // replicates whose test threw; counted as non-rejections
  Eigen::VectorXd theta;
};

// Replicate r draws from make_stream(seed, r); the reduction is in replicate
// order, so the result does not depend on the thread count.
PowerEstimate estimate_power(const PowerSimulation& sim);
PowerEstimate estimate_power_serial(const PowerSimulation& sim);

}  // namespace twostage
