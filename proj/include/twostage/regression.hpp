#pragma once

#include <Eigen/Dense>
#include <vector>

#include "twostage/data.hpp"

namespace twostage {

// InverseProbability: w_ij = 1 / (J_{A_j} n_{j,Z_ij}). Unit weights exist as a
// negative control; they do not reproduce D̂ with unequal cluster sizes.
enum class WeightScheme { InverseProbability, Unit };

// Saturated indicator regression of Y on the 2m (z, a) cells.
struct WlsFit {
  WeightScheme scheme = WeightScheme::InverseProbability;
  Eigen::VectorXd coefficients;  // laid out by index_of
  Eigen::MatrixXd gram;          // XᵀWX
  // Per cluster: treated residuals followed by control residuals.
  std::vector<Eigen::VectorXd> residuals;
};

// Throws EmptyCell when some (z, a) cell has no units.
WlsFit wls_fit(const ExperimentData& data,
               WeightScheme scheme = WeightScheme::InverseProbability);

// Cluster-robust HC2 sandwich
//   G⁻¹ {Σ_j X_jᵀW_j (I - P_j)^{-1/2} ε̂_j ε̂_jᵀ (I - P_j)^{-1/2} W_j X_j} G⁻¹.
// P_j has rank two (the arm indicators), so the inverse square root acts only
// on those two directions. Throws DegenerateMechanism if some J_a < 2.
Eigen::MatrixXd hc2_cluster_cov(const ExperimentData& data, const WlsFit& fit);

// Eigenvalues of I - P_j along the treated and control indicator directions.
std::vector<Eigen::Vector2d> leverage_eigenvalues(const ExperimentData& data, const WlsFit& fit);

struct EquivalenceReport {
  double coefficient_gap = 0.0;  // max |β̂ - Ŷ|
  double covariance_gap = 0.0;   // max |HC2 - D̂/J|
  double tolerance = 0.0;
  bool pass = false;
};

EquivalenceReport verify_equivalence(const ExperimentData& data, double tol = 1e-8,
                                     WeightScheme scheme = WeightScheme::InverseProbability);

}  // namespace twostage
