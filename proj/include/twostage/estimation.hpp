#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string_view>
#include <vector>

#include "twostage/data.hpp"
#include "twostage/design.hpp"

namespace twostage {

enum class EffectKind { DE, MDE, SE, Custom };

std::string_view to_string(EffectKind kind) noexcept;

// Ŷ (Estimated) or Ȳ (True), laid out by index_of: (1,0), (0,0), (1,1), ...
struct MeanVector {
  enum class Kind { Estimated, True };
  Eigen::VectorXd values;
  Kind kind = Kind::Estimated;

  int mechanisms() const noexcept { return static_cast<int>(values.size() / 2); }
};

struct ContrastMatrix {
  EffectKind kind = EffectKind::Custom;
  Eigen::MatrixXd matrix;  // k x 2m, full row rank

  int rank() const noexcept { return static_cast<int>(matrix.rows()); }
};

// J times a covariance of the mean vector.
struct CovarianceEstimate {
  enum class Kind { Conservative, Oracle };
  Eigen::MatrixXd matrix;
  Kind kind = Kind::Conservative;
};

// Full Y_ij(z, a) table: one (n_j x 2m) matrix per cluster, columns by index_of.
struct PotentialOutcomeTable {
  int mechanisms = 0;
  std::vector<Eigen::MatrixXd> clusters;

  int cluster_count() const noexcept { return static_cast<int>(clusters.size()); }
  // Ȳ_j(z, a) as a J x 2m matrix.
  Eigen::MatrixXd cluster_means() const;
  // Ȳ(z, a): unweighted average of the cluster means.
  MeanVector true_means() const;
};

// Within-cluster arm means Ŷ_j(1), Ŷ_j(0).
struct ArmMeans {
  double treated = 0.0;
  double control = 0.0;
};
ArmMeans arm_means(const ClusterData& cluster);

MeanVector mean_vector(const ExperimentData& data);

// q is only read for MDE (row (q_1, -q_1, ..., q_m, -q_m)). Custom kinds go
// through custom_contrast.
ContrastMatrix build_contrast(EffectKind kind, int mechanisms, const std::vector<double>& q = {});
ContrastMatrix custom_contrast(Eigen::MatrixXd matrix);

// C Ŷ with q_a = J_a / J taken from the data for MDE.
Eigen::VectorXd point_estimates(const ExperimentData& data, EffectKind kind);

// Block-diagonal D̂; block a = (J / J_a) * between-cluster sample covariance of
// (Ŷ_j(1), Ŷ_j(0)) over clusters on mechanism a. Needs J_a >= 2.
CovarianceEstimate covariance_hat(const ExperimentData& data);

// Per-mechanism variance estimator of ADÊ(a) that adds within-cluster sample
// variances to the between-cluster term. Needs J_a >= 2 and two units per arm.
double variance_ade_hh(const ExperimentData& data, int mechanism);

// Exact J * cov(Ŷ) over the two-stage randomization of `spec` for a fixed
// potential-outcome table.
CovarianceEstimate true_covariance(const PotentialOutcomeTable& table, const DesignSpec& spec);

}  // namespace twostage
