#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "twostage/estimation.hpp"

namespace twostage {

// Simplified-design parameters: equal cluster size n, total variance σ²
// split as σ²_b = rσ², σ²_w = (1 - r)σ².
struct PowerConfig {
  std::vector<double> p;
  std::vector<double> q;
  int n = 100;
  double sigma2 = 1.0;
  double r = 0.0;
  std::optional<double> rho;  // absent: conservative (ρ-free) blocks
  double mu = 0.5;
  double alpha = 0.05;
  double beta = 0.2;
  bool conservative = false;  // force ρ-free blocks even if rho is set
  // Off only for exploratory sweeps; see sample_size_de.
  bool enforce_condition = true;

  int mechanisms() const noexcept { return static_cast<int>(p.size()); }
  bool rho_free() const noexcept { return conservative || !rho.has_value(); }
};

// Throws InvalidConfig, BadAlpha or ZeroAlternative.
void validate(const PowerConfig& cfg);

struct SampleSizeResult {
  EffectKind target = EffectKind::Custom;
  long long J_required = 0;
  double J_raw = 0.0;
  double noncentrality = 0.0;
  int dof = 0;
  // xᵀ{C E Cᵀ}⁻¹x for the general formula, max_a / Σ_a of the block quadratic
  // forms for DE / MDE, and the minimum over S for SE.
  double denominator = 0.0;
  int attained_mechanism = -1;  // DE: mechanism attaining the max
  Eigen::VectorXd minimizer;    // SE: s*
  long long multiple = 1;       // J_required is a multiple of this
  std::vector<std::string> notes;
};

// λ with P(X_{k,λ} >= q_threshold) = 1 - β, |residual| <= 1e-9.
double noncentrality(double q_threshold, int dof, double beta);

// D₀ₐ* (rho given) or the diagonal D₀ₐ (rho absent).
Eigen::Matrix2d d0_block(double p, double q, int n, double r, std::optional<double> rho);

// Block-diagonal 2m x 2m matrix of the d0 blocks for cfg.
Eigen::MatrixXd d0_matrix(const PowerConfig& cfg);

// Ceiling, then up to a multiple of the lcm of the q denominators when every
// q_a is a fraction with denominator <= 1000.
struct CeilingResult {
  long long J = 0;
  long long multiple = 1;
  bool rational = true;
};
CeilingResult required_clusters(double J_raw, const std::vector<double>& q);

// J_raw = λ / (xᵀ{C E Cᵀ}⁻¹x) with λ = noncentrality(χ²_{1-α}(k), k, β).
SampleSizeResult sample_size_general(const Eigen::MatrixXd& C, const Eigen::MatrixXd& E,
                                     const Eigen::VectorXd& x, double alpha, double beta,
                                     const std::vector<double>& q = {});

SampleSizeResult sample_size_de(const PowerConfig& cfg);
SampleSizeResult sample_size_mde(const PowerConfig& cfg);
SampleSizeResult sample_size_se(const PowerConfig& cfg);
SampleSizeResult sample_size(const PowerConfig& cfg, EffectKind kind);

// Smallest r for which the ρ-free DE/MDE formulas are conservative.
inline double conservative_threshold(int n) { return 1.0 / (n + 1.0); }

}  // namespace twostage
