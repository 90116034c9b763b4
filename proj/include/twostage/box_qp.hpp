#pragma once

#include <Eigen/Dense>

namespace twostage {

struct BoxQpResult {
  Eigen::VectorXd x;
  double value = 0.0;  // ½ xᵀQx + bᵀx at x
  int iterations = 0;
  bool used_fallback = false;
};

// min ½ xᵀQx + bᵀx subject to lo <= x <= hi, Q symmetric positive definite.
// Primal active-set iteration; falls back to projected gradient (stopping on a
// Frank-Wolfe gap of 1e-10) if the active set fails to settle.
BoxQpResult solve_box_qp(const Eigen::MatrixXd& Q, const Eigen::VectorXd& b,
                         const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);

// Same problem by projected gradient alone.
BoxQpResult solve_box_qp_projected(const Eigen::MatrixXd& Q, const Eigen::VectorXd& b,
                                   const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                                   Eigen::VectorXd start);

struct QuadraticMinimum {
  double value = 0.0;
  Eigen::VectorXd argmin;
  int pinned = 0;  // coordinate held at +1
};

// min over s with max_i |s_i| = 1 of sᵀM⁻¹s. One box QP per coordinate c with
// s_c = 1 and the rest in [-1, 1]; s_c = -1 is the mirror image.
QuadraticMinimum min_quadratic_on_S(const Eigen::MatrixXd& M);

}  // namespace twostage
