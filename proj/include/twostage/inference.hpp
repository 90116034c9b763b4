#pragma once

#include "twostage/data.hpp"
#include "twostage/estimation.hpp"

namespace twostage {

struct TestResult {
  double statistic = 0.0;
  int dof = 0;
  double p_upper = 1.0;  // 1 - F_{chi2(dof)}(statistic)
  double alpha = 0.05;
  double critical_value = 0.0;
  bool reject = false;
};

// Relative condition threshold above which C D̂ Cᵀ is treated as singular.
inline constexpr double kMaxCondition = 1e10;

// T = J (CŶ)ᵀ (C D̂ Cᵀ)⁻¹ (CŶ). Throws SingularCovariance (condition number in
// the message) when C D̂ Cᵀ is not safely positive definite.
double wald_statistic(const MeanVector& yhat, const CovarianceEstimate& dhat,
                      const ContrastMatrix& contrast, int clusters);

TestResult chi_square_test(double statistic, int dof, double alpha);

TestResult test_effect(const ExperimentData& data, EffectKind kind, double alpha);

}  // namespace twostage
