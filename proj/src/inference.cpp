#include "twostage/inference.hpp"

#include <algorithm>
#include <sstream>

#include "twostage/chi_square.hpp"
#include "twostage/error.hpp"

namespace twostage {

double wald_statistic(const MeanVector& yhat, const CovarianceEstimate& dhat,
                      const ContrastMatrix& contrast, int clusters) {
  const Eigen::MatrixXd& C = contrast.matrix;
  if (C.cols() != yhat.values.size() || dhat.matrix.rows() != yhat.values.size()) {
    throw Error(ErrorCode::ShapeMismatch, "contrast, mean vector and covariance disagree in size");
  }
  const Eigen::VectorXd effect = C * yhat.values;
  const Eigen::MatrixXd middle = C * dhat.matrix * C.transpose();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(middle, Eigen::EigenvaluesOnly);
  const double largest = eig.eigenvalues().maxCoeff();
  const double smallest = eig.eigenvalues().minCoeff();
  if (!(largest > 0.0) || !(smallest > 0.0) || largest / smallest > kMaxCondition) {
    std::ostringstream msg;
    msg << "C D Cᵀ has condition number ";
    if (smallest > 0.0) {
      msg << largest / smallest;
    } else {
      msg << "inf";
    }
    msg << " (eigenvalues in [" << smallest << ", " << largest << "])";
    throw Error(ErrorCode::SingularCovariance, msg.str());
  }
  Eigen::LLT<Eigen::MatrixXd> llt(middle);
  const Eigen::VectorXd solved = llt.solve(effect);
  return std::max(0.0, clusters * effect.dot(solved));
}

TestResult chi_square_test(double statistic, int dof, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(ErrorCode::BadAlpha, "alpha must lie in (0, 1)");
  }
  if (dof < 1 || !(statistic >= 0.0)) {
    throw Error(ErrorCode::OutOfRange, "need statistic >= 0 and dof >= 1");
  }
  TestResult out;
  out.statistic = statistic;
  out.dof = dof;
  out.alpha = alpha;
  out.p_upper = chi2_sf(statistic, dof);
  out.critical_value = chi2_upper_quantile(alpha, dof);
  out.reject = out.p_upper < alpha;
  return out;
}

TestResult test_effect(const ExperimentData& data, EffectKind kind, double alpha) {
  const auto yhat = mean_vector(data);
  const auto dhat = covariance_hat(data);
  const auto contrast = build_contrast(kind, data.mechanisms, data.shares());
  const Eigen::VectorXd effect = contrast.matrix * yhat.values;
  if (effect.isZero(0.0)) {
    // Exact null point; T = 0 even when D̂ vanishes.
    return chi_square_test(0.0, contrast.rank(), alpha);
  }
  return chi_square_test(wald_statistic(yhat, dhat, contrast, data.cluster_count()),
                         contrast.rank(), alpha);
}

}  // namespace twostage
