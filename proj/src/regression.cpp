#include "twostage/regression.hpp"

#include <cmath>
#include <string>

#include "twostage/error.hpp"
#include "twostage/estimation.hpp"

namespace twostage {

namespace {

double weight(WeightScheme scheme, int mechanism_clusters, std::size_t arm_size) {
  if (scheme == WeightScheme::Unit) return 1.0;
  return 1.0 / (static_cast<double>(mechanism_clusters) * static_cast<double>(arm_size));
}

// λ_c = |W^{1/2} x_c|² / G_cc for the treated (0) and control (1) columns of
// cluster j; P_j = Σ_c λ_c v̂_c v̂_cᵀ.
Eigen::Vector2d leverages(const ClusterData& c, const WlsFit& fit, int mechanism_clusters,
                          int mechanisms) {
  const auto t = index_of(1, c.mechanism, mechanisms);
  const auto u = index_of(0, c.mechanism, mechanisms);
  const double w1 = weight(fit.scheme, mechanism_clusters, c.treated.size());
  const double w0 = weight(fit.scheme, mechanism_clusters, c.control.size());
  return {w1 * static_cast<double>(c.treated.size()) / fit.gram(t, t),
          w0 * static_cast<double>(c.control.size()) / fit.gram(u, u)};
}

}  // namespace

WlsFit wls_fit(const ExperimentData& data, WeightScheme scheme) {
  const int m = data.mechanisms;
  const auto counts = data.clusters_per_mechanism();
  WlsFit fit;
  fit.scheme = scheme;
  fit.gram = Eigen::MatrixXd::Zero(2 * m, 2 * m);
  Eigen::VectorXd xty = Eigen::VectorXd::Zero(2 * m);

  // Generic accumulation of XᵀWX and XᵀWy over unit rows.
  Eigen::VectorXd x(2 * m);
  for (const auto& c : data.clusters) {
    for (int z = 1; z >= 0; --z) {
      const auto& arm = z == 1 ? c.treated : c.control;
      if (arm.empty()) continue;
      const double w = weight(scheme, counts[c.mechanism], arm.size());
      x.setZero();
      x[index_of(z, c.mechanism, m)] = 1.0;
      for (double y : arm) {
        fit.gram.noalias() += w * x * x.transpose();
        xty.noalias() += w * y * x;
      }
    }
  }
  for (int s = 0; s < 2 * m; ++s) {
    if (fit.gram(s, s) <= 0.0) {
      throw Error(ErrorCode::EmptyCell, "no units in cell " + std::to_string(s + 1) +
                                            " (z = " + std::to_string(1 - s % 2) +
                                            ", mechanism " + std::to_string(s / 2 + 1) + ")");
    }
  }
  if (scheme == WeightScheme::InverseProbability) {
    const double drift = (fit.gram - Eigen::MatrixXd::Identity(2 * m, 2 * m)).cwiseAbs().maxCoeff();
    if (drift > 1e-12) {
      throw Error(ErrorCode::Internal, "XᵀWX deviates from the identity by " + std::to_string(drift));
    }
  }
  fit.coefficients = fit.gram.ldlt().solve(xty);

  fit.residuals.reserve(data.clusters.size());
  for (const auto& c : data.clusters) {
    Eigen::VectorXd e(c.size());
    const double b1 = fit.coefficients[index_of(1, c.mechanism, m)];
    const double b0 = fit.coefficients[index_of(0, c.mechanism, m)];
    Eigen::Index i = 0;
    for (double y : c.treated) e[i++] = y - b1;
    for (double y : c.control) e[i++] = y - b0;
    fit.residuals.push_back(std::move(e));
  }
  return fit;
}

std::vector<Eigen::Vector2d> leverage_eigenvalues(const ExperimentData& data, const WlsFit& fit) {
  const auto counts = data.clusters_per_mechanism();
  std::vector<Eigen::Vector2d> out;
  out.reserve(data.clusters.size());
  for (const auto& c : data.clusters) {
    out.push_back(Eigen::Vector2d::Ones() -
                  leverages(c, fit, counts[c.mechanism], data.mechanisms));
  }
  return out;
}

Eigen::MatrixXd hc2_cluster_cov(const ExperimentData& data, const WlsFit& fit) {
  const int m = data.mechanisms;
  const auto counts = data.clusters_per_mechanism();
  for (int a = 0; a < m; ++a) {
    if (counts[a] < 2) {
      throw Error(ErrorCode::DegenerateMechanism,
                  "mechanism " + std::to_string(a + 1) + " has fewer than 2 clusters");
    }
  }
  if (fit.residuals.size() != data.clusters.size()) {
    throw Error(ErrorCode::ShapeMismatch, "fit does not belong to this dataset");
  }

  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(2 * m, 2 * m);
  for (std::size_t j = 0; j < data.clusters.size(); ++j) {
    const auto& c = data.clusters[j];
    const auto& e = fit.residuals[j];
    const auto n1 = static_cast<Eigen::Index>(c.treated.size());
    const auto n0 = static_cast<Eigen::Index>(c.control.size());
    const Eigen::Vector2d lambda = leverages(c, fit, counts[c.mechanism], m);
    if ((lambda.array() >= 1.0).any()) {
      throw Error(ErrorCode::DegenerateMechanism, "cluster '" + c.id + "' has unit leverage");
    }
    const double w1 = weight(fit.scheme, counts[c.mechanism], c.treated.size());
    const double w0 = weight(fit.scheme, counts[c.mechanism], c.control.size());

    // (I - P_j)^{-1/2} e = e + Σ_c (1/√(1-λ_c) - 1) (v̂_cᵀe) v̂_c, with v̂_c the
    // normalized indicator of arm c (weights are constant within an arm).
    Eigen::VectorXd adjusted = e;
    const Eigen::Index sizes[2] = {n1, n0};
    const Eigen::Index starts[2] = {0, n1};
    for (int arm = 0; arm < 2; ++arm) {
      if (sizes[arm] == 0) continue;
      const double k = 1.0 / std::sqrt(1.0 - lambda[arm]) - 1.0;
      const double mean = e.segment(starts[arm], sizes[arm]).mean();
      adjusted.segment(starts[arm], sizes[arm]).array() += k * mean;
    }

    Eigen::VectorXd u = Eigen::VectorXd::Zero(2 * m);
    u[index_of(1, c.mechanism, m)] = w1 * adjusted.head(n1).sum();
    u[index_of(0, c.mechanism, m)] = w0 * adjusted.tail(n0).sum();
    meat.noalias() += u * u.transpose();
  }
  const Eigen::MatrixXd bread = fit.gram.ldlt().solve(Eigen::MatrixXd::Identity(2 * m, 2 * m));
  Eigen::MatrixXd cov = bread * meat * bread;
  return 0.5 * (cov + cov.transpose());
}

EquivalenceReport verify_equivalence(const ExperimentData& data, double tol, WeightScheme scheme) {
  const auto yhat = mean_vector(data);
  const auto dhat = covariance_hat(data);
  const auto fit = wls_fit(data, scheme);
  const auto hc2 = hc2_cluster_cov(data, fit);
  EquivalenceReport report;
  report.tolerance = tol;
  report.coefficient_gap = (fit.coefficients - yhat.values).cwiseAbs().maxCoeff();
  report.covariance_gap =
      (hc2 - dhat.matrix / static_cast<double>(data.cluster_count())).cwiseAbs().maxCoeff();
  report.pass = report.coefficient_gap <= tol && report.covariance_gap <= tol;
  return report;
}

}  // namespace twostage
