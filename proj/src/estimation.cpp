#include "twostage/estimation.hpp"

#include <cmath>
#include <numeric>

#include "twostage/error.hpp"

namespace twostage {

std::string_view to_string(EffectKind kind) noexcept {
  switch (kind) {
    case EffectKind::DE: return "de";
    case EffectKind::MDE: return "mde";
    case EffectKind::SE: return "se";
    case EffectKind::Custom: return "custom";
  }
  return "unknown";
}

namespace {

// Shifted by the first element so a constant vector has that constant as its
// exact mean.
double mean_of(const std::vector<double>& v) {
  const double origin = v.front();
  double sum = 0.0;
  for (double y : v) sum += y - origin;
  return origin + sum / static_cast<double>(v.size());
}

double sample_variance(const std::vector<double>& v, double mean) {
  double ss = 0.0;
  for (double y : v) ss += (y - mean) * (y - mean);
  return ss / static_cast<double>(v.size() - 1);
}

void require_mechanisms(const ExperimentData& data, std::vector<int>& counts) {
  counts = data.clusters_per_mechanism();
  for (int a = 0; a < data.mechanisms; ++a) {
    if (counts[a] == 0) {
      throw Error(ErrorCode::MissingMechanism,
                  "no clusters observed on mechanism " + std::to_string(a + 1));
    }
  }
}

void require_degenerate_free(const std::vector<int>& counts) {
  for (std::size_t a = 0; a < counts.size(); ++a) {
    if (counts[a] < 2) {
      throw Error(ErrorCode::DegenerateMechanism,
                  "mechanism " + std::to_string(a + 1) + " has " + std::to_string(counts[a]) +
                      " cluster(s); between-cluster variance needs at least 2");
    }
  }
}

}  // namespace

ArmMeans arm_means(const ClusterData& cluster) {
  if (cluster.treated.empty() || cluster.control.empty()) {
    throw Error(ErrorCode::EmptyArm, "cluster '" + cluster.id + "' lacks a treated or control unit");
  }
  return {mean_of(cluster.treated), mean_of(cluster.control)};
}

Eigen::MatrixXd PotentialOutcomeTable::cluster_means() const {
  Eigen::MatrixXd means(cluster_count(), 2 * mechanisms);
  for (int j = 0; j < cluster_count(); ++j) {
    means.row(j) = clusters[j].colwise().mean();
  }
  return means;
}

MeanVector PotentialOutcomeTable::true_means() const {
  return {cluster_means().colwise().mean().transpose(), MeanVector::Kind::True};
}

MeanVector mean_vector(const ExperimentData& data) {
  std::vector<int> counts;
  require_mechanisms(data, counts);
  std::vector<std::vector<double>> slots(2 * data.mechanisms);
  for (int s = 0; s < 2 * data.mechanisms; ++s) slots[s].reserve(counts[s / 2]);
  for (const auto& c : data.clusters) {
    const auto means = arm_means(c);
    slots[index_of(1, c.mechanism, data.mechanisms)].push_back(means.treated);
    slots[index_of(0, c.mechanism, data.mechanisms)].push_back(means.control);
  }
  Eigen::VectorXd values(2 * data.mechanisms);
  for (int s = 0; s < 2 * data.mechanisms; ++s) values[s] = mean_of(slots[s]);
  return {values, MeanVector::Kind::Estimated};
}

ContrastMatrix build_contrast(EffectKind kind, int mechanisms, const std::vector<double>& q) {
  const int m = mechanisms;
  if (m < 1) throw Error(ErrorCode::BadKind, "contrast needs at least one mechanism");
  ContrastMatrix out;
  out.kind = kind;
  switch (kind) {
    case EffectKind::DE:
      out.matrix = Eigen::MatrixXd::Zero(m, 2 * m);
      for (int a = 0; a < m; ++a) {
        out.matrix(a, 2 * a) = 1.0;
        out.matrix(a, 2 * a + 1) = -1.0;
      }
      break;
    case EffectKind::MDE:
      if (static_cast<int>(q.size()) != m) {
        throw Error(ErrorCode::BadKind, "MDE contrast needs one weight per mechanism");
      }
      out.matrix = Eigen::MatrixXd::Zero(1, 2 * m);
      for (int a = 0; a < m; ++a) {
        out.matrix(0, 2 * a) = q[a];
        out.matrix(0, 2 * a + 1) = -q[a];
      }
      break;
    case EffectKind::SE:
      if (m < 2) throw Error(ErrorCode::BadKind, "spillover contrast needs at least 2 mechanisms");
      out.matrix = Eigen::MatrixXd::Zero(2 * (m - 1), 2 * m);
      // Treated block first, then control block; row a compares a with a + 1.
      for (int a = 0; a + 1 < m; ++a) {
        out.matrix(a, 2 * a) = 1.0;
        out.matrix(a, 2 * a + 2) = -1.0;
        out.matrix(m - 1 + a, 2 * a + 1) = 1.0;
        out.matrix(m - 1 + a, 2 * a + 3) = -1.0;
      }
      break;
    case EffectKind::Custom:
      throw Error(ErrorCode::BadKind, "use custom_contrast for user-supplied matrices");
  }
  return out;
}

ContrastMatrix custom_contrast(Eigen::MatrixXd matrix) {
  if (matrix.rows() == 0 || matrix.cols() == 0 || matrix.cols() % 2 != 0) {
    throw Error(ErrorCode::BadKind, "contrast must be k x 2m with k >= 1");
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(matrix.transpose());
  if (qr.rank() < matrix.rows()) {
    throw Error(ErrorCode::RankDeficient, "contrast has rank " + std::to_string(qr.rank()) +
                                              " < " + std::to_string(matrix.rows()) + " rows");
  }
  return {EffectKind::Custom, std::move(matrix)};
}

Eigen::VectorXd point_estimates(const ExperimentData& data, EffectKind kind) {
  const auto yhat = mean_vector(data);
  return build_contrast(kind, data.mechanisms, data.shares()).matrix * yhat.values;
}

CovarianceEstimate covariance_hat(const ExperimentData& data) {
  std::vector<int> counts;
  require_mechanisms(data, counts);
  require_degenerate_free(counts);
  const int m = data.mechanisms;
  const double J = data.cluster_count();

  const auto yhat = mean_vector(data);
  Eigen::MatrixXd dhat = Eigen::MatrixXd::Zero(2 * m, 2 * m);
  for (const auto& c : data.clusters) {
    const auto means = arm_means(c);
    const int a = c.mechanism;
    const double d1 = means.treated - yhat.values[2 * a];
    const double d0 = means.control - yhat.values[2 * a + 1];
    dhat(2 * a, 2 * a) += d1 * d1;
    dhat(2 * a, 2 * a + 1) += d1 * d0;
    dhat(2 * a + 1, 2 * a + 1) += d0 * d0;
  }
  for (int a = 0; a < m; ++a) {
    const double scale = J / (counts[a] * (counts[a] - 1.0));
    dhat(2 * a, 2 * a) *= scale;
    dhat(2 * a, 2 * a + 1) *= scale;
    dhat(2 * a + 1, 2 * a + 1) *= scale;
    dhat(2 * a + 1, 2 * a) = dhat(2 * a, 2 * a + 1);
  }
  return {dhat, CovarianceEstimate::Kind::Conservative};
}

double variance_ade_hh(const ExperimentData& data, int mechanism) {
  std::vector<int> counts;
  require_mechanisms(data, counts);
  if (mechanism < 0 || mechanism >= data.mechanisms) {
    throw Error(ErrorCode::OutOfRange, "mechanism index " + std::to_string(mechanism));
  }
  const int Ja = counts[mechanism];
  if (Ja < 2) {
    throw Error(ErrorCode::DegenerateMechanism,
                "mechanism " + std::to_string(mechanism + 1) + " has fewer than 2 clusters");
  }
  const double J = data.cluster_count();

  std::vector<double> effects;
  effects.reserve(Ja);
  double within = 0.0;
  for (const auto& c : data.clusters) {
    if (c.mechanism != mechanism) continue;
    if (c.treated.size() < 2 || c.control.size() < 2) {
      throw Error(ErrorCode::TinyArm,
                  "cluster '" + c.id + "' needs at least 2 units per arm for within variance");
    }
    const auto means = arm_means(c);
    effects.push_back(means.treated - means.control);
    within += sample_variance(c.treated, means.treated) / static_cast<double>(c.treated.size()) +
              sample_variance(c.control, means.control) / static_cast<double>(c.control.size());
  }
  // σ̂²_b(1) + σ̂²_b(0) - 2σ̂²_b(1,0) is the sample variance of Ŷ_j(1) - Ŷ_j(0).
  const double between = sample_variance(effects, mean_of(effects));
  return (1.0 / Ja) * (1.0 - Ja / J) * between + within / (J * Ja);
}

CovarianceEstimate true_covariance(const PotentialOutcomeTable& table, const DesignSpec& spec) {
  const int m = spec.mechanisms();
  const int J = spec.clusters();
  if (table.mechanisms != m || table.cluster_count() != J) {
    throw Error(ErrorCode::ShapeMismatch, "potential-outcome table does not match the design");
  }
  for (int j = 0; j < J; ++j) {
    if (table.clusters[j].rows() != spec.cluster_sizes[j] || table.clusters[j].cols() != 2 * m) {
      throw Error(ErrorCode::ShapeMismatch,
                  "cluster " + std::to_string(j) + " has the wrong table shape");
    }
  }

  const Eigen::MatrixXd means = table.cluster_means();
  const Eigen::RowVectorXd grand = means.colwise().mean();
  const Eigen::MatrixXd centered = means.rowwise() - grand;
  // σ²_b(z, z'; a, a') for every pair of slots.
  const Eigen::MatrixXd between =
      J > 1 ? Eigen::MatrixXd(centered.transpose() * centered / (J - 1.0))
            : Eigen::MatrixXd::Zero(2 * m, 2 * m);

  Eigen::MatrixXd cov(2 * m, 2 * m);
  for (int s = 0; s < 2 * m; ++s) {
    for (int t = 0; t < 2 * m; ++t) cov(s, t) = -between(s, t) / J;
  }

  for (int a = 0; a < m; ++a) {
    const double Ja = spec.cluster_counts[a];
    const double fpc = (1.0 / Ja) * (1.0 - Ja / J);
    double within1 = 0.0, within0 = 0.0, within10 = 0.0;
    for (int j = 0; j < J; ++j) {
      const auto& y = table.clusters[j];
      const double nj = spec.cluster_sizes[j];
      const double n1 = spec.treated(j, a);
      const double n0 = spec.controls(j, a);
      const Eigen::VectorXd d1 = y.col(2 * a).array() - means(j, 2 * a);
      const Eigen::VectorXd d0 = y.col(2 * a + 1).array() - means(j, 2 * a + 1);
      within1 += (1.0 / n1) * (1.0 - n1 / nj) * d1.squaredNorm() / (nj - 1.0);
      within0 += (1.0 / n0) * (1.0 - n0 / nj) * d0.squaredNorm() / (nj - 1.0);
      within10 += d1.dot(d0) / (nj - 1.0) / nj;
    }
    cov(2 * a, 2 * a) = fpc * between(2 * a, 2 * a) + within1 / (Ja * J);
    cov(2 * a + 1, 2 * a + 1) = fpc * between(2 * a + 1, 2 * a + 1) + within0 / (Ja * J);
    cov(2 * a, 2 * a + 1) = fpc * between(2 * a, 2 * a + 1) - within10 / (Ja * J);
    cov(2 * a + 1, 2 * a) = cov(2 * a, 2 * a + 1);
  }
  return {J * cov, CovarianceEstimate::Kind::Oracle};
}

}  // namespace twostage
