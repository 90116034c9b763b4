#pragma once

// Test-only oracles. Nothing here calls the library's randomization or
// estimation code; each routine recomputes its quantity from first principles.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "twostage/data.hpp"
#include "twostage/design.hpp"
#include "twostage/estimation.hpp"

namespace oracle {

// Every (A, Z) of a two-stage design with its probability. First-stage
// vectors are equiprobable; given A, each cluster's treated subset is uniform
// over subsets of the required size.
struct Realization {
  std::vector<int> mechanisms;
  std::vector<std::vector<std::uint8_t>> treated;
  double weight = 0.0;
};

inline void subsets(int n, int k, std::vector<std::vector<std::uint8_t>>& out) {
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    if (__builtin_popcount(mask) != k) continue;
    std::vector<std::uint8_t> z(n);
    for (int i = 0; i < n; ++i) z[i] = (mask >> i) & 1u;
    out.push_back(std::move(z));
  }
}

inline void first_stage_vectors(std::vector<int>& remaining, std::vector<int>& current, int J,
                                std::vector<std::vector<int>>& out) {
  if (static_cast<int>(current.size()) == J) {
    out.push_back(current);
    return;
  }
  for (std::size_t a = 0; a < remaining.size(); ++a) {
    if (remaining[a] == 0) continue;
    --remaining[a];
    current.push_back(static_cast<int>(a));
    first_stage_vectors(remaining, current, J, out);
    current.pop_back();
    ++remaining[a];
  }
}

inline void for_each_realization(const twostage::DesignSpec& spec,
                                 const std::function<void(const Realization&)>& visit) {
  const int J = spec.clusters();
  std::vector<int> remaining = spec.cluster_counts;
  std::vector<int> current;
  std::vector<std::vector<int>> firsts;
  first_stage_vectors(remaining, current, J, firsts);

  for (const auto& mech : firsts) {
    std::vector<std::vector<std::vector<std::uint8_t>>> options(J);
    double weight = 1.0 / static_cast<double>(firsts.size());
    for (int j = 0; j < J; ++j) {
      subsets(spec.cluster_sizes[j], spec.treated_counts[j][mech[j]], options[j]);
      weight /= static_cast<double>(options[j].size());
    }
    Realization r;
    r.mechanisms = mech;
    r.treated.resize(J);
    r.weight = weight;
    std::function<void(int)> recurse = [&](int j) {
      if (j == J) {
        visit(r);
        return;
      }
      for (const auto& z : options[j]) {
        r.treated[j] = z;
        recurse(j + 1);
      }
    };
    recurse(0);
  }
}

// Observed data assembled directly from the table (no library helpers).
inline twostage::ExperimentData observed(const twostage::PotentialOutcomeTable& table,
                                         const Realization& r) {
  const int m = table.mechanisms;
  twostage::ExperimentData data;
  data.mechanisms = m;
  for (int a = 0; a < m; ++a) data.mechanism_labels.push_back(a + 1);
  for (std::size_t j = 0; j < r.mechanisms.size(); ++j) {
    twostage::ClusterData c;
    c.id = "k" + std::to_string(j);
    c.mechanism = r.mechanisms[j];
    for (std::size_t i = 0; i < r.treated[j].size(); ++i) {
      const int col = r.treated[j][i] ? 2 * c.mechanism : 2 * c.mechanism + 1;
      (r.treated[j][i] ? c.treated : c.control).push_back(table.clusters[j](i, col));
    }
    data.clusters.push_back(std::move(c));
  }
  return data;
}

// Probability-weighted mean and J-scaled covariance of Ŷ over all realizations,
// plus the weighted mean of D̂ when every mechanism has >= 2 clusters.
struct EnumerationMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd scaled_cov;
  Eigen::MatrixXd mean_dhat;
  double total_weight = 0.0;
  long long count = 0;
};

inline EnumerationMoments enumerate_moments(const twostage::PotentialOutcomeTable& table,
                                            const twostage::DesignSpec& spec) {
  const int dim = 2 * spec.mechanisms();
  EnumerationMoments out;
  out.mean = Eigen::VectorXd::Zero(dim);
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(dim, dim);
  out.mean_dhat = Eigen::MatrixXd::Zero(dim, dim);
  bool with_dhat = std::all_of(spec.cluster_counts.begin(), spec.cluster_counts.end(),
                               [](int c) { return c >= 2; });
  std::vector<Eigen::VectorXd> values;
  std::vector<double> weights;
  for_each_realization(spec, [&](const Realization& r) {
    const auto data = observed(table, r);
    const Eigen::VectorXd y = twostage::mean_vector(data).values;
    values.push_back(y);
    weights.push_back(r.weight);
    out.mean += r.weight * y;
    if (with_dhat) out.mean_dhat += r.weight * twostage::covariance_hat(data).matrix;
    out.total_weight += r.weight;
    ++out.count;
  });
  for (std::size_t k = 0; k < values.size(); ++k) {
    const Eigen::VectorXd d = values[k] - out.mean;
    second += weights[k] * d * d.transpose();
  }
  out.scaled_cov = spec.clusters() * second;
  return out;
}

// Random unit-level table with cluster-specific shifts so that between- and
// within-cluster variation are both present.
inline twostage::PotentialOutcomeTable random_table(const twostage::DesignSpec& spec,
                                                    std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const int m = spec.mechanisms();
  twostage::PotentialOutcomeTable table;
  table.mechanisms = m;
  for (int j = 0; j < spec.clusters(); ++j) {
    const int n = spec.cluster_sizes[j];
    Eigen::MatrixXd y(n, 2 * m);
    for (int c = 0; c < 2 * m; ++c) {
      const double shift = 2.0 * normal(rng);
      for (int i = 0; i < n; ++i) y(i, c) = shift + normal(rng);
    }
    table.clusters.push_back(std::move(y));
  }
  return table;
}

// Random table whose cluster means of every column equal a common value
// across clusters; only within-cluster variation remains.
inline twostage::PotentialOutcomeTable constant_means_table(const twostage::DesignSpec& spec,
                                                            std::mt19937_64& rng) {
  auto table = random_table(spec, rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::RowVectorXd level(2 * table.mechanisms);
  for (auto& v : level) v = normal(rng);
  for (auto& y : table.clusters) {
    const Eigen::RowVectorXd mean = y.colwise().mean();
    y.rowwise() += level - mean;
  }
  return table;
}

// Random observed dataset: clusters_per_mechanism[a] clusters on mechanism a,
// sizes uniform in [min_size, max_size], treated count uniform in
// [min_arm, n - min_arm].
inline twostage::ExperimentData random_dataset(const std::vector<int>& clusters_per_mechanism,
                                               int min_size, int max_size, std::mt19937_64& rng,
                                               int min_arm = 1) {
  std::normal_distribution<double> normal(0.0, 1.0);
  twostage::ExperimentData data;
  data.mechanisms = static_cast<int>(clusters_per_mechanism.size());
  for (int a = 0; a < data.mechanisms; ++a) data.mechanism_labels.push_back(a + 1);
  int id = 0;
  for (int a = 0; a < data.mechanisms; ++a) {
    for (int k = 0; k < clusters_per_mechanism[a]; ++k) {
      const int n = std::uniform_int_distribution<int>(min_size, max_size)(rng);
      const int n1 = std::uniform_int_distribution<int>(min_arm, n - min_arm)(rng);
      const double b1 = normal(rng) + 0.5 * a, b0 = normal(rng);
      twostage::ClusterData c;
      c.id = "r" + std::to_string(id++);
      c.mechanism = a;
      for (int i = 0; i < n1; ++i) c.treated.push_back(b1 + normal(rng));
      for (int i = n1; i < n; ++i) c.control.push_back(b0 + normal(rng));
      data.clusters.push_back(std::move(c));
    }
  }
  return data;
}

// The hand-computed m = 2 example: cluster 1 (mechanism 1) treated {2},
// control {0, 1}; cluster 2 (mechanism 2) treated {1, 3}, control {5}.
inline twostage::ExperimentData hand_dataset() {
  twostage::ExperimentData data;
  data.mechanisms = 2;
  data.mechanism_labels = {1, 2};
  data.clusters.push_back({"c1", 0, {2.0}, {0.0, 1.0}});
  data.clusters.push_back({"c2", 1, {1.0, 3.0}, {5.0}});
  return data;
}

// Min of sᵀ M⁻¹ s over max|s_i| = 1 for 2 x 2 M by scanning the boundary of
// [-1, 1]² on a grid of `points` per side, then polishing the best edge cell
// with a 1-d golden-section search.
inline double grid_min_2d(const Eigen::Matrix2d& M, int points = 401) {
  const Eigen::Matrix2d H = M.inverse();
  auto f = [&](double x, double y) {
    const Eigen::Vector2d s(x, y);
    return s.dot(H * s);
  };
  double best = 1e300;
  for (int i = 0; i < points; ++i) {
    for (int k = 0; k < points; ++k) {
      const double x = -1.0 + 2.0 * i / (points - 1);
      const double y = -1.0 + 2.0 * k / (points - 1);
      if (std::max(std::abs(x), std::abs(y)) < 1.0 - 1e-12) continue;
      best = std::min(best, f(x, y));
    }
  }
  // Exact minimum on each edge: s_c = ±1, the free coordinate minimizes a 1-d
  // quadratic, clamped to [-1, 1].
  double refined = best;
  for (int c = 0; c < 2; ++c) {
    const int o = 1 - c;
    const double t = std::clamp(-H(o, c) / H(o, o), -1.0, 1.0);
    Eigen::Vector2d s;
    s[c] = 1.0;
    s[o] = t;
    refined = std::min(refined, s.dot(H * s));
  }
  return std::min(best, refined);
}

}  // namespace oracle
