#include "twostage/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "twostage/error.hpp"
#include "twostage/inference.hpp"

namespace twostage {

namespace {

// Stream ids above every replicate index.
constexpr std::uint64_t kThetaStream = std::uint64_t{1} << 62;
constexpr std::uint64_t kPopulationStream = kThetaStream + 1;

struct PreparedSimulation {
  DGPConfig dgp;
  std::optional<PotentialOutcomeTable> fixed_table;
};

PreparedSimulation prepare(const PowerSimulation& sim) {
  validate(sim.power);
  if (sim.reps < 100) throw Error(ErrorCode::InvalidConfig, "need at least 100 replicates");
  PreparedSimulation prepared;
  prepared.dgp = dgp_from_power(sim.power, sim.clusters, sim.sizes);
  prepared.dgp.scheme = sim.scheme;
  const int m = sim.power.mechanisms();
  if (sim.scheme == EffectScheme::Explicit) {
    if (sim.theta.size() != 2 * m) {
      throw Error(ErrorCode::ShapeMismatch, "explicit theta needs 2m entries");
    }
    prepared.dgp.theta = sim.theta;
  } else {
    Rng rng = make_stream(sim.seed, kThetaStream);
    prepared.dgp.theta = generate_theta(sim.scheme, sim.power.mu, m, sim.power.q, rng);
  }
  if (sim.fixed_population) {
    Rng rng = make_stream(sim.seed, kPopulationStream);
    prepared.fixed_table = generate_potential_outcomes(prepared.dgp, rng);
  }
  return prepared;
}

// 1 reject, 0 accept, -1 the test threw.
int run_replicate(const PowerSimulation& sim, const PreparedSimulation& prepared, int rep) {
  Rng rng = make_stream(sim.seed, static_cast<std::uint64_t>(rep));
  try {
    if (prepared.fixed_table) {
      const auto data = realize_data(*prepared.fixed_table, prepared.dgp.spec, rng);
      return test_effect(data, sim.kind, sim.power.alpha).reject ? 1 : 0;
    }
    DGPConfig dgp = prepared.dgp;
    if (sim.redraw_theta && sim.scheme != EffectScheme::Explicit) {
      dgp.theta = generate_theta(sim.scheme, sim.power.mu, sim.power.mechanisms(), sim.power.q, rng);
    }
    const auto table = generate_potential_outcomes(dgp, rng);
    const auto data = realize_data(table, dgp.spec, rng);
    return test_effect(data, sim.kind, sim.power.alpha).reject ? 1 : 0;
  } catch (const Error&) {
    return -1;
  }
}

PowerEstimate summarize(const std::vector<int>& outcomes, const Eigen::VectorXd& theta) {
  PowerEstimate out;
  out.reps = static_cast<int>(outcomes.size());
  for (int o : outcomes) {
    if (o == 1) ++out.rejections;
    if (o < 0) ++out.failures;
  }
  out.power = static_cast<double>(out.rejections) / out.reps;
  out.standard_error = std::sqrt(out.power * (1.0 - out.power) / out.reps);
  out.theta = theta;
  return out;
}

}  // namespace

std::string_view to_string(EffectScheme scheme) noexcept {
  switch (scheme) {
    case EffectScheme::Explicit: return "explicit";
    case EffectScheme::DeAlt: return "de-alt";
    case EffectScheme::MdeAlt: return "mde-alt";
    case EffectScheme::SeAlt: return "se-alt";
    case EffectScheme::Null: return "null";
  }
  return "unknown";
}

EffectScheme parse_scheme(std::string_view name) {
  for (auto s : {EffectScheme::Explicit, EffectScheme::DeAlt, EffectScheme::MdeAlt,
                 EffectScheme::SeAlt, EffectScheme::Null}) {
    if (to_string(s) == name) return s;
  }
  throw Error(ErrorCode::BadScheme, "unknown effect scheme '" + std::string(name) + "'");
}

EffectScheme scheme_for(EffectKind kind) {
  switch (kind) {
    case EffectKind::DE: return EffectScheme::DeAlt;
    case EffectKind::MDE: return EffectScheme::MdeAlt;
    case EffectKind::SE: return EffectScheme::SeAlt;
    case EffectKind::Custom: break;
  }
  throw Error(ErrorCode::BadScheme, "no generation scheme for custom contrasts");
}

Eigen::VectorXd generate_theta(EffectScheme scheme, double mu, int mechanisms,
                               const std::vector<double>& q, Rng& rng) {
  const int m = mechanisms;
  if (m < 1) throw Error(ErrorCode::BadScheme, "need at least one mechanism");
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(2 * m);
  auto uniform = [&rng](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  const auto t1 = [m](int a) { return index_of(1, a, m); };
  const auto t0 = [m](int a) { return index_of(0, a, m); };

  switch (scheme) {
    case EffectScheme::Explicit:
      throw Error(ErrorCode::BadScheme, "explicit theta is supplied, not generated");
    case EffectScheme::Null:
      return theta;
    case EffectScheme::DeAlt:
      for (int a = 0; a < m; ++a) theta[t0(a)] = uniform(-mu, mu);
      for (int a = 0; a + 1 < m; ++a) theta[t1(a)] = uniform(theta[t0(a)] - mu, theta[t0(a)] + mu);
      theta[t1(m - 1)] = theta[t0(m - 1)] + mu;
      return theta;
    case EffectScheme::MdeAlt: {
      static constexpr double kOffsets[3] = {0.5, 1.5, 1.0};
      std::vector<double> weights = q;
      if (weights.empty()) weights.assign(m, 1.0 / m);
      if (static_cast<int>(weights.size()) != m) {
        throw Error(ErrorCode::ShapeMismatch, "q needs one entry per mechanism");
      }
      double average = 0.0;
      for (int a = 0; a < m; ++a) average += weights[a] * kOffsets[a % 3] * mu;
      for (int a = 0; a < m; ++a) theta[t0(a)] = uniform(-mu, mu);
      for (int a = 0; a < m; ++a) theta[t1(a)] = theta[t0(a)] + kOffsets[a % 3] * mu * mu / average;
      return theta;
    }
    case EffectScheme::SeAlt: {
      if (m < 2) throw Error(ErrorCode::BadScheme, "spillover scheme needs at least 2 mechanisms");
      for (int a = 0; a < m; ++a) theta[t0(a)] = uniform(-mu / 2, mu / 2);
      double lowest = std::numeric_limits<double>::infinity();
      for (int a = 0; a + 1 < m; ++a) {
        theta[t1(a)] = uniform(-mu / 2, mu / 2);
        lowest = std::min(lowest, theta[t1(a)]);
      }
      theta[t1(m - 1)] = mu + lowest;
      return theta;
    }
  }
  throw Error(ErrorCode::BadScheme, "unknown scheme");
}

PotentialOutcomeTable generate_potential_outcomes(const DGPConfig& cfg, Rng& rng) {
  const int m = cfg.spec.mechanisms();
  const int J = cfg.spec.clusters();
  if (cfg.theta.size() != 2 * m) throw Error(ErrorCode::ShapeMismatch, "theta needs 2m entries");
  if (cfg.sigma_b2 < 0.0 || cfg.sigma_w2 < 0.0 || std::abs(cfg.rho) > 1.0) {
    throw Error(ErrorCode::InvalidConfig, "variances must be >= 0 and |rho| <= 1");
  }
  const double sb = std::sqrt(cfg.sigma_b2);
  const double sw = std::sqrt(cfg.sigma_w2);
  const double resid = std::sqrt(std::max(0.0, 1.0 - cfg.rho * cfg.rho));
  std::normal_distribution<double> normal(0.0, 1.0);

  PotentialOutcomeTable table;
  table.mechanisms = m;
  table.clusters.reserve(J);
  for (int j = 0; j < J; ++j) {
    const int nj = cfg.spec.cluster_sizes[j];
    Eigen::MatrixXd y(nj, 2 * m);
    for (int a = 0; a < m; ++a) {
      const auto c1 = index_of(1, a, m);
      const auto c0 = index_of(0, a, m);
      const double e0 = normal(rng);
      const double e1 = normal(rng);
      const double mean0 = cfg.theta[c0] + sb * e0;
      const double mean1 = cfg.theta[c1] + cfg.rho * sb * e0 + resid * sb * e1;
      for (int i = 0; i < nj; ++i) {
        const double u1 = normal(rng);
        const double u0 = normal(rng);
        y(i, c1) = mean1 + sw * u1;
        y(i, c0) = mean0 + sw * (cfg.rho * u1 + resid * u0);
      }
    }
    table.clusters.push_back(std::move(y));
  }

  if (cfg.center) {
    const Eigen::VectorXd current = table.true_means().values;
    const Eigen::RowVectorXd shift = (cfg.theta - current).transpose();
    for (auto& y : table.clusters) y.rowwise() += shift;
  }
  return table;
}

ExperimentData observe(const PotentialOutcomeTable& table, const DesignSpec& spec,
                       const AssignmentRealization& assignment) {
  const int m = spec.mechanisms();
  const int J = spec.clusters();
  if (table.mechanisms != m || table.cluster_count() != J ||
      static_cast<int>(assignment.mechanisms.size()) != J ||
      static_cast<int>(assignment.treated.size()) != J) {
    throw Error(ErrorCode::ShapeMismatch, "table, design and assignment disagree");
  }
  ExperimentData data;
  data.mechanisms = m;
  data.mechanism_labels.resize(m);
  for (int a = 0; a < m; ++a) data.mechanism_labels[a] = a + 1;
  data.clusters.reserve(J);
  for (int j = 0; j < J; ++j) {
    const auto& y = table.clusters[j];
    const auto& z = assignment.treated[j];
    if (y.rows() != spec.cluster_sizes[j] || static_cast<int>(z.size()) != y.rows()) {
      throw Error(ErrorCode::ShapeMismatch, "cluster " + std::to_string(j + 1) + " size mismatch");
    }
    ClusterData c;
    c.id = "c" + std::to_string(j + 1);
    c.mechanism = assignment.mechanisms[j];
    const auto c1 = index_of(1, c.mechanism, m);
    const auto c0 = index_of(0, c.mechanism, m);
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      if (z[i]) c.treated.push_back(y(i, c1)); else c.control.push_back(y(i, c0));
    }
    data.clusters.push_back(std::move(c));
  }
  return data;
}

ExperimentData realize_data(const PotentialOutcomeTable& table, const DesignSpec& spec, Rng& rng) {
  if (table.mechanisms != spec.mechanisms() || table.cluster_count() != spec.clusters()) {
    throw Error(ErrorCode::ShapeMismatch, "table does not match the design");
  }
  return observe(table, spec, draw_assignment(spec, rng));
}

std::vector<int> cluster_sizes(long long clusters, int n, SizePattern pattern) {
  std::vector<int> sizes(static_cast<std::size_t>(clusters), n);
  if (pattern == SizePattern::Unequal) {
    const int small = static_cast<int>(std::floor(0.6 * n + 0.5));
    const int large = static_cast<int>(std::floor(1.4 * n + 0.5));
    for (std::size_t j = 0; j < sizes.size(); ++j) {
      sizes[j] = j % 3 == 0 ? small : j % 3 == 1 ? n : large;
    }
  }
  return sizes;
}

DGPConfig dgp_from_power(const PowerConfig& cfg, long long clusters, SizePattern pattern) {
  validate(cfg);
  const int m = cfg.mechanisms();
  if (clusters < 1 || clusters > 10'000'000) {
    throw Error(ErrorCode::InvalidConfig, "cluster count out of range");
  }
  std::vector<int> counts(m);
  long long total = 0;
  for (int a = 0; a < m; ++a) {
    const double share = cfg.q[a] * static_cast<double>(clusters);
    counts[a] = static_cast<int>(std::llround(share));
    if (std::abs(share - counts[a]) > 1e-6) {
      throw Error(ErrorCode::InvalidConfig, "q_a J is not an integer for J = " + std::to_string(clusters));
    }
    total += counts[a];
  }
  if (total != clusters) throw Error(ErrorCode::BadCounts, "rounded J_a do not sum to J");

  DGPConfig dgp;
  dgp.sigma_b2 = cfg.r * cfg.sigma2;
  dgp.sigma_w2 = (1.0 - cfg.r) * cfg.sigma2;
  dgp.rho = cfg.rho.value_or(0.0);
  dgp.mu = cfg.mu;
  dgp.spec = make_design(counts, cluster_sizes(clusters, cfg.n, pattern), cfg.p);
  return dgp;
}

PowerConfig power_from_dgp(const DGPConfig& dgp) {
  const auto& sizes = dgp.spec.cluster_sizes;
  if (sizes.empty() || std::any_of(sizes.begin(), sizes.end(), [&](int n) { return n != sizes[0]; })) {
    throw Error(ErrorCode::UnequalClusters, "power parameters need equal cluster sizes");
  }
  PowerConfig cfg;
  cfg.p = dgp.spec.treated_fraction;
  cfg.q.resize(dgp.spec.mechanisms());
  for (int a = 0; a < dgp.spec.mechanisms(); ++a) cfg.q[a] = dgp.spec.share(a);
  cfg.n = sizes[0];
  cfg.sigma2 = dgp.sigma_b2 + dgp.sigma_w2;
  cfg.r = dgp.icc();
  cfg.rho = dgp.rho;
  cfg.mu = dgp.mu;
  return cfg;
}

PowerEstimate estimate_power(const PowerSimulation& sim) {
  const auto prepared = prepare(sim);
  std::vector<int> outcomes(sim.reps);
#pragma omp parallel for schedule(dynamic, 8)
  for (int rep = 0; rep < sim.reps; ++rep) outcomes[rep] = run_replicate(sim, prepared, rep);
  return summarize(outcomes, prepared.dgp.theta);
}

PowerEstimate estimate_power_serial(const PowerSimulation& sim) {
  const auto prepared = prepare(sim);
  std::vector<int> outcomes(sim.reps);
  for (int rep = 0; rep < sim.reps; ++rep) outcomes[rep] = run_replicate(sim, prepared, rep);
  return summarize(outcomes, prepared.dgp.theta);
}

}  // namespace twostage
