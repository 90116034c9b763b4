#include "twostage/design_compare.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "twostage/error.hpp"

namespace twostage {

namespace {

template <typename Derived>
double sum_sq(const Eigen::DenseBase<Derived>& x) {
  return x.derived().array().square().sum();
}

double icc_of(const Eigen::VectorXd& deviations) {
  const double squares = deviations.squaredNorm();
  const double n = static_cast<double>(deviations.size());
  if (squares == 0.0 || n < 2) return 0.0;
  const double total = deviations.sum();
  return (total * total - squares) / ((n - 1.0) * squares);
}

void check_population(const NoInterferencePopulation& pop) {
  if (pop.clusters() < 2 || pop.cluster_size() < 2 || pop.control.rows() != pop.treated.rows() ||
      pop.control.cols() != pop.treated.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "population needs J >= 2 clusters of n >= 2 units per arm");
  }
}

void check_against(const NoInterferencePopulation& pop, const DesignSpec& spec) {
  check_population(pop);
  if (spec.clusters() != pop.clusters()) {
    throw Error(ErrorCode::ShapeMismatch, "design and population have different J");
  }
  for (int nj : spec.cluster_sizes) {
    if (nj != pop.cluster_size()) {
      throw Error(ErrorCode::UnequalClusters, "design comparison assumes equal cluster sizes");
    }
  }
}

double resolve_r(const NoInterferencePopulation& pop, std::optional<double> r) {
  const double value = r ? *r : population_statistics(pop).pooled_icc;
  if (!(value >= 0.0 && value <= 1.0)) throw Error(ErrorCode::InvalidConfig, "r must lie in [0, 1]");
  return value;
}

double sample_variance(const std::vector<double>& v, double& mean) {
  mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size() - 1);
}

// Partial Fisher-Yates: the first k entries of a shuffled 0..size-1.
std::vector<int> choose(int size, int k, Rng& rng) {
  std::vector<int> idx(size);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<int> pick(i, size - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  return idx;
}

struct Draw {
  double two_stage, complete, cluster;
};

Draw draw_once(const NoInterferencePopulation& pop, const DesignSpec& spec, long long units_treated,
               long long clusters_treated, Rng& rng) {
  const int J = pop.clusters();
  const int n = pop.cluster_size();
  Draw out{};

  const auto assignment = draw_assignment(spec, rng);
  double total = 0.0;
  for (int j = 0; j < J; ++j) {
    double t = 0.0, c = 0.0;
    int nt = 0;
    for (int i = 0; i < n; ++i) {
      if (assignment.treated[j][i]) { t += pop.treated(j, i); ++nt; } else { c += pop.control(j, i); }
    }
    total += t / nt - c / (n - nt);
  }
  out.two_stage = total / J;

  const int N = J * n;
  std::vector<std::uint8_t> z(N, 0);
  for (int u : choose(N, static_cast<int>(units_treated), rng)) z[u] = 1;
  double t = 0.0, c = 0.0;
  for (int u = 0; u < N; ++u) {
    if (z[u]) t += pop.treated(u / n, u % n); else c += pop.control(u / n, u % n);
  }
  out.complete = t / units_treated - c / (N - units_treated);

  std::vector<std::uint8_t> zc(J, 0);
  for (int j : choose(J, static_cast<int>(clusters_treated), rng)) zc[j] = 1;
  t = c = 0.0;
  for (int j = 0; j < J; ++j) {
    if (zc[j]) t += pop.treated.row(j).mean(); else c += pop.control.row(j).mean();
  }
  out.cluster = t / clusters_treated - c / (J - clusters_treated);
  return out;
}

RandomizationVariances summarize(const std::vector<Draw>& draws) {
  std::vector<double> a, b, c;
  a.reserve(draws.size());
  b.reserve(draws.size());
  c.reserve(draws.size());
  for (const auto& d : draws) {
    a.push_back(d.two_stage);
    b.push_back(d.complete);
    c.push_back(d.cluster);
  }
  RandomizationVariances out;
  out.draws = static_cast<int>(draws.size());
  out.two_stage = sample_variance(a, out.mean_two_stage);
  out.complete = sample_variance(b, out.mean_complete);
  out.cluster = sample_variance(c, out.mean_cluster);
  return out;
}

}  // namespace

NoInterferencePopulation population_from_table(const PotentialOutcomeTable& table) {
  if (table.clusters.empty()) throw Error(ErrorCode::ShapeMismatch, "empty table");
  const Eigen::Index n = table.clusters[0].rows();
  NoInterferencePopulation pop;
  pop.treated.resize(table.cluster_count(), n);
  pop.control.resize(table.cluster_count(), n);
  for (int j = 0; j < table.cluster_count(); ++j) {
    if (table.clusters[j].rows() != n) {
      throw Error(ErrorCode::UnequalClusters, "design comparison assumes equal cluster sizes");
    }
    pop.treated.row(j) = table.clusters[j].col(index_of(1, 0, table.mechanisms)).transpose();
    pop.control.row(j) = table.clusters[j].col(index_of(0, 0, table.mechanisms)).transpose();
  }
  return pop;
}

PopulationStatistics population_statistics(const NoInterferencePopulation& pop) {
  check_population(pop);
  const double J = pop.clusters();
  const double n = pop.cluster_size();
  const double N = J * n;
  PopulationStatistics s;
  const Eigen::MatrixXd effect = pop.treated - pop.control;
  const Eigen::MatrixXd* arms[2] = {&pop.control, &pop.treated};
  for (int z = 0; z < 2; ++z) {
    const Eigen::MatrixXd& y = *arms[z];
    const Eigen::VectorXd cluster_means = y.rowwise().mean();
    const double grand = cluster_means.mean();
    s.eta2[z] = sum_sq(y.array() - grand) / (N - 1.0);
    s.eta2_w[z] = sum_sq(y.colwise() - cluster_means) / (N - 1.0);
    s.eta2_b[z] = (cluster_means.array() - grand).square().sum() / (J - 1.0);
    for (int j = 0; j < pop.clusters(); ++j) {
      s.icc_outcome[z].push_back(icc_of((y.row(j).array() - grand).matrix().transpose()));
    }
  }
  const Eigen::VectorXd cluster_effects = effect.rowwise().mean();
  s.ate = cluster_effects.mean();
  s.tau2 = sum_sq(effect.array() - s.ate) / (N - 1.0);
  s.tau2_w = sum_sq(effect.colwise() - cluster_effects) / (N - 1.0);
  s.tau2_b = (cluster_effects.array() - s.ate).square().sum() / (J - 1.0);
  for (int j = 0; j < pop.clusters(); ++j) {
    s.icc_effect.push_back(icc_of((effect.row(j).array() - s.ate).matrix().transpose()));
  }
  const double total = s.eta2[0] + s.eta2[1];
  s.pooled_icc = total > 0.0 ? 1.0 - (s.eta2_w[0] + s.eta2_w[1]) / total : 0.0;
  return s;
}

double ate_two_stage(const ExperimentData& data) {
  if (data.clusters.empty()) throw Error(ErrorCode::EmptyArm, "no clusters");
  double total = 0.0;
  for (const auto& c : data.clusters) {
    const auto m = arm_means(c);
    total += m.treated - m.control;
  }
  return total / data.cluster_count();
}

double ate_complete(const ExperimentData& data) {
  double t = 0.0, c = 0.0;
  std::size_t nt = 0, nc = 0;
  for (const auto& cl : data.clusters) {
    for (double y : cl.treated) t += y;
    for (double y : cl.control) c += y;
    nt += cl.treated.size();
    nc += cl.control.size();
  }
  if (nt == 0 || nc == 0) throw Error(ErrorCode::EmptyArm, "complete design needs both arms");
  return t / static_cast<double>(nt) - c / static_cast<double>(nc);
}

double ate_cluster(const ExperimentData& data) {
  double t = 0.0, c = 0.0;
  int jt = 0, jc = 0;
  for (const auto& cl : data.clusters) {
    if (!cl.treated.empty() && !cl.control.empty()) {
      throw Error(ErrorCode::BadCounts, "cluster '" + cl.id + "' mixes arms under a cluster design");
    }
    if (!cl.treated.empty()) {
      t += std::accumulate(cl.treated.begin(), cl.treated.end(), 0.0) / cl.treated.size();
      ++jt;
    } else if (!cl.control.empty()) {
      c += std::accumulate(cl.control.begin(), cl.control.end(), 0.0) / cl.control.size();
      ++jc;
    }
  }
  if (jt == 0 || jc == 0) throw Error(ErrorCode::EmptyArm, "cluster design needs treated and control clusters");
  return t / jt - c / jc;
}

double var_two_stage(const NoInterferencePopulation& pop, const DesignSpec& spec,
                     VarianceForm form, std::optional<double> r) {
  check_against(pop, spec);
  const auto s = population_statistics(pop);
  const double J = pop.clusters();
  const double n = pop.cluster_size();
  double total = 0.0;
  if (form == VarianceForm::Exact) {
    for (int a = 0; a < spec.mechanisms(); ++a) {
      const double n1 = spec.treated(0, a);
      const double n0 = spec.controls(0, a);
      total += spec.cluster_counts[a] * (s.eta2_w[1] / n1 + s.eta2_w[0] / n0 - s.tau2_w / n);
    }
    return (n * J - 1.0) / (J * J * J * (n - 1.0)) * total;
  }
  const double icc = resolve_r(pop, r);
  for (int a = 0; a < spec.mechanisms(); ++a) {
    const double p = spec.treated_fraction[a];
    total += spec.cluster_counts[a] * (s.eta2[1] / (n * p) + s.eta2[0] / (n * (1.0 - p)));
  }
  return (1.0 - icc) / (J * J) * total - (1.0 - icc) / (n * J) * s.tau2;
}

double var_complete(const NoInterferencePopulation& pop, long long total_treated) {
  check_population(pop);
  const auto N = static_cast<long long>(pop.clusters()) * pop.cluster_size();
  if (total_treated < 1 || total_treated >= N) {
    throw Error(ErrorCode::BadCounts, "treated units must lie in [1, N - 1]");
  }
  const auto s = population_statistics(pop);
  return s.eta2[1] / total_treated + s.eta2[0] / (N - total_treated) - s.tau2 / N;
}

double var_cluster(const NoInterferencePopulation& pop, long long treated_clusters,
                   VarianceForm form, std::optional<double> r) {
  check_population(pop);
  const long long J = pop.clusters();
  if (treated_clusters < 1 || treated_clusters >= J) {
    throw Error(ErrorCode::BadCounts, "treated clusters must lie in [1, J - 1]");
  }
  const auto s = population_statistics(pop);
  const double j1 = static_cast<double>(treated_clusters);
  const double j0 = static_cast<double>(J - treated_clusters);
  if (form == VarianceForm::Exact) {
    return s.eta2_b[1] / j1 + s.eta2_b[0] / j0 - s.tau2_b / J;
  }
  const double icc = resolve_r(pop, r);
  return icc * (s.eta2[1] / j1 + s.eta2[0] / j0 - s.tau2 / J);
}

long long matched_treated_units(const DesignSpec& spec) {
  long long total = 0;
  for (int a = 0; a < spec.mechanisms(); ++a) {
    total += static_cast<long long>(spec.cluster_counts[a]) * spec.treated(0, a);
  }
  return total;
}

long long matched_treated_clusters(const DesignSpec& spec) {
  double total = 0.0;
  for (int a = 0; a < spec.mechanisms(); ++a) total += spec.cluster_counts[a] * spec.treated_fraction[a];
  const double rounded = std::round(total);
  if (std::abs(total - rounded) > 1e-9) {
    throw Error(ErrorCode::BadCounts, "Σ J_a p_a = " + std::to_string(total) + " is not an integer");
  }
  return static_cast<long long>(rounded);
}

std::vector<std::string> approximation_identities(VarianceForm form) {
  if (form == VarianceForm::Exact) return {};
  return {"eta2_w(z) ~ (1-r) eta2(z)", "tau2_w ~ (1-r) tau2", "eta2_b(z) ~ r eta2(z)",
          "tau2_b ~ r tau2", "nJ-1 ~ nJ ~ n(J-1)"};
}

EfficiencyRatios efficiency_ratios(double r, int n, const std::vector<double>& p,
                                   const std::vector<double>& q) {
  if (p.empty() || p.size() != q.size()) throw Error(ErrorCode::InvalidConfig, "p and q must match");
  if (!(r >= 0.0 && r <= 1.0) || n < 1) throw Error(ErrorCode::InvalidConfig, "need r in [0,1], n >= 1");
  double qp = 0.0, q_over_p = 0.0, qsum = 0.0;
  bool constant = true;
  for (std::size_t a = 0; a < p.size(); ++a) {
    if (!(p[a] > 0.0 && p[a] <= 1.0) || !(q[a] > 0.0)) {
      throw Error(ErrorCode::InvalidConfig, "need p_a in (0, 1] and q_a > 0");
    }
    qp += q[a] * p[a];
    q_over_p += q[a] / p[a];
    qsum += q[a];
    constant = constant && p[a] == p[0];
  }
  if (std::abs(qsum - 1.0) > 1e-9) throw Error(ErrorCode::InvalidConfig, "q must sum to 1");
  // With a common p the product is (Σq)² = 1.
  const double product = constant ? 1.0 : qp * q_over_p;
  EfficiencyRatios out;
  out.complete = (1.0 - r) * product;
  if (r == 0.0) {
    out.cluster = std::numeric_limits<double>::infinity();
    out.cluster_infinite = true;
  } else {
    out.cluster = out.complete / (n * r);
  }
  return out;
}

RandomizationVariances randomization_variances(const NoInterferencePopulation& pop,
                                               const DesignSpec& spec, int draws,
                                               std::uint64_t seed) {
  check_against(pop, spec);
  if (draws < 2) throw Error(ErrorCode::InvalidConfig, "need at least 2 draws");
  const long long units = matched_treated_units(spec);
  const long long clusters = matched_treated_clusters(spec);
  std::vector<Draw> out(draws);
#pragma omp parallel for schedule(static)
  for (int d = 0; d < draws; ++d) {
    Rng rng = make_stream(seed, static_cast<std::uint64_t>(d));
    out[d] = draw_once(pop, spec, units, clusters, rng);
  }
  return summarize(out);
}

RandomizationVariances randomization_variances_serial(const NoInterferencePopulation& pop,
                                                      const DesignSpec& spec, int draws,
                                                      std::uint64_t seed) {
  check_against(pop, spec);
  if (draws < 2) throw Error(ErrorCode::InvalidConfig, "need at least 2 draws");
  const long long units = matched_treated_units(spec);
  const long long clusters = matched_treated_clusters(spec);
  std::vector<Draw> out(draws);
  for (int d = 0; d < draws; ++d) {
    Rng rng = make_stream(seed, static_cast<std::uint64_t>(d));
    out[d] = draw_once(pop, spec, units, clusters, rng);
  }
  return summarize(out);
}

}  // namespace twostage
