#include "twostage/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "twostage/chi_square.hpp"
#include "twostage/csv_io.hpp"
#include "twostage/design_compare.hpp"
#include "twostage/error.hpp"
#include "twostage/inference.hpp"
#include "twostage/power.hpp"
#include "twostage/regression.hpp"
#include "twostage/simulation.hpp"

namespace twostage {

using nlohmann::json;

namespace {

constexpr std::uint64_t kComparePopulationStream = std::uint64_t{1} << 62;

constexpr const char* kInverseFormNote =
    "sample sizes use J = lambda / (x' (C E C')^{-1} x), i.e. the inverse of C E C' "
    "inside the quadratic form";

// Keeps insertion order and drops repeats, so each condition is reported once.
class Warnings {
 public:
  void add(const std::string& text) {
    if (seen_.insert(text).second) list_.push_back(text);
  }
  json to_json() const { return list_; }

 private:
  std::set<std::string> seen_;
  std::vector<std::string> list_;
};

json header(const char* command) {
  return {{"schema", "twostage-report"}, {"version", kReportVersion}, {"command", command}};
}

json vec(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

json mat(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(vec(m.row(i).transpose()));
  return out;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

double parse_number(const std::string& token, const std::string& name) {
  double value = 0.0;
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc() || ptr != end || token.empty()) {
    throw Error(ErrorCode::InvalidConfig, name + ": cannot parse '" + token + "'");
  }
  return value;
}

std::string format_number(double x) {
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof buffer, x);
  (void)ec;
  return std::string(buffer, ptr);
}

PowerConfig power_config(const RunConfig& cfg) {
  PowerConfig pc;
  pc.p = parse_list(cfg.p, "p");
  if (cfg.q.empty()) {
    pc.q.assign(pc.p.size(), pc.p.empty() ? 0.0 : 1.0 / static_cast<double>(pc.p.size()));
  } else {
    pc.q = parse_list(cfg.q, "q");
  }
  pc.n = cfg.n;
  pc.sigma2 = cfg.sigma2;
  pc.r = cfg.r;
  pc.rho = cfg.rho;
  pc.mu = cfg.mu;
  pc.alpha = cfg.alpha;
  pc.beta = cfg.beta;
  pc.conservative = cfg.conservative;
  validate(pc);
  return pc;
}

json power_inputs(const PowerConfig& pc) {
  json in = {{"p", pc.p},         {"q", pc.q},       {"n", pc.n},
             {"sigma2", pc.sigma2}, {"r", pc.r},     {"mu", pc.mu},
             {"alpha", pc.alpha}, {"beta", pc.beta}, {"mode", pc.rho_free() ? "conservative" : "rho"}};
  in["rho"] = pc.rho ? json(*pc.rho) : json(nullptr);
  return in;
}

std::string mechanism_label(const ExperimentData& data, int a) {
  return std::to_string(a < static_cast<int>(data.mechanism_labels.size()) ? data.mechanism_labels[a]
                                                                           : a + 1);
}

std::vector<std::string> component_labels(EffectKind kind, const ExperimentData& data) {
  const int m = data.mechanisms;
  std::vector<std::string> out;
  switch (kind) {
    case EffectKind::DE:
      for (int a = 0; a < m; ++a) out.push_back("ADE(" + mechanism_label(data, a) + ")");
      break;
    case EffectKind::MDE:
      out.push_back("MDE");
      break;
    case EffectKind::SE:
      for (int z = 1; z >= 0; --z) {
        for (int a = 0; a + 1 < m; ++a) {
          out.push_back("ASE(" + std::to_string(z) + "; " + mechanism_label(data, a) + ", " +
                        mechanism_label(data, a + 1) + ")");
        }
      }
      break;
    case EffectKind::Custom:
      break;
  }
  return out;
}

json sample_size_json(const SampleSizeResult& res) {
  json out = {{"effect", to_string(res.target)},
              {"J_raw", res.J_raw},
              {"J_required", res.J_required},
              {"cluster_multiple", res.multiple},
              {"noncentrality", res.noncentrality},
              {"dof", res.dof},
              {"denominator", res.denominator}};
  if (res.attained_mechanism >= 0) out["attained_mechanism"] = res.attained_mechanism + 1;
  if (res.minimizer.size() > 0) out["minimizer"] = vec(res.minimizer);
  return out;
}

}  // namespace

std::vector<double> parse_list(const std::string& text, const std::string& name) {
  std::vector<double> out;
  std::stringstream stream(text);
  std::string token;
  while (std::getline(stream, token, ',')) {
    token = trim(token);
    const auto slash = token.find('/');
    if (slash == std::string::npos) {
      out.push_back(parse_number(token, name));
    } else {
      const double num = parse_number(trim(token.substr(0, slash)), name);
      const double den = parse_number(trim(token.substr(slash + 1)), name);
      if (den == 0.0) throw Error(ErrorCode::InvalidConfig, name + ": zero denominator");
      out.push_back(num / den);
    }
  }
  if (out.empty()) throw Error(ErrorCode::InvalidConfig, name + ": empty list");
  return out;
}

std::vector<EffectKind> parse_effects(const std::string& text) {
  if (text == "all") return {EffectKind::DE, EffectKind::MDE, EffectKind::SE};
  if (text == "de") return {EffectKind::DE};
  if (text == "mde") return {EffectKind::MDE};
  if (text == "se") return {EffectKind::SE};
  throw Error(ErrorCode::BadKind, "effect must be de, mde, se or all (got '" + text + "')");
}

json run_analyze(const RunConfig& cfg) {
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw Error(ErrorCode::BadAlpha, "alpha must lie in (0, 1)");
  const auto kinds = parse_effects(cfg.effect);
  Warnings warnings;
  auto grouped = read_csv(cfg.data_path, cfg.allow_drop ? ArmPolicy::AllowDrop : ArmPolicy::Strict);
  const ExperimentData& data = grouped.data;
  if (!grouped.dropped.empty()) {
    std::string ids;
    for (const auto& id : grouped.dropped) ids += (ids.empty() ? "" : ", ") + id;
    warnings.add("dropped " + std::to_string(grouped.dropped.size()) +
                 " cluster(s) lacking a treated or control unit: " + ids);
  }

  json report = header("analyze");
  report["inputs"] = {{"data", cfg.data_path},
                      {"effect", cfg.effect},
                      {"alpha", cfg.alpha},
                      {"allow_drop", cfg.allow_drop}};

  const int m = data.mechanisms;
  const auto counts = data.clusters_per_mechanism();
  json mechanisms = json::array();
  long long units = 0;
  for (const auto& c : data.clusters) units += c.size();
  for (int a = 0; a < m; ++a) {
    mechanisms.push_back({{"index", a + 1}, {"label", data.mechanism_labels[a]}, {"clusters", counts[a]}});
  }
  report["data"] = {{"clusters", data.cluster_count()},
                    {"units", units},
                    {"mechanisms", mechanisms},
                    {"dropped", grouped.dropped}};

  const auto yhat = mean_vector(data);
  const auto dhat = covariance_hat(data);
  const double J = data.cluster_count();
  report["mean_vector"] = vec(yhat.values);
  report["covariance_hat"] = mat(dhat.matrix);

  const double z = std::sqrt(chi2_upper_quantile(cfg.alpha, 1));
  json effects = json::object();
  for (EffectKind kind : kinds) {
    if (kind == EffectKind::SE && m < 2) {
      warnings.add("spillover effects need at least 2 mechanisms; skipped");
      continue;
    }
    const auto contrast = build_contrast(kind, m, data.shares());
    const Eigen::VectorXd estimate = contrast.matrix * yhat.values;
    const Eigen::MatrixXd cov = contrast.matrix * dhat.matrix * contrast.matrix.transpose() / J;
    const auto labels = component_labels(kind, data);
    json components = json::array();
    for (Eigen::Index i = 0; i < estimate.size(); ++i) {
      const double se = std::sqrt(std::max(0.0, cov(i, i)));
      components.push_back({{"label", labels[i]},
                            {"estimate", estimate[i]},
                            {"std_error", se},
                            {"ci_low", estimate[i] - z * se},
                            {"ci_high", estimate[i] + z * se}});
    }
    const auto test = test_effect(data, kind, cfg.alpha);
    effects[std::string(to_string(kind))] = {
        {"components", components},
        {"covariance", mat(cov)},
        {"ci_level", 1.0 - cfg.alpha},
        {"test",
         {{"statistic", test.statistic},
          {"dof", test.dof},
          {"p_value", test.p_upper},
          {"critical_value", test.critical_value},
          {"reject", test.reject}}}};
  }
  report["effects"] = effects;

  const auto de = build_contrast(EffectKind::DE, m);
  const Eigen::MatrixXd de_cov = de.matrix * dhat.matrix * de.matrix.transpose() / J;
  json hh = json::array();
  for (int a = 0; a < m; ++a) {
    json entry = {{"mechanism", data.mechanism_labels[a]}, {"dhat_variance", de_cov(a, a)}};
    try {
      entry["hh_variance"] = variance_ade_hh(data, a);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::TinyArm) throw;
      entry["hh_variance"] = nullptr;
      warnings.add("per-mechanism within-cluster variance needs 2 units per arm; "
                   "hh_variance left null where unavailable");
    }
    hh.push_back(entry);
  }
  report["ade_variances"] = hh;

  const auto eq = verify_equivalence(data, 1e-8);
  report["regression_check"] = {{"coefficient_gap", eq.coefficient_gap},
                                {"covariance_gap", eq.covariance_gap},
                                {"tolerance", eq.tolerance},
                                {"pass", eq.pass}};
  report["warnings"] = warnings.to_json();
  return report;
}

json run_power(const RunConfig& cfg) {
  PowerConfig pc = power_config(cfg);
  const auto kinds = parse_effects(cfg.effect);
  Warnings warnings;
  json report = header("power");
  report["inputs"] = power_inputs(pc);
  warnings.add(kInverseFormNote);

  if (!cfg.sweep_r.empty()) {
    const auto grid = parse_list(cfg.sweep_r, "sweep-r");
    pc.enforce_condition = false;
    std::ostringstream csv;
    csv << "r,J_de,J_mde,J_se\n";
    json rows = json::array();
    std::string below;
    for (double r : grid) {
      pc.r = r;
      validate(pc);
      if (pc.rho_free() && r < conservative_threshold(pc.n)) {
        below += (below.empty() ? "" : ", ") + format_number(r);
      }
      json row = {{"r", r}};
      csv << format_number(r);
      for (EffectKind kind : {EffectKind::DE, EffectKind::MDE, EffectKind::SE}) {
        const std::string key = "J_" + std::string(to_string(kind));
        if (kind == EffectKind::SE && pc.mechanisms() < 2) {
          row[key] = nullptr;
          row[key + "_raw"] = nullptr;
          csv << ",NA";
          continue;
        }
        const auto res = sample_size(pc, kind);
        row[key] = res.J_required;
        row[key + "_raw"] = res.J_raw;
        csv << ',' << res.J_required;
      }
      csv << '\n';
      rows.push_back(row);
    }
    if (!below.empty()) {
      warnings.add("r below 1/(n+1) (" + below +
                   "): the rho-free DE/MDE formulas are not guaranteed conservative there");
    }
    if (pc.mechanisms() < 2) warnings.add("spillover sample sizes need at least 2 mechanisms; J_se is NA");
    report["sweep"] = {{"rows", rows}};
    if (!cfg.sweep_out.empty()) {
      std::ofstream out(cfg.sweep_out, std::ios::binary);
      if (!out) throw Error(ErrorCode::InvalidConfig, "cannot write '" + cfg.sweep_out + "'");
      out << csv.str();
      report["sweep"]["csv"] = cfg.sweep_out;
    }
    report["warnings"] = warnings.to_json();
    return report;
  }

  json targets = json::object();
  for (EffectKind kind : kinds) {
    if (kind == EffectKind::SE && pc.mechanisms() < 2) {
      warnings.add("spillover sample sizes need at least 2 mechanisms; skipped");
      continue;
    }
    const auto res = sample_size(pc, kind);
    for (const auto& note : res.notes) warnings.add(note);
    targets[std::string(to_string(kind))] = sample_size_json(res);
  }
  report["sample_sizes"] = targets;
  report["warnings"] = warnings.to_json();
  return report;
}

json run_simulate(const RunConfig& cfg) {
  const PowerConfig pc = power_config(cfg);
  const auto kinds = parse_effects(cfg.effect);
  Warnings warnings;
  json report = header("simulate");
  report["inputs"] = power_inputs(pc);
  report["inputs"]["reps"] = cfg.reps;
  report["inputs"]["seed"] = cfg.seed;
  report["inputs"]["sizes"] = cfg.unequal_sizes ? "unequal" : "equal";
  report["inputs"]["fixed_population"] = cfg.fixed_population;
  report["inputs"]["redraw_theta"] = cfg.redraw_theta;
  if (!pc.rho) warnings.add("rho not given; data generated with rho = 0");

  json results = json::object();
  for (EffectKind kind : kinds) {
    if (kind == EffectKind::SE && pc.mechanisms() < 2) {
      warnings.add("spillover effects need at least 2 mechanisms; skipped");
      continue;
    }
    PowerSimulation sim;
    sim.power = pc;
    sim.kind = kind;
    sim.scheme = cfg.scheme == "auto" ? scheme_for(kind) : parse_scheme(cfg.scheme);
    if (sim.scheme == EffectScheme::Explicit) {
      throw Error(ErrorCode::BadScheme, "explicit theta is not available from the command line");
    }
    if (pc.mechanisms() != 3 && sim.scheme != EffectScheme::Null) {
      warnings.add("theta schemes are laid out for 3 mechanisms; offsets were cycled for m = " +
                   std::to_string(pc.mechanisms()));
    }
    std::string source = "given";
    if (cfg.clusters > 0) {
      sim.clusters = cfg.clusters;
    } else {
      const auto res = sample_size(pc, kind);
      for (const auto& note : res.notes) warnings.add(note);
      sim.clusters = res.J_required;
      source = "formula";
    }
    sim.reps = cfg.reps;
    sim.seed = cfg.seed;
    sim.sizes = cfg.unequal_sizes ? SizePattern::Unequal : SizePattern::Equal;
    sim.fixed_population = cfg.fixed_population;
    sim.redraw_theta = cfg.redraw_theta;
    for (const auto& note : dgp_from_power(pc, sim.clusters, sim.sizes).spec.notes) warnings.add(note);

    const auto est = estimate_power(sim);
    if (est.failures > 0) {
      warnings.add(std::string(to_string(kind)) + ": " + std::to_string(est.failures) +
                   " replicate(s) failed and count as non-rejections");
    }
    results[std::string(to_string(kind))] = {{"clusters", sim.clusters},
                                             {"clusters_source", source},
                                             {"scheme", to_string(sim.scheme)},
                                             {"theta", vec(est.theta)},
                                             {"power", est.power},
                                             {"std_error", est.standard_error},
                                             {"target_power", 1.0 - pc.beta},
                                             {"reps", est.reps},
                                             {"rejections", est.rejections},
                                             {"failures", est.failures}};
  }
  report["power"] = results;
  report["warnings"] = warnings.to_json();
  return report;
}

json run_compare(const RunConfig& cfg) {
  const auto p = parse_list(cfg.p, "p");
  std::vector<double> q;
  if (cfg.q.empty()) {
    q.assign(p.size(), 1.0 / static_cast<double>(p.size()));
  } else {
    q = parse_list(cfg.q, "q");
  }
  if (cfg.clusters < 2) throw Error(ErrorCode::InvalidConfig, "compare needs --clusters >= 2");
  if (!(cfg.sigma2 > 0.0)) throw Error(ErrorCode::InvalidConfig, "sigma2 must be positive");
  if (!(cfg.r >= 0.0 && cfg.r <= 1.0)) throw Error(ErrorCode::InvalidConfig, "r must lie in [0, 1]");
  if (p.size() != q.size()) throw Error(ErrorCode::InvalidConfig, "p and q must match");
  const auto ratios = efficiency_ratios(cfg.r, cfg.n, p, q);

  Warnings warnings;
  json report = header("compare");
  report["inputs"] = {{"p", p},           {"q", q},         {"n", cfg.n},
                      {"r", cfg.r},       {"sigma2", cfg.sigma2}, {"ate", cfg.mu},
                      {"clusters", cfg.clusters}, {"reps", cfg.reps}, {"seed", cfg.seed}};
  report["inputs"]["rho"] = cfg.rho ? json(*cfg.rho) : json(nullptr);
  report["ratios"] = {{"complete", ratios.complete},
                      {"cluster", ratios.cluster_infinite ? json(nullptr) : json(ratios.cluster)},
                      {"cluster_infinite", ratios.cluster_infinite}};
  if (ratios.cluster_infinite) warnings.add("r = 0: the cluster-design ratio is infinite");

  std::vector<int> counts(p.size());
  for (std::size_t a = 0; a < p.size(); ++a) {
    const double share = q[a] * static_cast<double>(cfg.clusters);
    counts[a] = static_cast<int>(std::llround(share));
    if (std::abs(share - counts[a]) > 1e-6) {
      throw Error(ErrorCode::InvalidConfig, "q_a J must be an integer for every mechanism");
    }
  }
  const int J = static_cast<int>(cfg.clusters);
  const DesignSpec spec = make_design(counts, std::vector<int>(J, cfg.n), p);
  for (const auto& note : spec.notes) warnings.add(note);

  DGPConfig dgp;
  dgp.theta = Eigen::Vector2d(cfg.mu, 0.0);
  dgp.sigma_b2 = cfg.r * cfg.sigma2;
  dgp.sigma_w2 = (1.0 - cfg.r) * cfg.sigma2;
  dgp.rho = cfg.rho.value_or(0.0);
  dgp.spec = make_design({J}, std::vector<int>(J, cfg.n), {0.5});
  Rng rng = make_stream(cfg.seed, kComparePopulationStream);
  const auto pop = population_from_table(generate_potential_outcomes(dgp, rng));
  const auto stats = population_statistics(pop);
  report["population"] = {{"ate", stats.ate},
                          {"eta2", {stats.eta2[0], stats.eta2[1]}},
                          {"eta2_w", {stats.eta2_w[0], stats.eta2_w[1]}},
                          {"eta2_b", {stats.eta2_b[0], stats.eta2_b[1]}},
                          {"tau2", stats.tau2},
                          {"tau2_w", stats.tau2_w},
                          {"tau2_b", stats.tau2_b},
                          {"pooled_icc", stats.pooled_icc}};

  const long long units = matched_treated_units(spec);
  json variances = {
      {"two_stage",
       {{"exact", var_two_stage(pop, spec, VarianceForm::Exact)},
        {"approximate", var_two_stage(pop, spec, VarianceForm::Approximate, cfg.r)}}},
      {"complete", {{"exact", var_complete(pop, units)}, {"treated_units", units}}}};
  std::optional<long long> treated_clusters;
  try {
    treated_clusters = matched_treated_clusters(spec);
    variances["cluster"] = {
        {"exact", var_cluster(pop, *treated_clusters, VarianceForm::Exact)},
        {"approximate", var_cluster(pop, *treated_clusters, VarianceForm::Approximate, cfg.r)},
        {"treated_clusters", *treated_clusters}};
  } catch (const Error& e) {
    if (e.code() != ErrorCode::BadCounts) throw;
    variances["cluster"] = nullptr;
    warnings.add(std::string("cluster design skipped: ") + e.what());
  }
  report["variances"] = variances;
  report["approximate_form"] = approximation_identities(VarianceForm::Approximate);

  if (cfg.reps > 0 && treated_clusters) {
    const auto mc = randomization_variances(pop, spec, cfg.reps, cfg.seed);
    auto rel = [](double analytic, double empirical) { return std::abs(analytic - empirical) / empirical; };
    const double ts = variances["two_stage"]["exact"];
    const double cp = variances["complete"]["exact"];
    const double cl = variances["cluster"]["exact"];
    report["monte_carlo"] = {{"draws", mc.draws},
                             {"two_stage", {{"variance", mc.two_stage}, {"relative_error_exact", rel(ts, mc.two_stage)}}},
                             {"complete", {{"variance", mc.complete}, {"relative_error_exact", rel(cp, mc.complete)}}},
                             {"cluster", {{"variance", mc.cluster}, {"relative_error_exact", rel(cl, mc.cluster)}}}};
  } else if (cfg.reps > 0) {
    warnings.add("Monte Carlo validation needs the cluster design; skipped");
  }
  report["warnings"] = warnings.to_json();
  return report;
}

json run(const RunConfig& cfg) {
  switch (cfg.command) {
    case Command::Analyze: return run_analyze(cfg);
    case Command::Power: return run_power(cfg);
    case Command::Simulate: return run_simulate(cfg);
    case Command::Compare: return run_compare(cfg);
  }
  throw Error(ErrorCode::InvalidConfig, "unknown command");
}

std::string render(const json& report) { return report.dump(2) + "\n"; }

}  // namespace twostage
