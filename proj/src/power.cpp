#include "twostage/power.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "twostage/box_qp.hpp"
#include "twostage/chi_square.hpp"
#include "twostage/error.hpp"

namespace twostage {

namespace {

constexpr double kResidualTol = 1e-9;
constexpr long long kMaxDenominator = 1000;

double block_form(const Eigen::Matrix2d& block) {
  return block(0, 0) + block(1, 1) - 2.0 * block(0, 1);
}

void check_condition(const PowerConfig& cfg, SampleSizeResult& out) {
  if (!cfg.rho_free() || cfg.r >= conservative_threshold(cfg.n)) return;
  std::ostringstream msg;
  msg << "r = " << cfg.r << " is below 1/(n+1) = " << conservative_threshold(cfg.n)
      << "; the rho-free formula is not guaranteed conservative";
  if (cfg.enforce_condition) throw Error(ErrorCode::ConservativeConditionViolated, msg.str());
  out.notes.push_back(msg.str());
}

std::optional<double> effective_rho(const PowerConfig& cfg) {
  if (cfg.rho_free()) return std::nullopt;
  return cfg.rho;
}

void finish(SampleSizeResult& out, const std::vector<double>& q) {
  if (!std::isfinite(out.J_raw) || out.J_raw <= 0.0) {
    throw Error(ErrorCode::SingularCovariance, "sample size is not finite and positive");
  }
  const auto ceiling = required_clusters(out.J_raw, q);
  out.J_required = ceiling.J;
  out.multiple = ceiling.multiple;
  if (!ceiling.rational) {
    out.notes.push_back("q is not a ratio of small integers; J is a plain ceiling");
  }
}

}  // namespace

void validate(const PowerConfig& cfg) {
  const int m = cfg.mechanisms();
  if (m < 1 || static_cast<int>(cfg.q.size()) != m) {
    throw Error(ErrorCode::InvalidConfig, "p and q need one entry per mechanism");
  }
  double total = 0.0;
  for (int a = 0; a < m; ++a) {
    if (!(cfg.p[a] > 0.0 && cfg.p[a] < 1.0)) {
      throw Error(ErrorCode::InvalidConfig, "every p_a must lie in (0, 1)");
    }
    if (!(cfg.q[a] > 0.0)) throw Error(ErrorCode::InvalidConfig, "every q_a must be positive");
    total += cfg.q[a];
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::InvalidConfig, "q must sum to 1");
  if (cfg.n < 2) throw Error(ErrorCode::InvalidConfig, "cluster size n must be at least 2");
  if (!(cfg.sigma2 > 0.0) || !std::isfinite(cfg.sigma2)) {
    throw Error(ErrorCode::InvalidConfig, "sigma2 must be positive");
  }
  if (!(cfg.r >= 0.0 && cfg.r <= 1.0)) throw Error(ErrorCode::InvalidConfig, "r must lie in [0, 1]");
  if (cfg.rho && !(*cfg.rho >= 0.0 && *cfg.rho <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "rho must lie in [0, 1]");
  }
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw Error(ErrorCode::BadAlpha, "alpha must lie in (0, 1)");
  if (!(cfg.beta > 0.0 && cfg.beta < 1.0)) throw Error(ErrorCode::InvalidConfig, "beta must lie in (0, 1)");
  if (cfg.mu == 0.0) throw Error(ErrorCode::ZeroAlternative, "effect size mu is zero");
  if (!(cfg.mu > 0.0) || !std::isfinite(cfg.mu)) {
    throw Error(ErrorCode::InvalidConfig, "effect size mu must be positive");
  }
}

double noncentrality(double q_threshold, int dof, double beta) {
  if (!(q_threshold > 0.0) || dof < 1) {
    throw Error(ErrorCode::OutOfRange, "need q > 0 and dof >= 1");
  }
  if (!(beta > 0.0 && beta < 1.0)) throw Error(ErrorCode::InvalidConfig, "beta must lie in (0, 1)");
  const double target = 1.0 - beta;
  auto residual = [&](double lambda) { return ncx2_sf(q_threshold, dof, lambda) - target; };

  if (residual(0.0) >= -kResidualTol) return 0.0;
  double hi = 1.0;
  while (residual(hi) < 0.0) {
    hi *= 2.0;
    if (hi > 1e9) throw Error(ErrorCode::NoConvergence, "noncentrality bracket exhausted");
  }
  double lo = 0.0;
  double mid = hi;
  for (int iter = 0; iter < 400; ++iter) {
    mid = 0.5 * (lo + hi);
    const double f = residual(mid);
    if (f == 0.0) break;
    if (f < 0.0) lo = mid; else hi = mid;
    if (hi - lo <= 1e-13 * std::max(1.0, hi)) break;
  }
  mid = 0.5 * (lo + hi);
  if (std::abs(residual(mid)) > kResidualTol) {
    throw Error(ErrorCode::NoConvergence, "noncentrality residual above 1e-9");
  }
  return mid;
}

Eigen::Matrix2d d0_block(double p, double q, int n, double r, std::optional<double> rho) {
  Eigen::Matrix2d block;
  block(0, 0) = r + (1.0 - p) * (1.0 - r) / (n * p);
  block(1, 1) = r + p * (1.0 - r) / (n * (1.0 - p));
  block(0, 1) = rho ? *rho * (r - (1.0 - r) / n) : 0.0;
  block(1, 0) = block(0, 1);
  return block / q;
}

Eigen::MatrixXd d0_matrix(const PowerConfig& cfg) {
  const int m = cfg.mechanisms();
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(2 * m, 2 * m);
  for (int a = 0; a < m; ++a) {
    d.block<2, 2>(2 * a, 2 * a) = d0_block(cfg.p[a], cfg.q[a], cfg.n, cfg.r, effective_rho(cfg));
  }
  return d;
}

CeilingResult required_clusters(double J_raw, const std::vector<double>& q) {
  CeilingResult out;
  for (double qa : q) {
    long long denominator = 0;
    for (long long d = 1; d <= kMaxDenominator; ++d) {
      if (std::abs(qa * d - std::round(qa * d)) <= 1e-9) {
        denominator = d;
        break;
      }
    }
    if (denominator == 0) {
      out.rational = false;
      out.multiple = 1;
      break;
    }
    out.multiple = std::lcm(out.multiple, denominator);
  }
  const auto base = static_cast<long long>(std::ceil(J_raw));
  out.J = ((base + out.multiple - 1) / out.multiple) * out.multiple;
  return out;
}

SampleSizeResult sample_size_general(const Eigen::MatrixXd& C, const Eigen::MatrixXd& E,
                                     const Eigen::VectorXd& x, double alpha, double beta,
                                     const std::vector<double>& q) {
  const auto k = C.rows();
  if (k < 1 || E.rows() != C.cols() || E.cols() != C.cols() || x.size() != k) {
    throw Error(ErrorCode::ShapeMismatch, "C, E and x disagree in size");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::BadAlpha, "alpha must lie in (0, 1)");
  if (x.isZero(0.0)) throw Error(ErrorCode::ZeroAlternative, "alternative x is zero");
  const Eigen::MatrixXd middle = C * E * C.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(middle, Eigen::EigenvaluesOnly);
  const double largest = eig.eigenvalues().maxCoeff();
  const double smallest = eig.eigenvalues().minCoeff();
  if (!(smallest > 0.0) || largest / smallest > 1e10) {
    throw Error(ErrorCode::SingularCovariance, "C E Cᵀ is singular or ill-conditioned");
  }
  SampleSizeResult out;
  out.dof = static_cast<int>(k);
  out.denominator = x.dot(middle.llt().solve(x));
  out.noncentrality = noncentrality(chi2_upper_quantile(alpha, out.dof), out.dof, beta);
  out.J_raw = out.noncentrality / out.denominator;
  finish(out, q);
  return out;
}

SampleSizeResult sample_size_de(const PowerConfig& cfg) {
  validate(cfg);
  SampleSizeResult out;
  out.target = EffectKind::DE;
  check_condition(cfg, out);
  const int m = cfg.mechanisms();
  out.dof = m;
  out.noncentrality = noncentrality(chi2_upper_quantile(cfg.alpha, m), m, cfg.beta);
  for (int a = 0; a < m; ++a) {
    const double v = block_form(d0_block(cfg.p[a], cfg.q[a], cfg.n, cfg.r, effective_rho(cfg)));
    if (out.attained_mechanism < 0 || v > out.denominator) {
      out.denominator = v;
      out.attained_mechanism = a;
    }
  }
  out.J_raw = out.noncentrality * cfg.sigma2 / (cfg.mu * cfg.mu) * out.denominator;
  finish(out, cfg.q);
  return out;
}

SampleSizeResult sample_size_mde(const PowerConfig& cfg) {
  validate(cfg);
  SampleSizeResult out;
  out.target = EffectKind::MDE;
  check_condition(cfg, out);
  out.dof = 1;
  out.noncentrality = noncentrality(chi2_upper_quantile(cfg.alpha, 1), 1, cfg.beta);
  for (int a = 0; a < cfg.mechanisms(); ++a) {
    out.denominator += cfg.q[a] * cfg.q[a] *
                       block_form(d0_block(cfg.p[a], cfg.q[a], cfg.n, cfg.r, effective_rho(cfg)));
  }
  out.J_raw = out.noncentrality * cfg.sigma2 / (cfg.mu * cfg.mu) * out.denominator;
  finish(out, cfg.q);
  return out;
}

SampleSizeResult sample_size_se(const PowerConfig& cfg) {
  validate(cfg);
  const int m = cfg.mechanisms();
  if (m < 2) throw Error(ErrorCode::BadKind, "spillover sample size needs at least 2 mechanisms");
  SampleSizeResult out;
  out.target = EffectKind::SE;
  out.dof = 2 * (m - 1);
  out.noncentrality = noncentrality(chi2_upper_quantile(cfg.alpha, out.dof), out.dof, cfg.beta);
  const Eigen::MatrixXd C = build_contrast(EffectKind::SE, m).matrix;
  const Eigen::MatrixXd M = C * d0_matrix(cfg) * C.transpose();
  const auto minimum = min_quadratic_on_S(0.5 * (M + M.transpose()));
  out.denominator = minimum.value;
  out.minimizer = minimum.argmin;
  out.J_raw = out.noncentrality * cfg.sigma2 / (cfg.mu * cfg.mu * out.denominator);
  finish(out, cfg.q);
  return out;
}

SampleSizeResult sample_size(const PowerConfig& cfg, EffectKind kind) {
  switch (kind) {
    case EffectKind::DE: return sample_size_de(cfg);
    case EffectKind::MDE: return sample_size_mde(cfg);
    case EffectKind::SE: return sample_size_se(cfg);
    case EffectKind::Custom: break;
  }
  throw Error(ErrorCode::BadKind, "custom contrasts go through sample_size_general");
}

}  // namespace twostage
