#include "twostage/chi_square.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "twostage/error.hpp"

namespace twostage {

namespace {

constexpr double kEps = 1e-16;
constexpr int kMaxIter = 100000;

// Series for P(s, x), valid for x < s + 1.
double gamma_p_series(double s, double x) {
  double term = 1.0 / s;
  double sum = term;
  for (int n = 1; n < kMaxIter; ++n) {
    term *= x / (s + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * kEps) break;
  }
  return sum * std::exp(-x + s * std::log(x) - std::lgamma(s));
}

// Modified Lentz continued fraction for Q(s, x), valid for x >= s + 1.
double gamma_q_fraction(double s, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - s;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxIter; ++i) {
    const double an = -i * (i - s);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return std::exp(-x + s * std::log(x) - std::lgamma(s)) * h;
}

void check_args(double s, double x) {
  if (!(s > 0.0) || !(x >= 0.0)) {
    throw Error(ErrorCode::OutOfRange, "incomplete gamma needs s > 0 and x >= 0");
  }
}

template <class Tail>
double bisect_quantile(Tail below_target, double dof) {
  double lo = 0.0;
  double hi = std::max(1.0, dof);
  while (below_target(hi)) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e12) throw Error(ErrorCode::NoConvergence, "chi-square quantile bracket");
  }
  while (hi - lo > 1e-10 * std::max(1.0, hi)) {
    const double mid = 0.5 * (lo + hi);
    (below_target(mid) ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

double gamma_p(double s, double x) {
  check_args(s, x);
  if (x == 0.0) return 0.0;
  return x < s + 1.0 ? gamma_p_series(s, x) : 1.0 - gamma_q_fraction(s, x);
}

double gamma_q(double s, double x) {
  check_args(s, x);
  if (x == 0.0) return 1.0;
  return x < s + 1.0 ? 1.0 - gamma_p_series(s, x) : gamma_q_fraction(s, x);
}

double chi2_cdf(double x, double dof) { return x <= 0.0 ? 0.0 : gamma_p(0.5 * dof, 0.5 * x); }

double chi2_sf(double x, double dof) { return x <= 0.0 ? 1.0 : gamma_q(0.5 * dof, 0.5 * x); }

double chi2_quantile(double p, double dof) {
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::OutOfRange, "quantile level must be in (0,1)");
  return bisect_quantile([&](double x) { return chi2_cdf(x, dof) < p; }, dof);
}

double chi2_upper_quantile(double alpha, double dof) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(ErrorCode::OutOfRange, "tail probability must be in (0,1)");
  }
  return bisect_quantile([&](double x) { return chi2_sf(x, dof) > alpha; }, dof);
}

double ncx2_sf(double x, double dof, double noncentrality) {
  if (!(noncentrality >= 0.0)) throw Error(ErrorCode::OutOfRange, "noncentrality must be >= 0");
  if (x <= 0.0) return 1.0;
  if (noncentrality == 0.0) return chi2_sf(x, dof);
  const double mu = 0.5 * noncentrality;
  const double half_x = 0.5 * x;
  const long cap = static_cast<long>(mu + 60.0 * std::sqrt(mu) + 200.0);
  double weight_sum = 0.0;
  double sf = 0.0;
  for (long i = 0; i <= cap; ++i) {
    const double w = std::exp(-mu + i * std::log(mu) - std::lgamma(i + 1.0));
    weight_sum += w;
    sf += w * gamma_q(0.5 * dof + i, half_x);
    if (weight_sum > 1.0 - 1e-14 && i > mu) break;
  }
  return std::min(1.0, sf);
}

double ncx2_cdf(double x, double dof, double noncentrality) {
  return 1.0 - ncx2_sf(x, dof, noncentrality);
}

}  // namespace twostage
