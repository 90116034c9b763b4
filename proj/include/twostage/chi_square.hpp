#pragma once

namespace twostage {

// Regularized lower and upper incomplete gamma functions P(s, x), Q(s, x).
double gamma_p(double s, double x);
double gamma_q(double s, double x);

double chi2_cdf(double x, double dof);
double chi2_sf(double x, double dof);

// x with chi2_cdf(x, dof) = p, by bisection to 1e-10.
double chi2_quantile(double p, double dof);
// x with chi2_sf(x, dof) = alpha; accurate for tiny alpha.
double chi2_upper_quantile(double alpha, double dof);

// Noncentral chi-square as a Poisson(λ/2) mixture of central chi-squares,
// truncated once the accumulated Poisson weight exceeds 1 - 1e-14.
double ncx2_sf(double x, double dof, double noncentrality);
double ncx2_cdf(double x, double dof, double noncentrality);

}  // namespace twostage
