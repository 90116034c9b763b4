#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/non_central_chi_squared.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "twostage/chi_square.hpp"

using namespace twostage;

TEST_CASE("incomplete gamma against boost") {
  for (double s : {0.5, 1.0, 2.5, 7.0, 30.0}) {
    for (double x : {1e-3, 0.3, 1.0, 4.0, 12.0, 60.0}) {
      CHECK(gamma_p(s, x) == doctest::Approx(boost::math::gamma_p(s, x)).epsilon(1e-12));
      CHECK(gamma_q(s, x) + gamma_p(s, x) == doctest::Approx(1.0).epsilon(1e-14));
      const double q = boost::math::gamma_q(s, x);
      if (q > 1e-300) CHECK(gamma_q(s, x) == doctest::Approx(q).epsilon(1e-10));
    }
  }
}

TEST_CASE("central chi-square cdf and quantiles") {
  for (int k = 1; k <= 8; ++k) {
    boost::math::chi_squared dist(k);
    for (double x : {0.1, 1.0, 3.84, 10.0, 25.0}) {
      CHECK(chi2_cdf(x, k) == doctest::Approx(boost::math::cdf(dist, x)).epsilon(1e-12));
    }
    for (double p : {0.01, 0.5, 0.95, 0.999}) {
      CHECK(chi2_quantile(p, k) == doctest::Approx(boost::math::quantile(dist, p)).epsilon(1e-9));
    }
    const double tail = boost::math::quantile(boost::math::complement(dist, 1e-12));
    CHECK(chi2_upper_quantile(1e-12, k) == doctest::Approx(tail).epsilon(1e-8));
  }
  CHECK(chi2_quantile(0.95, 1) == doctest::Approx(3.8415).epsilon(1e-4));
  CHECK(chi2_quantile(0.95, 4) == doctest::Approx(9.4877).epsilon(1e-4));
}

TEST_CASE("noncentral chi-square against boost") {
  for (int k : {1, 2, 4, 6}) {
    for (double lambda : {0.0, 0.5, 7.85, 40.0, 200.0}) {
      boost::math::non_central_chi_squared dist(k, lambda);
      for (double x : {0.5, 3.84, 12.0, 60.0, 250.0}) {
        const double expected = boost::math::cdf(dist, x);
        CHECK(ncx2_cdf(x, k, lambda) == doctest::Approx(expected).epsilon(1e-10));
        CHECK(ncx2_sf(x, k, lambda) + ncx2_cdf(x, k, lambda) == doctest::Approx(1.0));
      }
    }
  }
}

TEST_CASE("edge values") {
  CHECK(chi2_cdf(0.0, 3) == 0.0);
  CHECK(chi2_sf(0.0, 3) == 1.0);
  CHECK(ncx2_cdf(0.0, 2, 5.0) == 0.0);
}
