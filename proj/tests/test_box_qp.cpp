#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "twostage/box_qp.hpp"
#include "twostage/error.hpp"

using namespace twostage;

namespace {

Eigen::MatrixXd random_spd(int k, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd A(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) A(i, j) = normal(rng);
  return A * A.transpose() + 0.1 * Eigen::MatrixXd::Identity(k, k);
}

}  // namespace

TEST_CASE("isotropic M") {
  for (double c : {0.5, 2.0, 10.0}) {
    const auto r = min_quadratic_on_S(c * Eigen::MatrixXd::Identity(3, 3));
    CHECK(r.value == doctest::Approx(1.0 / c));
    CHECK(r.argmin.cwiseAbs().sum() == doctest::Approx(1.0));
    CHECK(r.argmin.cwiseAbs().maxCoeff() == doctest::Approx(1.0));
  }
}

TEST_CASE("2 x 2 against grid search") {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 20; ++t) {
    const Eigen::Matrix2d M = random_spd(2, rng);
    CHECK(min_quadratic_on_S(M).value == doctest::Approx(oracle::grid_min_2d(M)).epsilon(1e-6));
  }
}

TEST_CASE("value never exceeds random feasible points") {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_int_distribution<int> coord(0, 3);
  for (int t = 0; t < 5; ++t) {
    const Eigen::MatrixXd M = random_spd(4, rng);
    const Eigen::MatrixXd H = M.inverse();
    const auto r = min_quadratic_on_S(M);
    CHECK(r.argmin.cwiseAbs().maxCoeff() == doctest::Approx(1.0));
    CHECK(r.argmin.dot(H * r.argmin) == doctest::Approx(r.value));
    for (int s = 0; s < 500; ++s) {
      Eigen::Vector4d x;
      for (int i = 0; i < 4; ++i) x[i] = unit(rng);
      x[coord(rng)] = unit(rng) < 0 ? -1.0 : 1.0;
      CHECK(r.value <= x.dot(H * x) + 1e-12);
    }
  }
}

TEST_CASE("non-SPD input") {
  Eigen::Matrix2d M;
  M << 1.0, 2.0, 2.0, 1.0;
  try {
    min_quadratic_on_S(M);
    FAIL("expected NotSPD");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotSPD);
  }
}

TEST_CASE("active set agrees with projected gradient") {
  std::mt19937_64 rng(33);
  std::normal_distribution<double> normal(0.0, 3.0);
  for (int t = 0; t < 30; ++t) {
    const int k = 2 + t % 5;
    const Eigen::MatrixXd Q = random_spd(k, rng);
    Eigen::VectorXd b(k);
    for (int i = 0; i < k; ++i) b[i] = normal(rng);
    const Eigen::VectorXd lo = -Eigen::VectorXd::Ones(k), hi = Eigen::VectorXd::Ones(k);
    const auto a = solve_box_qp(Q, b, lo, hi);
    const auto p = solve_box_qp_projected(Q, b, lo, hi, Eigen::VectorXd::Zero(k));
    CHECK(a.value <= p.value + 1e-9);
    CHECK(a.value == doctest::Approx(p.value).epsilon(1e-7));
    CHECK((a.x.array() >= lo.array() - 1e-15).all());
    CHECK((a.x.array() <= hi.array() + 1e-15).all());
  }
}

TEST_CASE("unconstrained optimum inside the box") {
  Eigen::Matrix2d Q = Eigen::Matrix2d::Identity() * 4.0;
  Eigen::Vector2d b(-1.0, 2.0);
  const auto r = solve_box_qp(Q, b, -Eigen::Vector2d::Ones(), Eigen::Vector2d::Ones());
  CHECK(r.x[0] == doctest::Approx(0.25));
  CHECK(r.x[1] == doctest::Approx(-0.5));
  CHECK_FALSE(r.used_fallback);
}
