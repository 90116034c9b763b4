#include "twostage/box_qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "twostage/error.hpp"

namespace twostage {

namespace {

enum class Bound { Free, Lower, Upper };

double objective(const Eigen::MatrixXd& Q, const Eigen::VectorXd& b, const Eigen::VectorXd& x) {
  return 0.5 * x.dot(Q * x) + b.dot(x);
}

// gᵀx - min over the box of gᵀy; bounds f(x) - f* for convex f.
double frank_wolfe_gap(const Eigen::VectorXd& g, const Eigen::VectorXd& x,
                       const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  double gap = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    gap += g[i] * x[i] - std::min(g[i] * lo[i], g[i] * hi[i]);
  }
  return gap;
}

}  // namespace

BoxQpResult solve_box_qp_projected(const Eigen::MatrixXd& Q, const Eigen::VectorXd& b,
                                   const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                                   Eigen::VectorXd start) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Q, Eigen::EigenvaluesOnly);
  const double lipschitz = std::max(eig.eigenvalues().maxCoeff(), 1e-300);
  BoxQpResult out;
  out.used_fallback = true;
  Eigen::VectorXd x = start.cwiseMax(lo).cwiseMin(hi);
  const int max_iter = 2000000;
  for (out.iterations = 0; out.iterations < max_iter; ++out.iterations) {
    const Eigen::VectorXd g = Q * x + b;
    if (frank_wolfe_gap(g, x, lo, hi) <= 1e-10) break;
    x = (x - g / lipschitz).cwiseMax(lo).cwiseMin(hi);
  }
  out.x = x;
  out.value = objective(Q, b, x);
  return out;
}

BoxQpResult solve_box_qp(const Eigen::MatrixXd& Q, const Eigen::VectorXd& b,
                         const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  const Eigen::Index n = b.size();
  if (Q.rows() != n || Q.cols() != n || lo.size() != n || hi.size() != n) {
    throw Error(ErrorCode::ShapeMismatch, "box QP dimensions disagree");
  }
  BoxQpResult out;
  if (n == 0) {
    out.x = Eigen::VectorXd(0);
    return out;
  }
  const double scale = std::max(1.0, Q.cwiseAbs().maxCoeff() + b.cwiseAbs().maxCoeff());
  const double tol = 1e-13 * scale;

  Eigen::VectorXd x = (0.5 * (lo + hi)).cwiseMax(lo).cwiseMin(hi);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (lo[i] <= 0.0 && 0.0 <= hi[i]) x[i] = 0.0;
  }
  std::vector<Bound> state(n, Bound::Free);

  const int max_iter = 50 * static_cast<int>(n + 1);
  bool settled = false;
  for (out.iterations = 0; out.iterations < max_iter; ++out.iterations) {
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (state[i] == Bound::Free) free.push_back(i);
    }
    if (!free.empty()) {
      const auto nf = static_cast<Eigen::Index>(free.size());
      Eigen::MatrixXd Qff(nf, nf);
      Eigen::VectorXd rhs(nf);
      for (Eigen::Index r = 0; r < nf; ++r) {
        rhs[r] = -b[free[r]];
        for (Eigen::Index i = 0; i < n; ++i) {
          if (state[i] != Bound::Free) rhs[r] -= Q(free[r], i) * x[i];
        }
        for (Eigen::Index c = 0; c < nf; ++c) Qff(r, c) = Q(free[r], free[c]);
      }
      const Eigen::VectorXd target = Qff.ldlt().solve(rhs);

      double step = 1.0;
      Eigen::Index blocking = -1;
      Bound blocking_bound = Bound::Free;
      for (Eigen::Index r = 0; r < nf; ++r) {
        const Eigen::Index i = free[r];
        const double dir = target[r] - x[i];
        if (target[r] > hi[i] && dir > 0.0) {
          const double s = (hi[i] - x[i]) / dir;
          if (s < step) { step = s; blocking = i; blocking_bound = Bound::Upper; }
        } else if (target[r] < lo[i] && dir < 0.0) {
          const double s = (lo[i] - x[i]) / dir;
          if (s < step) { step = s; blocking = i; blocking_bound = Bound::Lower; }
        }
      }
      for (Eigen::Index r = 0; r < nf; ++r) {
        x[free[r]] += std::max(step, 0.0) * (target[r] - x[free[r]]);
      }
      if (blocking >= 0) {
        x[blocking] = blocking_bound == Bound::Upper ? hi[blocking] : lo[blocking];
        state[blocking] = blocking_bound;
        continue;
      }
    }

    // Subspace optimum reached; release the bound with the worst multiplier.
    const Eigen::VectorXd g = Q * x + b;
    Eigen::Index release = -1;
    double worst = tol;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double violation = state[i] == Bound::Lower   ? -g[i]
                               : state[i] == Bound::Upper ? g[i]
                                                          : 0.0;
      if (violation > worst) {
        worst = violation;
        release = i;
      }
    }
    if (release < 0) {
      settled = true;
      break;
    }
    state[release] = Bound::Free;
  }

  x = x.cwiseMax(lo).cwiseMin(hi);
  const Eigen::VectorXd g = Q * x + b;
  if (!settled || frank_wolfe_gap(g, x, lo, hi) > 1e-9 * scale) {
    auto fallback = solve_box_qp_projected(Q, b, lo, hi, x);
    fallback.iterations += out.iterations;
    return fallback;
  }
  out.x = x;
  out.value = objective(Q, b, x);
  return out;
}

QuadraticMinimum min_quadratic_on_S(const Eigen::MatrixXd& M) {
  const Eigen::Index k = M.rows();
  if (k == 0 || M.cols() != k) throw Error(ErrorCode::NotSPD, "matrix must be square and nonempty");
  if (!M.isApprox(M.transpose(), 1e-12)) throw Error(ErrorCode::NotSPD, "matrix is not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(M);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M, Eigen::EigenvaluesOnly);
  if (llt.info() != Eigen::Success || !(eig.eigenvalues().minCoeff() > 0.0)) {
    throw Error(ErrorCode::NotSPD, "matrix is not positive definite");
  }
  Eigen::MatrixXd H = llt.solve(Eigen::MatrixXd::Identity(k, k));
  H = 0.5 * (H + H.transpose());

  std::vector<QuadraticMinimum> per_coordinate(k);
#pragma omp parallel for schedule(static)
  for (Eigen::Index c = 0; c < k; ++c) {
    std::vector<Eigen::Index> rest;
    for (Eigen::Index i = 0; i < k; ++i) {
      if (i != c) rest.push_back(i);
    }
    const auto nr = static_cast<Eigen::Index>(rest.size());
    Eigen::MatrixXd Q(nr, nr);
    Eigen::VectorXd b(nr);
    for (Eigen::Index r = 0; r < nr; ++r) {
      b[r] = 2.0 * H(rest[r], c);
      for (Eigen::Index t = 0; t < nr; ++t) Q(r, t) = 2.0 * H(rest[r], rest[t]);
    }
    const auto qp = solve_box_qp(Q, b, Eigen::VectorXd::Constant(nr, -1.0),
                                 Eigen::VectorXd::Constant(nr, 1.0));
    QuadraticMinimum& slot = per_coordinate[c];
    slot.argmin = Eigen::VectorXd::Zero(k);
    slot.argmin[c] = 1.0;
    for (Eigen::Index r = 0; r < nr; ++r) slot.argmin[rest[r]] = qp.x[r];
    slot.value = slot.argmin.dot(H * slot.argmin);
    slot.pinned = static_cast<int>(c);
  }
  QuadraticMinimum best = per_coordinate[0];
  for (const auto& candidate : per_coordinate) {
    if (candidate.value < best.value) best = candidate;
  }
  return best;
}

}  // namespace twostage
