#pragma once
// Test-only reference implementations. Deliberately slow and independent of
// the library code they check.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#if SHMPC_HAVE_MPFR
#include <gmp.h>
#include <mpfr.h>
#endif

namespace oracles {

#if SHMPC_HAVE_MPFR
// eps(n) = 1 - (beta / (S * C(S,n)))^(1/(S-n)) at 256-bit precision with an
// exact binomial coefficient.
inline double epsilon_of_n_mpfr(int n, int S, double beta) {
  if (n == S) return 1.0;
  constexpr mpfr_prec_t prec = 256;
  mpz_t binom;
  mpz_init(binom);
  mpz_bin_uiui(binom, static_cast<unsigned long>(S), static_cast<unsigned long>(n));

  mpfr_t x, e;
  mpfr_init2(x, prec);
  mpfr_init2(e, prec);
  mpfr_set_d(x, beta, MPFR_RNDN);
  mpfr_div_ui(x, x, static_cast<unsigned long>(S), MPFR_RNDN);
  mpfr_t cb;
  mpfr_init2(cb, prec);
  mpfr_set_z(cb, binom, MPFR_RNDN);
  mpfr_div(x, x, cb, MPFR_RNDN);             // beta / (S C)
  mpfr_set_ui(e, 1, MPFR_RNDN);
  mpfr_div_ui(e, e, static_cast<unsigned long>(S - n), MPFR_RNDN);  // 1/(S-n)
  mpfr_pow(x, x, e, MPFR_RNDN);              // (...)^(1/(S-n))
  mpfr_ui_sub(x, 1, x, MPFR_RNDN);           // 1 - ...
  const double out = mpfr_get_d(x, MPFR_RNDN);
  mpfr_clear(x);
  mpfr_clear(e);
  mpfr_clear(cb);
  mpz_clear(binom);
  return out;
}
#endif

// Central finite-difference gradient of f at x.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x, xm = x;
  for (int i = 0; i < x.size(); ++i) {
    xp(i) = x(i) + h;
    xm(i) = x(i) - h;
    g(i) = (f(xp) - f(xm)) / (2.0 * h);
    xp(i) = x(i);
    xm(i) = x(i);
  }
  return g;
}

// Central finite-difference Jacobian of f at x.
inline Eigen::MatrixXd fd_jacobian(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, double h = 1e-6) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd J(f0.size(), x.size());
  Eigen::VectorXd xp = x, xm = x;
  for (int i = 0; i < x.size(); ++i) {
    xp(i) = x(i) + h;
    xm(i) = x(i) - h;
    J.col(i) = (f(xp) - f(xm)) / (2.0 * h);
    xp(i) = x(i);
    xm(i) = x(i);
  }
  return J;
}

// --- exhaustive KKT oracle for small dense QPs --------------------------
//
// min 1/2 x'Hx + g'x  s.t. Aeq x = beq, Ain x <= bin, H SPD.
// Enumerates every active subset of inequalities, solves the equality KKT
// system, keeps candidates that are primal feasible with nonnegative duals,
// and returns the best. Exponential; use only for tiny problems.
struct QpOracleResult {
  bool feasible = false;
  Eigen::VectorXd x;
  std::vector<int> active;  // subset used (indices into Ain rows)
  double objective = std::numeric_limits<double>::infinity();
};

inline QpOracleResult qp_enumerate(const Eigen::MatrixXd& H, const Eigen::VectorXd& g,
                                   const Eigen::MatrixXd& Aeq, const Eigen::VectorXd& beq,
                                   const Eigen::MatrixXd& Ain, const Eigen::VectorXd& bin,
                                   double tol = 1e-9) {
  const int n = int(H.rows());
  const int mi = int(Ain.rows());
  const int me = int(Aeq.rows());
  QpOracleResult best;
  for (uint64_t mask = 0; mask < (uint64_t(1) << mi); ++mask) {
    std::vector<int> act;
    for (int i = 0; i < mi; ++i)
      if (mask & (uint64_t(1) << i)) act.push_back(i);
    const int ma = int(act.size());
    if (ma + me > n) continue;  // more tight constraints than dimensions
    Eigen::MatrixXd A(me + ma, n);
    Eigen::VectorXd b(me + ma);
    if (me) {
      A.topRows(me) = Aeq;
      b.head(me) = beq;
    }
    for (int i = 0; i < ma; ++i) {
      A.row(me + i) = Ain.row(act[size_t(i)]);
      b(me + i) = bin(act[size_t(i)]);
    }
    Eigen::MatrixXd K(n + me + ma, n + me + ma);
    K.setZero();
    K.topLeftCorner(n, n) = H;
    if (me + ma) {
      K.topRightCorner(n, me + ma) = A.transpose();
      K.bottomLeftCorner(me + ma, n) = A;
    }
    Eigen::VectorXd rhs(n + me + ma);
    rhs.head(n) = -g;
    rhs.tail(me + ma) = b;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
    if (!lu.isInvertible()) continue;
    const Eigen::VectorXd sol = lu.solve(rhs);
    const Eigen::VectorXd x = sol.head(n);
    const Eigen::VectorXd mult = sol.tail(me + ma);
    bool ok = true;
    for (int i = 0; i < ma && ok; ++i)
      if (mult(me + i) < -tol) ok = false;  // active duals must be >= 0
    for (int i = 0; i < mi && ok; ++i)
      if (Ain.row(i) * x - bin(i) > tol) ok = false;  // primal feasibility
    if (!ok) continue;
    const double obj = 0.5 * x.dot(H * x) + g.dot(x);
    if (obj < best.objective - 1e-12) {
      best.feasible = true;
      best.objective = obj;
      best.x = x;
      best.active = act;
    }
  }
  return best;
}

// --- 2-D linear programming (Seidel, randomized incremental) ------------
//
// max c.x subject to a_i.x <= b_i. Returns nullopt when infeasible. Used by
// the brute-force redundancy eliminator: exact up to fp tolerance, O(n)
// expected per call.
struct Lp2Result {
  bool feasible = false;
  bool bounded = true;
  Eigen::Vector2d x = Eigen::Vector2d::Zero();
};

inline Lp2Result lp2_max(Eigen::Vector2d c, std::vector<Eigen::Vector2d> a,
                         std::vector<double> b, uint64_t shuffle_seed) {
  const size_t n = a.size();
  // deterministic LCG shuffle
  uint64_t s = shuffle_seed * 6364136223846793005ULL + 1442695040888963407ULL;
  for (size_t i = n; i > 1; --i) {
    s = s * 6364136223846793005ULL + 1442695040888963407ULL;
    const size_t j = size_t(s >> 33) % i;
    std::swap(a[i - 1], a[j]);
    std::swap(b[i - 1], b[j]);
  }
  // Start from a huge bounding square so the LP is always bounded; callers
  // must add their own box when they care about the true recession behavior.
  const double BIG = 1e9;
  std::vector<Eigen::Vector2d> A = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
  std::vector<double> B = {BIG, BIG, BIG, BIG};
  Eigen::Vector2d x = BIG * c.normalized();
  // clamp into the square
  x.x() = std::min(BIG, std::max(-BIG, x.x()));
  x.y() = std::min(BIG, std::max(-BIG, x.y()));

  auto solve1d = [&](const Eigen::Vector2d& ai, double bi, size_t upto,
                     Eigen::Vector2d& out) -> bool {
    // maximize c.x on the line ai.x = bi subject to A[j].x <= B[j], j < upto.
    const Eigen::Vector2d dir(-ai.y(), ai.x());  // line direction
    const Eigen::Vector2d p0 = ai * (bi / ai.squaredNorm());
    double tlo = -std::numeric_limits<double>::infinity();
    double thi = std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < upto; ++j) {
      const double ad = A[j].dot(dir);
      const double rhs = B[j] - A[j].dot(p0);
      if (std::abs(ad) < 1e-14) {
        if (rhs < -1e-9) return false;
      } else if (ad > 0) {
        thi = std::min(thi, rhs / ad);
      } else {
        tlo = std::max(tlo, rhs / ad);
      }
    }
    if (tlo > thi + 1e-12) return false;
    const double cd = c.dot(dir);
    double t;
    if (std::abs(cd) < 1e-14)
      t = std::min(std::max(0.0, tlo), thi);
    else
      t = (cd > 0) ? thi : tlo;
    out = p0 + t * dir;
    return true;
  };

  for (size_t i = 0; i < n; ++i) {
    A.push_back(a[i]);
    B.push_back(b[i]);
    if (a[i].dot(x) <= b[i] + 1e-12) continue;
    Eigen::Vector2d nx;
    if (!solve1d(a[i], b[i], A.size() - 1, nx)) return {false, true, {}};
    x = nx;
  }
  return {true, true, x};
}

// Brute-force redundancy elimination on 2-D halfspaces clipped to a box:
// halfspace i is redundant iff max a_i.x over the others (plus box) stays
// <= b_i. Sequential elimination; survivors define the same set.
inline std::vector<int> lp_redundancy_keep(const std::vector<Eigen::Vector2d>& a,
                                           const std::vector<double>& b,
                                           const Eigen::Vector2d& box_lo,
                                           const Eigen::Vector2d& box_hi,
                                           double tol = 1e-9) {
  const size_t n = a.size();
  std::vector<bool> removed(n, false);
  for (size_t i = 0; i < n; ++i) {
    std::vector<Eigen::Vector2d> A = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    std::vector<double> B = {box_hi.x(), -box_lo.x(), box_hi.y(), -box_lo.y()};
    for (size_t j = 0; j < n; ++j)
      if (j != i && !removed[j]) {
        A.push_back(a[j]);
        B.push_back(b[j]);
      }
    const auto r = lp2_max(a[i], A, B, 977 * (i + 1));
    if (!r.feasible) {
      removed[i] = true;  // rest already empty; i adds nothing
      continue;
    }
    if (a[i].dot(r.x) <= b[i] + tol) removed[i] = true;
  }
  std::vector<int> keep;
  for (size_t i = 0; i < n; ++i)
    if (!removed[i]) keep.push_back(int(i));
  return keep;
}

}  // namespace oracles
