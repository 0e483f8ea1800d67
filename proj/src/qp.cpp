#include "shmpc/qp.hpp"

#include <cmath>
#include <limits>

namespace shmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Working-set bookkeeping for the dual active-set iteration.
//
// Invariant: with N the matrix of working constraint normals, J is an
// orthogonal transform of inv(L') such that J' N = [R; 0] with R upper
// triangular (G = L L'). Then J2 J2' np is the projection of a new normal
// onto the null space of N in the G metric, and inv(R) J1' np gives the
// dual step direction.
struct Workspace {
  int n = 0;
  Eigen::MatrixXd J;
  Eigen::MatrixXd R;          // n x n, top-left q x q in use
  std::vector<int> members;   // constraint ids: eq rows as -1-i, ineq rows as i
  Eigen::VectorXd u;          // duals for members
  int q = 0;                  // working-set size
  int n_eq = 0;               // leading members that are equalities

  void init(const Eigen::LLT<Eigen::MatrixXd>& llt, int dim) {
    n = dim;
    J = Eigen::MatrixXd::Identity(n, n);
    llt.matrixU().solveInPlace(J);  // J = inv(L')
    R.setZero(n, n);
    u.setZero(n);
    members.clear();
  }

  // d = J' np; z = J2 J2' np; r = inv(R) J1' np.
  void decompose(const Eigen::VectorXd& np, Eigen::VectorXd& d,
                 Eigen::VectorXd& z, Eigen::VectorXd& r) const {
    d.noalias() = J.transpose() * np;
    z.setZero(n);
    if (q < n) z.noalias() = J.rightCols(n - q) * d.tail(n - q);
    r.resize(q);
    if (q > 0)
      r = R.topLeftCorner(q, q)
              .triangularView<Eigen::Upper>()
              .solve(d.head(q));
  }

  // Rotate d(q+1..n-1) into d(q), mirroring the rotations on J's columns,
  // then append d as the new column of R. Returns false if the new normal is
  // numerically dependent on the working set.
  bool add(const Eigen::VectorXd& np, Eigen::VectorXd& d, int id, double mult) {
    for (int i = n - 1; i > q; --i) {
      const double a = d(i - 1), b = d(i);
      const double h = std::hypot(a, b);
      if (h == 0.0) continue;
      const double c = a / h, s = b / h;
      d(i - 1) = h;
      d(i) = 0.0;
      for (int row = 0; row < n; ++row) {
        const double t1 = J(row, i - 1), t2 = J(row, i);
        J(row, i - 1) = c * t1 + s * t2;
        J(row, i) = -s * t1 + c * t2;
      }
    }
    const double scale = np.norm();
    if (std::abs(d(q)) < 1e-13 * std::max(1.0, scale)) return false;
    R.col(q).head(q + 1) = d.head(q + 1);
    members.push_back(id);
    u(q) = mult;
    ++q;
    return true;
  }

  // Remove the working constraint at position l (>= n_eq) and restore R.
  void drop(int l) {
    for (int j = l; j < q - 1; ++j) {
      R.col(j).head(q) = R.col(j + 1).head(q);
      members[size_t(j)] = members[size_t(j + 1)];
      u(j) = u(j + 1);
    }
    members.pop_back();
    u(q - 1) = 0.0;
    --q;
    // R is now upper Hessenberg on columns l..q-1; rotate the subdiagonal away.
    for (int j = l; j < q; ++j) {
      const double a = R(j, j), b = R(j + 1, j);
      const double h = std::hypot(a, b);
      if (h == 0.0) continue;
      const double c = a / h, s = b / h;
      for (int col = j; col < q; ++col) {
        const double t1 = R(j, col), t2 = R(j + 1, col);
        R(j, col) = c * t1 + s * t2;
        R(j + 1, col) = -s * t1 + c * t2;
      }
      for (int row = 0; row < n; ++row) {
        const double t1 = J(row, j), t2 = J(row, j + 1);
        J(row, j) = c * t1 + s * t2;
        J(row, j + 1) = -s * t1 + c * t2;
      }
    }
  }
};

// Re-solve the KKT system of the final working set with a fresh
// factorization; refines x and the duals after the iterative updates.
void polish(const QpProblem& qp, const std::vector<int>& members,
            QpResult& res) {
  const int n = int(qp.G.rows());
  const int mw = int(members.size());
  Eigen::MatrixXd A(mw, n);
  Eigen::VectorXd b(mw);
  for (int i = 0; i < mw; ++i) {
    const int id = members[size_t(i)];
    if (id < 0) {
      A.row(i) = qp.Aeq.row(-id - 1);
      b(i) = qp.beq(-id - 1);
    } else {
      A.row(i) = qp.Ain.row(id);
      b(i) = qp.bin(id);
    }
  }
  Eigen::MatrixXd K(n + mw, n + mw);
  K.setZero();
  K.topLeftCorner(n, n) = qp.G;
  if (mw) {
    K.topRightCorner(n, mw) = A.transpose();
    K.bottomLeftCorner(mw, n) = A;
  }
  Eigen::VectorXd rhs(n + mw);
  rhs.head(n) = -qp.g;
  rhs.tail(mw) = b;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);
  const Eigen::VectorXd sol = lu.solve(rhs);
  if (!sol.allFinite()) return;
  const Eigen::VectorXd x = sol.head(n);
  const Eigen::VectorXd mult = sol.tail(mw);

  // Only accept the polished point if it stays feasible and keeps the
  // working inequality duals nonnegative.
  const double ftol = 1e-9 * (1.0 + (qp.bin.size() ? qp.bin.cwiseAbs().maxCoeff() : 0.0));
  if (qp.Ain.rows() && ((qp.Ain * x - qp.bin).maxCoeff() > ftol)) return;
  for (int i = 0; i < mw; ++i)
    if (members[size_t(i)] >= 0 && mult(i) < -1e-8) return;

  res.x = x;
  res.ineq_duals.setZero(qp.Ain.rows());
  res.eq_duals.setZero(qp.Aeq.rows());
  for (int i = 0; i < mw; ++i) {
    const int id = members[size_t(i)];
    if (id < 0)
      res.eq_duals(-id - 1) = mult(i);
    else
      res.ineq_duals(id) = std::max(0.0, mult(i));
  }
}

double kkt_residual(const QpProblem& qp, const QpResult& res) {
  const Eigen::VectorXd grad = qp.G * res.x + qp.g;
  Eigen::VectorXd stat = grad;
  if (qp.Aeq.rows()) stat += qp.Aeq.transpose() * res.eq_duals;
  if (qp.Ain.rows()) stat += qp.Ain.transpose() * res.ineq_duals;
  double r = stat.cwiseAbs().maxCoeff();
  if (qp.Aeq.rows())
    r = std::max(r, (qp.Aeq * res.x - qp.beq).cwiseAbs().maxCoeff());
  if (qp.Ain.rows()) {
    const Eigen::VectorXd s = qp.bin - qp.Ain * res.x;
    r = std::max(r, std::max(0.0, -s.minCoeff()));
    r = std::max(r, (res.ineq_duals.array() * s.array()).abs().maxCoeff());
  }
  const double scale =
      std::max({1.0, qp.g.size() ? qp.g.cwiseAbs().maxCoeff() : 0.0,
                grad.cwiseAbs().maxCoeff()});
  return r / scale;
}

}  // namespace

QpResult solve_qp(const QpProblem& qp, double activity_tol) {
  const int n = int(qp.G.rows());
  const int me = int(qp.Aeq.rows());
  const int mi = int(qp.Ain.rows());

  QpResult res;
  res.eq_duals.setZero(me);
  res.ineq_duals.setZero(mi);

  Eigen::LLT<Eigen::MatrixXd> llt(qp.G);
  if (llt.info() != Eigen::Success) {
    res.status = QpStatus::not_positive_definite;
    return res;
  }

  Workspace ws;
  ws.init(llt, n);
  Eigen::VectorXd x = llt.solve(-qp.g);

  Eigen::VectorXd d(n), z(n), r;

  // Equalities first; they can never be dropped.
  std::vector<int> eq_used;
  for (int ie = 0; ie < me; ++ie) {
    const Eigen::VectorXd np = -qp.Aeq.row(ie).transpose();
    double s = qp.beq(ie) - qp.Aeq.row(ie).dot(x);
    ws.decompose(np, d, z, r);
    const double zn = z.dot(np);
    const double scale = std::max(1.0, np.norm() * z.norm());
    if (zn > 1e-14 * scale) {
      const double t = -s / zn;
      x += t * z;
      if (ws.q > 0) ws.u.head(ws.q) -= t * r;
      if (!ws.add(np, d, -1 - ie, t)) {
        res.status = QpStatus::inconsistent_equalities;
        return res;
      }
      ++ws.n_eq;
      eq_used.push_back(ie);
    } else {
      // dependent row: consistent -> redundant, inconsistent -> no solution
      if (std::abs(s) > 1e-9 * (1.0 + std::abs(qp.beq(ie)))) {
        res.status = QpStatus::inconsistent_equalities;
        return res;
      }
    }
  }

  const int max_iter = 100 + 10 * (n + me + mi);
  int iter = 0;
  const double bscale = 1.0 + (mi ? qp.bin.cwiseAbs().maxCoeff() : 0.0);

  while (true) {
    if (++iter > max_iter) {
      res.status = QpStatus::max_iterations;
      res.x = x;
      return res;
    }
    // Most violated inequality not in the working set.
    int viol = -1;
    double worst = -1e-11 * bscale;
    std::vector<char> in_ws(size_t(mi), 0);
    for (int j = ws.n_eq; j < ws.q; ++j) in_ws[size_t(ws.members[size_t(j)])] = 1;
    for (int i = 0; i < mi; ++i) {
      if (in_ws[size_t(i)]) continue;
      const double s = qp.bin(i) - qp.Ain.row(i).dot(x);
      if (s < worst) {
        worst = s;
        viol = i;
      }
    }
    if (viol < 0) break;  // feasible and dual feasible: optimal

    const Eigen::VectorXd np = -qp.Ain.row(viol).transpose();
    double s = qp.bin(viol) - qp.Ain.row(viol).dot(x);  // < 0
    double u_plus = 0.0;

    while (true) {
      if (++iter > max_iter) {
        res.status = QpStatus::max_iterations;
        res.x = x;
        return res;
      }
      ws.decompose(np, d, z, r);

      // Max dual step before a working inequality multiplier hits zero.
      double t1 = kInf;
      int drop_pos = -1;
      for (int j = ws.n_eq; j < ws.q; ++j) {
        if (r(j) > 1e-13) {
          const double ratio = ws.u(j) / r(j);
          if (ratio < t1) {
            t1 = ratio;
            drop_pos = j;
          }
        }
      }
      // Step that makes the violated constraint tight.
      const double zn = z.dot(np);
      const double zscale = std::max(1.0, np.norm() * z.norm());
      const double t2 = (zn > 1e-14 * zscale) ? -s / zn : kInf;
      const double t = std::min(t1, t2);

      if (t == kInf) {
        // No direction and nothing to drop: the incoming normal is a
        // nonpositive combination of the working normals (all r <= 0 here),
        // so every point satisfying them violates the incoming row. The
        // nonzero combination members plus the row are the certificate.
        res.status = QpStatus::infeasible;
        res.conflict.clear();
        for (int j = ws.n_eq; j < ws.q; ++j)
          if (r(j) < -1e-13) res.conflict.push_back(ws.members[size_t(j)]);
        res.conflict.push_back(viol);
        res.x = x;
        for (int j = ws.n_eq; j < ws.q; ++j) {
          res.ineq_duals(ws.members[size_t(j)]) = ws.u(j);
          res.working_set.push_back(ws.members[size_t(j)]);
        }
        res.iterations = iter;
        return res;
      }

      if (t2 == kInf) {
        // Dual-only step: move multipliers and drop the blocking constraint.
        if (ws.q > 0) ws.u.head(ws.q) -= t * r;
        u_plus += t;
        ws.drop(drop_pos);
        continue;
      }

      x += t * z;
      if (ws.q > 0) ws.u.head(ws.q) -= t * r;
      u_plus += t;
      s = qp.bin(viol) - qp.Ain.row(viol).dot(x);

      if (t == t2) {
        if (!ws.add(np, d, viol, u_plus)) {
          // Should not happen when t2 was finite; treat as degenerate stall.
          res.status = QpStatus::max_iterations;
          res.x = x;
          return res;
        }
        break;  // next violated constraint
      }
      ws.drop(drop_pos);
    }
  }

  res.status = QpStatus::optimal;
  res.x = x;
  res.iterations = iter;
  for (int j = 0; j < ws.q; ++j) {
    const int id = ws.members[size_t(j)];
    if (id < 0)
      res.eq_duals(-id - 1) = ws.u(j);
    else
      res.ineq_duals(id) = ws.u(j);
  }
  polish(qp, ws.members, res);

  res.working_set.clear();
  for (int j = ws.n_eq; j < ws.q; ++j)
    res.working_set.push_back(ws.members[size_t(j)]);
  std::sort(res.working_set.begin(), res.working_set.end());
  res.active.clear();
  for (int i = 0; i < mi; ++i) {
    const double slack = qp.bin(i) - qp.Ain.row(i).dot(res.x);
    if (slack <= activity_tol) res.active.push_back(i);
  }
  res.kkt_residual = kkt_residual(qp, res);
  return res;
}

}  // namespace shmpc
