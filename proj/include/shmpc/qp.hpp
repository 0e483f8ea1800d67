#pragma once
// Dense strictly convex QP:
//
//   min 1/2 x'G x + g'x   s.t.  Aeq x = beq,  Ain x <= bin,  G SPD.
//
// Dual active-set method (Goldfarb/Idnani): start at the unconstrained
// optimum, add the most violated constraint, take dual/primal steps dropping
// blocking constraints until the violated one becomes satisfied. Terminates
// in finitely many steps for SPD G and needs no feasible starting point.
// All pivot choices break ties by smallest index, so runs are deterministic.
//
// The reported active set uses a slack threshold rather than working-set
// membership, so weakly active constraints are counted. When the
// inequalities are inconsistent the result carries an irreducible conflict
// set: the working constraints whose combination certifies infeasibility.

#include <Eigen/Dense>
#include <vector>

namespace shmpc {

struct QpProblem {
  Eigen::MatrixXd G;
  Eigen::VectorXd g;
  Eigen::MatrixXd Aeq;
  Eigen::VectorXd beq;
  Eigen::MatrixXd Ain;
  Eigen::VectorXd bin;
};

enum class QpStatus {
  optimal,
  infeasible,                // inequalities inconsistent; see conflict
  inconsistent_equalities,
  not_positive_definite,
  max_iterations,
};

struct QpResult {
  QpStatus status = QpStatus::max_iterations;
  Eigen::VectorXd x;
  Eigen::VectorXd eq_duals;    // one per equality row
  Eigen::VectorXd ineq_duals;  // one per inequality row, 0 when inactive
  std::vector<int> active;       // rows with slack <= activity_tol
  std::vector<int> working_set;  // rows in the final working set
  std::vector<int> conflict;     // rows certifying infeasibility
  double kkt_residual = 0.0;     // scaled stationarity/feasibility residual
  int iterations = 0;
};

QpResult solve_qp(const QpProblem& qp, double activity_tol = 1e-6);

}  // namespace shmpc
