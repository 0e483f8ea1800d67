#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cstdint>

#include "oracles.hpp"
#include "shmpc/qp.hpp"

using namespace shmpc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Lcg {
  uint64_t s;
  explicit Lcg(uint64_t seed) : s(seed) {}
  double operator()() {  // uniform in [-1, 1]
    s = s * 6364136223846793005ULL + 1442695040888963407ULL;
    return double(int64_t(s >> 11)) * 0x1p-52 * 2.0 - 1.0;
  }
};

QpProblem random_qp(int n, int me, int mi, uint64_t seed) {
  Lcg rnd(seed);
  QpProblem qp;
  MatrixXd A(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = rnd();
  qp.G = A.transpose() * A + 0.1 * MatrixXd::Identity(n, n);
  qp.g.resize(n);
  for (int i = 0; i < n; ++i) qp.g(i) = rnd();
  qp.Aeq.resize(me, n);
  qp.beq.resize(me);
  for (int i = 0; i < me; ++i) {
    for (int j = 0; j < n; ++j) qp.Aeq(i, j) = rnd();
    qp.beq(i) = rnd();
  }
  qp.Ain.resize(mi, n);
  qp.bin.resize(mi);
  for (int i = 0; i < mi; ++i) {
    for (int j = 0; j < n; ++j) qp.Ain(i, j) = rnd();
    qp.bin(i) = rnd() + 1.0;  // bias toward feasibility
  }
  return qp;
}

}  // namespace

TEST_CASE("unconstrained minimum") {
  QpProblem qp;
  qp.G = (MatrixXd(2, 2) << 2, 0, 0, 4).finished();
  qp.g = (VectorXd(2) << -2, -8).finished();
  qp.Aeq.resize(0, 2);
  qp.beq.resize(0);
  qp.Ain.resize(0, 2);
  qp.bin.resize(0);
  const auto r = solve_qp(qp);
  REQUIRE(r.status == QpStatus::optimal);
  CHECK(r.x(0) == doctest::Approx(1.0));
  CHECK(r.x(1) == doctest::Approx(2.0));
  CHECK(r.active.empty());
  CHECK(r.kkt_residual <= 1e-8);
}

TEST_CASE("single active inequality, dual value by hand") {
  // min 1/2|x|^2 s.t. -x1 <= -1  -> x = (1, 0), dual = 1.
  QpProblem qp;
  qp.G = MatrixXd::Identity(2, 2);
  qp.g = VectorXd::Zero(2);
  qp.Aeq.resize(0, 2);
  qp.beq.resize(0);
  qp.Ain = (MatrixXd(1, 2) << -1, 0).finished();
  qp.bin = (VectorXd(1) << -1).finished();
  const auto r = solve_qp(qp);
  REQUIRE(r.status == QpStatus::optimal);
  CHECK(r.x(0) == doctest::Approx(1.0));
  CHECK(r.x(1) == doctest::Approx(0.0).epsilon(1e-12));
  REQUIRE(r.active.size() == 1);
  CHECK(r.active[0] == 0);
  CHECK(r.ineq_duals(0) == doctest::Approx(1.0));
  CHECK(r.kkt_residual <= 1e-8);
}

TEST_CASE("equality plus inequality") {
  // min 1/2(x^2+y^2) s.t. x + y = 2, y <= 0.5 -> x = 1.5, y = 0.5.
  QpProblem qp;
  qp.G = MatrixXd::Identity(2, 2);
  qp.g = VectorXd::Zero(2);
  qp.Aeq = (MatrixXd(1, 2) << 1, 1).finished();
  qp.beq = (VectorXd(1) << 2).finished();
  qp.Ain = (MatrixXd(1, 2) << 0, 1).finished();
  qp.bin = (VectorXd(1) << 0.5).finished();
  const auto r = solve_qp(qp);
  REQUIRE(r.status == QpStatus::optimal);
  CHECK(r.x(0) == doctest::Approx(1.5));
  CHECK(r.x(1) == doctest::Approx(0.5));
  CHECK(r.ineq_duals(0) == doctest::Approx(1.0));  // from KKT by hand
  CHECK(r.kkt_residual <= 1e-8);
}

TEST_CASE("matches exhaustive KKT enumeration on random problems") {
  int checked = 0;
  for (uint64_t seed = 1; seed <= 400; ++seed) {
    const int n = 2 + int(seed % 3);        // 2..4
    const int me = int(seed % 2);           // 0..1
    const int mi = 3 + int((seed / 2) % 6); // 3..8
    const auto qp = random_qp(n, me, mi, seed * 977);
    const auto got = solve_qp(qp);
    const auto want = oracles::qp_enumerate(qp.G, qp.g, qp.Aeq, qp.beq, qp.Ain, qp.bin);
    INFO("seed=", seed, " n=", n, " me=", me, " mi=", mi);
    if (!want.feasible) {
      CHECK(got.status == QpStatus::infeasible);
      continue;
    }
    REQUIRE(got.status == QpStatus::optimal);
    ++checked;
    for (int i = 0; i < n; ++i)
      CHECK(got.x(i) == doctest::Approx(want.x(i)).epsilon(1e-7).scale(1.0));
    CHECK(got.kkt_residual <= 1e-8);
    // duals must reproduce the stationarity condition
    VectorXd stat = qp.G * got.x + qp.g;
    if (me) stat += qp.Aeq.transpose() * got.eq_duals;
    stat += qp.Ain.transpose() * got.ineq_duals;
    CHECK(stat.cwiseAbs().maxCoeff() <= 1e-7);
    for (int i = 0; i < mi; ++i) CHECK(got.ineq_duals(i) >= -1e-10);
  }
  CHECK(checked > 300);  // most random instances are feasible
}

TEST_CASE("infeasible inequalities produce a conflict certificate") {
  // x >= 1 and x <= 0 cannot hold together.
  QpProblem qp;
  qp.G = MatrixXd::Identity(1, 1);
  qp.g = VectorXd::Zero(1);
  qp.Aeq.resize(0, 1);
  qp.beq.resize(0);
  qp.Ain = (MatrixXd(2, 1) << -1, 1).finished();
  qp.bin = (VectorXd(2) << -1, 0).finished();
  const auto r = solve_qp(qp);
  REQUIRE(r.status == QpStatus::infeasible);
  REQUIRE(r.conflict.size() == 2);
  CHECK(((r.conflict[0] == 0 && r.conflict[1] == 1) ||
         (r.conflict[0] == 1 && r.conflict[1] == 0)));
}

TEST_CASE("irreducible conflict among many satisfiable rows") {
  // Box [-1,1]^2 is fine; the two x-rows contradict each other.
  QpProblem qp;
  qp.G = MatrixXd::Identity(2, 2);
  qp.g = VectorXd::Zero(2);
  qp.Aeq.resize(0, 2);
  qp.beq.resize(0);
  qp.Ain = (MatrixXd(6, 2) << 1, 0, -1, 0, 0, 1, 0, -1, -1, 0, 1, 0).finished();
  qp.bin = (VectorXd(6) << 1, 1, 1, 1, -3, -3).finished();  // x>=3 and x<=-3
  const auto r = solve_qp(qp);
  REQUIRE(r.status == QpStatus::infeasible);
  // certificate must mention only genuinely conflicting rows
  for (int id : r.conflict) CHECK((id == 0 || id == 1 || id == 4 || id == 5));
  CHECK(r.conflict.size() <= 3);
}

TEST_CASE("inconsistent equalities detected") {
  QpProblem qp;
  qp.G = MatrixXd::Identity(2, 2);
  qp.g = VectorXd::Zero(2);
  qp.Aeq = (MatrixXd(2, 2) << 1, 1, 1, 1).finished();
  qp.beq = (VectorXd(2) << 1, 2).finished();
  qp.Ain.resize(0, 2);
  qp.bin.resize(0);
  CHECK(solve_qp(qp).status == QpStatus::inconsistent_equalities);
}

TEST_CASE("weakly active constraints are reported active with zero dual") {
  // Optimum at origin; constraint x1 <= 0 is tight but non-binding.
  QpProblem qp;
  qp.G = MatrixXd::Identity(2, 2);
  qp.g = VectorXd::Zero(2);
  qp.Aeq.resize(0, 2);
  qp.beq.resize(0);
  qp.Ain = (MatrixXd(1, 2) << 1, 0).finished();
  qp.bin = (VectorXd(1) << 0).finished();
  const auto r = solve_qp(qp, 1e-6);
  REQUIRE(r.status == QpStatus::optimal);
  REQUIRE(r.active.size() == 1);
  CHECK(r.ineq_duals(0) == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("deterministic across repeated solves") {
  const auto qp = random_qp(4, 1, 8, 20240);
  const auto a = solve_qp(qp);
  const auto b = solve_qp(qp);
  REQUIRE(a.status == b.status);
  CHECK(a.x == b.x);  // bitwise
  CHECK(a.active == b.active);
  CHECK(a.working_set == b.working_set);
}

TEST_CASE("badly scaled Hessian still meets the residual target") {
  // mimic the planner's regularized rows: some variables only carry 1e-8
  QpProblem qp;
  qp.G = MatrixXd::Identity(4, 4);
  qp.G(2, 2) = 1e-8;
  qp.G(3, 3) = 1e-8;
  qp.g = (VectorXd(4) << 1, -2, 0, 0).finished();
  qp.Aeq = (MatrixXd(2, 4) << 1, 0, -1, 0, 0, 1, 0, -1).finished();
  qp.beq = (VectorXd(2) << 0.3, -0.7).finished();
  qp.Ain = (MatrixXd(2, 4) << 0, 0, 1, 0, 0, 0, 0, -1).finished();
  qp.bin = (VectorXd(2) << 2.0, 0.1).finished();
  const auto r = solve_qp(qp);
  REQUIRE(r.status == QpStatus::optimal);
  CHECK(r.kkt_residual <= 1e-8);
  CHECK(r.x(2) == doctest::Approx(r.x(0) - 0.3).epsilon(1e-9));
  CHECK(r.x(1) == doctest::Approx(2.0).epsilon(1e-6));
}
