#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "oracles.hpp"
#include "shmpc/qp.hpp"
#include "shmpc/rng.hpp"
#include "shmpc/solver.hpp"
#include "shmpc/toy.hpp"

using namespace shmpc;

namespace {

// state (p, v), input a; exactly linear, so the SQP model is exact
class DoubleIntegrator final : public DynamicsModel {
 public:
  explicit DoubleIntegrator(double dt) : dt_(dt) {}
  int nx() const override { return 2; }
  int nu() const override { return 1; }
  Eigen::VectorXd step(const Eigen::VectorXd& x,
                       const Eigen::VectorXd& u) const override {
    return Eigen::Vector2d(x(0) + x(1) * dt_, x(1) + u(0) * dt_);
  }
  void jacobians(const Eigen::VectorXd&, const Eigen::VectorXd&,
                 Eigen::MatrixXd& A, Eigen::MatrixXd& B) const override {
    A = Eigen::Matrix2d::Identity();
    A(0, 1) = dt_;
    B = Eigen::MatrixXd::Zero(2, 1);
    B(1, 0) = dt_;
  }

 private:
  double dt_;
};

// (p - target)^2 per stage + w a^2 per input
class ReachCost final : public CostModel {
 public:
  ReachCost(double target, double w) : target_(target), w_(w) {}
  double value(const Eigen::MatrixXd& X, const Eigen::MatrixXd& U) const override {
    double c = 0.0;
    for (int k = 0; k < X.cols(); ++k)
      c += (X(0, k) - target_) * (X(0, k) - target_);
    for (int k = 0; k < U.cols(); ++k) c += w_ * U(0, k) * U(0, k);
    return c;
  }
  void state_quadratic(int, const Eigen::VectorXd& xk, Eigen::MatrixXd& H,
                       Eigen::VectorXd& g) const override {
    H = Eigen::Matrix2d::Zero();
    H(0, 0) = 2.0;
    g = Eigen::Vector2d(2.0 * (xk(0) - target_), 0.0);
  }
  void input_quadratic(int, const Eigen::VectorXd& uk, Eigen::MatrixXd& H,
                       Eigen::VectorXd& g) const override {
    H = Eigen::MatrixXd::Constant(1, 1, 2.0 * w_);
    g = Eigen::VectorXd::Constant(1, 2.0 * w_ * uk(0));
  }

 private:
  double target_, w_;
};

// heavily weighted descent toward y = 0 for the unicycle
class DiveCost final : public CostModel {
 public:
  double value(const Eigen::MatrixXd& X, const Eigen::MatrixXd& U) const override {
    double c = 0.0;
    for (int k = 0; k < X.cols(); ++k) c += 50.0 * X(1, k) * X(1, k);
    for (int k = 0; k < U.cols(); ++k) {
      const double dv = U(0, k) - 2.0;
      c += dv * dv + U(1, k) * U(1, k);
    }
    return c;
  }
  void state_quadratic(int, const Eigen::VectorXd& xk, Eigen::MatrixXd& H,
                       Eigen::VectorXd& g) const override {
    H = Eigen::Matrix3d::Zero();
    H(1, 1) = 100.0;
    g = Eigen::Vector3d(0.0, 100.0 * xk(1), 0.0);
  }
  void input_quadratic(int, const Eigen::VectorXd& uk, Eigen::MatrixXd& H,
                       Eigen::VectorXd& g) const override {
    H = 2.0 * Eigen::Matrix2d::Identity();
    g = Eigen::Vector2d(2.0 * (uk(0) - 2.0), 2.0 * uk(1));
  }
};

Halfspace floor_row(double height, int32_t scenario, int step) {
  Halfspace h;
  h.a = {0.0, -1.0};
  h.b = -height;
  h.scenario = scenario;
  h.step = int16_t(step);
  return h;
}

SpProblem dive_problem(const DynamicsModel* dyn, const CostModel* cost) {
  SpProblem P;
  P.dynamics = dyn;
  P.cost = cost;
  P.x0 = Eigen::Vector3d(0.0, 1.2, 0.0);
  P.N = 5;
  P.dt = 0.2;
  P.u_bounds.lo = Eigen::Vector2d(0.0, -2.0);
  P.u_bounds.hi = Eigen::Vector2d(2.0, 2.0);
  P.U0 = Eigen::MatrixXd::Zero(2, 5);
  P.U0.row(0).setConstant(2.0);
  P.X0.resize(3, 5);
  Eigen::VectorXd x = P.x0;
  for (int k = 0; k < 5; ++k) {
    x = dyn->step(x, P.U0.col(k));
    P.X0.col(k) = x;
  }
  return P;
}

}  // namespace

TEST_CASE("unicycle jacobians match finite differences") {
  const Unicycle3 dyn(0.2);
  for (uint32_t t = 0; t < 100; ++t) {
    Eigen::VectorXd x(3), u(2);
    for (int i = 0; i < 3; ++i)
      x(i) = -2.0 + 4.0 * shmpc::uniform(17, rng_streams::tests, t, 0, uint32_t(i));
    for (int i = 0; i < 2; ++i)
      u(i) = -2.0 + 4.0 * shmpc::uniform(17, rng_streams::tests, t, 1, uint32_t(i));
    Eigen::MatrixXd A, B;
    dyn.jacobians(x, u, A, B);
    const auto fx = [&](const Eigen::VectorXd& xv) { return dyn.step(xv, u); };
    const auto fu = [&](const Eigen::VectorXd& uv) { return dyn.step(x, uv); };
    const Eigen::MatrixXd Afd = oracles::fd_jacobian(fx, x);
    const Eigen::MatrixXd Bfd = oracles::fd_jacobian(fu, u);
    CHECK((A - Afd).cwiseAbs().maxCoeff() < 1e-7);
    CHECK((B - Bfd).cwiseAbs().maxCoeff() < 1e-7);
  }
}

TEST_CASE("linear problem matches an independently assembled QP") {
  const double dt = 0.1;
  const int N = 8, nx = 2, nu = 1, nz = N * (nx + nu);
  const DoubleIntegrator dyn(dt);
  const ReachCost cost(1.0, 0.05);

  SpProblem P;
  P.dynamics = &dyn;
  P.cost = &cost;
  P.x0 = Eigen::Vector2d(0.0, 0.0);
  P.N = N;
  P.dt = dt;
  P.u_bounds.lo = Eigen::VectorXd::Constant(1, -4.0);
  P.u_bounds.hi = Eigen::VectorXd::Constant(1, 4.0);
  P.x_bounds.lo = Eigen::Vector2d(-1e30, -0.8);
  P.x_bounds.hi = Eigen::Vector2d(1e30, 0.8);
  const SolveResult r = solve_sp(P);
  REQUIRE(r.status == SpStatus::optimal);
  CHECK(int(r.iterations.size()) <= 3);

  // same program, assembled by hand: z = [x_1..x_N, u_0..u_{N-1}]
  QpProblem qp;
  qp.G = Eigen::MatrixXd::Zero(nz, nz);
  qp.g = Eigen::VectorXd::Zero(nz);
  for (int k = 0; k < N; ++k) {
    qp.G(k * nx, k * nx) = 2.0;
    qp.g(k * nx) = -2.0;
    qp.G(N * nx + k, N * nx + k) = 2.0 * 0.05;
  }
  qp.G.diagonal().array() += 1e-8;
  qp.Aeq = Eigen::MatrixXd::Zero(N * nx, nz);
  qp.beq = Eigen::VectorXd::Zero(N * nx);
  Eigen::Matrix2d A = Eigen::Matrix2d::Identity();
  A(0, 1) = dt;
  for (int k = 0; k < N; ++k) {
    qp.Aeq.block(k * nx, k * nx, nx, nx).setIdentity();
    qp.Aeq(k * nx + 1, N * nx + k) = -dt;
    if (k >= 1) qp.Aeq.block(k * nx, (k - 1) * nx, nx, nx) = -A;
  }
  const int mi = 2 * N + 2 * N;  // input bounds + velocity bounds
  qp.Ain = Eigen::MatrixXd::Zero(mi, nz);
  qp.bin = Eigen::VectorXd::Zero(mi);
  int row = 0;
  for (int k = 0; k < N; ++k) {
    qp.Ain(row, N * nx + k) = 1.0;
    qp.bin(row++) = 4.0;
    qp.Ain(row, N * nx + k) = -1.0;
    qp.bin(row++) = 4.0;
    qp.Ain(row, k * nx + 1) = 1.0;
    qp.bin(row++) = 0.8;
    qp.Ain(row, k * nx + 1) = -1.0;
    qp.bin(row++) = 0.8;
  }
  const QpResult direct = solve_qp(qp);
  REQUIRE(direct.status == QpStatus::optimal);
  for (int k = 0; k < N; ++k) {
    CHECK(r.plan.X(0, k) == doctest::Approx(direct.x(k * nx)).epsilon(1e-7));
    CHECK(r.plan.X(1, k) == doctest::Approx(direct.x(k * nx + 1)).epsilon(1e-7));
    CHECK(r.plan.U(0, k) == doctest::Approx(direct.x(N * nx + k)).epsilon(1e-7));
  }
  // velocity cap actually binds in this setup
  CHECK(r.plan.X.row(1).maxCoeff() == doctest::Approx(0.8).epsilon(1e-6));
}

TEST_CASE("active clearance row is attributed to its scenario") {
  const Unicycle3 dyn(0.2);
  const DiveCost cost;
  SpProblem P = dive_problem(&dyn, &cost);
  StageConstraintSet grp;
  grp.step = 5;
  grp.rows = {floor_row(0.9, 42, 5)};
  P.constraints.push_back(grp);

  const SolveResult r = solve_sp(P);
  REQUIRE(r.status == SpStatus::optimal);
  CHECK(r.plan.X(1, 4) == doctest::Approx(0.9).epsilon(1e-5));
  REQUIRE(r.support.size() == 1);
  CHECK(r.support[0] == 42);
  CHECK(r.removed.empty());
}

TEST_CASE("support overflow returns the last feasible snapshot") {
  const Unicycle3 dyn(0.2);
  const DiveCost cost;
  SpProblem P = dive_problem(&dyn, &cost);
  StageConstraintSet g3, g4, g5;
  g3.step = 3;
  g3.rows = {floor_row(0.9, 0, 3)};
  g4.step = 4;
  g4.rows = {floor_row(0.8, 1, 4)};
  g5.step = 5;
  g5.rows = {floor_row(0.7, 2, 5)};
  P.constraints = {g3, g4, g5};
  P.settings.support_limit = 1;

  const SolveResult r = solve_sp(P);
  REQUIRE(r.status == SpStatus::early_terminated);
  // the straight warm start is the last plan whose support fit the limit
  for (int k = 0; k < 5; ++k)
    CHECK(r.plan.X(1, k) == doctest::Approx(1.2).epsilon(1e-9));
  CHECK(int(r.support.size()) <= 1);

  // with a generous limit the same problem certifies at support 3
  P.settings.support_limit = 100;
  const SolveResult full = solve_sp(P);
  REQUIRE(full.status == SpStatus::optimal);
  CHECK(full.support == std::vector<int32_t>({0, 1, 2}));
}

TEST_CASE("removal budget discards the costliest scenario and lowers cost") {
  const Unicycle3 dyn(0.2);
  const DiveCost cost;
  SpProblem P = dive_problem(&dyn, &cost);
  StageConstraintSet grp;
  grp.step = 5;
  grp.rows = {floor_row(0.9, 0, 5), floor_row(0.85, 1, 5)};
  P.constraints.push_back(grp);

  const SolveResult r0 = solve_sp(P);
  REQUIRE(r0.status == SpStatus::optimal);
  CHECK(r0.plan.X(1, 4) == doctest::Approx(0.9).epsilon(1e-5));

  P.settings.removal_budget = 1;
  const SolveResult r1 = solve_sp(P);
  REQUIRE(r1.status == SpStatus::optimal);
  CHECK(r1.removed == std::vector<int32_t>({0}));
  CHECK(r1.plan.X(1, 4) == doctest::Approx(0.85).epsilon(1e-5));
  CHECK(r1.cost < r0.cost);
  // the removed scenario still counts toward the support estimate
  CHECK(std::count(r1.support.begin(), r1.support.end(), 0) == 1);
  CHECK(r1.conflict.empty());
}

TEST_CASE("scenarios that contradict the dynamics are discarded outright") {
  const Unicycle3 dyn(0.2);
  const DiveCost cost;
  SpProblem P = dive_problem(&dyn, &cost);
  StageConstraintSet g1, g5;
  g1.step = 1;
  g1.rows = {floor_row(2.0, 5, 1)};  // y_1 is pinned at 1.2: impossible
  g5.step = 5;
  g5.rows = {floor_row(0.8, 6, 5)};
  P.constraints = {g1, g5};

  const SolveResult r = solve_sp(P);  // removal budget stays 0
  REQUIRE(r.status == SpStatus::optimal);
  CHECK(r.removed == std::vector<int32_t>({5}));
  CHECK(r.conflict == std::vector<int32_t>({5}));
  CHECK(r.plan.X(1, 4) == doctest::Approx(0.8).epsilon(1e-5));
  CHECK(std::count(r.support.begin(), r.support.end(), 5) == 1);
}

TEST_CASE("repeated solves are bit-identical") {
  ToyConfig cfg;
  cfg.seed = 9;
  const ToyInstance inst = make_toy(cfg);
  const SolveResult a = solve_sp(inst.problem);
  const SolveResult b = solve_sp(inst.problem);
  REQUIRE(a.status == b.status);
  CHECK(a.plan.X == b.plan.X);
  CHECK(a.plan.U == b.plan.U);
  CHECK(a.support == b.support);
}

TEST_CASE("toy sample size and certificate") {
  ToyConfig cfg;
  const ToyInstance inst = make_toy(cfg);
  CHECK(inst.sample_size == 288);

  const ToyRun run = toy_solve(cfg);
  REQUIRE(run.solve.usable());
  CHECK(run.certificate.certified);
  CHECK(run.certificate.support_estimate == int(run.solve.support.size()));
  CHECK(run.certificate.epsilon_bound <= cfg.epsilon);
  // fresh-sample violation frequency stays within the certified level
  const double emp =
      toy_empirical_risk(inst, run.solve.plan, 10000, cfg.seed + 77);
  CHECK(emp <= run.certificate.epsilon_bound);
}

TEST_CASE("support scenarios alone reproduce the plan") {
  for (const auto& [S, seed] : std::vector<std::pair<int, uint64_t>>{
           {100, 3}, {100, 4}, {300, 5}, {500, 6}, {1000, 7}}) {
    ToyConfig cfg;
    cfg.sample_override = S;
    cfg.seed = seed;
    cfg.support_limit = 1 << 20;
    const ToyInstance inst = make_toy(cfg);
    const SolveResult full = solve_sp(inst.problem);
    REQUIRE(full.status == SpStatus::optimal);

    const SpProblem sub = restrict_to(inst, full.support);
    const SolveResult re = solve_sp(sub);
    REQUIRE(re.status == SpStatus::optimal);
    INFO("S=", S, " seed=", seed, " support=", full.support.size());
    CHECK((re.plan.X - full.plan.X).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((re.plan.U - full.plan.U).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("greedy support oracle is contained in the estimate") {
  for (const auto& [S, seed] : std::vector<std::pair<int, uint64_t>>{
           {100, 11}, {200, 12}, {288, 13}}) {
    ToyConfig cfg;
    cfg.sample_override = S;
    cfg.seed = seed;
    cfg.support_limit = 1 << 20;
    const ToyInstance inst = make_toy(cfg);
    const SolveResult est = solve_sp(inst.problem);
    REQUIRE(est.status == SpStatus::optimal);
    const GreedySupportResult greedy = greedy_support(inst.problem);
    REQUIRE(greedy.solves == S + 1);
    INFO("S=", S, " est=", est.support.size(), " greedy=",
         greedy.support.size());
    CHECK(std::includes(est.support.begin(), est.support.end(),
                        greedy.support.begin(), greedy.support.end()));
    CHECK(greedy.support.size() >= 1);
  }
}

TEST_CASE("removal study points hold their certificates") {
  const auto pts = toy_removal_study({0, 2}, 10, 2000, 21);
  REQUIRE(pts.size() == 2);
  CHECK(pts[0].sample_size == 288);
  CHECK(pts[1].sample_size == 388);
  CHECK(pts[1].mean_cost < pts[0].mean_cost);
  CHECK(pts[0].fraction_within_bound == doctest::Approx(1.0));
  CHECK(pts[1].fraction_within_bound >= 0.9);
  CHECK(pts[0].fraction_certified == doctest::Approx(1.0));
}

TEST_CASE("problem validation throws") {
  SpProblem P;
  CHECK_THROWS_AS(solve_sp(P), std::invalid_argument);
  const Unicycle3 dyn(0.2);
  const DiveCost cost;
  P = dive_problem(&dyn, &cost);
  P.x0 = Eigen::Vector2d(0, 0);
  CHECK_THROWS_AS(solve_sp(P), std::invalid_argument);
  P = dive_problem(&dyn, &cost);
  StageConstraintSet bad;
  bad.step = 9;
  P.constraints.push_back(bad);
  CHECK_THROWS_AS(solve_sp(P), std::invalid_argument);
}
