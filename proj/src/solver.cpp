#include "shmpc/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <stdexcept>

#include "shmpc/qp.hpp"

namespace shmpc {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

struct Layout {
  int nx = 0, nu = 0, N = 0, nz = 0;
  int xi(int k) const { return (k - 1) * nx; }     // state x_k, k in 1..N
  int ui(int k) const { return N * nx + k * nu; }  // input u_k, k in 0..N-1
};

Eigen::Matrix2d rot(double th) {
  Eigen::Matrix2d R;
  R << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
  return R;
}

Eigen::Matrix2d drot(double th) {
  Eigen::Matrix2d D;
  D << -std::sin(th), -std::cos(th), std::cos(th), -std::sin(th);
  return D;
}

Eigen::Vector2d disc_point(const Eigen::VectorXd& x, int pos, int head,
                           const Eigen::Vector2d& offset) {
  const Eigen::Vector2d p = x.segment<2>(pos);
  if (offset.squaredNorm() == 0.0) return p;
  if (head >= 0) return p + rot(x(head)) * offset;
  return p + offset;
}

struct RowRef {
  int32_t scenario = -1;  // -1 marks a bound row
  int group = -1;
};

struct Snapshot {
  bool valid = false;
  Eigen::MatrixXd X, U;
  std::vector<int32_t> support;
  std::vector<int32_t> removed;
  double cost = 0.0;
};

std::vector<int32_t> sorted_ids(const std::set<int32_t>& s) {
  return std::vector<int32_t>(s.begin(), s.end());
}

bool same_row(const Halfspace& a, const Halfspace& b) {
  return a.scenario == b.scenario && a.obstacle == b.obstacle &&
         a.step == b.step && a.disc == b.disc && a.a == b.a && a.b == b.b;
}

class SpSolver {
 public:
  explicit SpSolver(const SpProblem& P) : P_(P) { validate(); }

  SolveResult run() {
    const auto t0 = Clock::now();
    init_iterate();
    prox_ = P_.settings.prox;
    SolveResult res;
    res.plan.dt = P_.dt;
    forced_.assign(P_.constraints.size(), {});

    if (fully_feasible(X_, U_, P_.constraints, nullptr))
      save_snapshot();  // a feasible warm start is returnable as-is

    int removals_by_dual = 0;
    for (int iter = 0; iter < P_.settings.max_iterations; ++iter) {
      // Cut each group to the non-redundant facets of its feasible region.
      // The facet set depends on the iterate only through the witness box,
      // so reductions are cached across iterations: a group is re-reduced
      // when the removal set changed, the witness left the cached polytope,
      // or the facet cap forced a heuristic subset. A dropped row that the
      // moving box re-exposes is restored by the full-row violation check
      // further down, so a stale cache can cost an iteration but never
      // admits an infeasible exit.
      std::vector<std::vector<Halfspace>> kept(P_.constraints.size());
      if (P_.settings.reduce) {
        if (removed_.size() != red_removed_) {
          red_cache_.assign(P_.constraints.size(), ReduceResult{});
          red_ok_.assign(P_.constraints.size(), 0);
          red_removed_ = removed_.size();
        }
        std::vector<size_t> stale;
        for (size_t g = 0; g < P_.constraints.size(); ++g) {
          const bool fresh = red_ok_[g] && red_cache_[g].feasible &&
                             !red_cache_[g].poly.truncated &&
                             red_cache_[g].poly.contains(group_point(X_, g));
          if (!fresh) stale.push_back(g);
        }
        if (!stale.empty()) {
          std::vector<std::vector<Halfspace>> rows(stale.size());
          std::vector<Eigen::Vector2d> wit(stale.size());
          for (size_t i = 0; i < stale.size(); ++i) {
            const size_t g = stale[i];
            for (const auto& h : P_.constraints[g].rows)
              if (!removed_.count(h.scenario)) rows[i].push_back(h);
            wit[i] = group_point(X_, g);
          }
          const auto tr = Clock::now();
          auto red = reduce_stagewise(rows, wit, P_.settings.box_half,
                                      P_.settings.max_facets);
          res.reduce_ms += ms_since(tr);
          for (size_t i = 0; i < stale.size(); ++i) {
            red_cache_[stale[i]] = std::move(red[i]);
            red_ok_[stale[i]] = 1;
          }
        }
        std::set<int32_t> blocked;
        for (size_t g = 0; g < P_.constraints.size(); ++g) {
          const ReduceResult& r = red_cache_[g];
          if (!r.feasible) {
            for (const auto& h : r.blocking)
              if (h.scenario >= 0) blocked.insert(h.scenario);
            continue;
          }
          kept[g] = r.poly.facets;
          res.truncated = res.truncated || r.poly.truncated;
          for (const auto& f : forced_[g]) {
            if (removed_.count(f.scenario)) continue;
            bool dup = false;
            for (const auto& h : kept[g]) dup = dup || same_row(h, f);
            if (!dup) kept[g].push_back(f);
          }
        }
        if (!blocked.empty()) {
          // a stage with empty interior: the blocking scenarios are
          // discarded outright (they do not consume the removal budget)
          blocked_.insert(blocked.begin(), blocked.end());
          discard(blocked);
          continue;
        }
      } else {
        for (size_t g = 0; g < P_.constraints.size(); ++g)
          for (const auto& h : P_.constraints[g].rows)
            if (!removed_.count(h.scenario)) kept[g].push_back(h);
      }

      // quadratic model and constraints at the current iterate
      QpProblem qp;
      std::vector<RowRef> refs;
      assemble(kept, qp, refs);
      const QpResult sol = solve_qp(qp, P_.settings.active_tol);

      if (sol.status == QpStatus::infeasible) {
        std::set<int32_t> blocked;
        for (int row : sol.conflict)
          if (refs[size_t(row)].scenario >= 0)
            blocked.insert(refs[size_t(row)].scenario);
        if (!blocked.empty()) {
          blocked_.insert(blocked.begin(), blocked.end());
          discard(blocked);
          continue;
        }
        res.status = SpStatus::infeasible;  // bounds/dynamics conflict
        finalize(res, t0);
        return res;
      }
      if (sol.status != QpStatus::optimal) {
        res.status = SpStatus::max_iterations;
        finalize(res, t0);
        return res;
      }

      // candidate step and merit line search; the l1 penalty weight must
      // dominate the multipliers for the penalty to be exact, and nothing
      // more (an oversized weight stalls the search on curvature-induced
      // defects)
      Eigen::MatrixXd Xs(nx_, N_), Us(nu_, N_);
      unpack(sol.x, Xs, Us);
      const double step_full = step_norm(Xs, Us);

      // Period-2 cycle: a long step whose target is (nearly) the previous
      // iterate undoes the previous step, and re-linearization there will
      // reproduce this flip forever. Reject it and raise the proximal
      // weight until one of the two basins wins.
      if (Xp1_.size() && step_full >= 1e-4) {
        const double turn = std::max((Xs - Xp1_).cwiseAbs().maxCoeff(),
                                     (Us - Up1_).cwiseAbs().maxCoeff());
        if (turn <= std::max(1e-6, 1e-3 * step_full)) {
          prox_ = std::min(kProxMax, std::max(kProxMin, 4.0 * prox_));
          IterationRecord rec;
          rec.iteration = iter;
          rec.cost = P_.cost->value(X_, U_);
          rec.defect = dynamics_defect(X_, U_);
          rec.step_norm = 0.0;
          rec.qp_iterations = sol.iterations;
          rec.support_estimate = int(support_.size());
          res.iterations.push_back(rec);
          continue;
        }
      }

      double max_dual = 0.0;
      if (sol.eq_duals.size())
        max_dual = sol.eq_duals.cwiseAbs().maxCoeff();
      if (sol.ineq_duals.size())
        max_dual = std::max(max_dual, sol.ineq_duals.cwiseAbs().maxCoeff());
      const double mu = 10.0 * (1.0 + max_dual);
      double alpha = 1.0;
      bool merit_improved = false;
      bool rejected = false;
      {
        const double phi0 = merit(X_, U_, kept, mu);
        double phi_new = merit(Xs, Us, kept, mu);
        if (phi_new < phi0 - 1e-12) {
          merit_improved = true;
        } else if (relaxed_run_ < kMaxRelaxedSteps &&
                   dynamics_defect(Xs, Us) <= kDefectTrust) {
          // Full step despite a merit increase: a long step spikes the l1
          // defect term quadratically while the cost gain is only linear, so
          // a monotone search would creep at the smallest alpha for dozens
          // of iterations. Re-linearization absorbs the defect on the next
          // iteration; the trust cap and bounded run length (with the
          // monotone search as fallback) keep this from diverging.
          ++relaxed_run_;
        } else {
          double best_phi = phi_new;
          double best_alpha = 1.0;
          for (int t = 1; t <= 8; ++t) {
            const double a = std::pow(0.5, t);
            Eigen::MatrixXd Xa = X_ + a * (Xs - X_);
            Eigen::MatrixXd Ua = U_ + a * (Us - U_);
            const double phi = merit(Xa, Ua, kept, mu);
            if (phi < best_phi) {
              best_phi = phi;
              best_alpha = a;
            }
            if (phi < phi0 - 1e-12) break;  // first sufficient decrease wins
          }
          merit_improved = best_phi < phi0 - 1e-12;
          alpha = best_alpha;
          phi_new = best_phi;
          if (!merit_improved) {
            // No damping of this direction helps. When the QP has two
            // near-tied optima (pass left / pass right of an obstacle), the
            // direction targets the other basin at every scale, and the
            // iterate would bounce between the basins forever. Reject the
            // step and re-solve with a larger proximal weight, which pulls
            // the next QP optimum toward the current iterate until one basin
            // wins; the weight vanishes from the KKT conditions at any fixed
            // point, so converged solutions are unaffected.
            rejected = true;
            prox_ = std::min(kProxMax, std::max(kProxMin, 4.0 * prox_));
          }
        }
        if (merit_improved) {
          // The relaxed-step budget refills, and the proximal weight decays,
          // only on progress against the best merit seen at the problem's
          // scale. Inside a slowly-contracting cycle every other step
          // "improves" by a vanishing amount; a last-iterate or absolute
          // test would hand the cycle a fresh budget each round.
          if (phi_new < watchdog_best_ - 1e-6 * (1.0 + std::abs(phi_new))) {
            watchdog_best_ = phi_new;
            relaxed_run_ = 0;
            prox_ = std::max(P_.settings.prox, 0.5 * prox_);
          }
        }
      }
      if (rejected) {
        // A feasible iterate from which no damping of the QP direction
        // improves the merit is at the QP noise floor: numerically
        // stationary, same exit as the in-line stationarity test below.
        if (dynamics_defect(X_, U_) <= P_.settings.defect_tol &&
            fully_feasible(X_, U_, P_.constraints, nullptr)) {
          save_snapshot();
          if (removals_by_dual < P_.settings.removal_budget &&
              int(support_.size()) < P_.settings.support_limit) {
            const int32_t worst = costliest_scenario(sol, refs);
            if (worst >= 0) {
              ++removals_by_dual;
              discard({worst});
              continue;
            }
          }
          res.status = SpStatus::optimal;
          finalize(res, t0);
          return res;
        }
        IterationRecord rec;
        rec.iteration = iter;
        rec.cost = P_.cost->value(X_, U_);
        rec.defect = dynamics_defect(X_, U_);
        rec.step_norm = 0.0;
        rec.qp_iterations = sol.iterations;
        rec.support_estimate = int(support_.size());
        res.iterations.push_back(rec);
        continue;  // rejected candidates also stay out of the support
      }
      // a step that mostly reverses the previous one signals overshoot
      // around a ridge where the active set alternates; damp the spiral
      if (Xp1_.size()) {
        const Eigen::MatrixXd dX = alpha * (Xs - X_);
        const Eigen::MatrixXd dU = alpha * (Us - U_);
        const Eigen::MatrixXd pX = X_ - Xp1_;
        const Eigen::MatrixXd pU = U_ - Up1_;
        const double dot = pX.cwiseProduct(dX).sum() + pU.cwiseProduct(dU).sum();
        const double np = std::sqrt(pX.squaredNorm() + pU.squaredNorm());
        const double nd = std::sqrt(dX.squaredNorm() + dU.squaredNorm());
        if (np > 1e-12 && nd > 1e-12 && dot < -0.5 * np * nd)
          prox_ = std::min(kProxMax, std::max(kProxMin, 2.0 * prox_));
      }
      Xp1_ = X_;
      Up1_ = U_;
      X_ += alpha * (Xs - X_).eval();
      U_ += alpha * (Us - U_).eval();
      const double step_inf = alpha * step_full;
      const double defect = dynamics_defect(X_, U_);

      // scenarios owning active rows join the support estimate
      std::set<int32_t> actives;
      for (int row : sol.active)
        if (refs[size_t(row)].scenario >= 0)
          actives.insert(refs[size_t(row)].scenario);

      // candidate is the certified total: discard() already folded removed
      // and conflict scenarios into support_
      std::set<int32_t> candidate = support_;
      candidate.insert(actives.begin(), actives.end());
      if (P_.settings.track_support &&
          int(candidate.size()) > P_.settings.support_limit) {
        res.status = SpStatus::early_terminated;
        support_ = candidate;  // reported when no snapshot exists
        finalize(res, t0);
        return res;
      }
      support_ = candidate;

      IterationRecord rec;
      rec.iteration = iter;
      rec.cost = P_.cost->value(X_, U_);
      rec.defect = defect;
      rec.step_norm = step_inf;
      rec.qp_iterations = sol.iterations;
      rec.active_scenarios.assign(actives.begin(), actives.end());
      rec.support_estimate = int(support_.size());
      res.iterations.push_back(rec);

      // snapshot fully feasible iterates; rows the reduction dropped but the
      // step violated (facet cap hit, or the step left the reduction box)
      // are forced back in before anything else
      std::vector<std::pair<int, Halfspace>> violated;
      const bool feas =
          defect <= P_.settings.defect_tol &&
          fully_feasible(X_, U_, P_.constraints, &violated);
      std::vector<std::pair<int, Halfspace>> to_force;
      for (auto& [g, h] : violated) {
        bool in_kept = false;
        for (const auto& f : kept[size_t(g)]) in_kept = in_kept || same_row(f, h);
        if (in_kept) continue;  // already modeled; violation is higher-order
        bool dup = false;
        for (const auto& f : forced_[size_t(g)]) dup = dup || same_row(f, h);
        if (!dup) to_force.push_back({g, h});
      }
      if (!to_force.empty()) {
        for (auto& [g, h] : to_force) forced_[size_t(g)].push_back(h);
        continue;
      }
      if (feas) save_snapshot();

      // Numerical stationarity: when the iterate is fully feasible, the QP
      // direction yields no merit decrease, and the accepted step is below
      // tolerance, the solve has hit the QP noise floor (typical when warm
      // started at the optimum, whose full step can dither just above
      // step_tol forever).
      const bool stationary =
          feas && !merit_improved && step_inf <= P_.settings.step_tol;
      if (defect <= P_.settings.defect_tol &&
          (step_full <= P_.settings.step_tol || stationary)) {
        // converged; spend removal budget on the costliest active scenario
        if (removals_by_dual < P_.settings.removal_budget &&
            int(support_.size()) < P_.settings.support_limit) {
          const int32_t worst = costliest_scenario(sol, refs);
          if (worst >= 0) {
            ++removals_by_dual;
            discard({worst});
            continue;
          }
        }
        res.status = SpStatus::optimal;
        finalize(res, t0);
        return res;
      }
    }
    res.status = SpStatus::max_iterations;
    finalize(res, t0);
    return res;
  }

 private:
  void validate() const {
    if (!P_.dynamics || !P_.cost)
      throw std::invalid_argument("solve_sp: dynamics and cost are required");
    if (P_.N < 1) throw std::invalid_argument("solve_sp: N must be >= 1");
    if (P_.x0.size() != P_.dynamics->nx())
      throw std::invalid_argument("solve_sp: x0 size mismatch");
    if (P_.disc_offsets.empty())
      throw std::invalid_argument("solve_sp: need at least one disc offset");
    for (const auto& c : P_.constraints) {
      if (c.step < 1 || c.step > P_.N)
        throw std::invalid_argument("solve_sp: constraint step out of range");
      if (c.disc < 0 || c.disc >= int(P_.disc_offsets.size()))
        throw std::invalid_argument("solve_sp: constraint disc out of range");
    }
    const int pos = P_.dynamics->position_index();
    if (pos < 0 || pos + 2 > P_.dynamics->nx())
      throw std::invalid_argument("solve_sp: position index out of range");
  }

  void init_iterate() {
    nx_ = P_.dynamics->nx();
    nu_ = P_.dynamics->nu();
    N_ = P_.N;
    lay_ = {nx_, nu_, N_, N_ * (nx_ + nu_)};
    if (P_.X0.rows() == nx_ && P_.X0.cols() == N_ && P_.U0.rows() == nu_ &&
        P_.U0.cols() == N_) {
      X_ = P_.X0;
      U_ = P_.U0;
    } else {
      U_ = Eigen::MatrixXd::Zero(nu_, N_);
      X_.resize(nx_, N_);
      Eigen::VectorXd x = P_.x0;
      for (int k = 0; k < N_; ++k) {
        x = P_.dynamics->step(x, U_.col(k));
        X_.col(k) = x;
      }
    }
  }

  Eigen::VectorXd state_at(const Eigen::MatrixXd& X, int k) const {
    return k == 0 ? P_.x0 : Eigen::VectorXd(X.col(k - 1));
  }

  Eigen::Vector2d group_point(const Eigen::MatrixXd& X, size_t g) const {
    const auto& c = P_.constraints[g];
    return disc_point(X.col(c.step - 1), P_.dynamics->position_index(),
                      P_.dynamics->heading_index(),
                      P_.disc_offsets[size_t(c.disc)]);
  }

  void discard(const std::set<int32_t>& ids) {
    removed_.insert(ids.begin(), ids.end());
    support_.insert(ids.begin(), ids.end());
  }

  // QP over z = [x_1..x_N, u_0..u_{N-1}] at the current iterate
  void assemble(const std::vector<std::vector<Halfspace>>& kept, QpProblem& qp,
                std::vector<RowRef>& refs) const {
    const int nz = lay_.nz;
    qp.G = Eigen::MatrixXd::Zero(nz, nz);
    qp.g = Eigen::VectorXd::Zero(nz);
    Eigen::MatrixXd H;
    Eigen::VectorXd gr;
    for (int k = 1; k <= N_; ++k) {
      P_.cost->state_quadratic(k, X_.col(k - 1), H, gr);
      qp.G.block(lay_.xi(k), lay_.xi(k), nx_, nx_) = H;
      qp.g.segment(lay_.xi(k), nx_) = gr - H * X_.col(k - 1);
    }
    for (int k = 0; k < N_; ++k) {
      P_.cost->input_quadratic(k, U_.col(k), H, gr);
      qp.G.block(lay_.ui(k), lay_.ui(k), nu_, nu_) = H;
      qp.g.segment(lay_.ui(k), nu_) = gr - H * U_.col(k);
    }
    qp.G.diagonal().array() += P_.settings.reg;
    if (prox_ > 0.0) {
      // proximal damping centered on the current iterate: + prox/2 |z - z_k|^2
      qp.G.diagonal().array() += prox_;
      for (int k = 1; k <= N_; ++k)
        qp.g.segment(lay_.xi(k), nx_) -= prox_ * X_.col(k - 1);
      for (int k = 0; k < N_; ++k)
        qp.g.segment(lay_.ui(k), nu_) -= prox_ * U_.col(k);
    }

    qp.Aeq = Eigen::MatrixXd::Zero(N_ * nx_, nz);
    qp.beq = Eigen::VectorXd::Zero(N_ * nx_);
    Eigen::MatrixXd A, B;
    for (int k = 0; k < N_; ++k) {
      const Eigen::VectorXd xk = state_at(X_, k);
      const Eigen::VectorXd f = P_.dynamics->step(xk, U_.col(k));
      P_.dynamics->jacobians(xk, U_.col(k), A, B);
      const int r0 = k * nx_;
      qp.Aeq.block(r0, lay_.xi(k + 1), nx_, nx_).setIdentity();
      qp.Aeq.block(r0, lay_.ui(k), nx_, nu_) = -B;
      Eigen::VectorXd c = f - B * U_.col(k);
      if (k >= 1) {
        qp.Aeq.block(r0, lay_.xi(k), nx_, nx_) = -A;
        c -= A * xk;
      }
      qp.beq.segment(r0, nx_) = c;
    }

    int m = 0;
    const bool has_u_lo = P_.u_bounds.lo.size() == nu_;
    const bool has_u_hi = P_.u_bounds.hi.size() == nu_;
    const bool has_x_lo = P_.x_bounds.lo.size() == nx_;
    const bool has_x_hi = P_.x_bounds.hi.size() == nx_;
    // magnitudes beyond 1e20 are sentinels for "unbounded"; materializing
    // them as rows would poison the QP's violation scale
    auto finite = [](double v) { return std::isfinite(v) && std::abs(v) < 1e20; };
    for (int j = 0; j < nu_; ++j) {
      if (has_u_lo && finite(P_.u_bounds.lo(j))) m += N_;
      if (has_u_hi && finite(P_.u_bounds.hi(j))) m += N_;
    }
    for (int j = 0; j < nx_; ++j) {
      if (has_x_lo && finite(P_.x_bounds.lo(j))) m += N_;
      if (has_x_hi && finite(P_.x_bounds.hi(j))) m += N_;
    }
    for (const auto& rows : kept) m += int(rows.size());

    qp.Ain = Eigen::MatrixXd::Zero(m, nz);
    qp.bin = Eigen::VectorXd::Zero(m);
    refs.clear();
    refs.reserve(size_t(m));
    int r = 0;
    for (int k = 0; k < N_; ++k)
      for (int j = 0; j < nu_; ++j) {
        if (has_u_hi && finite(P_.u_bounds.hi(j))) {
          qp.Ain(r, lay_.ui(k) + j) = 1.0;
          qp.bin(r) = P_.u_bounds.hi(j);
          refs.push_back({});
          ++r;
        }
        if (has_u_lo && finite(P_.u_bounds.lo(j))) {
          qp.Ain(r, lay_.ui(k) + j) = -1.0;
          qp.bin(r) = -P_.u_bounds.lo(j);
          refs.push_back({});
          ++r;
        }
      }
    for (int k = 1; k <= N_; ++k)
      for (int j = 0; j < nx_; ++j) {
        if (has_x_hi && finite(P_.x_bounds.hi(j))) {
          qp.Ain(r, lay_.xi(k) + j) = 1.0;
          qp.bin(r) = P_.x_bounds.hi(j);
          refs.push_back({});
          ++r;
        }
        if (has_x_lo && finite(P_.x_bounds.lo(j))) {
          qp.Ain(r, lay_.xi(k) + j) = -1.0;
          qp.bin(r) = -P_.x_bounds.lo(j);
          refs.push_back({});
          ++r;
        }
      }

    const int pos = P_.dynamics->position_index();
    const int head = P_.dynamics->heading_index();
    for (size_t g = 0; g < kept.size(); ++g) {
      const auto& c = P_.constraints[g];
      const Eigen::Vector2d off = P_.disc_offsets[size_t(c.disc)];
      const int xk = lay_.xi(c.step);
      const double eta = head >= 0 ? X_(head, c.step - 1) : 0.0;
      for (const auto& h : kept[g]) {
        qp.Ain(r, xk + pos) = h.a.x();
        qp.Ain(r, xk + pos + 1) = h.a.y();
        double rhs = h.b;
        if (off.squaredNorm() > 0.0) {
          if (head >= 0) {
            const Eigen::Vector2d rw = rot(eta) * off;
            const Eigen::Vector2d dw = drot(eta) * off;
            qp.Ain(r, xk + head) = h.a.dot(dw);
            rhs += -h.a.dot(rw) + h.a.dot(dw) * eta;
          } else {
            rhs -= h.a.dot(off);
          }
        }
        qp.bin(r) = rhs;
        refs.push_back({h.scenario, int(g)});
        ++r;
      }
    }
  }

  void unpack(const Eigen::VectorXd& z, Eigen::MatrixXd& X,
              Eigen::MatrixXd& U) const {
    for (int k = 1; k <= N_; ++k) X.col(k - 1) = z.segment(lay_.xi(k), nx_);
    for (int k = 0; k < N_; ++k) U.col(k) = z.segment(lay_.ui(k), nu_);
  }

  double step_norm(const Eigen::MatrixXd& Xs, const Eigen::MatrixXd& Us) const {
    return std::max((Xs - X_).cwiseAbs().maxCoeff(),
                    (Us - U_).cwiseAbs().maxCoeff());
  }

  double dynamics_defect(const Eigen::MatrixXd& X,
                         const Eigen::MatrixXd& U) const {
    double d = 0.0;
    for (int k = 0; k < N_; ++k) {
      const Eigen::VectorXd xk = k == 0 ? P_.x0 : Eigen::VectorXd(X.col(k - 1));
      d = std::max(
          d, (X.col(k) - P_.dynamics->step(xk, U.col(k))).cwiseAbs().maxCoeff());
    }
    return d;
  }

  // l1 merit: exact cost + mu-weighted dynamics defect and violations
  double merit(const Eigen::MatrixXd& X, const Eigen::MatrixXd& U,
               const std::vector<std::vector<Halfspace>>& kept,
               double mu) const {
    double phi = P_.cost->value(X, U);
    for (int k = 0; k < N_; ++k) {
      const Eigen::VectorXd xk = k == 0 ? P_.x0 : Eigen::VectorXd(X.col(k - 1));
      phi += mu * (X.col(k) - P_.dynamics->step(xk, U.col(k))).lpNorm<1>();
    }
    const int pos = P_.dynamics->position_index();
    const int head = P_.dynamics->heading_index();
    for (size_t g = 0; g < kept.size(); ++g) {
      const auto& c = P_.constraints[g];
      const Eigen::Vector2d p =
          disc_point(X.col(c.step - 1), pos, head,
                     P_.disc_offsets[size_t(c.disc)]);
      for (const auto& h : kept[g]) phi += mu * std::max(0.0, -h.margin(p));
    }
    auto clampv = [&](const Eigen::VectorXd& v, const SpBounds& b) {
      double s = 0.0;
      if (b.lo.size() == v.size())
        s += (b.lo - v).cwiseMax(0.0).unaryExpr([](double t) {
          return std::isfinite(t) ? t : 0.0;
        }).sum();
      if (b.hi.size() == v.size())
        s += (v - b.hi).cwiseMax(0.0).unaryExpr([](double t) {
          return std::isfinite(t) ? t : 0.0;
        }).sum();
      return s;
    };
    for (int k = 0; k < N_; ++k) phi += mu * clampv(U.col(k), P_.u_bounds);
    for (int k = 0; k < N_; ++k) phi += mu * clampv(X.col(k), P_.x_bounds);
    return phi;
  }

  // true-geometry feasibility against the complete (unreduced) row lists;
  // optionally collects rows a truncated reduction dropped but the iterate
  // violates, so they can be forced back in
  bool fully_feasible(
      const Eigen::MatrixXd& X, const Eigen::MatrixXd& U,
      const std::vector<StageConstraintSet>& groups,
      std::vector<std::pair<int, Halfspace>>* dropped_violations) const {
    if (dynamics_defect(X, U) > P_.settings.defect_tol) return false;
    const int pos = P_.dynamics->position_index();
    const int head = P_.dynamics->heading_index();
    bool ok = true;
    for (size_t g = 0; g < groups.size(); ++g) {
      const auto& c = groups[g];
      const Eigen::Vector2d p = disc_point(
          X.col(c.step - 1), pos, head, P_.disc_offsets[size_t(c.disc)]);
      for (const auto& h : c.rows) {
        if (removed_.count(h.scenario)) continue;
        if (h.margin(p) < -P_.settings.feas_tol) {
          ok = false;
          if (dropped_violations)
            dropped_violations->push_back({int(g), h});
          else
            return false;
        }
      }
    }
    auto within = [&](const Eigen::VectorXd& v, const SpBounds& b) {
      if (b.lo.size() == v.size())
        for (int j = 0; j < v.size(); ++j)
          if (std::isfinite(b.lo(j)) && v(j) < b.lo(j) - P_.settings.feas_tol)
            return false;
      if (b.hi.size() == v.size())
        for (int j = 0; j < v.size(); ++j)
          if (std::isfinite(b.hi(j)) && v(j) > b.hi(j) + P_.settings.feas_tol)
            return false;
      return true;
    };
    for (int k = 0; k < N_; ++k)
      if (!within(U.col(k), P_.u_bounds) || !within(X.col(k), P_.x_bounds))
        ok = false;
    return ok;
  }

  int32_t costliest_scenario(const QpResult& sol,
                             const std::vector<RowRef>& refs) const {
    int32_t best = -1;
    double best_dual = 0.0;
    std::vector<std::pair<int32_t, double>> acc;
    for (size_t r = 0; r < refs.size(); ++r) {
      if (refs[r].scenario < 0) continue;
      const double d = sol.ineq_duals(int(r));
      if (d <= 0.0) continue;
      bool found = false;
      for (auto& [id, sum] : acc)
        if (id == refs[r].scenario) {
          sum += d;
          found = true;
        }
      if (!found) acc.push_back({refs[r].scenario, d});
    }
    for (const auto& [id, sum] : acc)
      if (sum > best_dual + 1e-15 ||
          (std::abs(sum - best_dual) <= 1e-15 && best >= 0 && id < best)) {
        best = id;
        best_dual = sum;
      }
    return best;
  }

  void save_snapshot() {
    snap_.valid = true;
    snap_.X = X_;
    snap_.U = U_;
    snap_.support = sorted_ids(support_);
    snap_.removed = sorted_ids(removed_);
    snap_.cost = P_.cost->value(X_, U_);
  }

  void finalize(SolveResult& res, Clock::time_point t0) {
    // early termination and an exhausted iteration budget both fall back to
    // the last fully feasible iterate when one was recorded
    const bool use_snap = snap_.valid && (res.status == SpStatus::early_terminated ||
                                          res.status == SpStatus::max_iterations);
    if (use_snap) {
      res.plan.X = snap_.X;
      res.plan.U = snap_.U;
      res.support = snap_.support;
      res.removed = snap_.removed;
      res.cost = snap_.cost;
    } else {
      res.plan.X = X_;
      res.plan.U = U_;
      res.support = sorted_ids(support_);
      res.removed = sorted_ids(removed_);
      res.cost = P_.cost->value(X_, U_);
    }
    if (res.plan.X.size() && res.plan.U.size()) {
      res.plan_feasible =
          fully_feasible(res.plan.X, res.plan.U, P_.constraints, nullptr);
    }
    res.conflict = sorted_ids(blocked_);
    res.solve_ms = ms_since(t0);
  }

  // linearization trust for accepting merit-increasing full steps, and the
  // longest run of such acceptances before the monotone search must resume
  static constexpr double kDefectTrust = 0.5;
  static constexpr int kMaxRelaxedSteps = 5;
  // escalation range of the proximal weight after rejected steps
  static constexpr double kProxMin = 1e-2;
  static constexpr double kProxMax = 1e3;

  const SpProblem& P_;
  Layout lay_;
  int nx_ = 0, nu_ = 0, N_ = 0;
  Eigen::MatrixXd X_, U_;
  Eigen::MatrixXd Xp1_, Up1_;  // previous accepted iterate (cycle check)
  std::vector<ReduceResult> red_cache_;  // per-group reduction, reused while
  std::vector<char> red_ok_;             // the witness stays inside the poly
  size_t red_removed_ = size_t(-1);      // removal-set size the cache saw
  int relaxed_run_ = 0;
  double prox_ = 0.0;
  double watchdog_best_ = std::numeric_limits<double>::infinity();
  std::set<int32_t> support_;
  std::set<int32_t> removed_;
  std::set<int32_t> blocked_;  // discarded because they emptied a stage/QP
  std::vector<std::vector<Halfspace>> forced_;
  Snapshot snap_;
};

}  // namespace

SolveResult solve_sp(const SpProblem& problem) {
  return SpSolver(problem).run();
}

GreedySupportResult greedy_support(const SpProblem& problem, double plan_tol) {
  SpProblem base = problem;
  base.settings.track_support = false;
  base.settings.support_limit = std::numeric_limits<int>::max();
  base.settings.removal_budget = 0;

  const auto t0 = Clock::now();
  const SolveResult ref = solve_sp(base);
  GreedySupportResult out;
  out.base_ms = ms_since(t0);
  out.solves = 1;
  if (!ref.usable()) {
    out.total_ms = out.base_ms;
    return out;
  }
  out.base_plan = ref.plan;
  out.base_cost = ref.cost;

  std::set<int32_t> ids;
  for (const auto& grp : problem.constraints)
    for (const auto& h : grp.rows)
      if (h.scenario >= 0) ids.insert(h.scenario);

  for (int32_t s : ids) {
    SpProblem drop = base;
    drop.constraints.clear();
    for (const auto& grp : problem.constraints) {
      StageConstraintSet c;
      c.step = grp.step;
      c.disc = grp.disc;
      for (const auto& h : grp.rows)
        if (h.scenario != s) c.rows.push_back(h);
      drop.constraints.push_back(std::move(c));
    }
    const SolveResult r = solve_sp(drop);
    ++out.solves;
    if (!r.usable()) {
      out.support.push_back(s);  // exclusion changed solvability: influential
      continue;
    }
    const double dx = (r.plan.X - ref.plan.X).cwiseAbs().maxCoeff();
    const double du = (r.plan.U - ref.plan.U).cwiseAbs().maxCoeff();
    if (std::max(dx, du) > plan_tol) out.support.push_back(s);
  }
  out.total_ms = ms_since(t0);
  return out;
}

}  // namespace shmpc
