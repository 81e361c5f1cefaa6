#pragma once

// Dense bounded-variable revised simplex (two phases) for cone-free programs.
// Meant for cross-checking the interior-point backend on small LPs.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "dopf/conic/program.hpp"

namespace dopf::conic {

namespace detail {

class BoundedSimplex {
 public:
  enum class Result { Optimal, Unbounded, IterationLimit, Singular };

  // Columns of M: structural, then one slack per row (a'x - s = 0), then artificials.
  BoundedSimplex(const ConicProgram& prog) {
    n_ = prog.num_variables();
    m_ = static_cast<int>(prog.rows().size());
    N_ = n_ + 2 * m_;
    M_ = Eigen::MatrixXd::Zero(m_, N_);
    lo_.resize(N_);
    hi_.resize(N_);
    for (int j = 0; j < n_; ++j) {
      lo_[j] = prog.lo(j);
      hi_[j] = prog.hi(j);
    }
    for (int i = 0; i < m_; ++i) {
      const Row& r = prog.rows()[i];
      for (const auto& t : r.terms) M_(i, t.var) += t.coeff;
      M_(i, n_ + i) = -1.0;
      lo_[n_ + i] = r.lo;
      hi_[n_ + i] = r.hi;
    }
    x_ = Eigen::VectorXd::Zero(N_);
    for (int j = 0; j < n_ + m_; ++j) x_[j] = resting_value(j);
    // Artificial per row absorbs the residual of the nonbasic point.
    const Eigen::VectorXd res = -M_.leftCols(n_ + m_) * x_.head(n_ + m_);
    basis_.resize(m_);
    for (int i = 0; i < m_; ++i) {
      const int a = n_ + m_ + i;
      M_(i, a) = res[i] >= 0.0 ? 1.0 : -1.0;
      lo_[a] = 0.0;
      hi_[a] = kInf;
      x_[a] = std::abs(res[i]);
      basis_[i] = a;
    }
    is_basic_.assign(N_, -1);
    for (int i = 0; i < m_; ++i) is_basic_[basis_[i]] = i;
    refactor();
  }

  Result run(const Eigen::VectorXd& cost, int max_iters, int& iters) {
    int degenerate = 0;
    for (; iters < max_iters; ++iters) {
      if (++since_refactor_ >= 50) refactor();
      Eigen::VectorXd cb(m_);
      for (int i = 0; i < m_; ++i) cb[i] = cost[basis_[i]];
      const Eigen::RowVectorXd yv = cb.transpose() * Binv_;
      const bool bland = degenerate > 20;
      int enter = -1;
      double best = 0.0, dir = 0.0;
      for (int j = 0; j < N_; ++j) {
        if (is_basic_[j] >= 0 || lo_[j] == hi_[j]) continue;
        const double d = cost[j] - yv.dot(M_.col(j));
        const bool can_up = x_[j] < hi_[j] - kFeas;
        const bool can_down = x_[j] > lo_[j] + kFeas;
        double score = 0.0, sgn = 0.0;
        if (d < -kOpt && can_up) score = -d, sgn = 1.0;
        else if (d > kOpt && can_down) score = d, sgn = -1.0;
        if (score == 0.0) continue;
        if (bland) {
          enter = j, dir = sgn;
          break;
        }
        if (score > best) best = score, enter = j, dir = sgn;
      }
      if (enter < 0) return Result::Optimal;

      const Eigen::VectorXd alpha = Binv_ * M_.col(enter);
      double theta = hi_[enter] - lo_[enter];
      int leave = -1;
      double leave_to = 0.0;
      for (int i = 0; i < m_; ++i) {
        const double delta = -dir * alpha[i];
        if (std::abs(delta) < kPiv) continue;
        const int b = basis_[i];
        double t;
        double bound;
        if (delta < 0.0) {
          if (!std::isfinite(lo_[b])) continue;
          bound = lo_[b];
          t = (x_[b] - lo_[b]) / -delta;
        } else {
          if (!std::isfinite(hi_[b])) continue;
          bound = hi_[b];
          t = (hi_[b] - x_[b]) / delta;
        }
        t = std::max(t, 0.0);
        if (t < theta || (t == theta && leave >= 0 && bland && b < basis_[leave])) {
          theta = t;
          leave = i;
          leave_to = bound;
        }
      }
      if (!std::isfinite(theta)) return Result::Unbounded;
      degenerate = theta < kFeas ? degenerate + 1 : 0;

      x_[enter] += dir * theta;
      for (int i = 0; i < m_; ++i) x_[basis_[i]] -= dir * theta * alpha[i];
      if (leave < 0) continue;  // bound flip

      const int out = basis_[leave];
      x_[out] = leave_to;
      is_basic_[out] = -1;
      basis_[leave] = enter;
      is_basic_[enter] = leave;
      const double piv = alpha[leave];
      if (std::abs(piv) < kPiv) return Result::Singular;
      const Eigen::RowVectorXd prow = Binv_.row(leave) / piv;
      for (int i = 0; i < m_; ++i)
        if (i != leave) Binv_.row(i) -= alpha[i] * prow;
      Binv_.row(leave) = prow;
    }
    return Result::IterationLimit;
  }

  void fix_artificials() {
    for (int i = 0; i < m_; ++i) {
      const int a = n_ + m_ + i;
      hi_[a] = 0.0;
      if (is_basic_[a] < 0) x_[a] = 0.0;
    }
  }

  double artificial_mass() const {
    double s = 0.0;
    for (int i = 0; i < m_; ++i) s += std::abs(x_[n_ + m_ + i]);
    return s;
  }

  int num_columns() const { return N_; }
  int num_structural() const { return n_; }
  int num_rows() const { return m_; }
  const Eigen::VectorXd& x() const { return x_; }

 private:
  double resting_value(int j) const {
    if (std::isfinite(lo_[j])) return lo_[j];
    if (std::isfinite(hi_[j])) return hi_[j];
    return 0.0;
  }

  void refactor() {
    since_refactor_ = 0;
    if (m_ == 0) {
      Binv_.resize(0, 0);
      return;
    }
    Eigen::MatrixXd B(m_, m_);
    for (int i = 0; i < m_; ++i) B.col(i) = M_.col(basis_[i]);
    Binv_ = B.partialPivLu().inverse();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m_);
    for (int j = 0; j < N_; ++j)
      if (is_basic_[j] < 0 && x_[j] != 0.0) rhs -= x_[j] * M_.col(j);
    const Eigen::VectorXd xb = Binv_ * rhs;
    for (int i = 0; i < m_; ++i) x_[basis_[i]] = xb[i];
  }

  static constexpr double kFeas = 1e-10;
  static constexpr double kOpt = 1e-10;
  static constexpr double kPiv = 1e-11;

  int n_, m_, N_;
  Eigen::MatrixXd M_;
  std::vector<double> lo_, hi_;
  Eigen::VectorXd x_;
  std::vector<int> basis_;
  std::vector<int> is_basic_;
  Eigen::MatrixXd Binv_;
  int since_refactor_ = 0;
};

}  // namespace detail

inline SolveReport solve_simplex(const ConicProgram& prog, const SolverSettings& settings) {
  if (!prog.is_lp()) throw std::invalid_argument("simplex backend does not accept cone constraints");
  const auto t0 = std::chrono::steady_clock::now();
  SolveReport report;
  auto finish = [&](SolveStatus st) {
    report.status = st;
    report.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
  };

  detail::BoundedSimplex sx(prog);
  const int N = sx.num_columns();
  const int n = sx.num_structural();
  const int limit = std::max(settings.max_iters, 50 * N);

  Eigen::VectorXd phase1 = Eigen::VectorXd::Zero(N);
  phase1.tail(sx.num_rows()).setOnes();
  int iters = 0;
  auto r1 = sx.run(phase1, limit, iters);
  report.iterations = iters;
  if (r1 == detail::BoundedSimplex::Result::IterationLimit) return finish(SolveStatus::IterationLimit);
  if (r1 != detail::BoundedSimplex::Result::Optimal) return finish(SolveStatus::NumericFailure);
  if (sx.artificial_mass() > std::max(settings.feastol, 1e-9) * (1.0 + sx.num_rows())) return finish(SolveStatus::Infeasible);

  sx.fix_artificials();
  Eigen::VectorXd cost = Eigen::VectorXd::Zero(N);
  for (int j = 0; j < n; ++j) cost[j] = prog.objective_coeff(j);
  auto r2 = sx.run(cost, limit, iters);
  report.iterations = iters;
  switch (r2) {
    case detail::BoundedSimplex::Result::Optimal: break;
    case detail::BoundedSimplex::Result::Unbounded: return finish(SolveStatus::Unbounded);
    case detail::BoundedSimplex::Result::IterationLimit: return finish(SolveStatus::IterationLimit);
    case detail::BoundedSimplex::Result::Singular: return finish(SolveStatus::NumericFailure);
  }
  report.primal = sx.x().head(n);
  report.objective = prog.objective_value(*report.primal);
  return finish(SolveStatus::Optimal);
}

}  // namespace dopf::conic
