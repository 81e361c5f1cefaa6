#pragma once

// Primal-dual interior-point method on the homogeneous self-dual embedding of
//
//   minimize c'x  s.t.  Ax = b,  Gx + s = h,  s in K
//
// where K is a product of one nonnegative orthant and second-order cones.
// Nesterov-Todd scaling, Mehrotra predictor-corrector, sparse LDL' of the
// regularized quasidefinite KKT system with iterative refinement.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "dopf/conic/program.hpp"

namespace dopf::conic {

namespace detail {

using SpMat = Eigen::SparseMatrix<double>;
using Trip = Eigen::Triplet<double>;

/// Standard-form image of a ConicProgram.
struct StandardForm {
  int n = 0;
  int p = 0;
  int m_lin = 0;
  std::vector<int> soc_dims;
  SpMat A, G;
  Eigen::VectorXd c, b, h;
  double c0 = 0.0;

  int m() const {
    int total = m_lin;
    for (int d : soc_dims) total += d;
    return total;
  }
};

inline StandardForm to_standard_form(const ConicProgram& prog) {
  StandardForm sf;
  sf.n = prog.num_variables();
  sf.c.resize(sf.n);
  for (int j = 0; j < sf.n; ++j) sf.c[j] = prog.objective_coeff(j);
  sf.c0 = prog.objective_constant();

  std::vector<Trip> ta, tg;
  std::vector<double> bv, hv;
  // Linear inequalities: G row r, h_r with a'x <= h  <=>  s = h - a'x >= 0.
  auto leq = [&](const std::vector<Term>& terms, double sign, double rhs) {
    const int r = static_cast<int>(hv.size());
    for (const auto& t : terms) tg.emplace_back(r, t.var, sign * t.coeff);
    hv.push_back(sign * rhs);
  };
  for (const auto& row : prog.rows()) {
    if (row.is_equality()) {
      const int r = static_cast<int>(bv.size());
      for (const auto& t : row.terms) ta.emplace_back(r, t.var, t.coeff);
      bv.push_back(row.lo);
      continue;
    }
    if (std::isfinite(row.hi)) leq(row.terms, 1.0, row.hi);
    if (std::isfinite(row.lo)) leq(row.terms, -1.0, row.lo);
  }
  for (int j = 0; j < sf.n; ++j) {
    const double lo = prog.lo(j), hi = prog.hi(j);
    if (lo == hi) {
      ta.emplace_back(static_cast<int>(bv.size()), j, 1.0);
      bv.push_back(lo);
      continue;
    }
    if (std::isfinite(hi)) leq({{j, 1.0}}, 1.0, hi);
    if (std::isfinite(lo)) leq({{j, 1.0}}, -1.0, lo);
  }
  sf.m_lin = static_cast<int>(hv.size());

  // Rotated cone u*w >= |s|^2 (u, w >= 0)  <=>  ((u+w)/2, (u-w)/2, s) in SOC.
  // Each SOC entry is affine: entry = off + sum coeff x, stored as s = h - Gx.
  for (const auto& k : prog.cones()) {
    const int base = static_cast<int>(hv.size());
    const int dim = 2 + static_cast<int>(k.s.size());
    auto put = [&](int r, const AffineTerm& t, double scale) {
      if (t.var >= 0) tg.emplace_back(base + r, t.var, -scale * t.coeff);
      hv[base + r] += scale * t.offset;
    };
    hv.resize(hv.size() + dim, 0.0);
    put(0, k.u, 0.5);
    put(0, k.w, 0.5);
    put(1, k.u, 0.5);
    put(1, k.w, -0.5);
    for (int i = 0; i < static_cast<int>(k.s.size()); ++i) put(2 + i, k.s[i], 1.0);
    sf.soc_dims.push_back(dim);
  }

  sf.p = static_cast<int>(bv.size());
  sf.A.resize(sf.p, sf.n);
  sf.A.setFromTriplets(ta.begin(), ta.end());
  sf.G.resize(static_cast<int>(hv.size()), sf.n);
  sf.G.setFromTriplets(tg.begin(), tg.end());
  sf.b = Eigen::Map<Eigen::VectorXd>(bv.data(), static_cast<Eigen::Index>(bv.size()));
  sf.h = Eigen::Map<Eigen::VectorXd>(hv.data(), static_cast<Eigen::Index>(hv.size()));
  return sf;
}

/// Cone algebra and NT scaling for K = R+^l x SOC x ... x SOC.
class ConeScaling {
 public:
  ConeScaling(int m_lin, std::vector<int> soc_dims) : m_lin_(m_lin), dims_(std::move(soc_dims)) {
    int off = m_lin_;
    for (int d : dims_) {
      offs_.push_back(off);
      off += d;
    }
    m_ = off;
    d_lin_ = Eigen::VectorXd::Ones(m_lin_);
    eta_.assign(dims_.size(), 1.0);
    wbar_.resize(dims_.size());
    for (std::size_t k = 0; k < dims_.size(); ++k) {
      wbar_[k] = Eigen::VectorXd::Zero(dims_[k]);
      wbar_[k][0] = 1.0;
    }
  }

  int degree() const { return m_lin_ + static_cast<int>(dims_.size()); }
  int m() const { return m_; }
  int m_lin() const { return m_lin_; }
  const std::vector<int>& dims() const { return dims_; }
  const std::vector<int>& offsets() const { return offs_; }

  Eigen::VectorXd identity() const {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(m_);
    e.head(m_lin_).setOnes();
    for (int o : offs_) e[o] = 1.0;
    return e;
  }

  /// Smallest "eigenvalue" over all cones; positive iff strictly interior.
  double min_eig(const Eigen::VectorXd& v) const {
    double r = std::numeric_limits<double>::infinity();
    if (m_lin_ > 0) r = v.head(m_lin_).minCoeff();
    for (std::size_t k = 0; k < dims_.size(); ++k) {
      const int o = offs_[k], d = dims_[k];
      r = std::min(r, v[o] - v.segment(o + 1, d - 1).norm());
    }
    return r;
  }

  /// Recompute scaling from strictly interior s, z.
  void update(const Eigen::VectorXd& s, const Eigen::VectorXd& z) {
    for (int i = 0; i < m_lin_; ++i) d_lin_[i] = std::sqrt(s[i] / z[i]);
    for (std::size_t k = 0; k < dims_.size(); ++k) {
      const int o = offs_[k], d = dims_[k];
      const auto sk = s.segment(o, d);
      const auto zk = z.segment(o, d);
      const double sn = std::sqrt(std::max(sk[0] * sk[0] - sk.tail(d - 1).squaredNorm(), 1e-300));
      const double zn = std::sqrt(std::max(zk[0] * zk[0] - zk.tail(d - 1).squaredNorm(), 1e-300));
      const Eigen::VectorXd sb = sk / sn;
      const Eigen::VectorXd zb = zk / zn;
      const double gamma = std::sqrt(std::max((1.0 + sb.dot(zb)) / 2.0, 1e-300));
      Eigen::VectorXd w(d);
      w[0] = (sb[0] + zb[0]) / (2.0 * gamma);
      w.tail(d - 1) = (sb.tail(d - 1) - zb.tail(d - 1)) / (2.0 * gamma);
      eta_[k] = std::sqrt(sn / zn);
      wbar_[k] = w;
    }
  }

  Eigen::VectorXd apply_w(const Eigen::VectorXd& v) const { return apply(v, false); }
  Eigen::VectorXd apply_winv(const Eigen::VectorXd& v) const { return apply(v, true); }

  /// Lower-triangle entries of W^2 (shifted by row_off) into trips with an extra diagonal shift.
  void w2_triplets(int row_off, double diag_shift, std::vector<Trip>& trips) const {
    for (int i = 0; i < m_lin_; ++i) trips.emplace_back(row_off + i, row_off + i, -(d_lin_[i] * d_lin_[i]) - diag_shift);
    for (std::size_t k = 0; k < dims_.size(); ++k) {
      const int o = offs_[k], d = dims_[k];
      const double e2 = eta_[k] * eta_[k];
      const Eigen::VectorXd& w = wbar_[k];
      for (int j = 0; j < d; ++j)
        for (int i = j; i < d; ++i) {
          double v = 2.0 * w[i] * w[j];
          if (i == j) v += (i == 0 ? -1.0 : 1.0);
          v *= e2;
          trips.emplace_back(row_off + o + i, row_off + o + j, -v - (i == j ? diag_shift : 0.0));
        }
    }
  }

  Eigen::VectorXd apply_w2(const Eigen::VectorXd& v) const {
    Eigen::VectorXd out(m_);
    for (int i = 0; i < m_lin_; ++i) out[i] = d_lin_[i] * d_lin_[i] * v[i];
    for (std::size_t k = 0; k < dims_.size(); ++k) {
      const int o = offs_[k], d = dims_[k];
      const Eigen::VectorXd& w = wbar_[k];
      const auto vk = v.segment(o, d);
      Eigen::VectorXd r = 2.0 * w.dot(vk) * w;
      r[0] -= vk[0];
      r.tail(d - 1) += vk.tail(d - 1);
      out.segment(o, d) = eta_[k] * eta_[k] * r;
    }
    return out;
  }

  /// Jordan product u o v.
  Eigen::VectorXd circ(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const {
    Eigen::VectorXd out(m_);
    out.head(m_lin_) = u.head(m_lin_).cwiseProduct(v.head(m_lin_));
    for (std::size_t k = 0; k < dims_.size(); ++k) {
      const int o = offs_[k], d = dims_[k];
      out[o] = u.segment(o, d).dot(v.segment(o, d));
      out.segment(o + 1, d - 1) = u[o] * v.segment(o + 1, d - 1) + v[o] * u.segment(o + 1, d - 1);
    }
    return out;
  }

  /// Solves lambda o x = r for x.
  Eigen::VectorXd inv_circ(const Eigen::VectorXd& lam, const Eigen::VectorXd& r) const {
    Eigen::VectorXd out(m_);
    out.head(m_lin_) = r.head(m_lin_).cwiseQuotient(lam.head(m_lin_));
    for (std::size_t k = 0; k < dims_.size(); ++k) {
      const int o = offs_[k], d = dims_[k];
      const double l0 = lam[o];
      const auto l1 = lam.segment(o + 1, d - 1);
      const double det = l0 * l0 - l1.squaredNorm();
      const double x0 = (l0 * r[o] - l1.dot(r.segment(o + 1, d - 1))) / det;
      out[o] = x0;
      out.segment(o + 1, d - 1) = (r.segment(o + 1, d - 1) - x0 * l1) / l0;
    }
    return out;
  }

  /// Largest alpha in [0, cap] with v + alpha dv in the cone.
  double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv, double cap) const {
    double a = cap;
    for (int i = 0; i < m_lin_; ++i)
      if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
    for (std::size_t k = 0; k < dims_.size(); ++k) {
      const int o = offs_[k], d = dims_[k];
      // (v0 + a d0)^2 - |v1 + a d1|^2 >= 0 and v0 + a d0 >= 0.
      const double v0 = v[o], d0 = dv[o];
      const auto v1 = v.segment(o + 1, d - 1);
      const auto d1 = dv.segment(o + 1, d - 1);
      const double qa = d0 * d0 - d1.squaredNorm();
      const double qb = 2.0 * (v0 * d0 - v1.dot(d1));
      const double qc = v0 * v0 - v1.squaredNorm();
      double root = std::numeric_limits<double>::infinity();
      if (std::abs(qa) < 1e-300) {
        if (qb < 0.0) root = -qc / qb;
      } else {
        const double disc = qb * qb - 4.0 * qa * qc;
        if (disc >= 0.0) {
          const double sq = std::sqrt(disc);
          const double q = -0.5 * (qb + (qb >= 0 ? sq : -sq));
          const double r1 = q / qa;
          const double r2 = q != 0.0 ? qc / q : std::numeric_limits<double>::infinity();
          for (double r : {r1, r2})
            if (r > 0.0) root = std::min(root, r);
        }
      }
      if (d0 < 0.0) root = std::min(root, -v0 / d0);
      a = std::min(a, root);
    }
    return std::max(a, 0.0);
  }

 private:
  Eigen::VectorXd apply(const Eigen::VectorXd& v, bool inverse) const {
    Eigen::VectorXd out(m_);
    for (int i = 0; i < m_lin_; ++i) out[i] = inverse ? v[i] / d_lin_[i] : v[i] * d_lin_[i];
    for (std::size_t k = 0; k < dims_.size(); ++k) {
      const int o = offs_[k], d = dims_[k];
      const Eigen::VectorXd& w = wbar_[k];
      const auto vk = v.segment(o, d);
      const auto w1 = w.tail(d - 1);
      const auto v1 = vk.tail(d - 1);
      const double sgn = inverse ? -1.0 : 1.0;
      const double scale = inverse ? 1.0 / eta_[k] : eta_[k];
      const double w1v1 = w1.dot(v1);
      out[o] = scale * (w[0] * vk[0] + sgn * w1v1);
      out.segment(o + 1, d - 1) = scale * (sgn * vk[0] * w1 + v1 + (w1v1 / (1.0 + w[0])) * w1);
    }
    return out;
  }

  int m_lin_;
  std::vector<int> dims_;
  std::vector<int> offs_;
  int m_ = 0;
  Eigen::VectorXd d_lin_;
  std::vector<double> eta_;
  std::vector<Eigen::VectorXd> wbar_;
};

/// Quasidefinite KKT system [0 A' G'; A 0 0; G 0 -W^2] with static regularization.
class KktSystem {
 public:
  KktSystem(const StandardForm& sf, const ConeScaling& cones) : sf_(sf), cones_(cones) {
    N_ = sf.n + sf.p + sf.m();
  }

  bool factor() {
    std::vector<Trip> trips;
    trips.reserve(static_cast<std::size_t>(sf_.n + 2 * (sf_.A.nonZeros() + sf_.G.nonZeros()) + sf_.m() * 4));
    for (int i = 0; i < sf_.n; ++i) trips.emplace_back(i, i, kDelta);
    for (int j = 0; j < sf_.A.outerSize(); ++j)
      for (SpMat::InnerIterator it(sf_.A, j); it; ++it) trips.emplace_back(sf_.n + it.row(), j, it.value());
    for (int j = 0; j < sf_.G.outerSize(); ++j)
      for (SpMat::InnerIterator it(sf_.G, j); it; ++it) trips.emplace_back(sf_.n + sf_.p + it.row(), j, it.value());
    for (int i = 0; i < sf_.p; ++i) trips.emplace_back(sf_.n + i, sf_.n + i, -kDelta);
    cones_.w2_triplets(sf_.n + sf_.p, kDelta, trips);
    K_.resize(N_, N_);
    K_.setFromTriplets(trips.begin(), trips.end());
    if (!analyzed_) {
      ldlt_.analyzePattern(K_);
      analyzed_ = true;
    }
    ldlt_.factorize(K_);
    return ldlt_.info() == Eigen::Success;
  }

  /// Solves the unregularized system by refinement on the regularized factor.
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    Eigen::VectorXd x = ldlt_.solve(rhs);
    const double scale = 1.0 + rhs.lpNorm<Eigen::Infinity>();
    for (int it = 0; it < 8; ++it) {
      const Eigen::VectorXd r = rhs - multiply(x);
      if (r.lpNorm<Eigen::Infinity>() < 1e-14 * scale) break;
      x += ldlt_.solve(r);
    }
    return x;
  }

 private:
  Eigen::VectorXd multiply(const Eigen::VectorXd& v) const {
    const int n = sf_.n, p = sf_.p, m = sf_.m();
    const auto vx = v.head(n);
    const auto vy = v.segment(n, p);
    const Eigen::VectorXd vz = v.tail(m);
    Eigen::VectorXd out(N_);
    out.head(n) = sf_.A.transpose() * vy + sf_.G.transpose() * vz;
    out.segment(n, p) = sf_.A * vx;
    out.tail(m) = sf_.G * vx - cones_.apply_w2(vz);
    return out;
  }

  static constexpr double kDelta = 1e-8;
  const StandardForm& sf_;
  const ConeScaling& cones_;
  int N_;
  SpMat K_;
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
  bool analyzed_ = false;
};

}  // namespace detail

inline SolveReport solve_interior_point(const ConicProgram& prog, const SolverSettings& settings) {
  using Eigen::VectorXd;
  const auto t0 = std::chrono::steady_clock::now();
  SolveReport report;
  auto finish = [&](SolveStatus st) {
    report.status = st;
    report.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
  };

  const detail::StandardForm sf = detail::to_standard_form(prog);
  const int n = sf.n, p = sf.p, m = sf.m();
  detail::ConeScaling cones(sf.m_lin, sf.soc_dims);
  detail::KktSystem kkt(sf, cones);

  auto stack = [&](const VectorXd& a, const VectorXd& b, const VectorXd& c) {
    VectorXd out(n + p + m);
    out << a, b, c;
    return out;
  };

  // Initial point from two least-squares solves with W = I.
  if (!kkt.factor()) return finish(SolveStatus::NumericFailure);
  const VectorXd e = cones.identity();
  VectorXd x, y, s, z;
  {
    const VectorXd sol = kkt.solve(stack(VectorXd::Zero(n), sf.b, sf.h));
    x = sol.head(n);
    s = -sol.tail(m);
    const double a = cones.min_eig(s);
    if (m > 0 && a <= 0.0) s += (1.0 - a) * e;
  }
  {
    const VectorXd sol = kkt.solve(stack(-sf.c, VectorXd::Zero(p), VectorXd::Zero(m)));
    y = sol.segment(n, p);
    z = sol.tail(m);
    const double a = cones.min_eig(z);
    if (m > 0 && a <= 0.0) z += (1.0 - a) * e;
  }
  double tau = 1.0, kappa = 1.0;

  const double nb = std::max(1.0, sf.b.size() ? sf.b.norm() : 0.0);
  const double nh = std::max(1.0, sf.h.size() ? sf.h.norm() : 0.0);
  const double nc = std::max(1.0, sf.c.norm());
  const int degree = cones.degree();

  double best_pres = kInf, best_dres = kInf, best_gap = kInf;
  VectorXd best_x;

  for (int iter = 0; iter <= settings.max_iters; ++iter) {
    report.iterations = iter;
    const VectorXd Ax = sf.A * x;
    const VectorXd Gx = sf.G * x;
    const VectorXd Aty = sf.A.transpose() * y;
    const VectorXd Gtz = sf.G.transpose() * z;
    const VectorXd rx = Aty + Gtz + sf.c * tau;
    const VectorXd ry = -Ax + sf.b * tau;
    const VectorXd rz = s + Gx - sf.h * tau;
    const double cx = sf.c.dot(x);
    const double by_hz = sf.b.dot(y) + sf.h.dot(z);
    const double rt = kappa + cx + by_hz;

    const double pres = std::max(ry.size() ? ry.norm() / nb : 0.0, rz.size() ? rz.norm() / nh : 0.0) / tau;
    const double dres = rx.norm() / nc / tau;
    const double pcost = cx / tau;
    const double dcost = -by_hz / tau;
    const double gap = s.dot(z) / (tau * tau);
    double relgap = kInf;
    if (pcost < 0.0) relgap = gap / -pcost;
    else if (dcost > 0.0) relgap = gap / dcost;

    if (pres < settings.feastol && dres < settings.feastol && (gap < settings.abstol || relgap < settings.reltol)) {
      report.primal = x / tau;
      report.objective = prog.objective_value(*report.primal);
      return finish(SolveStatus::Optimal);
    }
    if (pres < best_pres * 10 && dres < best_dres * 10 && gap <= best_gap) {
      best_pres = pres;
      best_dres = dres;
      best_gap = gap;
      best_x = x / tau;
    }
    // Infeasibility certificates.
    if (by_hz < 0.0 && Gtz.size() + Aty.size() > 0) {
      const double infres = (Aty + Gtz).norm() / -by_hz;
      if (infres < settings.feastol && tau < kappa) return finish(SolveStatus::Infeasible);
    }
    if (cx < 0.0) {
      const double infres = std::max(Ax.size() ? Ax.norm() : 0.0, (Gx + s).size() ? (Gx + s).norm() : 0.0) / -cx;
      if (infres < settings.feastol && tau < kappa) return finish(SolveStatus::Unbounded);
    }
    if (iter == settings.max_iters) break;

    cones.update(s, z);
    const VectorXd lambda = cones.apply_w(z);
    const double mu = (s.dot(z) + tau * kappa) / (degree + 1);
    if (!kkt.factor()) return finish(SolveStatus::NumericFailure);

    const VectorXd u1 = kkt.solve(stack(-sf.c, sf.b, sf.h));
    const VectorXd u1x = u1.head(n), u1y = u1.segment(n, p), u1z = u1.tail(m);
    const double den = sf.c.dot(u1x) + sf.b.dot(u1y) + sf.h.dot(u1z) - kappa / tau;

    struct Dir {
      VectorXd dx, dy, dz, ds;
      double dtau, dkappa;
    };
    auto direction = [&](double d, const VectorXd& rs, double rk) {
      const VectorXd wl = cones.apply_w(cones.inv_circ(lambda, rs));
      const VectorXd u2 = kkt.solve(stack(-d * rx, d * ry, -d * rz - wl));
      const VectorXd u2x = u2.head(n), u2y = u2.segment(n, p), u2z = u2.tail(m);
      Dir dir;
      dir.dtau = (-d * rt - rk / tau - sf.c.dot(u2x) - sf.b.dot(u2y) - sf.h.dot(u2z)) / den;
      dir.dx = u2x + dir.dtau * u1x;
      dir.dy = u2y + dir.dtau * u1y;
      dir.dz = u2z + dir.dtau * u1z;
      dir.ds = wl - cones.apply_w2(dir.dz);
      dir.dkappa = (rk - kappa * dir.dtau) / tau;
      return dir;
    };
    auto step_len = [&](const Dir& dd, double cap) {
      double a = cap;
      a = std::min(a, cones.max_step(s, dd.ds, cap));
      a = std::min(a, cones.max_step(z, dd.dz, cap));
      if (dd.dtau < 0.0) a = std::min(a, -tau / dd.dtau);
      if (dd.dkappa < 0.0) a = std::min(a, -kappa / dd.dkappa);
      return a;
    };

    // Predictor.
    const Dir aff = direction(1.0, -cones.circ(lambda, lambda), -tau * kappa);
    const double a_aff = step_len(aff, 1.0);
    const double sigma = std::clamp(std::pow(1.0 - a_aff, 3), 0.0, 1.0);

    // Corrector.
    const VectorXd corr = cones.circ(cones.apply_winv(aff.ds), cones.apply_w(aff.dz));
    const VectorXd rs = -cones.circ(lambda, lambda) + sigma * mu * e - corr;
    const double rk = -tau * kappa + sigma * mu - aff.dtau * aff.dkappa;
    const Dir dir = direction(1.0 - sigma, rs, rk);
    const double alpha = std::min(1.0, 0.99 * step_len(dir, 1e6));

    if (!std::isfinite(alpha) || alpha < 1e-12 || !dir.dx.allFinite()) break;
    x += alpha * dir.dx;
    y += alpha * dir.dy;
    z += alpha * dir.dz;
    s += alpha * dir.ds;
    tau += alpha * dir.dtau;
    kappa += alpha * dir.dkappa;
  }

  // Accept a slightly less accurate iterate rather than fail outright.
  const double relax = 1e3;
  if (best_x.size() && best_pres < relax * settings.feastol && best_dres < relax * settings.feastol &&
      best_gap < relax * std::max(settings.abstol, settings.reltol)) {
    report.primal = best_x;
    report.objective = prog.objective_value(best_x);
    return finish(SolveStatus::Optimal);
  }
  return finish(report.iterations >= settings.max_iters ? SolveStatus::IterationLimit : SolveStatus::NumericFailure);
}

}  // namespace dopf::conic
