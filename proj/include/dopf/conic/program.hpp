#pragma once

// Canonical-form optimization instance shared by every backend:
//
//   minimize    c'x + c0
//   subject to  lo_r <= a_r'x <= hi_r      (rows; lo_r == hi_r is an equality)
//               lo_j <= x_j <= hi_j        (boxes)
//               u * w >= sum_k s_k^2       (rotated cones, u, w >= 0)
//
// Cone members are affine in one variable each: offset + coeff * x[var].

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dopf::conic {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Term {
  int var;
  double coeff;
};

struct Row {
  std::vector<Term> terms;
  double lo;
  double hi;
  std::string name;

  bool is_equality() const { return lo == hi; }
  double eval(const Eigen::VectorXd& x) const {
    double v = 0.0;
    for (const auto& t : terms) v += t.coeff * x[t.var];
    return v;
  }
};

/// offset + coeff * x[var]; var < 0 means a pure constant.
struct AffineTerm {
  int var = -1;
  double coeff = 0.0;
  double offset = 0.0;

  static AffineTerm variable(int v, double coeff = 1.0, double offset = 0.0) { return {v, coeff, offset}; }
  static AffineTerm constant(double value) { return {-1, 0.0, value}; }

  double eval(const Eigen::VectorXd& x) const { return offset + (var >= 0 ? coeff * x[var] : 0.0); }
};

struct RotatedCone {
  AffineTerm u;
  AffineTerm w;
  std::vector<AffineTerm> s;
  std::string name;

  /// u*w - sum s^2; nonnegative (with u, w >= 0) inside the cone.
  double margin(const Eigen::VectorXd& x) const {
    double m = u.eval(x) * w.eval(x);
    for (const auto& t : s) m -= t.eval(x) * t.eval(x);
    return m;
  }
};

class ConicProgram {
 public:
  int add_variable(std::string name, double lo = -kInf, double hi = kInf) {
    names_.push_back(std::move(name));
    lo_.push_back(lo);
    hi_.push_back(hi);
    c_.push_back(0.0);
    return static_cast<int>(names_.size()) - 1;
  }

  void set_bounds(int var, double lo, double hi) {
    lo_.at(static_cast<std::size_t>(var)) = lo;
    hi_.at(static_cast<std::size_t>(var)) = hi;
  }
  void set_objective(int var, double coeff) { c_.at(static_cast<std::size_t>(var)) = coeff; }
  void add_objective(int var, double coeff) { c_.at(static_cast<std::size_t>(var)) += coeff; }
  void set_objective_constant(double c0) { c0_ = c0; }

  int add_row(std::vector<Term> terms, double lo, double hi, std::string name = {}) {
    rows_.push_back({std::move(terms), lo, hi, std::move(name)});
    return static_cast<int>(rows_.size()) - 1;
  }
  int add_equality(std::vector<Term> terms, double rhs, std::string name = {}) {
    return add_row(std::move(terms), rhs, rhs, std::move(name));
  }
  void add_cone(RotatedCone cone) { cones_.push_back(std::move(cone)); }

  int num_variables() const { return static_cast<int>(names_.size()); }
  const std::string& name(int var) const { return names_.at(static_cast<std::size_t>(var)); }
  double lo(int var) const { return lo_.at(static_cast<std::size_t>(var)); }
  double hi(int var) const { return hi_.at(static_cast<std::size_t>(var)); }
  double objective_coeff(int var) const { return c_.at(static_cast<std::size_t>(var)); }
  double objective_constant() const { return c0_; }
  const std::vector<Row>& rows() const { return rows_; }
  const std::vector<RotatedCone>& cones() const { return cones_; }
  bool is_lp() const { return cones_.empty(); }

  double objective_value(const Eigen::VectorXd& x) const {
    double v = c0_;
    for (int j = 0; j < num_variables(); ++j) v += c_[j] * x[j];
    return v;
  }

  /// Throws std::invalid_argument when a structural invariant is broken.
  void validate() const {
    const int n = num_variables();
    for (int j = 0; j < n; ++j) {
      if (std::isnan(lo_[j]) || std::isnan(hi_[j]) || lo_[j] > hi_[j])
        throw std::invalid_argument("variable '" + names_[j] + "' has lo > hi");
      if (!std::isfinite(c_[j])) throw std::invalid_argument("non-finite objective coefficient");
    }
    for (const auto& r : rows_) {
      if (std::isnan(r.lo) || std::isnan(r.hi) || r.lo > r.hi) throw std::invalid_argument("row '" + r.name + "' has lo > hi");
      for (const auto& t : r.terms)
        if (t.var < 0 || t.var >= n || !std::isfinite(t.coeff))
          throw std::invalid_argument("row '" + r.name + "' references a missing variable");
    }
    for (const auto& k : cones_) {
      std::set<int> used;
      auto check = [&](const AffineTerm& t) {
        if (t.var >= n) throw std::invalid_argument("cone '" + k.name + "' references a missing variable");
        if (t.var >= 0 && !used.insert(t.var).second)
          throw std::invalid_argument("cone '" + k.name + "' references a variable twice");
      };
      check(k.u);
      check(k.w);
      for (const auto& t : k.s) check(t);
    }
  }

 private:
  std::vector<std::string> names_;
  std::vector<double> lo_, hi_, c_;
  double c0_ = 0.0;
  std::vector<Row> rows_;
  std::vector<RotatedCone> cones_;
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, NumericFailure, IterationLimit };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    case SolveStatus::NumericFailure: return "numeric-failure";
    case SolveStatus::IterationLimit: return "iteration-limit";
  }
  return "unknown";
}

struct SolveReport {
  SolveStatus status = SolveStatus::NumericFailure;
  /// Present iff status == Optimal.
  std::optional<Eigen::VectorXd> primal;
  double objective = std::numeric_limits<double>::quiet_NaN();
  double solve_time = 0.0;
  int iterations = 0;
};

enum class Backend { InteriorPoint, Simplex };

struct SolverSettings {
  Backend backend = Backend::InteriorPoint;
  double feastol = 1e-8;
  double abstol = 1e-8;
  double reltol = 1e-8;
  int max_iters = 200;
};

struct PrimalViolation {
  enum class Kind { Row, Box, Cone };
  Kind kind;
  int index;
  double amount;
};

/// Independent re-check of every row, box and cone at `x`.
inline std::vector<PrimalViolation> verify_primal(const ConicProgram& prog, const Eigen::VectorXd& x, double tol) {
  std::vector<PrimalViolation> out;
  if (x.size() != prog.num_variables()) {
    out.push_back({PrimalViolation::Kind::Box, -1, kInf});
    return out;
  }
  for (int j = 0; j < prog.num_variables(); ++j) {
    const double v = std::max(prog.lo(j) - x[j], x[j] - prog.hi(j));
    if (v > tol || std::isnan(x[j])) out.push_back({PrimalViolation::Kind::Box, j, v});
  }
  for (std::size_t r = 0; r < prog.rows().size(); ++r) {
    const Row& row = prog.rows()[r];
    const double a = row.eval(x);
    const double v = std::max(row.lo - a, a - row.hi);
    if (v > tol) out.push_back({PrimalViolation::Kind::Row, static_cast<int>(r), v});
  }
  for (std::size_t k = 0; k < prog.cones().size(); ++k) {
    const RotatedCone& c = prog.cones()[k];
    const double v = std::max({-c.u.eval(x), -c.w.eval(x), -c.margin(x)});
    if (v > tol) out.push_back({PrimalViolation::Kind::Cone, static_cast<int>(k), v});
  }
  return out;
}

/// Writes the instance in Conic Benchmark Format (CBF v3) for offline debugging.
/// Rotated cones u*w >= |s|^2 are emitted as QR rows (0.5u, w, s).
inline void write_cbf(const ConicProgram& prog, std::ostream& os) {
  struct Block {
    std::string domain;
    std::vector<std::pair<std::vector<Term>, double>> rows;
  };
  std::vector<Block> blocks;
  for (const auto& r : prog.rows()) {
    if (r.is_equality()) {
      blocks.push_back({"L=", {{r.terms, -r.lo}}});
    } else {
      if (std::isfinite(r.lo)) blocks.push_back({"L+", {{r.terms, -r.lo}}});
      if (std::isfinite(r.hi)) {
        std::vector<Term> neg;
        for (auto t : r.terms) neg.push_back({t.var, -t.coeff});
        blocks.push_back({"L+", {{neg, r.hi}}});
      }
    }
  }
  for (int j = 0; j < prog.num_variables(); ++j) {
    if (std::isfinite(prog.lo(j))) blocks.push_back({"L+", {{{{j, 1.0}}, -prog.lo(j)}}});
    if (std::isfinite(prog.hi(j))) blocks.push_back({"L+", {{{{j, -1.0}}, prog.hi(j)}}});
  }
  auto affine_row = [](const AffineTerm& t, double scale) {
    std::vector<Term> terms;
    if (t.var >= 0) terms.push_back({t.var, scale * t.coeff});
    return std::pair{terms, scale * t.offset};
  };
  for (const auto& k : prog.cones()) {
    Block b{"QR", {}};
    b.rows.push_back(affine_row(k.u, 0.5));
    b.rows.push_back(affine_row(k.w, 1.0));
    for (const auto& s : k.s) b.rows.push_back(affine_row(s, 1.0));
    blocks.push_back(std::move(b));
  }
  std::size_t total_rows = 0;
  for (const auto& b : blocks) total_rows += b.rows.size();

  os << "VER\n3\n\nOBJSENSE\nMIN\n\nVAR\n" << prog.num_variables() << " 1\nF " << prog.num_variables() << "\n\n";
  os << "CON\n" << total_rows << " " << blocks.size() << "\n";
  for (const auto& b : blocks) os << b.domain << " " << b.rows.size() << "\n";
  os << "\nOBJACOORD\n";
  int nnz = 0;
  for (int j = 0; j < prog.num_variables(); ++j) nnz += prog.objective_coeff(j) != 0.0;
  os << nnz << "\n";
  os.precision(17);
  for (int j = 0; j < prog.num_variables(); ++j)
    if (prog.objective_coeff(j) != 0.0) os << j << " " << prog.objective_coeff(j) << "\n";
  os << "\nOBJBCOORD\n" << prog.objective_constant() << "\n";
  std::vector<std::string> a_lines, b_lines;
  std::size_t row = 0;
  for (const auto& b : blocks)
    for (const auto& [terms, constant] : b.rows) {
      for (const auto& t : terms) a_lines.push_back(std::to_string(row) + " " + std::to_string(t.var) + " " + std::to_string(t.coeff));
      if (constant != 0.0) b_lines.push_back(std::to_string(row) + " " + std::to_string(constant));
      ++row;
    }
  os << "\nACOORD\n" << a_lines.size() << "\n";
  for (const auto& l : a_lines) os << l << "\n";
  os << "\nBCOORD\n" << b_lines.size() << "\n";
  for (const auto& l : b_lines) os << l << "\n";
}

}  // namespace dopf::conic
