#pragma once

// Radial three-phase feeder data model and the line-oriented feeder file format.
//
// Grammar (one record per line, whitespace-separated fields, '#' starts a comment):
//
//   [bases]
//   power_va   <VA>                 per-phase power base, default 1e6
//   voltage_v  <level> <V>          line-to-neutral voltage base of a level
//   units      physical | pu        physical: ohm, A, kW, kvar, kVA
//   [bus]
//   <id> <phases> <level> [substation]
//   [branch]
//   <from> <to> <phases> <ampacity|-> <z11> <z21> <z22> <z31> <z32> <z33>
//   [load]
//   <bus> <phase> <p> <q> <cvr_p> <cvr_q>
//   [dg]
//   <bus> <phase> <p_out> <s_rated>
//
// Impedances are written r+jx (or r-jx), one per phase pair of the branch in
// row-major lower-triangle order over the branch phases.

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <complex>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "dopf/errors.hpp"

namespace dopf {

using cd = std::complex<double>;

inline constexpr int kNumPhases = 3;
inline constexpr char kPhaseNames[kNumPhases] = {'a', 'b', 'c'};

/// Subset of {a, b, c}, stored as a bit mask.
class PhaseSet {
 public:
  constexpr PhaseSet() = default;
  constexpr explicit PhaseSet(std::uint8_t mask) : mask_(mask & 0x7u) {}

  static constexpr PhaseSet abc() { return PhaseSet(0x7u); }
  static constexpr PhaseSet single(int p) { return PhaseSet(static_cast<std::uint8_t>(1u << p)); }

  /// Parses "abc", "a", "bc", ...; returns nullopt on empty, unknown or repeated letters.
  static std::optional<PhaseSet> parse(std::string_view text) {
    std::uint8_t mask = 0;
    if (text.empty() || text.size() > 3) return std::nullopt;
    for (char ch : text) {
      const int p = phase_index(ch);
      if (p < 0) return std::nullopt;
      const std::uint8_t bit = static_cast<std::uint8_t>(1u << p);
      if (mask & bit) return std::nullopt;
      mask |= bit;
    }
    return PhaseSet(mask);
  }

  static constexpr int phase_index(char ch) {
    switch (ch) {
      case 'a': case 'A': return 0;
      case 'b': case 'B': return 1;
      case 'c': case 'C': return 2;
      default: return -1;
    }
  }

  constexpr bool contains(int p) const { return p >= 0 && p < kNumPhases && (mask_ >> p) & 1u; }
  constexpr int size() const { return std::popcount(mask_); }
  constexpr bool empty() const { return mask_ == 0; }
  constexpr bool subset_of(PhaseSet other) const { return (mask_ & ~other.mask_) == 0; }
  constexpr std::uint8_t mask() const { return mask_; }
  constexpr bool operator==(const PhaseSet&) const = default;

  /// Member phases in a, b, c order.
  std::vector<int> phases() const {
    std::vector<int> out;
    for (int p = 0; p < kNumPhases; ++p)
      if (contains(p)) out.push_back(p);
    return out;
  }

  /// Unordered pairs (p, q) with p < q, both members.
  std::vector<std::pair<int, int>> pairs() const {
    std::vector<std::pair<int, int>> out;
    for (int p = 0; p < kNumPhases; ++p)
      for (int q = p + 1; q < kNumPhases; ++q)
        if (contains(p) && contains(q)) out.emplace_back(p, q);
    return out;
  }

  std::string str() const {
    std::string s;
    for (int p = 0; p < kNumPhases; ++p)
      if (contains(p)) s.push_back(kPhaseNames[p]);
    return s;
  }

 private:
  std::uint8_t mask_ = 0;
};

/// Index of the unordered pair {p, q} (p != q) in the fixed order ab, ac, bc.
constexpr int pair_index(int p, int q) {
  if (p > q) std::swap(p, q);
  return p == 0 ? (q == 1 ? 0 : 1) : 2;
}

enum class Units { Physical, PerUnit };

struct LoadSpec {
  PhaseSet phases;
  std::array<double, 3> p0{};
  std::array<double, 3> q0{};
  std::array<double, 3> cvr_p{};
  std::array<double, 3> cvr_q{};
};

struct DgSpec {
  PhaseSet phases;
  std::array<double, 3> p_out{};
  std::array<double, 3> s_rated{};

  /// Reactive capability sqrt(s^2 - p^2) of one phase.
  double q_limit(int p) const {
    const double s = s_rated[p], a = p_out[p];
    return std::sqrt(std::max(0.0, s * s - a * a));
  }
};

struct Bus {
  std::string id;
  PhaseSet phases;
  std::string level;
  bool is_substation = false;
  std::optional<LoadSpec> load;
  std::optional<DgSpec> dg;
  int source_line = 0;
};

struct Branch {
  int from = -1;
  int to = -1;
  PhaseSet phases;
  /// Full 3x3 phase impedance; only entries over `phases` are meaningful.
  Eigen::Matrix3cd z = Eigen::Matrix3cd::Zero();
  std::optional<double> ampacity;
  int source_line = 0;
};

struct Bases {
  double power_va = 1e6;
  std::map<std::string, double> voltage_v;
};

/// Validated radial feeder. Immutable once constructed.
class FeederGraph {
 public:
  FeederGraph(Bases bases, std::vector<Bus> buses, std::vector<Branch> branches, Units units)
      : bases_(std::move(bases)), buses_(std::move(buses)), branches_(std::move(branches)), units_(units) {
    validate();
  }

  const Bases& bases() const { return bases_; }
  const std::vector<Bus>& buses() const { return buses_; }
  const std::vector<Branch>& branches() const { return branches_; }
  const Bus& bus(int i) const { return buses_.at(static_cast<std::size_t>(i)); }
  const Branch& branch(int i) const { return branches_.at(static_cast<std::size_t>(i)); }
  int num_buses() const { return static_cast<int>(buses_.size()); }
  int num_branches() const { return static_cast<int>(branches_.size()); }
  Units units() const { return units_; }

  int substation() const { return substation_; }
  /// Branch feeding bus `b`, -1 for the substation.
  int parent_branch(int b) const { return parent_[static_cast<std::size_t>(b)]; }
  /// Branches leaving bus `b`, in input order.
  const std::vector<int>& child_branches(int b) const { return children_[static_cast<std::size_t>(b)]; }

  std::optional<int> find_bus(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// Number of (bus, phase) pairs over the whole feeder.
  int num_node_phases() const {
    int n = 0;
    for (const auto& b : buses_) n += b.phases.size();
    return n;
  }

  double voltage_base(const Bus& b) const { return bases_.voltage_v.at(b.level); }

 private:
  [[noreturn]] static void fail(ParseError::Kind kind, int line, const std::string& msg) {
    throw ParseError(kind, line, msg);
  }

  void validate() {
    using K = ParseError::Kind;
    if (!(bases_.power_va > 0)) fail(K::Semantic, 0, "power base must be positive");
    for (const auto& [level, v] : bases_.voltage_v)
      if (!(v > 0)) fail(K::Semantic, 0, "voltage base of level '" + level + "' must be positive");

    substation_ = -1;
    for (int i = 0; i < num_buses(); ++i) {
      const Bus& b = buses_[static_cast<std::size_t>(i)];
      if (b.phases.empty()) fail(K::Semantic, b.source_line, "bus '" + b.id + "' has no phases");
      if (!index_.emplace(b.id, i).second) fail(K::Semantic, b.source_line, "duplicate bus '" + b.id + "'");
      if (!bases_.voltage_v.count(b.level))
        fail(K::Semantic, b.source_line, "bus '" + b.id + "' references undeclared level '" + b.level + "'");
      if (b.is_substation) {
        if (substation_ >= 0) fail(K::Topology, b.source_line, "multiple substation buses");
        substation_ = i;
      }
      if (b.load) {
        if (!b.load->phases.subset_of(b.phases))
          fail(K::Semantic, b.source_line, "load phases not on bus '" + b.id + "'");
        for (int p : b.load->phases.phases()) {
          if (b.load->p0[p] < 0) fail(K::Semantic, b.source_line, "negative active load at bus '" + b.id + "'");
          if (b.load->cvr_p[p] < 0 || b.load->cvr_q[p] < 0)
            fail(K::Semantic, b.source_line, "negative CVR factor at bus '" + b.id + "'");
        }
      }
      if (b.dg) {
        if (!b.dg->phases.subset_of(b.phases)) fail(K::Semantic, b.source_line, "DG phases not on bus '" + b.id + "'");
        for (int p : b.dg->phases.phases())
          if (b.dg->p_out[p] < 0 || b.dg->p_out[p] > b.dg->s_rated[p])
            fail(K::Semantic, b.source_line, "DG at bus '" + b.id + "' violates 0 <= p_out <= s_rated");
      }
    }
    if (substation_ < 0) fail(K::Topology, 0, "no substation bus");
    const Bus& sub = buses_[static_cast<std::size_t>(substation_)];
    if (sub.load || sub.dg)
      fail(K::Semantic, sub.source_line, "loads and DGs are not allowed on the substation bus");

    parent_.assign(buses_.size(), -1);
    children_.assign(buses_.size(), {});
    std::map<std::pair<int, int>, int> seen;
    for (int e = 0; e < num_branches(); ++e) {
      const Branch& br = branches_[static_cast<std::size_t>(e)];
      if (br.from < 0 || br.from >= num_buses() || br.to < 0 || br.to >= num_buses())
        fail(K::Semantic, br.source_line, "branch references an unknown bus");
      if (br.from == br.to) fail(K::Topology, br.source_line, "self-loop branch");
      const auto key = std::minmax(br.from, br.to);
      if (!seen.emplace(std::pair{key.first, key.second}, e).second)
        fail(K::Semantic, br.source_line, "duplicate branch " + buses_[br.from].id + " -> " + buses_[br.to].id);
      if (br.phases.empty()) fail(K::Semantic, br.source_line, "branch has no phases");
      if (!br.phases.subset_of(buses_[br.from].phases) || !br.phases.subset_of(buses_[br.to].phases))
        fail(K::Semantic, br.source_line, "branch phases are not present on both endpoint buses");
      for (int p : br.phases.phases()) {
        if (!(br.z(p, p).real() > 0 || br.z(p, p).imag() > 0))
          fail(K::Semantic, br.source_line, "zero-impedance phase on branch");
        for (int q : br.phases.phases())
          if (std::abs(br.z(p, q) - br.z(q, p)) > 1e-12 * (1.0 + std::abs(br.z(p, q))))
            fail(K::Semantic, br.source_line, "impedance matrix is not symmetric");
      }
      if (br.ampacity && !(*br.ampacity > 0)) fail(K::Semantic, br.source_line, "ampacity must be positive");
      if (br.to == substation_) fail(K::Topology, br.source_line, "branch points into the substation");
      if (parent_[br.to] >= 0) fail(K::Topology, br.source_line, "bus '" + buses_[br.to].id + "' has two parent branches");
      parent_[br.to] = e;
      children_[br.from].push_back(e);
    }
    for (int i = 0; i < num_buses(); ++i) {
      if (i == substation_) continue;
      const Bus& b = buses_[static_cast<std::size_t>(i)];
      if (parent_[i] < 0) fail(K::Topology, b.source_line, "bus '" + b.id + "' is disconnected");
      if (!b.phases.subset_of(branches_[parent_[i]].phases))
        fail(K::Semantic, b.source_line, "bus '" + b.id + "' has phases not fed by its parent branch");
    }
    if (num_branches() != num_buses() - 1)
      fail(K::Topology, 0, "radial feeder needs |branches| = |buses| - 1");
    // Every bus has one parent and the counts match; reachability rules out cycles.
    std::vector<char> reached(buses_.size(), 0);
    std::queue<int> frontier;
    frontier.push(substation_);
    reached[substation_] = 1;
    int count = 1;
    while (!frontier.empty()) {
      const int b = frontier.front();
      frontier.pop();
      for (int e : children_[b]) {
        const int to = branches_[e].to;
        if (!reached[to]) {
          reached[to] = 1;
          ++count;
          frontier.push(to);
        }
      }
    }
    if (count != num_buses()) {
      for (int i = 0; i < num_buses(); ++i)
        if (!reached[i]) fail(K::Topology, buses_[i].source_line, "bus '" + buses_[i].id + "' lies on a cycle or is unreachable");
    }
  }

  Bases bases_;
  std::vector<Bus> buses_;
  std::vector<Branch> branches_;
  Units units_;
  int substation_ = -1;
  std::vector<int> parent_;
  std::vector<std::vector<int>> children_;
  std::unordered_map<std::string, int> index_;
};

/// Converts a physical-unit graph to per-unit on its own bases; per-unit graphs pass through.
inline FeederGraph to_per_unit(const FeederGraph& g) {
  if (g.units() == Units::PerUnit) return g;
  const double s_base = g.bases().power_va;
  std::vector<Bus> buses = g.buses();
  for (auto& b : buses) {
    if (b.load) {
      for (int p = 0; p < kNumPhases; ++p) {
        b.load->p0[p] *= 1e3 / s_base;
        b.load->q0[p] *= 1e3 / s_base;
      }
    }
    if (b.dg) {
      for (int p = 0; p < kNumPhases; ++p) {
        b.dg->p_out[p] *= 1e3 / s_base;
        b.dg->s_rated[p] *= 1e3 / s_base;
      }
    }
  }
  std::vector<Branch> branches = g.branches();
  for (auto& br : branches) {
    const double v_base = g.voltage_base(g.bus(br.from));
    const double z_base = v_base * v_base / s_base;
    br.z /= z_base;
    if (br.ampacity) *br.ampacity *= v_base / s_base;
  }
  return FeederGraph(g.bases(), std::move(buses), std::move(branches), Units::PerUnit);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

/// Parses "r+jx" / "r-jx".
inline std::optional<cd> parse_complex(std::string_view s) {
  const auto j = s.find_first_of("jJ");
  if (j == std::string_view::npos || j == 0 || j + 1 >= s.size()) return std::nullopt;
  const char sign = s[j - 1];
  if (sign != '+' && sign != '-') return std::nullopt;
  auto re = parse_double(s.substr(0, j - 1));
  auto im = parse_double(s.substr(j + 1));
  if (!re || !im) return std::nullopt;
  return cd(*re, sign == '-' ? -*im : *im);
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::string format_complex(cd z) {
  std::string out = format_double(z.real());
  if (std::signbit(z.imag()))
    out += "-j" + format_double(-z.imag());
  else
    out += "+j" + format_double(z.imag());
  return out;
}

}  // namespace detail

/// Parses a feeder document and returns the validated graph in per-unit.
inline FeederGraph parse_feeder(std::string_view text) {
  using K = ParseError::Kind;
  enum class Section { None, Bases, Bus, Branch, Load, Dg };

  Bases bases;
  Units units = Units::Physical;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::unordered_map<std::string, int> bus_index;

  struct PendingBranch {
    std::string from, to;
    int line;
    Branch br;
  };
  struct PendingLoad {
    std::string bus;
    int phase;
    double p, q, cp, cq;
    int line;
  };
  struct PendingDg {
    std::string bus;
    int phase;
    double p, s;
    int line;
  };
  std::vector<PendingBranch> pending_branches;
  std::vector<PendingLoad> pending_loads;
  std::vector<PendingDg> pending_dgs;

  Section section = Section::None;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = text.find('\n', pos);
    std::string_view raw = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    const std::string_view line = detail::trim(raw);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(K::Syntax, line_no, "malformed section header");
      const std::string_view name = detail::trim(line.substr(1, line.size() - 2));
      if (name == "bases") section = Section::Bases;
      else if (name == "bus") section = Section::Bus;
      else if (name == "branch") section = Section::Branch;
      else if (name == "load") section = Section::Load;
      else if (name == "dg") section = Section::Dg;
      else throw ParseError(K::Syntax, line_no, "unknown section [" + std::string(name) + "]");
      continue;
    }

    const auto f = detail::split_ws(line);
    auto number = [&](std::string_view s, const char* what) {
      auto v = detail::parse_double(s);
      if (!v) throw ParseError(K::Syntax, line_no, std::string("invalid ") + what + " '" + std::string(s) + "'");
      return *v;
    };
    auto single_phase = [&](std::string_view s) {
      if (s.size() != 1 || PhaseSet::phase_index(s[0]) < 0)
        throw ParseError(K::Syntax, line_no, "invalid phase '" + std::string(s) + "'");
      return PhaseSet::phase_index(s[0]);
    };
    auto phase_set = [&](std::string_view s) {
      auto ps = PhaseSet::parse(s);
      if (!ps) throw ParseError(K::Syntax, line_no, "invalid phase set '" + std::string(s) + "'");
      return *ps;
    };

    switch (section) {
      case Section::None:
        throw ParseError(K::Syntax, line_no, "record outside of any section");
      case Section::Bases: {
        if (f[0] == "power_va" && f.size() == 2) {
          bases.power_va = number(f[1], "power base");
        } else if (f[0] == "voltage_v" && f.size() == 3) {
          if (!bases.voltage_v.emplace(std::string(f[1]), number(f[2], "voltage base")).second)
            throw ParseError(K::Semantic, line_no, "duplicate level '" + std::string(f[1]) + "'");
        } else if (f[0] == "units" && f.size() == 2) {
          if (f[1] == "physical") units = Units::Physical;
          else if (f[1] == "pu") units = Units::PerUnit;
          else throw ParseError(K::Syntax, line_no, "units must be 'physical' or 'pu'");
        } else {
          throw ParseError(K::Syntax, line_no, "unrecognised [bases] record");
        }
        break;
      }
      case Section::Bus: {
        if (f.size() < 3 || f.size() > 4) throw ParseError(K::Syntax, line_no, "bus record needs: id phases level [substation]");
        Bus b;
        b.id = std::string(f[0]);
        b.phases = phase_set(f[1]);
        b.level = std::string(f[2]);
        if (f.size() == 4) {
          if (f[3] != "substation") throw ParseError(K::Syntax, line_no, "unexpected bus flag '" + std::string(f[3]) + "'");
          b.is_substation = true;
        }
        b.source_line = line_no;
        if (!bus_index.emplace(b.id, static_cast<int>(buses.size())).second)
          throw ParseError(K::Semantic, line_no, "duplicate bus '" + b.id + "'");
        buses.push_back(std::move(b));
        break;
      }
      case Section::Branch: {
        if (f.size() < 5) throw ParseError(K::Syntax, line_no, "branch record needs: from to phases ampacity z...");
        PendingBranch pb;
        pb.from = std::string(f[0]);
        pb.to = std::string(f[1]);
        pb.line = line_no;
        pb.br.phases = phase_set(f[2]);
        if (f[3] != "-") pb.br.ampacity = number(f[3], "ampacity");
        const auto ph = pb.br.phases.phases();
        const std::size_t m = ph.size();
        if (f.size() != 4 + m * (m + 1) / 2)
          throw ParseError(K::Syntax, line_no,
                           "expected " + std::to_string(m * (m + 1) / 2) + " impedance entries for phases " + pb.br.phases.str());
        std::size_t k = 4;
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t c = 0; c <= r; ++c, ++k) {
            auto z = detail::parse_complex(f[k]);
            if (!z) throw ParseError(K::Syntax, line_no, "invalid impedance '" + std::string(f[k]) + "'");
            pb.br.z(ph[r], ph[c]) = *z;
            pb.br.z(ph[c], ph[r]) = *z;
          }
        }
        pb.br.source_line = line_no;
        pending_branches.push_back(std::move(pb));
        break;
      }
      case Section::Load: {
        if (f.size() != 6) throw ParseError(K::Syntax, line_no, "load record needs: bus phase p q cvr_p cvr_q");
        pending_loads.push_back({std::string(f[0]), single_phase(f[1]), number(f[2], "p"), number(f[3], "q"),
                                 number(f[4], "cvr_p"), number(f[5], "cvr_q"), line_no});
        break;
      }
      case Section::Dg: {
        if (f.size() != 4) throw ParseError(K::Syntax, line_no, "dg record needs: bus phase p_out s_rated");
        pending_dgs.push_back({std::string(f[0]), single_phase(f[1]), number(f[2], "p_out"), number(f[3], "s_rated"), line_no});
        break;
      }
    }
  }
  auto lookup = [&](const std::string& id, int line) {
    auto it = bus_index.find(id);
    if (it == bus_index.end()) throw ParseError(K::Semantic, line, "unknown bus '" + id + "'");
    return it->second;
  };
  for (auto& pb : pending_branches) {
    pb.br.from = lookup(pb.from, pb.line);
    pb.br.to = lookup(pb.to, pb.line);
    branches.push_back(std::move(pb.br));
  }
  for (const auto& pl : pending_loads) {
    Bus& b = buses[lookup(pl.bus, pl.line)];
    if (!b.phases.contains(pl.phase))
      throw ParseError(K::Semantic, pl.line, "load phase not present on bus '" + b.id + "'");
    if (!b.load) b.load = LoadSpec{};
    if (b.load->phases.contains(pl.phase)) throw ParseError(K::Semantic, pl.line, "duplicate load record");
    b.load->phases = PhaseSet(b.load->phases.mask() | PhaseSet::single(pl.phase).mask());
    b.load->p0[pl.phase] = pl.p;
    b.load->q0[pl.phase] = pl.q;
    b.load->cvr_p[pl.phase] = pl.cp;
    b.load->cvr_q[pl.phase] = pl.cq;
  }
  for (const auto& pd : pending_dgs) {
    Bus& b = buses[lookup(pd.bus, pd.line)];
    if (!b.phases.contains(pd.phase))
      throw ParseError(K::Semantic, pd.line, "DG phase not present on bus '" + b.id + "'");
    if (!b.dg) b.dg = DgSpec{};
    if (b.dg->phases.contains(pd.phase)) throw ParseError(K::Semantic, pd.line, "duplicate DG record");
    b.dg->phases = PhaseSet(b.dg->phases.mask() | PhaseSet::single(pd.phase).mask());
    b.dg->p_out[pd.phase] = pd.p;
    b.dg->s_rated[pd.phase] = pd.s;
  }
  return to_per_unit(FeederGraph(std::move(bases), std::move(buses), std::move(branches), units));
}

/// Writes a per-unit graph back in the feeder file format.
inline std::string serialize(const FeederGraph& graph) {
  const FeederGraph g = to_per_unit(graph);
  std::ostringstream os;
  os << "[bases]\n";
  os << "power_va " << detail::format_double(g.bases().power_va) << "\n";
  for (const auto& [level, v] : g.bases().voltage_v) os << "voltage_v " << level << " " << detail::format_double(v) << "\n";
  os << "units pu\n\n[bus]\n";
  for (const auto& b : g.buses()) {
    os << b.id << " " << b.phases.str() << " " << b.level;
    if (b.is_substation) os << " substation";
    os << "\n";
  }
  os << "\n[branch]\n";
  for (const auto& br : g.branches()) {
    os << g.bus(br.from).id << " " << g.bus(br.to).id << " " << br.phases.str() << " "
       << (br.ampacity ? detail::format_double(*br.ampacity) : std::string("-"));
    const auto ph = br.phases.phases();
    for (std::size_t r = 0; r < ph.size(); ++r)
      for (std::size_t c = 0; c <= r; ++c) os << " " << detail::format_complex(br.z(ph[r], ph[c]));
    os << "\n";
  }
  os << "\n[load]\n";
  for (const auto& b : g.buses()) {
    if (!b.load) continue;
    for (int p : b.load->phases.phases())
      os << b.id << " " << kPhaseNames[p] << " " << detail::format_double(b.load->p0[p]) << " "
         << detail::format_double(b.load->q0[p]) << " " << detail::format_double(b.load->cvr_p[p]) << " "
         << detail::format_double(b.load->cvr_q[p]) << "\n";
  }
  os << "\n[dg]\n";
  for (const auto& b : g.buses()) {
    if (!b.dg) continue;
    for (int p : b.dg->phases.phases())
      os << b.id << " " << kPhaseNames[p] << " " << detail::format_double(b.dg->p_out[p]) << " "
         << detail::format_double(b.dg->s_rated[p]) << "\n";
  }
  return os.str();
}

/// Branches ordered so that each appears after its parent (breadth-first from the substation).
inline std::vector<int> topological_order(const FeederGraph& g) {
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(g.num_branches()));
  std::queue<int> frontier;
  frontier.push(g.substation());
  while (!frontier.empty()) {
    const int b = frontier.front();
    frontier.pop();
    for (int e : g.child_branches(b)) {
      order.push_back(e);
      frontier.push(g.branch(e).to);
    }
  }
  return order;
}

/// Size of x_OPF: per branch P, Q, l^pp per phase and l^pq per phase pair; v per
/// non-substation bus phase; q per DG phase.
inline int count_opf_variables(const FeederGraph& g) {
  int n = 0;
  for (const auto& br : g.branches()) {
    const int m = br.phases.size();
    n += 3 * m + m * (m - 1) / 2;
  }
  for (int i = 0; i < g.num_buses(); ++i) {
    const Bus& b = g.bus(i);
    if (!b.is_substation) n += b.phases.size();
    if (b.dg) n += b.dg->phases.size();
  }
  return n;
}

/// Returns a copy with every load scaled by `factor`.
inline FeederGraph scale_loads(const FeederGraph& g, double factor) {
  std::vector<Bus> buses = g.buses();
  for (auto& b : buses)
    if (b.load)
      for (int p = 0; p < kNumPhases; ++p) {
        b.load->p0[p] *= factor;
        b.load->q0[p] *= factor;
      }
  return FeederGraph(g.bases(), std::move(buses), g.branches(), g.units());
}

/// Returns a copy with all DGs replaced by `dgs` (indexed by bus; empty optional removes).
inline FeederGraph with_dgs(const FeederGraph& g, const std::vector<std::optional<DgSpec>>& dgs) {
  std::vector<Bus> buses = g.buses();
  for (std::size_t i = 0; i < buses.size(); ++i) buses[i].dg = i < dgs.size() ? dgs[i] : std::nullopt;
  return FeederGraph(g.bases(), std::move(buses), g.branches(), g.units());
}

}  // namespace dopf
