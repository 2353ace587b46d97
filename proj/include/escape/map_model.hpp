#ifndef ESCAPE_MAP_MODEL_HPP_
#define ESCAPE_MAP_MODEL_HPP_

// One-dimensional maps acting on a phase-space interval: the logistic map,
// the double parabola map and user-supplied piecewise polynomials.

#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace escape {

/// Raised when a map is evaluated outside every piece it declares.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A closed phase-space interval [lo, hi].
struct Region {
  double lo{0.0};
  double hi{1.0};

  Region() = default;
  Region(double lo_, double hi_) : lo(lo_), hi(hi_) {
    if (!(lo < hi)) {
      throw std::invalid_argument("region requires lo < hi, got [" +
                                  std::to_string(lo) + ", " +
                                  std::to_string(hi) + "]");
    }
  }

  double width() const { return hi - lo; }
  bool contains(double x) const { return lo <= x && x <= hi; }
  bool operator==(const Region&) const = default;
};

/// Two contiguous regions sharing an internal boundary. The boundary point
/// itself belongs to the right region.
struct RegionPartition {
  Region left;
  Region right;

  RegionPartition() : left(0.0, 0.5), right(0.5, 1.0) {}
  RegionPartition(Region l, Region r) : left(l), right(r) {
    if (left.hi != right.lo) {
      throw std::invalid_argument("partition regions must be contiguous");
    }
  }

  double boundary() const { return left.hi; }
  Region global() const { return Region(left.lo, right.hi); }
  bool in_left(double x) const { return left.lo <= x && x < left.hi; }
  bool in_right(double x) const { return right.lo <= x && x <= right.hi; }
};

enum class MapKind { logistic, double_parabola, piecewise_poly };

inline std::string_view to_string(MapKind k) {
  switch (k) {
    case MapKind::logistic: return "logistic";
    case MapKind::double_parabola: return "double_parabola";
    case MapKind::piecewise_poly: return "piecewise_poly";
  }
  return "unknown";
}

inline MapKind map_kind_from_string(std::string_view s) {
  if (s == "logistic") return MapKind::logistic;
  if (s == "double_parabola") return MapKind::double_parabola;
  if (s == "piecewise_poly") return MapKind::piecewise_poly;
  throw std::invalid_argument("unknown map kind '" + std::string(s) + "'");
}

/// Polynomial on an interval; coefficients in ascending-power order.
struct PolyPiece {
  Region interval;
  std::vector<double> coeffs;

  double eval(double x) const {
    double acc = 0.0;
    for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * x + *it;
    return acc;
  }
};

/// Anything that maps a coordinate to a coordinate.
template <class F>
concept ScalarMap = requires(const F& f, double x) {
  { f(x) } -> std::convertible_to<double>;
};

/// Immutable description of a 1D map.
///
/// Pieces are half-open [a, b) except the last one, which is closed, so a
/// shared breakpoint belongs to the piece on its right. The logistic map is
/// a single polynomial defined on the whole real line.
class MapSpec {
 public:
  static MapSpec logistic(double mu) {
    if (!(mu > 0.0)) throw std::invalid_argument("logistic map requires mu > 0");
    MapSpec m(MapKind::logistic, mu);
    constexpr double inf = std::numeric_limits<double>::infinity();
    m.pieces_.push_back({Region(-inf, inf), {0.0, mu, -mu}});
    return m;
  }

  /// Left branch mu*x*(1/2 - x) on [0, 1/2), right branch
  /// 1 + mu*(x^2 - 3x/2 + 1/2) on [1/2, 1]. The pair satisfies
  /// f(1 - x) = 1 - f(x) away from the breakpoint.
  static MapSpec double_parabola(double mu) {
    if (!(mu > 0.0)) throw std::invalid_argument("double parabola requires mu > 0");
    MapSpec m(MapKind::double_parabola, mu);
    m.pieces_.push_back({Region(0.0, 0.5), {0.0, 0.5 * mu, -mu}});
    m.pieces_.push_back({Region(0.5, 1.0), {1.0 + 0.5 * mu, -1.5 * mu, mu}});
    return m;
  }

  static MapSpec piecewise(std::vector<PolyPiece> pieces) {
    if (pieces.empty()) throw std::invalid_argument("piecewise map needs at least one piece");
    for (std::size_t p = 0; p < pieces.size(); ++p) {
      if (pieces[p].coeffs.empty()) {
        throw std::invalid_argument("piece " + std::to_string(p) + " has no coefficients");
      }
      if (p > 0 && pieces[p - 1].interval.hi != pieces[p].interval.lo) {
        throw std::invalid_argument("pieces must be ordered and contiguous");
      }
    }
    MapSpec m(MapKind::piecewise_poly, 0.0);
    m.pieces_ = std::move(pieces);
    return m;
  }

  MapKind kind() const { return kind_; }
  double mu() const { return mu_; }
  const std::vector<PolyPiece>& pieces() const { return pieces_; }
  Region domain() const { return Region(pieces_.front().interval.lo, pieces_.back().interval.hi); }

  double operator()(double x) const {
    const std::size_t last = pieces_.size() - 1;
    for (std::size_t p = 0; p <= last; ++p) {
      const Region& r = pieces_[p].interval;
      if (x >= r.lo && (x < r.hi || (p == last && x <= r.hi))) return pieces_[p].eval(x);
    }
    throw DomainError("x = " + std::to_string(x) + " lies outside the map domain");
  }

 private:
  MapSpec(MapKind k, double mu) : kind_(k), mu_(mu) {}

  MapKind kind_;
  double mu_;
  std::vector<PolyPiece> pieces_;
};

inline double eval_map(const MapSpec& map, double x) { return map(x); }

struct MergingReport {
  bool left_escapes{false};
  bool right_escapes{false};
};

/// Iterates n_samples evenly spaced interior starts per side without noise
/// and reports whether any orbit crosses into the other region within
/// n_iters steps.
template <ScalarMap Map>
MergingReport attractor_merging_check(const Map& map, const RegionPartition& part,
                                      std::size_t n_samples, std::size_t n_iters) {
  auto crosses = [&](const Region& from, bool starts_left) {
    for (std::size_t k = 0; k < n_samples; ++k) {
      double x = from.lo + from.width() * (static_cast<double>(k) + 0.5) /
                               static_cast<double>(n_samples);
      for (std::size_t n = 0; n < n_iters; ++n) {
        x = map(x);
        if (starts_left ? part.in_right(x) : part.in_left(x)) return true;
        // Left the union of both regions; no crossing is possible any more.
        if (!part.in_left(x) && !part.in_right(x)) break;
      }
    }
    return false;
  };
  return {crosses(part.left, true), crosses(part.right, false)};
}

}  // namespace escape

#endif  // ESCAPE_MAP_MODEL_HPP_
