#ifndef ESCAPE_DISCRETIZATION_HPP_
#define ESCAPE_DISCRETIZATION_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "escape/map_model.hpp"
#include "escape/parallel.hpp"

namespace escape {

/// Uniform grid on a region, endpoints included.
///
/// Points are stored explicitly so that a sub-grid obtained by slicing
/// carries bit-identical coordinates to its parent.
class Grid {
 public:
  Grid() = default;

  static Grid uniform(Region region, std::size_t m) {
    if (m < 2) throw std::invalid_argument("grid needs m >= 2, got " + std::to_string(m));
    Grid g;
    g.points_.resize(m);
    const double denom = static_cast<double>(m - 1);
    for (std::size_t i = 0; i < m; ++i) {
      g.points_[i] = region.lo + region.width() * (static_cast<double>(i) / denom);
    }
    g.points_.back() = region.hi;
    g.h_ = region.width() / denom;
    g.region_ = region;
    return g;
  }

  /// Points [begin, end) as a grid of their own; its region spans the first
  /// and last retained point.
  Grid slice(std::size_t begin, std::size_t end) const {
    if (begin >= end || end > points_.size()) throw std::out_of_range("bad grid slice");
    Grid g;
    g.points_.assign(points_.begin() + static_cast<std::ptrdiff_t>(begin),
                     points_.begin() + static_cast<std::ptrdiff_t>(end));
    g.h_ = h_;
    g.region_.lo = g.points_.front();
    g.region_.hi = g.points_.back();
    return g;
  }

  std::size_t size() const { return points_.size(); }
  double h() const { return h_; }
  const Region& region() const { return region_; }
  std::span<const double> points() const { return points_; }
  double operator[](std::size_t i) const { return points_[i]; }

  /// Index of the grid point closest to x; ties go to the smaller index.
  std::size_t nearest_index(double x) const {
    auto it = std::lower_bound(points_.begin(), points_.end(), x);
    if (it == points_.begin()) return 0;
    if (it == points_.end()) return points_.size() - 1;
    const auto hi = static_cast<std::size_t>(it - points_.begin());
    return (x - points_[hi - 1] <= points_[hi] - x) ? hi - 1 : hi;
  }

 private:
  std::vector<double> points_;
  double h_{0.0};
  Region region_;
};

inline Grid build_grid(Region region, std::size_t m) { return Grid::uniform(region, m); }

/// Disturbance values spanning [-xi0, +xi0] uniformly; W is odd so that 0 is
/// one of them.
class DisturbanceGrid {
 public:
  DisturbanceGrid() = default;

  static DisturbanceGrid uniform(double xi0, std::size_t w) {
    if (!(xi0 >= 0.0)) throw std::invalid_argument("noise bound xi0 must be >= 0");
    if (w < 3 || w % 2 == 0) {
      throw std::invalid_argument("disturbance count w must be odd and >= 3, got " +
                                  std::to_string(w));
    }
    DisturbanceGrid d;
    d.xi0_ = xi0;
    d.values_.resize(w);
    const std::size_t half = w / 2;
    for (std::size_t s = 0; s < w; ++s) {
      const double t = (static_cast<double>(s) - static_cast<double>(half)) /
                       static_cast<double>(half);
      d.values_[s] = xi0 * t;
    }
    d.values_.front() = -xi0;
    d.values_[half] = 0.0;
    d.values_.back() = xi0;
    return d;
  }

  /// Grid with the bound widened by half a disturbance spacing, same count.
  DisturbanceGrid inflated() const { return uniform(xi0_ + 0.5 * spacing(), values_.size()); }

  double xi0() const { return xi0_; }
  std::size_t size() const { return values_.size(); }
  double spacing() const { return 2.0 * xi0_ / static_cast<double>(values_.size() - 1); }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t s) const { return values_[s]; }

 private:
  double xi0_{0.0};
  std::vector<double> values_;
};

/// Disturbance grid used by the dynamic programme for a physical bound xi0.
inline DisturbanceGrid dp_noise(double xi0, std::size_t w, bool inflate) {
  auto d = DisturbanceGrid::uniform(xi0, w);
  return inflate ? d.inflated() : d;
}

/// What counts as leaving the source region in one step.
///
/// outside_region: the image must end strictly outside `target`, cleared by
/// `margin`. into_sibling: the image must end inside `target` (the sibling
/// region) and inside `global`, at least `margin` past the shared boundary.
struct ExitSpec {
  enum class Kind { outside_region, into_sibling };

  Kind kind{Kind::outside_region};
  Region target;
  Region global;
  double margin{0.0};

  static ExitSpec outside(Region q, double margin) {
    return {Kind::outside_region, q, q, margin};
  }
  static ExitSpec into(Region sibling, Region global, double margin) {
    return {Kind::into_sibling, sibling, global, margin};
  }

  /// True when y needs no control to count as exited.
  bool exited(double y) const {
    if (kind == Kind::outside_region) return y < target.lo || y > target.hi;
    const auto [lo, hi] = admissible();
    return lo <= y && y <= hi;
  }

  /// Control magnitude needed to exit from y (0 when already exited).
  double distance(double y) const {
    if (exited(y)) return 0.0;
    if (kind == Kind::outside_region) return std::min(y - target.lo, target.hi - y) + margin;
    const auto [lo, hi] = admissible();
    return y < lo ? lo - y : y - hi;
  }

  /// Signed control moving y to the closest exit point; its magnitude is
  /// exactly distance(y).
  double control(double y) const {
    const double d = distance(y);
    if (d == 0.0) return 0.0;
    if (kind == Kind::outside_region) return (y - target.lo <= target.hi - y) ? -d : d;
    const auto [lo, hi] = admissible();
    return y < lo ? d : -d;
  }

 private:
  std::pair<double, double> admissible() const {
    double lo = std::max(target.lo, global.lo);
    double hi = std::min(target.hi, global.hi);
    // The margin applies on the side facing the source region only.
    if (target.lo > global.lo) lo += margin;
    if (target.hi < global.hi) hi -= margin;
    return {lo, hi};
  }
};

/// Images f(q[i]) + xi[s] and exit controls over the (i, s) grid, row-major
/// in i.
class ImageTable {
 public:
  ImageTable() = default;
  ImageTable(std::size_t m, std::size_t w)
      : m_(m), w_(w), image_(m * w, 0.0), u_out_(m * w, 0.0) {}

  std::size_t rows() const { return m_; }
  std::size_t cols() const { return w_; }
  double image(std::size_t i, std::size_t s) const { return image_[i * w_ + s]; }
  double u_out(std::size_t i, std::size_t s) const { return u_out_[i * w_ + s]; }
  std::span<const double> image_row(std::size_t i) const {
    return std::span<const double>(image_).subspan(i * w_, w_);
  }

  double& image_ref(std::size_t i, std::size_t s) { return image_[i * w_ + s]; }
  double& u_out_ref(std::size_t i, std::size_t s) { return u_out_[i * w_ + s]; }

 private:
  std::size_t m_{0};
  std::size_t w_{0};
  std::vector<double> image_;
  std::vector<double> u_out_;
};

template <ScalarMap Map>
ImageTable build_image_table(const Map& map, const Grid& grid, const DisturbanceGrid& noise,
                             const ExitSpec& exit, std::size_t threads = 1) {
  ImageTable t(grid.size(), noise.size());
  parallel_for(grid.size(), threads, [&](std::size_t i) {
    const double fx = map(grid[i]);
    for (std::size_t s = 0; s < noise.size(); ++s) {
      const double y = fx + noise[s];
      t.image_ref(i, s) = y;
      t.u_out_ref(i, s) = exit.distance(y);
    }
  });
  return t;
}

/// |q[j] - image[i][s]|, the control landing the disturbed image on q[j].
inline double control_distance(const ImageTable& table, std::size_t i, std::size_t s,
                               const Grid& grid, std::size_t j) {
  return std::abs(grid[j] - table.image(i, s));
}

/// Control bound u0; partial control is the regime u0 < xi0.
struct ControlBudget {
  double u0{0.0};

  explicit ControlBudget(double u) : u0(u) {
    if (!(u0 >= 0.0)) throw std::invalid_argument("control bound u0 must be >= 0");
  }
  bool below_noise(double xi0) const { return u0 < xi0; }
};

}  // namespace escape

#endif  // ESCAPE_DISCRETIZATION_HPP_
