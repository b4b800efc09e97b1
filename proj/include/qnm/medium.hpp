#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace qnm {

/// Box constraint b1 <= B(x) <= b2 on admissible media.
struct AdmissibleBounds {
  double b1 = 1.0;
  double b2 = 4.0;

  /// Throws InvalidArgument unless 0 <= b1 <= b2 and b2 > 0.
  void validate() const;
  bool contains(double v, double tol = 0.0) const { return v >= b1 - tol && v <= b2 + tol; }
  double width() const { return b2 - b1; }
};

/// Piecewise-constant medium on [0,1]: values[j] holds on (breakpoints[j], breakpoints[j+1]).
///
/// Instances built through make() are canonical: breakpoints strictly increase from 0 to 1 and
/// equal neighbouring values are merged. Values at the breakpoints themselves carry no data.
class PiecewiseStructure {
 public:
  PiecewiseStructure() : PiecewiseStructure(constant(1.0)) {}

  static PiecewiseStructure make(std::vector<double> breakpoints, std::vector<double> values);
  static PiecewiseStructure constant(double b);
  /// Two values split at a single interface s in (0,1).
  static PiecewiseStructure two_layer(double left, double s, double right);

  const std::vector<double>& breakpoints() const { return breakpoints_; }
  const std::vector<double>& values() const { return values_; }
  std::size_t layer_count() const { return values_.size(); }
  double layer_start(std::size_t j) const { return breakpoints_[j]; }
  double layer_length(std::size_t j) const { return breakpoints_[j + 1] - breakpoints_[j]; }

  /// Value on the open layer containing x; at a breakpoint the right-hand layer wins.
  double value_at(double x) const;
  double min_value() const;
  double max_value() const;
  bool within(const AdmissibleBounds& bounds, double tol = 0.0) const;

  friend bool operator==(const PiecewiseStructure&, const PiecewiseStructure&) = default;

 private:
  PiecewiseStructure(std::vector<double> bp, std::vector<double> v)
      : breakpoints_(std::move(bp)), values_(std::move(v)) {}

  std::vector<double> breakpoints_;
  std::vector<double> values_;
};

/// Uniform-cell sampling of a medium: values[i] holds on (i/N, (i+1)/N).
struct GridStructure {
  std::vector<double> values;

  GridStructure() = default;
  explicit GridStructure(std::vector<double> v);
  GridStructure(std::initializer_list<double> v) : GridStructure(std::vector<double>(v)) {}
  GridStructure(std::size_t n, double fill) : GridStructure(std::vector<double>(n, fill)) {}

  std::size_t size() const { return values.size(); }
  double cell_width() const { return 1.0 / static_cast<double>(values.size()); }
};

enum class SwitchDirection { Up, Down };

struct SwitchPoint {
  double x = 0.0;
  SwitchDirection direction = SwitchDirection::Up;
};

struct RoundingReport {
  PiecewiseStructure structure;
  double forced_measure = 0.0;  // measure of cells that sat in the middle band
  std::size_t forced_cells = 0;
};

/// Cell averages of p over a uniform N-cell grid (exact when breakpoints sit on cell edges).
GridStructure to_grid(const PiecewiseStructure& p, std::size_t n);
/// Merge equal neighbouring cells into layers.
PiecewiseStructure to_piecewise(const GridStructure& g);

GridStructure project_to_box(const GridStructure& g, const AdmissibleBounds& bounds);

/// Map every cell to b1 or b2. Cells inside the middle band go to the nearer bound (ties to b1)
/// and are counted as forced in the report.
RoundingReport round_to_extreme(const GridStructure& g, const AdmissibleBounds& bounds,
                                double threshold = 0.1);

bool is_bang_bang(const PiecewiseStructure& p, const AdmissibleBounds& bounds);

/// Interior breakpoints of a bang-bang structure; Up means b1 -> b2 as x increases.
/// Throws NotBangBang if a value is neither b1 nor b2.
std::vector<SwitchPoint> switch_points(const PiecewiseStructure& p, const AdmissibleBounds& bounds);

/// Fraction of cells with b1 + eps < B < b2 - eps.
double extremality_measure(const GridStructure& g, const AdmissibleBounds& bounds, double eps);

/// Largest a1 with B = 0 on [0, a1]; zero unless the first layer vanishes.
double leading_zero_interval(const PiecewiseStructure& p);

/// B + h * direction, merging the breakpoint sets. No bounds are enforced.
PiecewiseStructure perturbed(const PiecewiseStructure& p, const GridStructure& direction, double h);

/// Replace the interior breakpoints (same count, still strictly increasing) keeping values.
PiecewiseStructure with_breakpoints(const PiecewiseStructure& p, std::span<const double> interior);

}  // namespace qnm
