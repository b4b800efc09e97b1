#include "qnm/medium.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qnm/error.hpp"

namespace qnm {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw SolverError(ErrorKind::InvalidArgument, msg);
}

// Tolerance used to decide that a value sits on one of the two bounds.
double bound_tol(const AdmissibleBounds& b) { return 1e-12 * std::max(1.0, std::abs(b.b2)); }

}  // namespace

void AdmissibleBounds::validate() const {
  require(std::isfinite(b1) && std::isfinite(b2), "bounds must be finite");
  require(b1 >= 0.0, "b1 must be non-negative");
  require(b2 > 0.0, "b2 must be positive");
  require(b1 <= b2, "b1 must not exceed b2");
}

PiecewiseStructure PiecewiseStructure::make(std::vector<double> breakpoints,
                                            std::vector<double> values) {
  require(breakpoints.size() >= 2, "at least two breakpoints required");
  require(values.size() + 1 == breakpoints.size(), "need exactly one value per interval");
  require(breakpoints.front() == 0.0 && breakpoints.back() == 1.0,
          "breakpoints must start at 0 and end at 1");
  for (std::size_t j = 0; j + 1 < breakpoints.size(); ++j)
    require(breakpoints[j] < breakpoints[j + 1], "breakpoints must be strictly increasing");
  for (double v : values) require(std::isfinite(v), "values must be finite");

  std::vector<double> bp{0.0};
  std::vector<double> vals{values.front()};
  for (std::size_t j = 1; j < values.size(); ++j) {
    if (values[j] == vals.back()) continue;
    bp.push_back(breakpoints[j]);
    vals.push_back(values[j]);
  }
  bp.push_back(1.0);
  return PiecewiseStructure(std::move(bp), std::move(vals));
}

PiecewiseStructure PiecewiseStructure::constant(double b) { return make({0.0, 1.0}, {b}); }

PiecewiseStructure PiecewiseStructure::two_layer(double left, double s, double right) {
  require(s > 0.0 && s < 1.0, "interface must lie in (0,1)");
  return make({0.0, s, 1.0}, {left, right});
}

double PiecewiseStructure::value_at(double x) const {
  auto it = std::upper_bound(breakpoints_.begin() + 1, breakpoints_.end() - 1, x);
  return values_[static_cast<std::size_t>(it - breakpoints_.begin()) - 1];
}

double PiecewiseStructure::min_value() const { return *std::min_element(values_.begin(), values_.end()); }
double PiecewiseStructure::max_value() const { return *std::max_element(values_.begin(), values_.end()); }

bool PiecewiseStructure::within(const AdmissibleBounds& bounds, double tol) const {
  return std::all_of(values_.begin(), values_.end(), [&](double v) { return bounds.contains(v, tol); });
}

GridStructure::GridStructure(std::vector<double> v) : values(std::move(v)) {
  require(!values.empty(), "grid needs at least one cell");
}

GridStructure to_grid(const PiecewiseStructure& p, std::size_t n) {
  require(n >= 1, "grid needs at least one cell");
  std::vector<double> out(n, 0.0);
  const auto& bp = p.breakpoints();
  const double h = 1.0 / static_cast<double>(n);
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = static_cast<double>(i) * h;
    const double b = (i + 1 == n) ? 1.0 : static_cast<double>(i + 1) * h;
    while (j + 1 < p.layer_count() && bp[j + 1] <= a) ++j;
    double acc = 0.0;
    for (std::size_t k = j; k < p.layer_count() && bp[k] < b; ++k) {
      const double lo = std::max(a, bp[k]);
      const double hi = std::min(b, bp[k + 1]);
      if (hi > lo) acc += (hi - lo) * p.values()[k];
    }
    // Cells lying inside a single layer reproduce the layer value exactly.
    const bool single = (j + 1 >= p.layer_count() || bp[j + 1] >= b);
    out[i] = single ? p.values()[j] : acc / (b - a);
  }
  return GridStructure(std::move(out));
}

PiecewiseStructure to_piecewise(const GridStructure& g) {
  const std::size_t n = g.size();
  std::vector<double> bp(n + 1);
  for (std::size_t i = 0; i <= n; ++i) bp[i] = static_cast<double>(i) / static_cast<double>(n);
  bp.back() = 1.0;
  return PiecewiseStructure::make(std::move(bp), g.values);
}

GridStructure project_to_box(const GridStructure& g, const AdmissibleBounds& bounds) {
  GridStructure out = g;
  for (double& v : out.values) v = std::clamp(v, bounds.b1, bounds.b2);
  return out;
}

RoundingReport round_to_extreme(const GridStructure& g, const AdmissibleBounds& bounds,
                                double threshold) {
  require(threshold > 0.0 && threshold < 0.5, "threshold must lie in (0, 0.5)");
  const double w = bounds.width();
  std::vector<double> v(g.size());
  std::size_t forced = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double x = g.values[i];
    if (x < bounds.b1 + threshold * w) {
      v[i] = bounds.b1;
    } else if (x > bounds.b2 - threshold * w) {
      v[i] = bounds.b2;
    } else {
      ++forced;
      v[i] = (x - bounds.b1 <= bounds.b2 - x) ? bounds.b1 : bounds.b2;
    }
  }
  RoundingReport rep{to_piecewise(GridStructure(std::move(v))),
                     static_cast<double>(forced) / static_cast<double>(g.size()), forced};
  return rep;
}

bool is_bang_bang(const PiecewiseStructure& p, const AdmissibleBounds& bounds) {
  const double tol = bound_tol(bounds);
  return std::all_of(p.values().begin(), p.values().end(), [&](double v) {
    return std::abs(v - bounds.b1) <= tol || std::abs(v - bounds.b2) <= tol;
  });
}

std::vector<SwitchPoint> switch_points(const PiecewiseStructure& p, const AdmissibleBounds& bounds) {
  if (!is_bang_bang(p, bounds))
    throw SolverError(ErrorKind::NotBangBang, "structure takes values other than b1, b2");
  std::vector<SwitchPoint> out;
  const double tol = bound_tol(bounds);
  for (std::size_t j = 1; j < p.layer_count(); ++j) {
    const bool left_low = std::abs(p.values()[j - 1] - bounds.b1) <= tol;
    const bool right_low = std::abs(p.values()[j] - bounds.b1) <= tol;
    if (left_low == right_low) continue;  // only possible when b1 == b2
    out.push_back({p.breakpoints()[j], left_low ? SwitchDirection::Up : SwitchDirection::Down});
  }
  return out;
}

double extremality_measure(const GridStructure& g, const AdmissibleBounds& bounds, double eps) {
  std::size_t count = 0;
  for (double v : g.values)
    if (v > bounds.b1 + eps && v < bounds.b2 - eps) ++count;
  return static_cast<double>(count) / static_cast<double>(g.size());
}

double leading_zero_interval(const PiecewiseStructure& p) {
  if (p.values().front() != 0.0) return 0.0;
  return p.breakpoints()[1];
}

PiecewiseStructure perturbed(const PiecewiseStructure& p, const GridStructure& direction, double h) {
  const std::size_t n = direction.size();
  std::vector<double> bp;
  bp.reserve(p.breakpoints().size() + n + 1);
  for (std::size_t i = 0; i <= n; ++i) bp.push_back(static_cast<double>(i) / static_cast<double>(n));
  bp.back() = 1.0;
  bp.insert(bp.end(), p.breakpoints().begin(), p.breakpoints().end());
  std::sort(bp.begin(), bp.end());
  bp.erase(std::unique(bp.begin(), bp.end()), bp.end());

  std::vector<double> vals(bp.size() - 1);
  for (std::size_t k = 0; k + 1 < bp.size(); ++k) {
    const double mid = 0.5 * (bp[k] + bp[k + 1]);
    auto cell = static_cast<std::size_t>(mid * static_cast<double>(n));
    cell = std::min(cell, n - 1);
    vals[k] = p.value_at(mid) + h * direction.values[cell];
  }
  return PiecewiseStructure::make(std::move(bp), std::move(vals));
}

PiecewiseStructure with_breakpoints(const PiecewiseStructure& p, std::span<const double> interior) {
  require(interior.size() + 1 == p.layer_count(), "interior breakpoint count mismatch");
  std::vector<double> bp{0.0};
  bp.insert(bp.end(), interior.begin(), interior.end());
  bp.push_back(1.0);
  return PiecewiseStructure::make(std::move(bp), p.values());
}

}  // namespace qnm
