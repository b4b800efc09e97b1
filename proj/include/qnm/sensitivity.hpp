#pragma once

#include <vector>

#include "qnm/field_solver.hpp"

namespace qnm {

/// Cellwise density g of the first variation of a simple eigenvalue: for a direction B_delta on
/// the same grid, dkappa = \int g B_delta = sum_i g_i B_delta_i / N.
struct GradientDensity {
  cplx kappa;
  std::vector<cplx> g;
  cplx denom;              // 2 kappa \int phi^2 B - i phi(1)^2
  double denom_abs = 0.0;

  std::size_t size() const { return g.size(); }
  cplx directional(const GridStructure& direction) const;
};

/// Directional derivative of F(kappa; B) in the medium at a root:
/// kappa [-kappa psi(1) + i psi'(1)] \int phi^2 B_delta. Throws NotAtRoot when
/// |F(kappa)| exceeds tol times the size of its cancelling terms.
cplx dBF_direction(const PiecewiseStructure& B, cplx kappa, const GridStructure& direction,
                   double tol = 1e-8);

/// Throws NearMultiple when |dF/dz| < 1e-6 max(1, |F''|), i.e. kappa is close to a multiple root.
GradientDensity eigenvalue_gradient(const PiecewiseStructure& B, cplx kappa, std::size_t n);

/// Density of d beta for a root kappa = i beta on the imaginary axis, computed in real
/// arithmetic: d beta = sum_i g_i B_delta_i / N with g = -beta^2 phi^2 / (2 beta \int phi^2 B - phi(1)^2).
/// Throws NearMultiple when dF(i beta)/d beta nearly vanishes.
std::vector<double> axis_gradient(const PiecewiseStructure& B, double beta, std::size_t n);

/// d^r F / dz^r at kappa for r >= 1, from the exact first derivative: a five-point difference for
/// r = 2 and a trapezoidal Cauchy integral for r >= 3.
cplx dzF_order(const PiecewiseStructure& B, cplx kappa, int r);

struct SplittingProbe {
  int r = 2;
  cplx kappa0;
  std::vector<double> zeta_values;
  std::vector<std::vector<cplx>> branch_points;  // one list of r roots per zeta
  double fitted_exponent = 0.0;
  cplx c1_predicted;  // principal r-th root of -r! dBF / d^rF
  cplx c1_fitted;     // principal r-th root of the mean (branch - kappa0)^r / zeta at the smallest zeta
};

/// Follows the r roots of F(.; B + zeta B_delta) that emerge from a root of multiplicity r.
/// Throws BranchCountMismatch if some zeta does not yield r distinct simple roots nearby.
SplittingProbe splitting_probe(const PiecewiseStructure& B, cplx kappa0, int r,
                               const GridStructure& direction, const std::vector<double>& zetas);

struct DoubleEigenvalue {
  PiecewiseStructure structure;
  cplx kappa;
  double residual = 0.0;  // |F| + |dF/dz|
  int iterations = 0;
};

/// Damped Newton on F = dF/dz = 0 over (interface s, right value, Re kappa, Im kappa) for the
/// two-layer medium (left on (0,s), right on (s,1)). Values are not confined to any box.
/// A purely imaginary seed keeps s fixed and solves F(i beta) = dF/dbeta = 0 over
/// (right, beta) in real arithmetic, since the complex system degenerates on the axis.
/// Throws NoConvergence when the residual does not drop below 1e-10.
DoubleEigenvalue find_double_eigenvalue(double left, double s, double right, cplx kappa_seed,
                                        int max_iter = 100);

}  // namespace qnm
