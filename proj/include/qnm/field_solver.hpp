#pragma once

#include <array>
#include <complex>
#include <span>
#include <vector>

#include "qnm/medium.hpp"

namespace qnm {

using cplx = std::complex<double>;

/// 2x2 complex matrix acting on column vectors (y, y').
struct Mat2 {
  cplx a, b, c, d;  // [[a, b], [c, d]]

  cplx det() const { return a * d - b * c; }
  Mat2 operator*(const Mat2& o) const {
    return {a * o.a + b * o.c, a * o.b + b * o.d, c * o.a + d * o.c, c * o.b + d * o.d};
  }
};

/// Transfer matrix of y'' = -z^2 b y across a layer of length len.
Mat2 layer_matrix(double b, double len, cplx z);

/// Cauchy data (y(x), y'(x)) at one position.
struct CauchyState {
  double x = 0.0;
  cplx y;
  cplx dy;
};

/// Sampled solution on increasing positions covering [0,1] including every breakpoint.
struct ModeTrace {
  std::vector<CauchyState> samples;
};

/// phi, phi', psi, psi' at x = 1, where phi(0)=1, phi'(0)=0 and psi(0)=0, psi'(0)=1.
struct BoundaryData {
  cplx phi1, dphi1, psi1, dpsi1;

  cplx wronskian() const { return phi1 * dpsi1 - dphi1 * psi1; }
};

struct Propagation {
  BoundaryData boundary;
  ModeTrace phi;
  ModeTrace psi;
};

BoundaryData propagate(const PiecewiseStructure& B, cplx z);

/// Same as propagate() but also records phi and psi at `samples_per_unit` uniform points plus
/// every breakpoint.
Propagation propagate_traced(const PiecewiseStructure& B, cplx z, std::size_t samples_per_unit = 256);

/// phi and phi' at the sorted positions xs (each in [0,1]).
ModeTrace sample_phi(const PiecewiseStructure& B, cplx z, std::span<const double> xs);

/// Maclaurin-series evaluation of the boundary data (independent of the transfer matrices).
struct SeriesResult {
  BoundaryData boundary;
  double truncation_bound = 0.0;  // bound on the neglected tail
  int terms = 0;
};

/// Sums phi(1,z) = sum_j (-1)^j phi_j(1) z^{2j} (and the same for phi', psi, psi') with the
/// iterated integrals phi_j evaluated exactly on the grid in quad precision.
///
/// terms == 0 picks the smallest count whose term and tail bounds both drop below tol
/// (capped at 200).
/// Throws TailNotConverged if the bound after `terms` still exceeds tol.
SeriesResult phi_series(const GridStructure& g, cplx z, int terms = 0, double tol = 1e-16);

/// F(z;B) = phi(1,z) - i phi'(1,z)/z, with F(0) = 1.
cplx charF(cplx z, const PiecewiseStructure& B);

/// F, dF/dz and the ingredients used by the variational formula.
struct FEvaluation {
  cplx F;
  cplx dF;
  BoundaryData boundary;
  cplx int_phi2_B;    // \int_0^1 phi^2 B
  cplx int_phipsi_B;  // \int_0^1 phi psi B
};

/// Throws ZeroFrequency for z = 0.
FEvaluation evaluate_F(cplx z, const PiecewiseStructure& B);
cplx dzF(cplx z, const PiecewiseStructure& B);

/// Closed-form dF/dz valid only at a root kappa of F:
/// 2 [-kappa psi(1) + i psi'(1)] \int phi^2 B + phi(1)/kappa.
cplx dzF_at_root(cplx kappa, const PiecewiseStructure& B);

/// Real-arithmetic evaluation on the imaginary axis z = i beta, beta > 0.
struct AxisEvaluation {
  double F = 0.0;       // F(i beta)
  double dF_dbeta = 0.0;
  double phi1 = 0.0, dphi1 = 0.0, psi1 = 0.0, dpsi1 = 0.0;
  double int_phi2_B = 0.0;
};
AxisEvaluation evaluate_axis(double beta, const PiecewiseStructure& B);

/// \int phi^2(s, z) ds over each of the n uniform cells.
std::vector<cplx> phi_squared_cell_integrals(const PiecewiseStructure& B, cplx z, std::size_t n);
/// Same at z = i beta, where phi is real.
std::vector<double> phi_squared_cell_integrals_axis(const PiecewiseStructure& B, double beta,
                                                    std::size_t n);

struct IntegralResidual {
  double r1 = 0.0;  // sup |phi(x) - 1 + kappa^2 \int_0^x (x-s) B phi ds| over the trace grid
  double r2 = 0.0;  // |phi(1) + i kappa \int_0^1 B phi ds|
};

IntegralResidual integral_residual(const PiecewiseStructure& B, cplx kappa,
                                   std::size_t samples_per_unit = 256);

}  // namespace qnm
