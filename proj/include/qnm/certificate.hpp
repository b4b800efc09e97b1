#pragma once

#include <optional>
#include <vector>

#include "qnm/field_solver.hpp"
#include "qnm/medium.hpp"

namespace qnm {

/// Continuous branch xi(x) of arg phi^2(x, kappa; B) with xi(0) = 0.
struct PhaseTrace {
  std::vector<double> xs;  // sorted, contains every breakpoint
  std::vector<double> xi;
  double a1 = 0.0;         // B vanishes on [0, a1]
  int slope_sign = 0;      // sign of xi' on (a1, 1] when it is strict there, 0 otherwise

  /// Linear interpolation, exact at the samples.
  double at(double x) const;
};

/// Unwraps arg phi^2 on a uniform grid of `samples` points plus the breakpoints, bisecting any
/// step whose increment reaches pi/2. Throws OnImaginaryAxis for Re kappa = 0 and PhaseJump when
/// a step shorter than 1e-12 still jumps (phi vanishes numerically).
PhaseTrace phase_trace(const PiecewiseStructure& B, cplx kappa, std::size_t samples = 1024);

struct SwitchCertificate {
  double omega = 0.0;  // in [-pi, pi)
  double theta = 0.0;  // rotation of y = e^{i theta} phi used by the nonlinear residual
  std::vector<SwitchPoint> switches;
  std::vector<double> deviations;  // |xi(x_j) - target_j| mod 2 pi
  double max_deviation = 0.0;
  double max_interval_variation = 0.0;  // max over layers of |xi(end) - xi(start)|
  double nonlinear_mismatch = 0.0;

  bool passes(double angle_tol = 0.05) const {
    return max_deviation < angle_tol && max_interval_variation <= 3.141592653589793 + angle_tol;
  }
};

/// Ray alignment of phi^2 at the switch points of a bang-bang B. Up-switches target omega and
/// down-switches omega + pi, where omega = xi(x_1) for an up first switch and xi(x_1) + pi
/// otherwise. Without switches omega is 0 for B = b2 and -pi for B = b1.
/// Throws NotBangBang, OnImaginaryAxis (Re kappa = 0).
SwitchCertificate switch_alignment(const PiecewiseStructure& B, cplx kappa,
                                   const AdmissibleBounds& bounds, std::size_t samples = 1024);

/// Rotation angle of y = e^{i theta} phi: (pi - omega)/2 for Re kappa > 0, -omega/2 for
/// Re kappa < 0, pi/4 on the imaginary axis and -pi/2 when B starts with a zero layer and b1 = 0.
double mode_rotation(const PiecewiseStructure& B, cplx kappa, const AdmissibleBounds& bounds);

/// b1 + (b2 - b1) chi(Im y^2 > 0) for y = e^{i theta} phi. Sign changes are searched on `samples`
/// uniform cells plus the breakpoints of B and then bisected to machine precision.
PiecewiseStructure induced_structure(const PiecewiseStructure& B, cplx kappa, double theta,
                                     const AdmissibleBounds& bounds, std::size_t samples = 2048);

struct NonlinearResidual {
  double theta = 0.0;
  double mismatch = 0.0;  // measure of {x : B'(x) != B(x)}
  PiecewiseStructure induced;
};

/// Compares a bang-bang B with the medium induced by its own mode. Never throws for bang-bang
/// input; a mismatch of 1 means total disagreement.
NonlinearResidual nonlinear_residual(const PiecewiseStructure& B, cplx kappa,
                                     const AdmissibleBounds& bounds, std::size_t samples = 2048);

/// Lebesgue measure of the set where two media differ.
double disagreement_measure(const PiecewiseStructure& a, const PiecewiseStructure& b);

struct ScsStep {
  cplx kappa;
  PiecewiseStructure structure;
  double switch_shift = 0.0;  // max movement of the switch points, +inf if their count changed
  double kappa_update = 0.0;
};

struct ScsResult {
  PiecewiseStructure structure;
  cplx kappa;
  std::vector<double> xs;  // uniform grid
  std::vector<cplx> y;     // e^{i theta} phi on xs
  double theta = 0.0;
  std::vector<ScsStep> history;
  bool converged = false;

  /// Throws NoConvergence unless converged; the history stays available on the result.
  void require_converged() const;
};

/// Fixed-point iteration B <- b1 + (b2 - b1) chi(Im y^2 > 0) with kappa re-located by Newton from
/// the previous value. Starts from `initial` (default B = b2). Converges when switch points move
/// less than 1e-8 and kappa less than 1e-10. Throws LostEigenvalue when Newton fails.
ScsResult self_consistent_solve(cplx kappa_seed, const AdmissibleBounds& bounds, std::size_t N,
                                int max_iters = 50,
                                const std::optional<PiecewiseStructure>& initial = std::nullopt);

}  // namespace qnm
