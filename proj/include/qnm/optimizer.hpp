#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qnm/medium.hpp"
#include "qnm/sensitivity.hpp"

namespace qnm {

struct IterationRecord {
  int iter = 0;
  cplx kappa;
  double objective = 0.0;  // Im kappa
  double drift = 0.0;      // |Re kappa - alpha|
  double extremality = 0.0;
  double step = 0.0;
};

struct OptimizeConfig {
  double alpha = 3.141592653589793;  // target Re kappa; 0 selects the imaginary-axis mode
  AdmissibleBounds bounds;
  std::size_t N = 256;
  double step0 = 0.25;
  double step_grow = 1.5;
  double step_shrink = 0.5;
  double step_max = 1e4;
  double step_min = 1e-12;
  int max_iters = 400;
  double tol_freq = 1e-9;
  double tol_grad = 1e-13;
  double armijo = 1e-4;
  bool escape_collisions = true;
  bool finalize = true;             // round to a bang-bang structure and polish its switches
  std::optional<cplx> kappa_seed;   // root of the seed structure to follow
  std::function<void(const IterationRecord&)> observer;  // called for every recorded iterate

  /// Throws InvalidArgument on N < 16, non-positive steps or tolerances.
  void validate() const;
};

enum class StopReason { Stalled, MaxIterations, LineSearch, NoProgress, Collision };
std::string_view to_string(StopReason r);

struct FinalizeReport {
  PiecewiseStructure structure;  // bang-bang
  cplx kappa_rounded;            // eigenvalue right after rounding
  cplx kappa;                    // eigenvalue of `structure`
  double forced_measure = 0.0;
  bool polished = false;         // switch positions solved for ray alignment and Re kappa = alpha
  double polish_residual = 0.0;
};

struct OptimizeResult {
  GridStructure grid;  // last iterate of the gradient flow
  cplx kappa;          // its tracked eigenvalue
  StopReason stop = StopReason::MaxIterations;
  int escapes = 0;
  std::vector<IterationRecord> trajectory;
  std::optional<FinalizeReport> final;

  PiecewiseStructure structure() const { return final ? final->structure : to_piecewise(grid); }
  cplx final_kappa() const { return final ? final->kappa : kappa; }
};

/// Descent direction for Im kappa: clip(-Im g + lambda Re g) / max|g| with lambda chosen so that
/// \int Re(g) dB = 0 whenever the clipping allows it. Cells sitting at b1 (b2) may only increase
/// (decrease). Throws StalledDirection when the predicted decrease of Im kappa is below tol_grad.
GridStructure step_direction(const GradientDensity& g, const GridStructure& B,
                             const AdmissibleBounds& bounds, double tol_grad = 0.0);

/// Projected gradient flow on Im kappa at fixed Re kappa = alpha. See OptimizeConfig.
/// Throws LostEigenvalue if the tracked root disappears, CollisionDetected if it becomes multiple
/// and escape_collisions is off.
OptimizeResult minimize_im_at_frequency(const OptimizeConfig& cfg, const GridStructure& B0);

struct EscapeResult {
  GridStructure direction;  // feasible for the bounds
  double zeta = 0.0;        // recommended step along direction
  cplx kappa;               // verified branch with the smallest Im
  std::vector<cplx> branches;
};

/// Direction and step that send one branch of a multiplicity-r root straight down.
/// Throws InvalidArgument for r < 2 and NoFeasibleDirection when no admissible direction moves
/// the root (or none of the tried steps yields a branch below kappa within pi/(2r) of -pi/2).
EscapeResult multiple_eigenvalue_escape(const PiecewiseStructure& B, cplx kappa, int r,
                                        const AdmissibleBounds& bounds, std::size_t n);

struct PolishResult {
  PiecewiseStructure structure;
  cplx kappa;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Moves the switch points of a bang-bang structure until every phi^2(x_j) lies on the ray of
/// phi^2(x_1) (same direction) or its opposite (other direction) and Re kappa = alpha.
PolishResult polish_switches(const PiecewiseStructure& B, cplx kappa, double alpha,
                             const AdmissibleBounds& bounds);

/// Constant media whose closed-form spectrum has a root with Re kappa = alpha exactly.
struct ConstantSeed {
  double b = 0.0;
  cplx kappa;
  bool exact = true;  // false: nearest frequency only
};

/// The exact constant seed with the smallest Im kappa, if any.
std::optional<ConstantSeed> exact_constant_seed(double alpha, const AdmissibleBounds& bounds);
/// The exact seed, unless a constant medium with a root within 1e-6 (1 + |alpha|) of alpha has a
/// smaller Im; otherwise the constant medium whose spectrum comes closest to alpha.
ConstantSeed default_seed(double alpha, const AdmissibleBounds& bounds);
/// Im kappa of the best exact constant seed, +inf if there is none.
double constant_upper_bound(double alpha, const AdmissibleBounds& bounds);

struct SweepEntry {
  double alpha = 0.0;
  bool ok = false;
  std::string error;
  double upper_bound = 0.0;  // constant-medium bound
  double I = 0.0;            // best Im kappa found
  cplx kappa;
  PiecewiseStructure structure;
};

/// minimize_im_at_frequency for each alpha from its default seed; failures are recorded per entry.
std::vector<SweepEntry> sweep_I(const std::vector<double>& alphas, const OptimizeConfig& cfg);

}  // namespace qnm
