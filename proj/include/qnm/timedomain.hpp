#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "qnm/field_solver.hpp"
#include "qnm/medium.hpp"

namespace qnm {

/// Displacement and velocity on the M+1 nodes x_j = j/M.
struct WaveState {
  std::vector<double> u;
  std::vector<double> v;
  double t = 0.0;
  double dt = 0.0;
  double dx = 0.0;
};

struct SimulateOptions {
  double T = 1.0;
  std::size_t M = 1024;
  double probe = 1.0;             // position of the recorded displacement
  std::optional<double> dt;       // default 0.9 dx sqrt(min B)
  std::size_t record_every = 1;
};

struct SimulationResult {
  std::vector<double> t;
  std::vector<double> energy;
  std::vector<double> u_probe;
  WaveState final;
};

/// Leapfrog for B u_tt = u_xx with lumped node masses, u_x(0) = 0 and u_x + u_t = 0 at x = 1
/// (the boundary node carries half a cell of mass; its damping is centred in time).
///
/// The recorded energy at t_{n+1/2} is the discrete energy of the scheme,
///   1/2 sum_j m_j ((u^{n+1}_j - u^n_j)/dt)^2 + 1/2 sum_cells (du^{n+1})(du^n)/dx,
/// which decreases by exactly dt ((u^{n+1}_M - u^{n-1}_M)/(2 dt))^2 per step. u_probe is the
/// average of u^n and u^{n+1} linearly interpolated at the probe.
///
/// Throws DegenerateMedium if min B <= 0, CFLViolation if dt exceeds 0.9 dx sqrt(min B).
SimulationResult simulate(const PiecewiseStructure& B, const std::vector<double>& u0,
                          const std::vector<double>& v0, const SimulateOptions& opt);
SimulationResult simulate(const PiecewiseStructure& B, const std::function<double(double)>& u0,
                          const std::function<double(double)>& v0, const SimulateOptions& opt);

struct DecayFit {
  double fitted_beta = 0.0;   // decay rate of the energy
  double expected = 0.0;      // 2 Im kappa
  double rel_error = 0.0;
  double max_log_residual = 0.0;
  std::vector<double> t;
  std::vector<double> energy;  // sum of both runs
};

/// Starts two runs from Re and Im of the mode e^{i kappa t} phi(x, kappa) at t = 0, sums their
/// energies (which removes the oscillation at twice the frequency) and fits log E on [T/4, T].
/// Throws FitUnstable when a residual of the log-linear fit exceeds fit_tol.
DecayFit excite_and_fit(const PiecewiseStructure& B, cplx kappa, double T, std::size_t M,
                        double fit_tol = 1e-2);

}  // namespace qnm
