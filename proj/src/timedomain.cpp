#include "qnm/timedomain.hpp"

#include <algorithm>
#include <cmath>

#include "qnm/error.hpp"

namespace qnm {

namespace {

constexpr double kSafety = 0.9;

std::vector<double> node_masses(const PiecewiseStructure& B, std::size_t M) {
  const auto cells = to_grid(B, M);
  const double dx = 1.0 / static_cast<double>(M);
  std::vector<double> m(M + 1, 0.0);
  for (std::size_t i = 0; i < M; ++i) {
    m[i] += 0.5 * cells.values[i] * dx;
    m[i + 1] += 0.5 * cells.values[i] * dx;
  }
  return m;
}

// (K u)_j for the stiffness of \int u_x^2 / 2 with natural boundary terms.
void stiffness(const std::vector<double>& u, double dx, std::vector<double>& out) {
  const std::size_t n = u.size();
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    if (j > 0) s += u[j] - u[j - 1];
    if (j + 1 < n) s += u[j] - u[j + 1];
    out[j] = s / dx;
  }
}

}  // namespace

SimulationResult simulate(const PiecewiseStructure& B, const std::vector<double>& u0, const std::vector<double>& v0,
                          const SimulateOptions& opt) {
  if (!(B.min_value() > 0.0)) throw SolverError(ErrorKind::DegenerateMedium, "time stepping needs min B > 0");
  if (opt.M < 2 || !(opt.T >= 0.0) || opt.record_every == 0 || opt.probe < 0.0 || opt.probe > 1.0)
    throw SolverError(ErrorKind::InvalidArgument, "invalid simulation options");
  const std::size_t M = opt.M;
  if (u0.size() != M + 1 || v0.size() != M + 1)
    throw SolverError(ErrorKind::InvalidArgument, "initial data must have M+1 node values");
  const double dx = 1.0 / static_cast<double>(M);
  const double limit = kSafety * dx * std::sqrt(B.min_value());
  const double dt = opt.dt.value_or(limit);
  if (!(dt > 0.0) || dt > limit * (1.0 + 1e-12))
    throw SolverError(ErrorKind::CFLViolation,
                      "dt = " + std::to_string(dt) + " exceeds the limit " + std::to_string(limit));

  const auto m = node_masses(B, M);
  const std::size_t last = M;
  const std::size_t steps = static_cast<std::size_t>(std::ceil(opt.T / dt - 1e-9));
  const double px = opt.probe * static_cast<double>(M);
  const std::size_t pj = std::min<std::size_t>(static_cast<std::size_t>(px), M - 1);
  const double pw = px - static_cast<double>(pj);
  auto probe = [&](const std::vector<double>& u) { return (1.0 - pw) * u[pj] + pw * u[pj + 1]; };
  auto energy = [&](const std::vector<double>& un, const std::vector<double>& up) {
    double kin = 0.0, pot = 0.0;
    for (std::size_t j = 0; j <= M; ++j) {
      const double w = (up[j] - un[j]) / dt;
      kin += m[j] * w * w;
    }
    for (std::size_t j = 0; j < M; ++j) pot += (up[j + 1] - up[j]) * (un[j + 1] - un[j]);
    return 0.5 * kin + 0.5 * pot / dx;
  };

  std::vector<double> prev = u0, cur(M + 1), next(M + 1), ku(M + 1);
  // second-order Taylor start
  stiffness(prev, dx, ku);
  for (std::size_t j = 0; j <= M; ++j) {
    double a = -ku[j];
    if (j == last) a -= v0[j];
    cur[j] = prev[j] + dt * v0[j] + 0.5 * dt * dt * a / m[j];
  }

  SimulationResult res;
  auto record = [&](std::size_t n, const std::vector<double>& un, const std::vector<double>& up) {
    if (n % opt.record_every) return;
    res.t.push_back((static_cast<double>(n) + 0.5) * dt);
    res.energy.push_back(energy(un, up));
    res.u_probe.push_back(0.5 * (probe(un) + probe(up)));
  };
  if (steps > 0) record(0, prev, cur);

  const double dt2 = dt * dt;
  for (std::size_t n = 1; n < steps; ++n) {
    stiffness(cur, dx, ku);
    for (std::size_t j = 0; j < last; ++j) next[j] = 2.0 * cur[j] - prev[j] - dt2 * ku[j] / m[j];
    const double c = m[last] / dt2;
    next[last] = (c * (2.0 * cur[last] - prev[last]) - ku[last] + prev[last] / (2.0 * dt)) / (c + 1.0 / (2.0 * dt));
    std::swap(prev, cur);
    std::swap(cur, next);
    record(n, prev, cur);
  }

  res.final.dt = dt;
  res.final.dx = dx;
  if (steps == 0) {
    res.final.u = u0;
    res.final.v = v0;
    return res;
  }
  res.final.t = static_cast<double>(steps) * dt;
  res.final.u = cur;
  res.final.v.resize(M + 1);
  for (std::size_t j = 0; j <= M; ++j) res.final.v[j] = (cur[j] - prev[j]) / dt;
  return res;
}

SimulationResult simulate(const PiecewiseStructure& B, const std::function<double(double)>& u0,
                          const std::function<double(double)>& v0, const SimulateOptions& opt) {
  if (opt.M < 2) throw SolverError(ErrorKind::InvalidArgument, "need at least 2 cells");
  std::vector<double> a(opt.M + 1), b(opt.M + 1);
  for (std::size_t j = 0; j <= opt.M; ++j) {
    const double x = static_cast<double>(j) / static_cast<double>(opt.M);
    a[j] = u0(x);
    b[j] = v0(x);
  }
  return simulate(B, a, b, opt);
}

DecayFit excite_and_fit(const PiecewiseStructure& B, cplx kappa, double T, std::size_t M, double fit_tol) {
  if (!(B.min_value() > 0.0)) throw SolverError(ErrorKind::DegenerateMedium, "time stepping needs min B > 0");
  if (!(T > 0.0) || M < 2) throw SolverError(ErrorKind::InvalidArgument, "need T > 0 and M >= 2");
  std::vector<double> xs(M + 1);
  for (std::size_t j = 0; j <= M; ++j) xs[j] = static_cast<double>(j) / static_cast<double>(M);
  const auto tr = sample_phi(B, kappa, xs);
  const cplx ik(-kappa.imag(), kappa.real());
  std::vector<double> ur(M + 1), vr(M + 1), ui(M + 1), vi(M + 1);
  for (std::size_t j = 0; j <= M; ++j) {
    const cplx phi = tr.samples[j].y;
    ur[j] = phi.real();
    ui[j] = phi.imag();
    vr[j] = (ik * phi).real();
    vi[j] = (ik * phi).imag();
  }
  SimulateOptions opt;
  opt.T = T;
  opt.M = M;
  const auto a = simulate(B, ur, vr, opt);
  const auto b = simulate(B, ui, vi, opt);

  DecayFit fit;
  fit.expected = 2.0 * kappa.imag();
  fit.t = a.t;
  fit.energy.resize(a.energy.size());
  for (std::size_t k = 0; k < a.energy.size(); ++k) fit.energy[k] = a.energy[k] + b.energy[k];

  // least squares log E = c - beta t on [T/4, T]
  double n = 0, st = 0, sy = 0, stt = 0, sty = 0;
  for (std::size_t k = 0; k < fit.t.size(); ++k) {
    if (fit.t[k] < 0.25 * T) continue;
    if (!(fit.energy[k] > 0.0)) throw SolverError(ErrorKind::FitUnstable, "energy vanished");
    const double y = std::log(fit.energy[k]);
    n += 1;
    st += fit.t[k];
    sy += y;
    stt += fit.t[k] * fit.t[k];
    sty += fit.t[k] * y;
  }
  if (n < 3) throw SolverError(ErrorKind::FitUnstable, "too few samples in the fit window");
  const double slope = (n * sty - st * sy) / (n * stt - st * st);
  const double icpt = (sy - slope * st) / n;
  for (std::size_t k = 0; k < fit.t.size(); ++k) {
    if (fit.t[k] < 0.25 * T) continue;
    fit.max_log_residual =
        std::max(fit.max_log_residual, std::abs(std::log(fit.energy[k]) - (icpt + slope * fit.t[k])));
  }
  fit.fitted_beta = -slope;
  fit.rel_error = std::abs(fit.fitted_beta - fit.expected) / std::abs(fit.expected);
  if (fit.max_log_residual > fit_tol)
    throw SolverError(ErrorKind::FitUnstable,
                      "log-energy deviates from a line by " + std::to_string(fit.max_log_residual));
  return fit;
}

}  // namespace qnm
