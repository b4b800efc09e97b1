#include "qnm/certificate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "qnm/error.hpp"
#include "qnm/spectrum.hpp"

namespace qnm {

namespace {

using std::numbers::pi;

bool on_axis(cplx kappa) { return std::abs(kappa.real()) <= 1e-12 * std::max(1.0, std::abs(kappa)); }

double wrap(double a) { return a - 2.0 * pi * std::floor((a + pi) / (2.0 * pi)); }

std::vector<double> sample_grid(const PiecewiseStructure& B, std::size_t samples) {
  std::vector<double> xs;
  xs.reserve(samples + 1 + B.breakpoints().size());
  for (std::size_t k = 0; k <= samples; ++k) xs.push_back(static_cast<double>(k) / static_cast<double>(samples));
  xs.insert(xs.end(), B.breakpoints().begin(), B.breakpoints().end());
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  return xs;
}

cplx phi_at(const PiecewiseStructure& B, cplx kappa, double x) {
  const double xs[1] = {x};
  return sample_phi(B, kappa, xs).samples[0].y;
}

std::vector<cplx> phi_squared(const PiecewiseStructure& B, cplx kappa, const std::vector<double>& xs) {
  const auto tr = sample_phi(B, kappa, xs);
  std::vector<cplx> p(xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k) p[k] = tr.samples[k].y * tr.samples[k].y;
  return p;
}

// omega from the first switch, or from the single value when there is none.
double omega_of(const PiecewiseStructure& B, cplx kappa, const std::vector<SwitchPoint>& sw,
                const AdmissibleBounds& bounds) {
  if (sw.empty()) return B.values().front() == bounds.b2 ? 0.0 : -pi;
  const cplx p = phi_at(B, kappa, sw.front().x);
  const double xi = std::arg(p * p);
  return wrap(sw.front().direction == SwitchDirection::Up ? xi : xi + pi);
}

std::vector<double> interior(const PiecewiseStructure& B) {
  const auto& bp = B.breakpoints();
  return {bp.begin() + 1, bp.end() - 1};
}

}  // namespace

double PhaseTrace::at(double x) const {
  if (xs.empty()) throw SolverError(ErrorKind::InvalidArgument, "empty phase trace");
  if (x <= xs.front()) return xi.front();
  if (x >= xs.back()) return xi.back();
  const auto it = std::lower_bound(xs.begin(), xs.end(), x);
  const std::size_t k = static_cast<std::size_t>(it - xs.begin());
  if (*it == x) return xi[k];
  const double t = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
  return xi[k - 1] + t * (xi[k] - xi[k - 1]);
}

PhaseTrace phase_trace(const PiecewiseStructure& B, cplx kappa, std::size_t samples) {
  if (on_axis(kappa)) throw SolverError(ErrorKind::OnImaginaryAxis, "phase trace needs Re kappa != 0");
  if (samples < 2) throw SolverError(ErrorKind::InvalidArgument, "phase trace needs at least 2 samples");
  const auto grid = sample_grid(B, samples);
  const auto p = phi_squared(B, kappa, grid);

  PhaseTrace out;
  out.a1 = leading_zero_interval(B);
  out.xs.push_back(0.0);
  out.xi.push_back(0.0);

  // Append (x1, p1) after (x0, p0), bisecting until each increment stays below pi/2.
  auto extend = [&](auto&& self, double x0, cplx p0, double x1, cplx p1) -> void {
    if (p1 == cplx(0.0)) throw SolverError(ErrorKind::PhaseJump, "phi vanishes at x = " + std::to_string(x1));
    const double d = std::arg(p1 / p0);
    if (std::abs(d) < pi / 2) {
      out.xs.push_back(x1);
      out.xi.push_back(out.xi.back() + d);
      return;
    }
    if (x1 - x0 < 1e-12)
      throw SolverError(ErrorKind::PhaseJump, "phase jump near x = " + std::to_string(x0));
    const double xm = 0.5 * (x0 + x1);
    const cplx fm = phi_at(B, kappa, xm);
    self(self, x0, p0, xm, fm * fm);
    self(self, xm, fm * fm, x1, p1);
  };
  for (std::size_t k = 1; k < grid.size(); ++k) extend(extend, grid[k - 1], p[k - 1], grid[k], p[k]);
  for (std::size_t k = 0; k < out.xs.size() && out.xs[k] <= out.a1; ++k) out.xi[k] = 0.0;

  bool dec = true, inc = true;
  for (std::size_t k = 1; k < out.xs.size(); ++k) {
    if (out.xs[k] <= out.a1) continue;
    const double d = out.xi[k] - out.xi[k - 1];
    dec = dec && d < 0.0;
    inc = inc && d > 0.0;
  }
  out.slope_sign = dec ? -1 : (inc ? 1 : 0);
  return out;
}

double mode_rotation(const PiecewiseStructure& B, cplx kappa, const AdmissibleBounds& bounds) {
  if (on_axis(kappa)) return pi / 4;
  const double omega = omega_of(B, kappa, switch_points(B, bounds), bounds);
  return kappa.real() > 0.0 ? 0.5 * (pi - omega) : -0.5 * omega;
}

SwitchCertificate switch_alignment(const PiecewiseStructure& B, cplx kappa, const AdmissibleBounds& bounds,
                                   std::size_t samples) {
  if (on_axis(kappa)) throw SolverError(ErrorKind::OnImaginaryAxis, "use the imaginary-axis analysis");
  SwitchCertificate c;
  c.switches = switch_points(B, bounds);
  const auto tr = phase_trace(B, kappa, samples);
  c.omega = omega_of(B, kappa, c.switches, bounds);
  for (const auto& s : c.switches) {
    const double target = s.direction == SwitchDirection::Up ? c.omega : c.omega + pi;
    c.deviations.push_back(std::abs(wrap(tr.at(s.x) - target)));
  }
  c.max_deviation = c.deviations.empty() ? 0.0 : *std::max_element(c.deviations.begin(), c.deviations.end());
  const auto& bp = B.breakpoints();
  for (std::size_t j = 0; j + 1 < bp.size(); ++j)
    c.max_interval_variation = std::max(c.max_interval_variation, std::abs(tr.at(bp[j + 1]) - tr.at(bp[j])));
  const auto nr = nonlinear_residual(B, kappa, bounds);
  c.theta = nr.theta;
  c.nonlinear_mismatch = nr.mismatch;
  return c;
}

PiecewiseStructure induced_structure(const PiecewiseStructure& B, cplx kappa, double theta,
                                     const AdmissibleBounds& bounds, std::size_t samples) {
  if (samples < 2) throw SolverError(ErrorKind::InvalidArgument, "need at least 2 samples");
  const cplx rot = std::polar(1.0, 2.0 * theta);
  // chi vanishes on the real axis; tiny imaginary parts count as real
  auto positive = [&](cplx phi) {
    const cplx y2 = rot * phi * phi;
    return y2.imag() > 1e-12 * std::abs(y2);
  };
  const auto grid = sample_grid(B, samples);
  const auto tr = sample_phi(B, kappa, grid);
  std::vector<double> cuts{0.0};
  for (std::size_t k = 1; k < grid.size(); ++k) {
    bool s0 = positive(tr.samples[k - 1].y);
    if (s0 == positive(tr.samples[k].y)) continue;
    double lo = grid[k - 1], hi = grid[k];
    while (hi - lo > 1e-15) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      (positive(phi_at(B, kappa, mid)) == s0 ? lo : hi) = mid;
    }
    const double x = 0.5 * (lo + hi);
    if (x - cuts.back() > 1e-13 && 1.0 - x > 1e-13) cuts.push_back(x);
  }
  cuts.push_back(1.0);
  std::vector<double> mids;
  for (std::size_t j = 0; j + 1 < cuts.size(); ++j) mids.push_back(0.5 * (cuts[j] + cuts[j + 1]));
  const auto mtr = sample_phi(B, kappa, mids);
  std::vector<double> values;
  for (const auto& s : mtr.samples) values.push_back(positive(s.y) ? bounds.b2 : bounds.b1);
  return PiecewiseStructure::make(cuts, values);
}

double disagreement_measure(const PiecewiseStructure& a, const PiecewiseStructure& b) {
  std::vector<double> bp = a.breakpoints();
  bp.insert(bp.end(), b.breakpoints().begin(), b.breakpoints().end());
  std::sort(bp.begin(), bp.end());
  bp.erase(std::unique(bp.begin(), bp.end()), bp.end());
  double m = 0.0;
  for (std::size_t j = 0; j + 1 < bp.size(); ++j) {
    const double mid = 0.5 * (bp[j] + bp[j + 1]);
    if (a.value_at(mid) != b.value_at(mid)) m += bp[j + 1] - bp[j];
  }
  return m;
}

NonlinearResidual nonlinear_residual(const PiecewiseStructure& B, cplx kappa, const AdmissibleBounds& bounds,
                                     std::size_t samples) {
  NonlinearResidual r;
  r.theta = mode_rotation(B, kappa, bounds);
  r.induced = induced_structure(B, kappa, r.theta, bounds, samples);
  r.mismatch = disagreement_measure(B, r.induced);
  return r;
}

void ScsResult::require_converged() const {
  if (converged) return;
  const double shift = history.empty() ? 0.0 : history.back().switch_shift;
  throw SolverError(ErrorKind::NoConvergence, "fixed point not reached after " + std::to_string(history.size()) +
                                                  " iterations (last switch shift " + std::to_string(shift) + ")");
}

ScsResult self_consistent_solve(cplx kappa_seed, const AdmissibleBounds& bounds, std::size_t N, int max_iters,
                                const std::optional<PiecewiseStructure>& initial) {
  bounds.validate();
  if (!(bounds.b1 < bounds.b2)) throw SolverError(ErrorKind::InvalidArgument, "need b1 < b2");
  if (N < 16) throw SolverError(ErrorKind::InvalidArgument, "grid must have at least 16 cells");
  PiecewiseStructure B = initial ? *initial : PiecewiseStructure::constant(bounds.b2);
  if (!is_bang_bang(B, bounds)) throw SolverError(ErrorKind::NotBangBang, "initial structure must be bang-bang");

  auto relocate = [&](const PiecewiseStructure& P, cplx from) {
    const auto nr = newton_refine(P, from);
    if (!nr.converged)
      throw SolverError(ErrorKind::LostEigenvalue, "Newton failed near " + std::to_string(from.real()) + "+" +
                                                       std::to_string(from.imag()) + "i");
    return on_axis(nr.z) ? cplx(0.0, nr.z.imag()) : nr.z;
  };

  ScsResult res;
  cplx kappa = relocate(B, kappa_seed);
  for (int it = 0; it < max_iters && !res.converged; ++it) {
    const double theta = mode_rotation(B, kappa, bounds);
    auto next = induced_structure(B, kappa, theta, bounds, N);
    const auto a = interior(B), b = interior(next);
    double shift = std::numeric_limits<double>::infinity();
    if (a.size() == b.size() && next.values().front() == B.values().front()) {
      shift = 0.0;
      for (std::size_t j = 0; j < a.size(); ++j) shift = std::max(shift, std::abs(a[j] - b[j]));
    }
    const cplx k2 = relocate(next, kappa);
    res.history.push_back({k2, next, shift, std::abs(k2 - kappa)});
    res.converged = shift < 1e-8 && std::abs(k2 - kappa) < 1e-10;
    B = std::move(next);
    kappa = k2;
  }

  res.structure = B;
  res.kappa = kappa;
  res.theta = mode_rotation(B, kappa, bounds);
  const cplx rot = std::polar(1.0, res.theta);
  for (std::size_t k = 0; k <= N; ++k) res.xs.push_back(static_cast<double>(k) / static_cast<double>(N));
  for (const auto& s : sample_phi(B, kappa, res.xs).samples) res.y.push_back(rot * s.y);
  return res;
}

}  // namespace qnm
