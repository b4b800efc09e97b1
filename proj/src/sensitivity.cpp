#include "qnm/sensitivity.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "qnm/error.hpp"
#include "qnm/spectrum.hpp"

namespace qnm {

namespace {

const cplx I(0.0, 1.0);

double factorial(int r) {
  double f = 1.0;
  for (int k = 2; k <= r; ++k) f *= k;
  return f;
}

cplx cell_sum(const std::vector<cplx>& cells, const GridStructure& direction) {
  cplx s = 0.0;
  for (std::size_t i = 0; i < cells.size(); ++i) s += cells[i] * direction.values[i];
  return s;
}

void require_root(const BoundaryData& bd, cplx kappa, double tol) {
  const cplx F = bd.phi1 - I * bd.dphi1 / kappa;
  const double scale = std::max({1.0, std::abs(bd.phi1), std::abs(bd.dphi1 / kappa)});
  if (std::abs(F) >= tol * scale)
    throw SolverError(ErrorKind::NotAtRoot, "|F(kappa)| = " + std::to_string(std::abs(F)));
}

// Solves the 4x4 real system J x = b by Gaussian elimination with partial pivoting.
bool solve4(std::array<std::array<double, 4>, 4> J, std::array<double, 4> b, std::array<double, 4>& x) {
  for (int c = 0; c < 4; ++c) {
    int p = c;
    for (int r = c + 1; r < 4; ++r)
      if (std::abs(J[r][c]) > std::abs(J[p][c])) p = r;
    if (J[p][c] == 0.0) return false;
    std::swap(J[p], J[c]);
    std::swap(b[p], b[c]);
    for (int r = c + 1; r < 4; ++r) {
      const double f = J[r][c] / J[c][c];
      for (int k = c; k < 4; ++k) J[r][k] -= f * J[c][k];
      b[r] -= f * b[c];
    }
  }
  for (int c = 3; c >= 0; --c) {
    double s = b[c];
    for (int k = c + 1; k < 4; ++k) s -= J[c][k] * x[k];
    x[c] = s / J[c][c];
  }
  return true;
}

}  // namespace

cplx GradientDensity::directional(const GridStructure& direction) const {
  if (direction.size() != g.size())
    throw SolverError(ErrorKind::InvalidArgument, "direction grid does not match the density");
  return cell_sum(g, direction) / static_cast<double>(g.size());
}

cplx dBF_direction(const PiecewiseStructure& B, cplx kappa, const GridStructure& direction, double tol) {
  if (kappa == cplx(0.0)) throw SolverError(ErrorKind::ZeroFrequency, "kappa = 0");
  const auto bd = propagate(B, kappa);
  require_root(bd, kappa, tol);
  const auto cells = phi_squared_cell_integrals(B, kappa, direction.size());
  return kappa * (-kappa * bd.psi1 + I * bd.dpsi1) * cell_sum(cells, direction);
}

cplx dzF_order(const PiecewiseStructure& B, cplx kappa, int r) {
  if (r < 1) throw SolverError(ErrorKind::InvalidArgument, "derivative order must be positive");
  if (r == 1) return dzF(kappa, B);
  if (r == 2) {
    const double h = 1e-4 * (1.0 + std::abs(kappa));
    return (-dzF(kappa + 2.0 * h, B) + 8.0 * dzF(kappa + h, B) - 8.0 * dzF(kappa - h, B) +
            dzF(kappa - 2.0 * h, B)) /
           (12.0 * h);
  }
  // F^(r)(k) = (r-1)!/(2 pi i) \oint F'(z) / (z-k)^r dz on a circle of radius rho
  const double rho = 0.05 * (1.0 + std::abs(kappa));
  constexpr int m = 64;
  cplx acc = 0.0;
  for (int k = 0; k < m; ++k) {
    const double th = 2.0 * std::numbers::pi * k / m;
    acc += dzF(kappa + std::polar(rho, th), B) * std::polar(1.0, -(r - 1) * th);
  }
  return factorial(r - 1) * acc / (m * std::pow(rho, r - 1));
}

GradientDensity eigenvalue_gradient(const PiecewiseStructure& B, cplx kappa, std::size_t n) {
  if (kappa == cplx(0.0)) throw SolverError(ErrorKind::ZeroFrequency, "kappa = 0");
  if (n == 0) throw SolverError(ErrorKind::InvalidArgument, "need at least one cell");
  const auto ev = evaluate_F(kappa, B);
  const double second = std::abs(dzF_order(B, kappa, 2));
  if (std::abs(ev.dF) < 1e-6 * std::max(1.0, second))
    throw SolverError(ErrorKind::NearMultiple, "dF/dz nearly vanishes at kappa");

  GradientDensity out;
  out.kappa = kappa;
  const cplx phi1 = ev.boundary.phi1;
  out.denom = 2.0 * kappa * ev.int_phi2_B - I * phi1 * phi1;
  out.denom_abs = std::abs(out.denom);
  const auto cells = phi_squared_cell_integrals(B, kappa, n);
  const double N = static_cast<double>(n);
  out.g.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.g[i] = -kappa * kappa * cells[i] * N / out.denom;
  return out;
}

std::vector<double> axis_gradient(const PiecewiseStructure& B, double beta, std::size_t n) {
  if (!(beta > 0.0)) throw SolverError(ErrorKind::InvalidArgument, "beta must be positive");
  const auto ax = evaluate_axis(beta, B);
  const double h = 1e-4 * (1.0 + beta);
  const double second =
      std::abs(evaluate_axis(beta + h, B).dF_dbeta - evaluate_axis(std::max(beta - h, 0.5 * beta), B).dF_dbeta) /
      (beta + h - std::max(beta - h, 0.5 * beta));
  if (std::abs(ax.dF_dbeta) < 1e-6 * std::max(1.0, second))
    throw SolverError(ErrorKind::NearMultiple, "dF/dbeta nearly vanishes on the axis");
  const auto cells = phi_squared_cell_integrals_axis(B, beta, n);
  const double denom = 2.0 * beta * ax.int_phi2_B - ax.phi1 * ax.phi1;
  std::vector<double> g(n);
  const double N = static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = -beta * beta * cells[i] * N / denom;
  return g;
}

SplittingProbe splitting_probe(const PiecewiseStructure& B, cplx kappa0, int r,
                               const GridStructure& direction, const std::vector<double>& zetas) {
  if (r < 2) throw SolverError(ErrorKind::InvalidArgument, "splitting needs multiplicity >= 2");
  if (zetas.empty()) throw SolverError(ErrorKind::InvalidArgument, "no zeta values");
  SplittingProbe p;
  p.r = r;
  p.kappa0 = kappa0;
  const cplx dbf = dBF_direction(B, kappa0, direction);
  const cplx drf = dzF_order(B, kappa0, r);
  const cplx c1r = -factorial(r) * dbf / drf;
  p.c1_predicted = std::pow(c1r, 1.0 / r);
  const double c1_abs = std::max(std::abs(p.c1_predicted), 1e-3);

  for (double zeta : zetas) {
    if (!(zeta > 0.0)) throw SolverError(ErrorKind::InvalidArgument, "zeta must be positive");
    const auto Bz = perturbed(B, direction, zeta);
    const double spread = c1_abs * std::pow(zeta, 1.0 / r);
    const double half = 3.0 * spread;
    SpectralWindow w{kappa0.real() - half, kappa0.real() + half,
                     std::max(kappa0.imag() - half, 0.5 * kappa0.imag()), kappa0.imag() + half};
    auto roots = locate(Bz, w);
    std::sort(roots.begin(), roots.end(), [&](const auto& a, const auto& b) {
      return std::abs(a.kappa - kappa0) < std::abs(b.kappa - kappa0);
    });
    if (static_cast<int>(roots.size()) < r)
      throw SolverError(ErrorKind::BranchCountMismatch,
                        "found " + std::to_string(roots.size()) + " roots at zeta " + std::to_string(zeta));
    std::vector<cplx> branch;
    double sep = std::numeric_limits<double>::infinity();
    for (int k = 0; k < r; ++k) branch.push_back(roots[static_cast<std::size_t>(k)].kappa);
    for (int a = 0; a < r; ++a)
      for (int b = a + 1; b < r; ++b) sep = std::min(sep, std::abs(branch[a] - branch[b]));
    for (const auto& z : branch) {
      if (multiplicity(Bz, z, 0.25 * sep) != 1)
        throw SolverError(ErrorKind::BranchCountMismatch, "perturbed root is not simple");
    }
    p.zeta_values.push_back(zeta);
    p.branch_points.push_back(std::move(branch));
  }

  // least squares slope of log(mean distance) against log(zeta)
  const std::size_t m = p.zeta_values.size();
  if (m >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < m; ++k) {
      double d = 0.0;
      for (const auto& z : p.branch_points[k]) d += std::abs(z - kappa0);
      const double x = std::log(p.zeta_values[k]);
      const double y = std::log(d / r);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    p.fitted_exponent = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  }
  const auto smallest = static_cast<std::size_t>(
      std::min_element(p.zeta_values.begin(), p.zeta_values.end()) - p.zeta_values.begin());
  cplx mean = 0.0;
  for (const auto& z : p.branch_points[smallest]) mean += std::pow(z - kappa0, r);
  p.c1_fitted = std::pow(mean / static_cast<double>(r) / p.zeta_values[smallest], 1.0 / r);
  return p;
}

namespace {

// On the imaginary axis Im F and Re dF/dz vanish identically, so the complex system is
// degenerate; solve F(i beta) = dF/dbeta = 0 over (right, beta) with the interface fixed.
DoubleEigenvalue find_axis_double(double left, double s, double right, double beta, int max_iter) {
  auto residual = [&](double r, double b) {
    const auto ax = evaluate_axis(b, PiecewiseStructure::two_layer(left, s, r));
    return std::array<double, 2>{ax.F, ax.dF_dbeta};
  };
  auto norm = [](const std::array<double, 2>& v) { return std::abs(v[0]) + std::abs(v[1]); };
  auto f = residual(right, beta);
  double fn = norm(f);
  int it = 0;
  for (; it < max_iter && fn >= 1e-14; ++it) {
    const double hr = 1e-7 * std::max(1.0, right), hb = 1e-7 * std::max(1.0, beta);
    const auto fr1 = residual(right + hr, beta), fr0 = residual(right - hr, beta);
    const auto fb1 = residual(right, beta + hb), fb0 = residual(right, beta - hb);
    const double a = (fr1[0] - fr0[0]) / (2 * hr), b = (fb1[0] - fb0[0]) / (2 * hb);
    const double c = (fr1[1] - fr0[1]) / (2 * hr), d = (fb1[1] - fb0[1]) / (2 * hb);
    const double det = a * d - b * c;
    if (det == 0.0) break;
    const double dr = (-f[0] * d + b * f[1]) / det;
    const double db = (-a * f[1] + c * f[0]) / det;
    double t = 1.0;
    bool improved = false;
    for (int k = 0; k < 40; ++k, t *= 0.5) {
      const double rn = right + t * dr, bn = beta + t * db;
      if (rn < 0.0 || bn <= 0.0) continue;
      const auto fnew = residual(rn, bn);
      if (norm(fnew) < fn) {
        right = rn;
        beta = bn;
        f = fnew;
        fn = norm(fnew);
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }
  if (!(fn < 1e-10))
    throw SolverError(ErrorKind::NoConvergence,
                      "axis double-root search stopped at residual " + std::to_string(fn));
  return {PiecewiseStructure::two_layer(left, s, right), {0.0, beta}, fn, it};
}

}  // namespace

DoubleEigenvalue find_double_eigenvalue(double left, double s, double right, cplx kappa_seed,
                                        int max_iter) {
  if (kappa_seed.real() == 0.0) {
    if (!(s > 0.0 && s < 1.0 && right >= 0.0 && kappa_seed.imag() > 0.0))
      throw SolverError(ErrorKind::InvalidArgument, "seed outside the admissible set");
    return find_axis_double(left, s, right, kappa_seed.imag(), max_iter);
  }
  using Vec = std::array<double, 4>;
  auto residual = [&](const Vec& x) -> Vec {
    const auto B = PiecewiseStructure::two_layer(left, x[0], x[1]);
    const auto e = evaluate_F({x[2], x[3]}, B);
    return {e.F.real(), e.F.imag(), e.dF.real(), e.dF.imag()};
  };
  auto norm = [](const Vec& v) { return std::abs(cplx(v[0], v[1])) + std::abs(cplx(v[2], v[3])); };
  auto admissible = [](const Vec& x) { return x[0] > 1e-6 && x[0] < 1.0 - 1e-6 && x[1] >= 0.0 && x[3] > 0.0; };

  Vec x{s, right, kappa_seed.real(), kappa_seed.imag()};
  if (!admissible(x)) throw SolverError(ErrorKind::InvalidArgument, "seed outside the admissible set");
  Vec f = residual(x);
  double fn = norm(f);
  int it = 0;
  for (; it < max_iter && fn >= 1e-14; ++it) {
    std::array<std::array<double, 4>, 4> J{};
    for (int c = 0; c < 4; ++c) {
      const double h = 1e-7 * std::max(1.0, std::abs(x[c]));
      Vec xp = x, xm = x;
      xp[c] += h;
      xm[c] -= h;
      const Vec fp = residual(xp), fm = residual(xm);
      for (int r = 0; r < 4; ++r) J[r][c] = (fp[r] - fm[r]) / (2.0 * h);
    }
    Vec dx{};
    if (!solve4(J, {-f[0], -f[1], -f[2], -f[3]}, dx)) break;
    double t = 1.0;
    bool improved = false;
    for (int k = 0; k < 40; ++k, t *= 0.5) {
      Vec xn{x[0] + t * dx[0], x[1] + t * dx[1], x[2] + t * dx[2], x[3] + t * dx[3]};
      if (!admissible(xn)) continue;
      const Vec fnew = residual(xn);
      const double nn = norm(fnew);
      if (nn < fn) {
        x = xn;
        f = fnew;
        fn = nn;
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }
  if (!(fn < 1e-10))
    throw SolverError(ErrorKind::NoConvergence,
                      "double-root search stopped at residual " + std::to_string(fn));
  return {PiecewiseStructure::two_layer(left, x[0], x[1]), {x[2], x[3]}, fn, it};
}

}  // namespace qnm
