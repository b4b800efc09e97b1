#include "qnm/field_solver.hpp"

#include <quadmath.h>

#include <algorithm>
#include <cmath>

#include "qnm/error.hpp"

namespace qnm {

namespace {

// cos(u), sin(u)/u and h(u) = (1 - sin(2u)/(2u)) / (2u^2) as functions of w = u^2.
// All three are even in u, so no square-root branch ever leaks into the results.
template <class T>
struct EvenFns {
  T cos_u;
  T sinc_u;
  T sinc_2u;
  T h;
};

template <class T>
T sinc_series(T w) {
  T term = 1.0, sum = 1.0;
  for (int k = 1; k < 24; ++k) {
    term *= -w / static_cast<double>((2 * k) * (2 * k + 1));
    sum += term;
  }
  return sum;
}

template <class T>
T cos_series(T w) {
  T term = 1.0, sum = 1.0;
  for (int k = 1; k < 24; ++k) {
    term *= -w / static_cast<double>((2 * k - 1) * (2 * k));
    sum += term;
  }
  return sum;
}

// h = sum_{k>=1} (-1)^{k+1} 2^{2k-1} w^{k-1} / (2k+1)!
template <class T>
T h_series(T w) {
  T term = 1.0 / 3.0, sum = term;
  for (int k = 2; k < 24; ++k) {
    term *= -4.0 * w / static_cast<double>((2 * k) * (2 * k + 1));
    sum += term;
  }
  return sum;
}

EvenFns<cplx> even_fns(cplx w) {
  if (std::abs(w) < 1.0) {
    return {cos_series(w), sinc_series(w), sinc_series(4.0 * w), h_series(w)};
  }
  const cplx u = std::sqrt(w);
  const cplx s2 = std::sin(2.0 * u) / (2.0 * u);
  return {std::cos(u), std::sin(u) / u, s2, (1.0 - s2) / (2.0 * w)};
}

EvenFns<double> even_fns(double w) {
  if (std::abs(w) < 1.0) {
    return {cos_series(w), sinc_series(w), sinc_series(4.0 * w), h_series(w)};
  }
  if (w > 0.0) {
    const double u = std::sqrt(w);
    const double s2 = std::sin(2.0 * u) / (2.0 * u);
    return {std::cos(u), std::sin(u) / u, s2, (1.0 - s2) / (2.0 * w)};
  }
  const double v = std::sqrt(-w);
  const double s2 = std::sinh(2.0 * v) / (2.0 * v);
  return {std::cosh(v), std::sinh(v) / v, s2, (1.0 - s2) / (2.0 * w)};
}

template <class T>
struct State {
  T y;
  T dy;
};

// Advance (y, y') across length len of a layer with value b, where zz = z^2.
template <class T>
State<T> advance(const State<T>& s, const EvenFns<T>& f, T zz, double b, double len) {
  const T m12 = len * f.sinc_u;
  const T m21 = -zz * b * len * f.sinc_u;
  return {f.cos_u * s.y + m12 * s.dy, m21 * s.y + f.cos_u * s.dy};
}

template <class T>
EvenFns<T> fns_for(T zz, double b, double len) {
  return even_fns(zz * (b * len * len));
}

// \int_0^len u v dt for u, v solutions on one layer starting from states s1, s2.
template <class T>
T product_integral(const State<T>& s1, const State<T>& s2, const EvenFns<T>& f, double len) {
  const T icc = 0.5 * len * (1.0 + f.sinc_2u);
  const T ics = 0.5 * len * len * f.sinc_u * f.sinc_u;
  const T iss = len * len * len * f.h;
  return s1.y * s2.y * icc + (s1.y * s2.dy + s1.dy * s2.y) * ics + s1.dy * s2.dy * iss;
}

template <class T>
struct Core {
  State<T> phi{1.0, 0.0};
  State<T> psi{0.0, 1.0};
  T int_pp = 0.0;  // \int B phi^2
  T int_ps = 0.0;  // \int B phi psi
};

template <class T>
Core<T> propagate_core(const PiecewiseStructure& B, T zz, bool with_integrals) {
  Core<T> c;
  for (std::size_t j = 0; j < B.layer_count(); ++j) {
    const double b = B.values()[j];
    const double len = B.layer_length(j);
    const auto f = fns_for(zz, b, len);
    if (with_integrals && b != 0.0) {
      c.int_pp += b * product_integral(c.phi, c.phi, f, len);
      c.int_ps += b * product_integral(c.phi, c.psi, f, len);
    }
    c.phi = advance(c.phi, f, zz, b, len);
    c.psi = advance(c.psi, f, zz, b, len);
  }
  return c;
}

BoundaryData to_boundary(const Core<cplx>& c) { return {c.phi.y, c.phi.dy, c.psi.y, c.psi.dy}; }

// Sorted union of breakpoints and k / samples_per_unit.
std::vector<double> trace_grid(const PiecewiseStructure& B, std::size_t samples_per_unit) {
  std::vector<double> xs;
  const std::size_t m = std::max<std::size_t>(samples_per_unit, 1);
  for (std::size_t k = 0; k <= m; ++k) xs.push_back(static_cast<double>(k) / static_cast<double>(m));
  xs.back() = 1.0;
  xs.insert(xs.end(), B.breakpoints().begin(), B.breakpoints().end());
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  return xs;
}

// Visits states of phi and psi at sorted positions.
template <class Visit>
void walk(const PiecewiseStructure& B, cplx z, std::span<const double> xs, Visit&& visit) {
  const cplx zz = z * z;
  State<cplx> phi{1.0, 0.0}, psi{0.0, 1.0};
  std::size_t j = 0;
  for (double x : xs) {
    while (j + 1 < B.layer_count() && B.breakpoints()[j + 1] <= x) {
      const auto f = fns_for(zz, B.values()[j], B.layer_length(j));
      phi = advance(phi, f, zz, B.values()[j], B.layer_length(j));
      psi = advance(psi, f, zz, B.values()[j], B.layer_length(j));
      ++j;
    }
    const double dx = x - B.breakpoints()[j];
    if (dx == 0.0) {
      visit(x, phi, psi);
    } else {
      const auto f = fns_for(zz, B.values()[j], dx);
      visit(x, advance(phi, f, zz, B.values()[j], dx), advance(psi, f, zz, B.values()[j], dx));
    }
  }
}

}  // namespace

Mat2 layer_matrix(double b, double len, cplx z) {
  const cplx zz = z * z;
  const auto f = fns_for(zz, b, len);
  return {f.cos_u, len * f.sinc_u, -zz * b * len * f.sinc_u, f.cos_u};
}

BoundaryData propagate(const PiecewiseStructure& B, cplx z) {
  return to_boundary(propagate_core(B, z * z, false));
}

Propagation propagate_traced(const PiecewiseStructure& B, cplx z, std::size_t samples_per_unit) {
  Propagation out;
  const auto xs = trace_grid(B, samples_per_unit);
  out.phi.samples.reserve(xs.size());
  out.psi.samples.reserve(xs.size());
  walk(B, z, xs, [&](double x, const State<cplx>& p, const State<cplx>& s) {
    out.phi.samples.push_back({x, p.y, p.dy});
    out.psi.samples.push_back({x, s.y, s.dy});
  });
  const auto& lp = out.phi.samples.back();
  const auto& ls = out.psi.samples.back();
  out.boundary = {lp.y, lp.dy, ls.y, ls.dy};
  return out;
}

ModeTrace sample_phi(const PiecewiseStructure& B, cplx z, std::span<const double> xs) {
  ModeTrace out;
  out.samples.reserve(xs.size());
  walk(B, z, xs, [&](double x, const State<cplx>& p, const State<cplx>&) {
    out.samples.push_back({x, p.y, p.dy});
  });
  return out;
}

cplx charF(cplx z, const PiecewiseStructure& B) {
  if (z == cplx(0.0)) return 1.0;
  const auto bd = propagate(B, z);
  return bd.phi1 - cplx(0.0, 1.0) * bd.dphi1 / z;
}

FEvaluation evaluate_F(cplx z, const PiecewiseStructure& B) {
  if (z == cplx(0.0)) throw SolverError(ErrorKind::ZeroFrequency, "dF/dz requested at z = 0");
  const cplx I(0.0, 1.0);
  const auto c = propagate_core(B, z * z, true);
  // d/d(z^2) of phi(1), phi'(1) by variation of parameters with Wronskian 1.
  const cplx dzz_phi = -(c.psi.y * c.int_pp - c.phi.y * c.int_ps);
  const cplx dzz_dphi = -(c.psi.dy * c.int_pp - c.phi.dy * c.int_ps);
  const cplx dz_phi = 2.0 * z * dzz_phi;
  const cplx dz_dphi = 2.0 * z * dzz_dphi;
  FEvaluation e;
  e.boundary = to_boundary(c);
  e.F = c.phi.y - I * c.phi.dy / z;
  e.dF = dz_phi - I * dz_dphi / z + I * c.phi.dy / (z * z);
  e.int_phi2_B = c.int_pp;
  e.int_phipsi_B = c.int_ps;
  return e;
}

cplx dzF(cplx z, const PiecewiseStructure& B) { return evaluate_F(z, B).dF; }

cplx dzF_at_root(cplx kappa, const PiecewiseStructure& B) {
  if (kappa == cplx(0.0)) throw SolverError(ErrorKind::ZeroFrequency, "kappa = 0");
  const cplx I(0.0, 1.0);
  const auto c = propagate_core(B, kappa * kappa, true);
  return 2.0 * (-kappa * c.psi.y + I * c.psi.dy) * c.int_pp + c.phi.y / kappa;
}

AxisEvaluation evaluate_axis(double beta, const PiecewiseStructure& B) {
  if (!(beta > 0.0)) throw SolverError(ErrorKind::InvalidArgument, "beta must be positive");
  const auto c = propagate_core<double>(B, -beta * beta, true);
  // zz = -beta^2, so d/dbeta = -2 beta d/dzz.
  const double dzz_phi = -(c.psi.y * c.int_pp - c.phi.y * c.int_ps);
  const double dzz_dphi = -(c.psi.dy * c.int_pp - c.phi.dy * c.int_ps);
  const double db_phi = -2.0 * beta * dzz_phi;
  const double db_dphi = -2.0 * beta * dzz_dphi;
  AxisEvaluation e;
  e.phi1 = c.phi.y;
  e.dphi1 = c.phi.dy;
  e.psi1 = c.psi.y;
  e.dpsi1 = c.psi.dy;
  e.int_phi2_B = c.int_pp;
  e.F = c.phi.y - c.phi.dy / beta;
  e.dF_dbeta = db_phi - db_dphi / beta + c.phi.dy / (beta * beta);
  return e;
}

namespace {

template <class T>
std::vector<T> cell_integrals(const PiecewiseStructure& B, T zz, std::size_t n) {
  if (n == 0) throw SolverError(ErrorKind::InvalidArgument, "need at least one cell");
  std::vector<T> out(n, T(0.0));
  const double h = 1.0 / static_cast<double>(n);
  State<T> phi{1.0, 0.0};
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double a = static_cast<double>(i) * h;
    const double end = (i + 1 == n) ? 1.0 : static_cast<double>(i + 1) * h;
    while (a < end) {
      while (j + 1 < B.layer_count() && B.breakpoints()[j + 1] <= a) ++j;
      const double stop = std::min(end, B.breakpoints()[j + 1]);
      const double len = stop - a;
      if (len > 0.0) {
        const auto f = fns_for(zz, B.values()[j], len);
        out[i] += product_integral(phi, phi, f, len);
        phi = advance(phi, f, zz, B.values()[j], len);
      }
      a = stop;
    }
  }
  return out;
}

}  // namespace

std::vector<cplx> phi_squared_cell_integrals(const PiecewiseStructure& B, cplx z, std::size_t n) {
  return cell_integrals<cplx>(B, z * z, n);
}

std::vector<double> phi_squared_cell_integrals_axis(const PiecewiseStructure& B, double beta,
                                                    std::size_t n) {
  return cell_integrals<double>(B, -beta * beta, n);
}

IntegralResidual integral_residual(const PiecewiseStructure& B, cplx kappa,
                                   std::size_t samples_per_unit) {
  // 10-point Gauss-Legendre on [0,1].
  static constexpr std::array<double, 10> gx = {
      0.013046735741414128, 0.067468316655507732, 0.16029521585048778, 0.28330230293537639,
      0.42556283050918442,  0.57443716949081558,  0.71669769706462361, 0.83970478414951222,
      0.93253168334449227,  0.98695326425858587};
  static constexpr std::array<double, 10> gw = {
      0.033335672154344069, 0.074725674575290296, 0.10954318125799102, 0.13463335965499818,
      0.14776211235737644,  0.14776211235737644,  0.13463335965499818, 0.10954318125799102,
      0.074725674575290296, 0.033335672154344069};

  const cplx zz = kappa * kappa;
  const auto xs = trace_grid(B, samples_per_unit);
  IntegralResidual res;
  cplx g1 = 0.0;  // \int_0^x B phi
  cplx g2 = 0.0;  // \int_0^x s B phi
  State<cplx> phi{1.0, 0.0};
  std::size_t j = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double x = xs[k];
    if (k > 0) {
      const double a = xs[k - 1];
      const double b = B.values()[j];
      const double width = x - a;
      const double omega = std::abs(std::sqrt(zz * b));
      const auto pieces = static_cast<std::size_t>(std::ceil(std::max(1.0, omega * width)));
      const double hp = width / static_cast<double>(pieces);
      for (std::size_t p = 0; p < pieces; ++p) {
        const double s0 = a + static_cast<double>(p) * hp;
        for (std::size_t q = 0; q < gx.size(); ++q) {
          const double t = gx[q] * hp;
          const auto f = fns_for(zz, b, t);
          const cplx y = advance(phi, f, zz, b, t).y;
          g1 += gw[q] * hp * b * y;
          g2 += gw[q] * hp * (s0 + t) * b * y;
        }
        phi = advance(phi, fns_for(zz, b, hp), zz, b, hp);
      }
    }
    const cplx lhs = phi.y - 1.0 + zz * (x * g1 - g2);
    res.r1 = std::max(res.r1, std::abs(lhs));
    while (j + 1 < B.layer_count() && B.breakpoints()[j + 1] <= x) ++j;
  }
  res.r2 = std::abs(phi.y + cplx(0.0, 1.0) * kappa * g1);
  return res;
}

// ---------------------------------------------------------------------------------------------
// Maclaurin series in quad precision.

namespace {

using quad = __float128;

struct QComplex {
  quad re = 0, im = 0;
  QComplex operator*(const QComplex& o) const { return {re * o.re - im * o.im, re * o.im + im * o.re}; }
  QComplex operator+(const QComplex& o) const { return {re + o.re, im + o.im}; }
  QComplex scaled(quad s) const { return {re * s, im * s}; }
};

// Coefficients phi_j(x), phi_j'(x) of one fundamental solution, j = 0..J.
struct SeriesCoefficients {
  std::vector<quad> value;
  std::vector<quad> slope;
};

// Exact per-layer update of the iterated integrals: on a layer of length h with value b,
// phi_j(x+h) = sum_i b^i [h^{2i}/(2i)! phi_{j-i}(x) + h^{2i+1}/(2i+1)! phi'_{j-i}(x)].
void advance_series(SeriesCoefficients& c, quad b, quad h) {
  const std::size_t n = c.value.size();
  std::vector<quad> even(n), odd(n), odd_prev(n);  // b^i h^{2i}/(2i)!, b^i h^{2i+1}/(2i+1)!, b^i h^{2i-1}/(2i-1)!
  quad bi = 1, hm = 1, fact = 1;  // running b^i, h^m, m!
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t m0 = 2 * i;
    if (i > 0) {
      // extend h^m / m! from m = 2i-2 (already stored in even) by two steps
      hm *= h;
      fact *= static_cast<quad>(m0 - 1);
      bi *= b;
      odd_prev[i] = bi * hm / fact;
      hm *= h;
      fact *= static_cast<quad>(m0);
    }
    even[i] = bi * hm / fact;
    odd[i] = bi * hm * h / (fact * static_cast<quad>(m0 + 1));
  }
  SeriesCoefficients next{std::vector<quad>(n, 0), std::vector<quad>(n, 0)};
  for (std::size_t j = 0; j < n; ++j) {
    quad v = 0, s = 0;
    for (std::size_t i = 0; i <= j; ++i) {
      v += even[i] * c.value[j - i] + odd[i] * c.slope[j - i];
      s += even[i] * c.slope[j - i];
      if (i >= 1) s += odd_prev[i] * c.value[j - i];
    }
    next.value[j] = v;
    next.slope[j] = s;
  }
  c = std::move(next);
}

cplx sum_series(const std::vector<quad>& coeff, const QComplex& minus_zz) {
  QComplex power{1, 0}, acc{0, 0};
  for (quad a : coeff) {
    acc = acc + power.scaled(a);
    power = power * minus_zz;
  }
  return {static_cast<double>(acc.re), static_cast<double>(acc.im)};
}

// log of a^j / (2j-1)!, the bound on every coefficient family at order j >= 1.
double log_term_bound(double a, int j) { return j * std::log(a) - std::lgamma(2.0 * j); }

}  // namespace

SeriesResult phi_series(const GridStructure& g, cplx z, int terms, double tol) {
  const double sup_b = *std::max_element(g.values.begin(), g.values.end());
  if (*std::min_element(g.values.begin(), g.values.end()) < 0.0)
    throw SolverError(ErrorKind::InvalidArgument, "series bound assumes a non-negative medium");
  const double a = sup_b * std::norm(z);
  constexpr int cap = 200;

  auto tail_bound = [&](int j_last) {
    if (a == 0.0) return 0.0;
    double sum = 0.0;
    for (int j = j_last + 1; j < j_last + 400; ++j) {
      const double t = std::exp(log_term_bound(a, j));
      sum += t;
      if (t < 1e-30 * sum && j > j_last + 2 * a) break;
    }
    return sum;
  };

  int J = terms;
  if (J <= 0) {
    J = 0;
    if (a > 0.0) {
      while (J < cap && std::exp(log_term_bound(a, J + 1)) >= tol) ++J;
      // the first small term can still leave a tail sum just above tol
      while (J < cap && tail_bound(J) > tol) ++J;
    }
  }
  const double bound = tail_bound(J);
  if (bound > tol)
    throw SolverError(ErrorKind::TailNotConverged,
                      "series tail bound " + std::to_string(bound) + " exceeds tolerance");

  const std::size_t n = static_cast<std::size_t>(J) + 1;
  SeriesCoefficients phi{std::vector<quad>(n, 0), std::vector<quad>(n, 0)};
  SeriesCoefficients psi{std::vector<quad>(n, 0), std::vector<quad>(n, 0)};
  phi.value[0] = 1;
  psi.slope[0] = 1;

  // Equal neighbouring cells are advanced as one layer; the update is exact for any length.
  const std::size_t cells = g.size();
  std::size_t i = 0;
  while (i < cells) {
    std::size_t k = i + 1;
    while (k < cells && g.values[k] == g.values[i]) ++k;
    const quad h = static_cast<quad>(k - i) / static_cast<quad>(cells);
    advance_series(phi, static_cast<quad>(g.values[i]), h);
    advance_series(psi, static_cast<quad>(g.values[i]), h);
    i = k;
  }

  const quad zr = z.real(), zi = z.imag();
  const QComplex minus_zz{-(zr * zr - zi * zi), -(2 * zr * zi)};
  SeriesResult r;
  r.boundary = {sum_series(phi.value, minus_zz), sum_series(phi.slope, minus_zz),
                sum_series(psi.value, minus_zz), sum_series(psi.slope, minus_zz)};
  r.truncation_bound = bound;
  r.terms = J;
  return r;
}

}  // namespace qnm
