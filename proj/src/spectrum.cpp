#include "qnm/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "qnm/error.hpp"

namespace qnm {

namespace {

constexpr double kFloor = 1e-12;
constexpr double kMaxStep = std::numbers::pi / 4.0;

double phase(cplx to, cplx from) { return std::arg(to / from); }

class WindingAccumulator {
 public:
  WindingAccumulator(const std::function<cplx(cplx)>& f, const std::function<cplx(double)>& gamma)
      : f_(f), gamma_(gamma) {}

  cplx eval(double t) {
    const cplx v = f_(gamma_(t));
    const double a = std::abs(v);
    if (!std::isfinite(a)) throw SolverError(ErrorKind::NoConvergence, "non-finite F on contour");
    if (a == 0.0) throw SolverError(ErrorKind::ZeroOnContour, "F vanishes on the contour");
    min_abs_ = std::min(min_abs_, a);
    max_abs_ = std::max(max_abs_, a);
    return v;
  }

  void segment(double t0, cplx v0, double t1, cplx v1) {
    struct Item {
      double t0;
      cplx v0;
      double t1;
      cplx v1;
    };
    std::vector<Item> stack{{t0, v0, t1, v1}};
    while (!stack.empty()) {
      const Item it = stack.back();
      stack.pop_back();
      const double tm = 0.5 * (it.t0 + it.t1);
      if (it.t1 - it.t0 < 1e-13) throw SolverError(ErrorKind::ZeroOnContour, "contour refinement stalled");
      const cplx vm = eval(tm);
      const double whole = phase(it.v1, it.v0);
      const double left = phase(vm, it.v0);
      const double right = phase(it.v1, vm);
      if (std::abs(left) < kMaxStep && std::abs(right) < kMaxStep &&
          std::abs(left + right - whole) < 1e-9) {
        total_ += left + right;
      } else {
        stack.push_back({tm, vm, it.t1, it.v1});
        stack.push_back({it.t0, it.v0, tm, vm});
      }
    }
  }

  double total() const { return total_; }
  double min_abs() const { return min_abs_; }
  double max_abs() const { return max_abs_; }

 private:
  const std::function<cplx(cplx)>& f_;
  const std::function<cplx(double)>& gamma_;
  double total_ = 0.0;
  double min_abs_ = std::numeric_limits<double>::infinity();
  double max_abs_ = 0.0;
};

std::function<cplx(double)> rectangle_path(const SpectralWindow& w) {
  const cplx a(w.re_min, w.im_min), b(w.re_max, w.im_min), c(w.re_max, w.im_max),
      d(w.re_min, w.im_max);
  return [=](double t) {
    const double s = 4.0 * t;
    if (s < 1.0) return a + (b - a) * s;
    if (s < 2.0) return b + (c - b) * (s - 1.0);
    if (s < 3.0) return c + (d - c) * (s - 2.0);
    return d + (a - d) * std::min(s - 3.0, 1.0);
  };
}

std::size_t rectangle_segments(const SpectralWindow& w) {
  const double side = std::max(w.width(), w.height());
  return 4 * static_cast<std::size_t>(std::clamp(std::ceil(8.0 * side), 4.0, 4096.0));
}

double cancel_scale(const BoundaryData& bd, cplx z) {
  return std::max({1.0, std::abs(bd.phi1), std::abs(bd.dphi1 / z)});
}

class Locator {
 public:
  Locator(const PiecewiseStructure& B, const LocateOptions& opt) : B_(B), opt_(opt) {}

  void search(const SpectralWindow& w, int count, int depth) {
    if (count == 0) return;
    if (count == 1) {
      const auto nr = newton_refine(B_, w.center(), opt_.tol);
      const double slack = 1e-9 * std::max(w.width(), w.height());
      if (nr.converged && w.contains(nr.z, slack)) {
        found_.push_back({nr.z, 1, nr.residual, nr.iters});
        return;
      }
    }
    if (depth >= opt_.max_depth)
      throw SolverError(ErrorKind::MaxDepthExceeded,
                        "could not isolate " + std::to_string(count) + " zeros near (" +
                            std::to_string(w.center().real()) + ", " +
                            std::to_string(w.center().imag()) + ")");
    // split the longer side; shift the cut if it runs through a zero
    const bool split_re = w.width() >= w.height();
    for (int attempt = 0; attempt < 8; ++attempt) {
      const double frac = 0.5 + 0.0731 * attempt * (attempt % 2 ? 1.0 : -1.0);
      SpectralWindow lo = w, hi = w;
      if (split_re) {
        lo.re_max = hi.re_min = w.re_min + frac * w.width();
      } else {
        lo.im_max = hi.im_min = w.im_min + frac * w.height();
      }
      int n_lo = 0, n_hi = 0;
      try {
        n_lo = winding_count(B_, lo);
        n_hi = winding_count(B_, hi);
      } catch (const SolverError& e) {
        if (e.kind() == ErrorKind::ZeroOnContour) continue;
        throw;
      }
      if (n_lo + n_hi != count) continue;
      search(lo, n_lo, depth + 1);
      search(hi, n_hi, depth + 1);
      return;
    }
    throw SolverError(ErrorKind::MaxDepthExceeded, "no consistent split of a search window");
  }

  std::vector<QuasiEigenvalue> take() { return std::move(found_); }

 private:
  const PiecewiseStructure& B_;
  const LocateOptions& opt_;
  std::vector<QuasiEigenvalue> found_;
};

}  // namespace

void SpectralWindow::validate() const {
  if (!(re_min < re_max) || !(im_min > 0.0) || !(im_min < im_max) || !std::isfinite(re_max) ||
      !std::isfinite(re_min) || !std::isfinite(im_max))
    throw SolverError(ErrorKind::InvalidArgument, "spectral window must satisfy re_min < re_max and 0 < im_min < im_max");
}

bool SpectralWindow::contains(cplx z, double slack) const {
  return z.real() >= re_min - slack && z.real() <= re_max + slack && z.imag() >= im_min - slack &&
         z.imag() <= im_max + slack;
}

SpectralWindow SpectralWindow::dilated(double factor) const {
  const double grow_re = 0.5 * (factor - 1.0) * width();
  const double grow_im = 0.5 * (factor - 1.0) * height();
  return {re_min - grow_re, re_max + grow_re, im_min / factor, im_max + grow_im};
}

int winding_number(const std::function<cplx(cplx)>& f, const std::function<cplx(double)>& gamma,
                   std::size_t initial_segments) {
  WindingAccumulator acc(f, gamma);
  const std::size_t n = std::max<std::size_t>(initial_segments, 4);
  const cplx start = acc.eval(0.0);
  cplx prev = start;
  for (std::size_t k = 0; k < n; ++k) {
    const double t0 = static_cast<double>(k) / static_cast<double>(n);
    const double t1 = static_cast<double>(k + 1) / static_cast<double>(n);
    const cplx next = (k + 1 == n) ? start : acc.eval(t1);
    acc.segment(t0, prev, t1, next);
    prev = next;
  }
  if (acc.min_abs() < kFloor * acc.max_abs())
    throw SolverError(ErrorKind::ZeroOnContour, "|F| on the contour fell below the relative floor");
  return static_cast<int>(std::lround(acc.total() / (2.0 * std::numbers::pi)));
}

int winding_count(const PiecewiseStructure& B, const SpectralWindow& w) {
  w.validate();
  const std::function<cplx(cplx)> f = [&](cplx z) { return charF(z, B); };
  return winding_number(f, rectangle_path(w), rectangle_segments(w));
}

NewtonResult newton_refine(const PiecewiseStructure& B, cplx z0, double tol, int max_iter) {
  NewtonResult r;
  r.z = z0;
  int polish = 0;
  for (r.iters = 1; r.iters <= max_iter; ++r.iters) {
    if (r.z == cplx(0.0)) return r;
    const auto e = evaluate_F(r.z, B);
    if (e.dF == cplx(0.0) || !std::isfinite(std::abs(e.F))) return r;
    const cplx step = e.F / e.dF;
    r.z -= step;
    if (!std::isfinite(std::abs(r.z))) return r;
    if (std::abs(step) < 1e-13 * (1.0 + std::abs(r.z)) && ++polish >= 2) break;
  }
  if (r.z == cplx(0.0)) return r;
  const auto bd = propagate(B, r.z);
  const cplx F = bd.phi1 - cplx(0.0, 1.0) * bd.dphi1 / r.z;
  r.residual = std::abs(F);
  r.converged = r.iters <= max_iter && r.residual < tol * cancel_scale(bd, r.z);
  r.iters = std::min(r.iters, max_iter);
  return r;
}

std::vector<QuasiEigenvalue> locate(const PiecewiseStructure& B, const SpectralWindow& w,
                                    const LocateOptions& opt) {
  w.validate();
  SpectralWindow search_window = w;
  for (int attempt = 0;; ++attempt) {
    int count = 0;
    try {
      count = winding_count(B, search_window);
    } catch (const SolverError& e) {
      if (e.kind() != ErrorKind::ZeroOnContour || attempt >= opt.max_dilations) throw;
      search_window = search_window.dilated(opt.dilation);
      continue;
    }
    Locator loc(B, opt);
    loc.search(search_window, count, 0);
    auto found = loc.take();
    std::erase_if(found, [&](const QuasiEigenvalue& q) { return !w.contains(q.kappa); });
    std::sort(found.begin(), found.end(), [](const QuasiEigenvalue& a, const QuasiEigenvalue& b) {
      if (a.kappa.real() != b.kappa.real()) return a.kappa.real() < b.kappa.real();
      return a.kappa.imag() < b.kappa.imag();
    });
    return found;
  }
}

int multiplicity(const PiecewiseStructure& B, cplx kappa0, double radius) {
  if (!(radius > 0.0)) throw SolverError(ErrorKind::InvalidArgument, "radius must be positive");
  const std::function<cplx(cplx)> f = [&](cplx z) { return charF(z, B); };
  auto circle = [&](double r) {
    return std::function<cplx(double)>(
        [=](double t) { return kappa0 + r * std::polar(1.0, 2.0 * std::numbers::pi * t); });
  };
  const int inner = winding_number(f, circle(radius), 32);
  const int outer = winding_number(f, circle(2.0 * radius), 32);
  if (inner != outer)
    throw SolverError(ErrorKind::NotIsolated, "another zero lies within twice the probe radius");
  return inner;
}

std::vector<cplx> constant_spectrum(double b, const SpectralWindow& w) {
  if (b < 0.0) throw SolverError(ErrorKind::InvalidArgument, "constant medium must be non-negative");
  w.validate();
  std::vector<cplx> out;
  if (b == 0.0 || b == 1.0) return out;
  const double r = std::sqrt(b);
  const double im = std::log(std::abs((r + 1.0) / (r - 1.0))) / (2.0 * r);
  if (im < w.im_min || im > w.im_max) return out;
  const double offset = b > 1.0 ? 0.0 : 0.5;
  const double spacing = std::numbers::pi / r;
  const auto n_lo = static_cast<long>(std::floor(w.re_min / spacing - offset)) - 1;
  const auto n_hi = static_cast<long>(std::ceil(w.re_max / spacing - offset)) + 1;
  for (long n = n_lo; n <= n_hi; ++n) {
    const cplx k(spacing * (static_cast<double>(n) + offset), im);
    if (w.contains(k)) out.push_back(k);
  }
  return out;
}

}  // namespace qnm
