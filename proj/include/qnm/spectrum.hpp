#pragma once

#include <complex>
#include <functional>
#include <vector>

#include "qnm/field_solver.hpp"

namespace qnm {

/// Rectangle [re_min, re_max] x [im_min, im_max] in the open upper half-plane.
struct SpectralWindow {
  double re_min = 0.0, re_max = 1.0;
  double im_min = 0.1, im_max = 1.0;

  /// Throws InvalidArgument unless re_min < re_max and 0 < im_min < im_max.
  void validate() const;
  bool contains(cplx z, double slack = 0.0) const;
  cplx center() const { return {0.5 * (re_min + re_max), 0.5 * (im_min + im_max)}; }
  double width() const { return re_max - re_min; }
  double height() const { return im_max - im_min; }
  /// Grows every side outward by `factor`; the bottom edge is divided by it so it stays positive.
  SpectralWindow dilated(double factor) const;
  /// Mirror image under z -> -conj(z).
  SpectralWindow mirrored() const { return {-re_max, -re_min, im_min, im_max}; }
};

struct QuasiEigenvalue {
  cplx kappa;
  int multiplicity = 1;
  double residual = 0.0;  // |F(kappa)|
  int newton_iters = 0;
};

/// Winding number of f around the closed path gamma(t), t in [0,1].
///
/// Each segment is refined until its phase increment stays below pi/4 and agrees with the sum
/// over its two halves. Throws ZeroOnContour when min|f| < 1e-12 max|f| on the path.
int winding_number(const std::function<cplx(cplx)>& f, const std::function<cplx(double)>& gamma,
                   std::size_t initial_segments = 64);

/// Zeros of F(.;B) inside w with multiplicity.
int winding_count(const PiecewiseStructure& B, const SpectralWindow& w);

struct NewtonResult {
  cplx z;
  int iters = 0;
  bool converged = false;
  double residual = 0.0;
};

/// Newton on F with the variational derivative. Convergence means the step fell below
/// 1e-13 (1+|z|) and |F| < tol times the size of the cancelling terms phi(1), phi'(1)/z.
NewtonResult newton_refine(const PiecewiseStructure& B, cplx z0, double tol = 1e-10,
                           int max_iter = 60);

struct LocateOptions {
  double tol = 1e-10;
  int max_depth = 48;
  int max_dilations = 5;
  double dilation = 1.37;
};

/// All zeros in w, sorted by real then imaginary part.
/// Throws MaxDepthExceeded when bisection cannot separate a cluster.
std::vector<QuasiEigenvalue> locate(const PiecewiseStructure& B, const SpectralWindow& w,
                                    const LocateOptions& opt = {});

/// Winding count on the circle |z - kappa0| = radius.
/// Throws NotIsolated if the circle of radius 2 radius encloses a different count.
int multiplicity(const PiecewiseStructure& B, cplx kappa0, double radius);

/// Closed-form quasi-eigenvalues of B = b inside w, sorted by real part.
std::vector<cplx> constant_spectrum(double b, const SpectralWindow& w);

}  // namespace qnm
