#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "qnm/certificate.hpp"
#include "qnm/error.hpp"
#include "qnm/optimizer.hpp"
#include "qnm/spectrum.hpp"

using namespace qnm;
using std::numbers::pi;

namespace {

const double ln3_4 = std::log(3.0) / 4.0;
const cplx k4(pi, ln3_4);  // root of B == 4

double wrap(double a) { return a - 2.0 * pi * std::floor((a + pi) / (2.0 * pi)); }

// Independent unwrap of arg cos^2(2 kappa x), the phase of phi for B == 4.
std::vector<double> closed_form_phase(cplx kappa, const std::vector<double>& xs) {
  std::vector<double> xi{0.0};
  const int sub = 64;
  for (std::size_t k = 1; k < xs.size(); ++k) {
    double acc = xi.back();
    for (int s = 1; s <= sub; ++s) {
      const double x0 = xs[k - 1] + (xs[k] - xs[k - 1]) * (s - 1) / sub;
      const double x1 = xs[k - 1] + (xs[k] - xs[k - 1]) * s / sub;
      const cplx c0 = std::cos(2.0 * kappa * x0), c1 = std::cos(2.0 * kappa * x1);
      acc += std::arg((c1 * c1) / (c0 * c0));
    }
    xi.push_back(acc);
  }
  return xi;
}

struct Optimum {
  PiecewiseStructure structure;
  cplx kappa;
};

const Optimum& optimum_at_pi() {
  static const Optimum o = [] {
    OptimizeConfig cfg;
    cfg.alpha = pi;
    const auto r = minimize_im_at_frequency(cfg, GridStructure(cfg.N, 4.0));
    return Optimum{r.structure(), r.final_kappa()};
  }();
  return o;
}

}  // namespace

TEST_CASE("phase trace of B == 4") {
  const auto P = PiecewiseStructure::constant(4.0);
  const auto tr = phase_trace(P, k4);
  CHECK(tr.xi.front() == 0.0);
  CHECK(tr.slope_sign == -1);
  CHECK(tr.a1 == 0.0);
  const auto ref = closed_form_phase(k4, tr.xs);
  for (std::size_t k = 0; k < tr.xs.size(); ++k) CHECK(std::abs(tr.xi[k] - ref[k]) < 1e-9);
  for (std::size_t k = 1; k < tr.xs.size(); ++k) CHECK(std::abs(tr.xi[k] - tr.xi[k - 1]) < pi / 2);

  const auto mirror = phase_trace(P, -std::conj(k4));
  CHECK(mirror.slope_sign == 1);
  for (std::size_t k = 0; k < tr.xs.size(); ++k) CHECK(mirror.xi[k] == doctest::Approx(-tr.xi[k]).epsilon(1e-12));
}

TEST_CASE("phase trace on random media") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(0.05, 0.95), b(1.0, 4.0);
  for (int t = 0; t < 10; ++t) {
    std::vector<double> bp{0.0, u(rng), u(rng), 1.0};
    std::sort(bp.begin(), bp.end());
    const auto P = PiecewiseStructure::make(bp, {b(rng), b(rng), b(rng)});
    for (const auto& q : locate(P, {0.5, 8, 0.05, 2})) {
      const auto tr = phase_trace(P, q.kappa, 256);
      CHECK(tr.slope_sign == -1);
      // wrapped phase agrees with a direct evaluation of phi^2
      const auto direct = sample_phi(P, q.kappa, tr.xs);
      for (std::size_t k = 0; k < tr.xs.size(); k += 17) {
        const cplx y = direct.samples[k].y;
        CHECK(std::abs(wrap(tr.xi[k] - std::arg(y * y))) < 1e-9);
      }
    }
  }
}

TEST_CASE("phase trace with a leading zero layer") {
  const auto P = PiecewiseStructure::make({0.0, 0.3, 1.0}, {0.0, 4.0});
  const auto roots = locate(P, {0.5, 8, 0.05, 3});
  REQUIRE(!roots.empty());
  for (const auto& q : roots) {
    const auto tr = phase_trace(P, q.kappa);
    CHECK(tr.a1 == doctest::Approx(0.3));
    for (std::size_t k = 0; k < tr.xs.size() && tr.xs[k] <= 0.3; ++k) CHECK(tr.xi[k] == 0.0);
    CHECK(tr.slope_sign == -1);
  }
}

TEST_CASE("phase trace errors") {
  const auto P = PiecewiseStructure::constant(4.0);
  CHECK_THROWS_AS(phase_trace(P, {0.0, ln3_4}), SolverError);
  try {
    phase_trace(P, {0.0, ln3_4});
  } catch (const SolverError& e) {
    CHECK(e.kind() == ErrorKind::OnImaginaryAxis);
  }
  // for real z, phi is real and phi^2 never changes phase, even through zeros of phi
  const auto tr = phase_trace(PiecewiseStructure::constant(1.0), {pi, 0.0});
  CHECK(tr.slope_sign == 0);
  for (double v : tr.xi) CHECK(v == 0.0);
}

TEST_CASE("switch alignment preconditions") {
  const AdmissibleBounds bounds{1, 4};
  try {
    switch_alignment(PiecewiseStructure::two_layer(2.5, 0.5, 4.0), k4, bounds);
    FAIL("expected NotBangBang");
  } catch (const SolverError& e) {
    CHECK(e.kind() == ErrorKind::NotBangBang);
  }
  try {
    switch_alignment(PiecewiseStructure::constant(4.0), {0.0, ln3_4}, bounds);
    FAIL("expected OnImaginaryAxis");
  } catch (const SolverError& e) {
    CHECK(e.kind() == ErrorKind::OnImaginaryAxis);
  }
}

TEST_CASE("constant medium: variation is the total phase") {
  const auto P = PiecewiseStructure::constant(4.0);
  const AdmissibleBounds bounds{1, 4};
  for (cplx k : {k4, cplx(pi / 2, ln3_4), cplx(2 * pi, ln3_4)}) {
    const auto c = switch_alignment(P, k, bounds);
    CHECK(c.switches.empty());
    CHECK(c.omega == 0.0);
    CHECK(c.max_deviation == 0.0);
    const auto ref = closed_form_phase(k, {0.0, 1.0});
    CHECK(c.max_interval_variation == doctest::Approx(std::abs(ref[1])).epsilon(1e-9));
    CHECK(c.passes() == (std::abs(ref[1]) <= pi + 0.05));
  }
  // at every root off the axis the phase of B == 4 turns by about 2 pi n
  CHECK_FALSE(switch_alignment(P, k4, bounds).passes());
  CHECK_FALSE(switch_alignment(P, {pi / 2, ln3_4}, bounds).passes());
}

TEST_CASE("optimizer output at alpha = pi is certified") {
  const auto& o = optimum_at_pi();
  const AdmissibleBounds bounds{1, 4};
  const auto c = switch_alignment(o.structure, o.kappa, bounds);
  REQUIRE(!c.switches.empty());
  CHECK(c.max_deviation < 0.05);
  CHECK(c.max_interval_variation <= pi + 0.05);
  CHECK(c.nonlinear_mismatch < 0.02);
  CHECK(c.omega >= -pi);
  CHECK(c.omega < pi);

  // second opinion: y^2 = e^{2 i theta} phi^2 is real at every switch point
  std::vector<double> xs;
  for (const auto& s : c.switches) xs.push_back(s.x);
  const auto tr = sample_phi(o.structure, o.kappa, xs);
  for (const auto& s : tr.samples) {
    const cplx y2 = std::polar(1.0, 2.0 * c.theta) * s.y * s.y;
    CHECK(std::abs(y2.imag()) < 0.05 * std::abs(y2));
  }

  // mirror: omega flips sign, deviations are unchanged
  const auto m = switch_alignment(o.structure, -std::conj(o.kappa), bounds);
  CHECK(std::abs(wrap(m.omega + c.omega)) < 1e-9);
  REQUIRE(m.deviations.size() == c.deviations.size());
  for (std::size_t j = 0; j < m.deviations.size(); ++j) CHECK(m.deviations[j] == doctest::Approx(c.deviations[j]).epsilon(1e-6));
  CHECK(m.nonlinear_mismatch < 0.02);
}

TEST_CASE("displaced switch fails the certificate") {
  const auto& o = optimum_at_pi();
  const AdmissibleBounds bounds{1, 4};
  const auto& bp = o.structure.breakpoints();
  std::vector<double> inner(bp.begin() + 1, bp.end() - 1);
  inner[0] += 0.05;
  REQUIRE(inner[0] < inner[1]);
  const auto Q = with_breakpoints(o.structure, inner);
  const auto nr = newton_refine(Q, o.kappa);
  REQUIRE(nr.converged);
  const auto c = switch_alignment(Q, nr.z, bounds);
  CHECK(c.max_deviation > 0.1);
  CHECK_FALSE(c.passes());
  CHECK(c.nonlinear_mismatch > 1e-3);
}

TEST_CASE("nonlinear residual on the imaginary axis") {
  const auto P = PiecewiseStructure::constant(4.0);
  const AdmissibleBounds bounds{1, 4};
  const cplx k(0.0, ln3_4);
  const auto r = nonlinear_residual(P, k, bounds);
  CHECK(r.theta == doctest::Approx(pi / 4));
  CHECK(r.mismatch == 0.0);
  for (double theta : {0.1, 0.7, 1.4}) CHECK(induced_structure(P, k, theta, bounds) == P);
}

TEST_CASE("nonlinear residual of non-optimal media is reported") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  const AdmissibleBounds bounds{1, 4};
  int positive = 0, total = 0;
  for (int t = 0; t < 8; ++t) {
    std::vector<double> bp{0.0, u(rng), u(rng), 1.0};
    std::sort(bp.begin(), bp.end());
    const auto P = PiecewiseStructure::make(bp, {4.0, 1.0, 4.0});
    for (const auto& q : locate(P, {1, 8, 0.05, 2})) {
      const auto r = nonlinear_residual(P, q.kappa, bounds);
      CHECK(r.mismatch >= 0.0);
      CHECK(r.mismatch <= 1.0);
      CHECK(is_bang_bang(r.induced, bounds));
      ++total;
      positive += r.mismatch > 1e-3;
    }
  }
  REQUIRE(total > 0);
  CHECK(positive > total / 2);
}

TEST_CASE("disagreement measure") {
  const auto a = PiecewiseStructure::make({0.0, 0.2, 0.7, 1.0}, {1.0, 4.0, 1.0});
  const auto b = PiecewiseStructure::make({0.0, 0.25, 0.6, 1.0}, {1.0, 4.0, 1.0});
  CHECK(disagreement_measure(a, b) == doctest::Approx(0.05 + 0.1));
  CHECK(disagreement_measure(a, a) == 0.0);
  CHECK(disagreement_measure(a, PiecewiseStructure::constant(2.0)) == doctest::Approx(1.0));
}

TEST_CASE("self-consistent solve from the alpha = pi optimum") {
  const auto& o = optimum_at_pi();
  const AdmissibleBounds bounds{1, 4};
  const auto s = self_consistent_solve(o.kappa, bounds, 2048, 50, o.structure);
  CHECK(s.converged);
  CHECK_NOTHROW(s.require_converged());
  CHECK(s.history.size() <= 20);
  CHECK(std::abs(s.kappa - o.kappa) < 1e-8);
  CHECK(nonlinear_residual(s.structure, s.kappa, bounds).mismatch < 1e-3);
  CHECK(std::abs(charF(s.kappa, s.structure)) < 1e-8);
  CHECK(is_bang_bang(s.structure, bounds));
  REQUIRE(s.y.size() == s.xs.size());
  CHECK(std::abs(s.y.front() - std::polar(1.0, s.theta)) < 1e-14);
}

TEST_CASE("self-consistent solve from a displaced start") {
  const auto& o = optimum_at_pi();
  const AdmissibleBounds bounds{1, 4};
  const auto& bp = o.structure.breakpoints();
  std::vector<double> inner(bp.begin() + 1, bp.end() - 1);
  for (auto& x : inner) x += 0.01;
  const auto start = with_breakpoints(o.structure, inner);
  const auto s = self_consistent_solve(o.kappa, bounds, 2048, 100, start);
  REQUIRE(s.converged);
  CHECK(nonlinear_residual(s.structure, s.kappa, bounds).mismatch < 1e-3);
  CHECK(std::abs(charF(s.kappa, s.structure)) < 1e-8);
  CHECK(s.history.back().switch_shift < 1e-8);
}

TEST_CASE("self-consistent solve on the imaginary axis") {
  const auto s = self_consistent_solve({0.0, 0.3}, {1, 4}, 256);
  REQUIRE(s.converged);
  CHECK(s.structure == PiecewiseStructure::constant(4.0));
  CHECK(s.kappa.real() == 0.0);
  CHECK(s.kappa.imag() == doctest::Approx(ln3_4).epsilon(1e-12));
}

TEST_CASE("self-consistent solve reports non-convergence") {
  const auto s = self_consistent_solve({0.0, 0.3}, {1, 4}, 256, 0);
  CHECK_FALSE(s.converged);
  try {
    s.require_converged();
    FAIL("expected NoConvergence");
  } catch (const SolverError& e) {
    CHECK(e.kind() == ErrorKind::NoConvergence);
  }
  CHECK_THROWS_AS(self_consistent_solve({1.0, 0.3}, {2, 2}, 256), SolverError);
  CHECK_THROWS_AS(self_consistent_solve({1.0, 0.3}, {1, 4}, 256, 10, PiecewiseStructure::constant(2.0)),
                  SolverError);
}
