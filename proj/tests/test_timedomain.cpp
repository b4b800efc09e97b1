#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "qnm/error.hpp"
#include "qnm/timedomain.hpp"

using namespace qnm;
using std::numbers::pi;

namespace {

const double ln3_4 = std::log(3.0) / 4.0;

double pulse(double s) { return std::exp(-s * s); }

}  // namespace

TEST_CASE("zero initial data stays at rest") {
  SimulateOptions o;
  o.T = 0.5;
  o.M = 64;
  const auto r = simulate(PiecewiseStructure::constant(2.0), std::vector<double>(65, 0.0),
                          std::vector<double>(65, 0.0), o);
  REQUIRE(!r.energy.empty());
  for (double e : r.energy) CHECK(e == 0.0);
  for (double u : r.u_probe) CHECK(u == 0.0);
}

TEST_CASE("unit medium: travelling pulse follows d'Alembert and leaves") {
  const double w = 0.05;
  auto f = [&](double x) { return pulse((x - 0.3) / w); };
  auto g = [&](double x) { const double s = (x - 0.3) / w; return 2.0 * s / w * pulse(s); };  // -f'
  SimulateOptions o;
  o.T = 1.5;
  o.M = 2000;
  o.probe = 0.6;
  const auto r = simulate(PiecewiseStructure::constant(1.0), f, g, o);
  // u(0.6, t) = f(0.6 - t) while the pulse is inside
  for (std::size_t k = 0; k < r.t.size(); k += 50) {
    if (r.t[k] > 0.6) break;
    CHECK(std::abs(r.u_probe[k] - f(0.6 - r.t[k])) < 2e-3);
  }
  CHECK(r.energy.back() / r.energy.front() < 1e-6);
}

TEST_CASE("discrete energy never increases") {
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> b(0.5, 5.0), u(-1.0, 1.0), c(0.1, 0.9);
  for (int t = 0; t < 5; ++t) {
    std::vector<double> bp{0.0, c(rng), c(rng), 1.0};
    std::sort(bp.begin(), bp.end());
    const auto P = PiecewiseStructure::make(bp, {b(rng), b(rng), b(rng)});
    const double a1 = u(rng), a2 = u(rng), a3 = u(rng);
    SimulateOptions o;
    o.T = 3.0;
    o.M = 300;
    const auto r = simulate(
        P, [&](double x) { return a1 * std::cos(pi * x) + a2 * pulse((x - 0.4) / 0.1); },
        [&](double x) { return a3 * std::sin(3 * x); }, o);
    const double e0 = r.energy.front();
    REQUIRE(e0 > 0.0);
    for (std::size_t k = 1; k < r.energy.size(); ++k) CHECK(r.energy[k] <= r.energy[k - 1] + 1e-12 * e0);
    CHECK(r.energy.back() < e0);
  }
}

TEST_CASE("simulation preconditions") {
  SimulateOptions o;
  o.M = 32;
  const std::vector<double> z(33, 0.0);
  try {
    simulate(PiecewiseStructure::make({0.0, 0.5, 1.0}, {0.0, 4.0}), z, z, o);
    FAIL("expected DegenerateMedium");
  } catch (const SolverError& e) {
    CHECK(e.kind() == ErrorKind::DegenerateMedium);
  }
  o.dt = 1.0 / 32.0;  // limit is 0.9 / 32 for B == 1
  try {
    simulate(PiecewiseStructure::constant(1.0), z, z, o);
    FAIL("expected CFLViolation");
  } catch (const SolverError& e) {
    CHECK(e.kind() == ErrorKind::CFLViolation);
  }
  o.dt.reset();
  CHECK_THROWS_AS(simulate(PiecewiseStructure::constant(1.0), std::vector<double>(10, 0.0), z, o), SolverError);
  o.dt = 0.5 / 32.0;
  CHECK_NOTHROW(simulate(PiecewiseStructure::constant(1.0), z, z, o));
}

TEST_CASE("mode decay of B == 4 matches the resonance") {
  const auto P = PiecewiseStructure::constant(4.0);
  const cplx k(pi, ln3_4);
  double prev = INFINITY;
  for (std::size_t M : {1024, 2048, 4096}) {
    const auto f = excite_and_fit(P, k, 8.0, M);
    INFO("M = " << M);
    CHECK(f.expected == doctest::Approx(2 * ln3_4));
    CHECK(f.rel_error < 0.05);
    // at least first-order convergence under refinement
    CHECK(f.rel_error < prev / 1.8);
    prev = f.rel_error;
  }
}

TEST_CASE("mode decay on a layered medium") {
  const auto P = PiecewiseStructure::make({0.0, 0.35, 0.55, 1.0}, {4.0, 1.0, 4.0});
  const cplx k0(pi / 2, 0.26);
  // find the nearby resonance with a scan-free Newton on F
  cplx k = k0;
  for (int it = 0; it < 30; ++it) {
    const auto ev = evaluate_F(k, P);
    k -= ev.F / ev.dF;
  }
  REQUIRE(std::abs(charF(k, P)) < 1e-10);
  const auto f = excite_and_fit(P, k, 8.0, 1024);
  CHECK(f.rel_error < 0.01);
}

TEST_CASE("excite_and_fit preconditions") {
  try {
    excite_and_fit(PiecewiseStructure::make({0.0, 0.5, 1.0}, {0.0, 4.0}), {pi, 0.3}, 4.0, 128);
    FAIL("expected DegenerateMedium");
  } catch (const SolverError& e) {
    CHECK(e.kind() == ErrorKind::DegenerateMedium);
  }
  // a non-resonant start mixes many modes and does not decay log-linearly
  try {
    excite_and_fit(PiecewiseStructure::constant(4.0), {2.0, 0.05}, 4.0, 256, 1e-4);
    FAIL("expected FitUnstable");
  } catch (const SolverError& e) {
    CHECK(e.kind() == ErrorKind::FitUnstable);
  }
}
