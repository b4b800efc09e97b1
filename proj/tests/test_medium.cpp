#include <random>

#include "doctest.h"
#include "qnm/error.hpp"
#include "qnm/medium.hpp"
#include "qnm/structure_io.hpp"

using namespace qnm;

namespace {

const AdmissibleBounds box{1.0, 4.0};

GridStructure random_grid(std::mt19937& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return GridStructure(v);
}

}  // namespace

TEST_CASE("bounds validation") {
  CHECK_NOTHROW((AdmissibleBounds{0.0, 1.0}.validate()));
  CHECK_THROWS_AS((AdmissibleBounds{-1.0, 1.0}.validate()), SolverError);
  CHECK_THROWS_AS((AdmissibleBounds{2.0, 1.0}.validate()), SolverError);
  CHECK_THROWS_AS((AdmissibleBounds{0.0, 0.0}.validate()), SolverError);
}

TEST_CASE("canonical structures merge equal neighbours") {
  auto p = PiecewiseStructure::make({0.0, 0.25, 0.5, 1.0}, {4.0, 4.0, 1.0});
  CHECK(p.layer_count() == 2);
  CHECK(p.breakpoints() == std::vector<double>{0.0, 0.5, 1.0});
  CHECK(p.value_at(0.5) == 1.0);
  CHECK(p.value_at(0.49) == 4.0);

  CHECK_THROWS_AS((PiecewiseStructure::make({0.0, 0.6, 0.5, 1.0}, {1, 2, 3})), SolverError);
  CHECK_THROWS_AS((PiecewiseStructure::make({0.1, 1.0}, {1})), SolverError);
  CHECK_THROWS_AS((PiecewiseStructure::make({0.0, 1.0}, {1, 2})), SolverError);
}

TEST_CASE("project_to_box") {
  CHECK(project_to_box(GridStructure({0.5, 5.0}), box).values == std::vector<double>{1.0, 4.0});
  CHECK(project_to_box(GridStructure({2.0, 3.0}), box).values == std::vector<double>{2.0, 3.0});
  CHECK(project_to_box(GridStructure({1.0, 4.0}), box).values == std::vector<double>{1.0, 4.0});

  std::mt19937 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    auto g = random_grid(rng, 17, -2.0, 7.0);
    auto once = project_to_box(g, box);
    CHECK(project_to_box(once, box).values == once.values);
  }
}

TEST_CASE("round_to_extreme") {
  auto r = round_to_extreme(GridStructure({1.01, 3.99}), box, 0.1);
  CHECK(r.structure.breakpoints() == std::vector<double>{0.0, 0.5, 1.0});
  CHECK(r.structure.values() == std::vector<double>{1.0, 4.0});
  CHECK(r.forced_cells == 0);

  auto merged = round_to_extreme(GridStructure(4, 4.0), box, 0.1);
  CHECK(merged.structure.layer_count() == 1);
  CHECK(merged.structure.values()[0] == 4.0);

  auto tie = round_to_extreme(GridStructure({2.5}), box, 0.1);
  CHECK(tie.structure.values()[0] == 1.0);
  CHECK(tie.forced_cells == 1);
  CHECK(tie.forced_measure == doctest::Approx(1.0));

  std::mt19937 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    auto g = random_grid(rng, 23, 1.0, 4.0);
    auto out = round_to_extreme(g, box, 0.2);
    CHECK_NOTHROW(switch_points(out.structure, box));
    CHECK(extremality_measure(to_grid(out.structure, 23), box, 1e-9) == 0.0);
  }
}

TEST_CASE("switch points") {
  auto p = PiecewiseStructure::make({0.0, 0.3, 0.7, 1.0}, {1, 4, 1});
  auto sw = switch_points(p, box);
  REQUIRE(sw.size() == 2);
  CHECK(sw[0].x == 0.3);
  CHECK(sw[0].direction == SwitchDirection::Up);
  CHECK(sw[1].x == 0.7);
  CHECK(sw[1].direction == SwitchDirection::Down);

  CHECK(switch_points(PiecewiseStructure::constant(4.0), box).empty());

  auto down = switch_points(PiecewiseStructure::two_layer(4.0, 0.5, 1.0), box);
  REQUIRE(down.size() == 1);
  CHECK(down[0].direction == SwitchDirection::Down);

  try {
    switch_points(PiecewiseStructure::two_layer(2.0, 0.5, 4.0), box);
    FAIL("expected NotBangBang");
  } catch (const SolverError& e) {
    CHECK(e.kind() == ErrorKind::NotBangBang);
  }
}

TEST_CASE("extremality measure") {
  CHECK(extremality_measure(GridStructure({1, 4, 4, 1}), box, 1e-6) == 0.0);
  CHECK(extremality_measure(GridStructure(8, 2.5), box, 1e-6) == 1.0);
  CHECK(extremality_measure(GridStructure({2.5, 2.5, 4, 4}), box, 1e-6) == 0.5);
}

TEST_CASE("grid round trip") {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    auto g = random_grid(rng, 32, 1.0, 4.0);
    for (std::size_t i = 0; i < g.size(); i += 3) g.values[i] = 2.0;
    CHECK(to_grid(to_piecewise(g), 32).values == g.values);
  }
  auto coarse = to_grid(PiecewiseStructure::two_layer(1.0, 0.25, 4.0), 2);
  CHECK(coarse.values[0] == doctest::Approx(2.5));
  CHECK(coarse.values[1] == 4.0);
}

TEST_CASE("leading zero interval") {
  CHECK(leading_zero_interval(PiecewiseStructure::two_layer(0.0, 0.4, 2.0)) == 0.4);
  CHECK(leading_zero_interval(PiecewiseStructure::two_layer(1.0, 0.4, 0.0)) == 0.0);
  CHECK(leading_zero_interval(PiecewiseStructure::constant(0.0)) == 1.0);
}

TEST_CASE("perturbed and with_breakpoints") {
  auto p = PiecewiseStructure::two_layer(1.0, 0.3, 4.0);
  auto q = perturbed(p, GridStructure({1.0, -1.0}), 0.5);
  CHECK(q.breakpoints() == std::vector<double>{0.0, 0.3, 0.5, 1.0});
  CHECK(q.values() == std::vector<double>{1.5, 4.5, 3.5});

  std::vector<double> moved{0.6};
  auto r = with_breakpoints(p, moved);
  CHECK(r.breakpoints() == std::vector<double>{0.0, 0.6, 1.0});
  CHECK(r.values() == p.values());
}

TEST_CASE("structure file round trip") {
  StructureFile f{box, PiecewiseStructure::make({0.0, 0.125, 0.6, 1.0}, {4, 1, 4})};
  auto back = parse_structure(dump_structure(f));
  CHECK(back.structure == f.structure);
  CHECK(back.bounds.b1 == 1.0);
  CHECK(back.bounds.b2 == 4.0);

  CHECK_THROWS_AS(parse_structure("{not json"), SolverError);
  CHECK_THROWS_AS(parse_structure(R"({"bounds":[1,4],"breakpoints":[0,1],"values":[5]})"),
                  SolverError);
}
