#include "conegeo/brach.hpp"
#include "conegeo/oracle.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace conegeo;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

std::mt19937_64 rng(777);

ScenarioConfig base_config() {
  ScenarioConfig cfg;
  cfg.potential = ScalarField::constant(0.0, 2);
  cfg.energy_level = 1.0;
  cfg.p = vec2(0, 0);
  cfg.q = vec2(1, 0);
  cfg.window_lo = vec2(-2, -2);
  cfg.window_hi = vec2(2, 2);
  return cfg;
}

DiscretePath straight(const Vec& p, const Vec& q, int N) {
  std::vector<Vec> nodes;
  for (int i = 0; i <= N; ++i) nodes.push_back(Vec(p + (static_cast<double>(i) / N) * (q - p)));
  return DiscretePath(std::move(nodes), Boundary::fixed(p, q));
}

}  // namespace

TEST_CASE("build_scenario validation and warnings") {
  // U = 0, E = 1: factor identically 1
  auto flatish = build_scenario(base_config());
  CHECK(flatish.metric.eval(vec2(0.3, -0.7)).isIdentity(1e-14));
  CHECK_FALSE(flatish.bounded_warning);

  // U = -|x|^4 with lift: growth exponent 4 > 2, no warning
  auto quartic = base_config();
  quartic.potential = ScalarField::from_expression("-pow(|x|, 4)", 2);
  quartic.growth_exponent = 4.0;
  quartic.lift = true;
  CHECK_FALSE(build_scenario(quartic).bounded_warning);

  // U = -|x|: growth exponent 1 <= 2, accepted with warning
  auto linear = base_config();
  linear.potential = ScalarField::from_expression("-|x|", 2);
  linear.growth_exponent = 1.0;
  linear.lift = true;
  CHECK(build_scenario(linear).bounded_warning);

  // energy level below the potential somewhere: witness point named
  auto bad = base_config();
  bad.potential = ScalarField::from_expression("x1", 2);
  bad.energy_level = 1.0;
  CHECK_THROWS_WITH(build_scenario(bad), ContainsSubstring("sample point"));

  // endpoints must avoid singular balls
  auto pinched = base_config();
  pinched.singular_points = {vec2(0, 0)};
  CHECK_THROWS_WITH(build_scenario(pinched), ContainsSubstring("singular balls"));
}

TEST_CASE("transit_time values and scaling") {
  auto sc = build_scenario(base_config());
  CHECK_THAT(transit_time(straight(vec2(0, 0), vec2(1, 0), 32), sc), WithinAbs(1.0, 1e-12));

  // replacing E-U by 4(E-U) halves the transit time
  auto scaled_cfg = base_config();
  scaled_cfg.energy_level = 4.0;
  auto scaled = build_scenario(scaled_cfg);
  std::uniform_real_distribution<double> U(-1, 1);
  std::vector<Vec> nodes;
  for (int i = 0; i <= 16; ++i) nodes.push_back(vec2(U(rng), U(rng)));
  DiscretePath p(nodes, Boundary::fixed(nodes.front(), nodes.back()));
  CHECK_THAT(transit_time(p, scaled), WithinRel(0.5 * transit_time(p, sc), 1e-12));
}

TEST_CASE("transit_time is bounded by the energy (Cauchy-Schwarz)") {
  auto cfg = base_config();
  cfg.potential = ScalarField::from_expression("-|x|*|x|", 2);
  auto sc = build_scenario(cfg);
  std::uniform_real_distribution<double> U(-1, 1);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Vec> nodes;
    for (int i = 0; i <= 12; ++i) nodes.push_back(vec2(U(rng), U(rng)));
    DiscretePath p(nodes, Boundary::fixed(nodes.front(), nodes.back()));
    const double t = transit_time(p, sc);
    const double e = energy(p, sc.metric);
    CHECK(t <= std::sqrt(e) + 1e-12);
    DiscretePath cs = reparam_constant_speed(p, sc.metric);
    CHECK_THAT(transit_time(cs, sc), WithinAbs(std::sqrt(energy(cs, sc.metric)), 1e-6));
  }
}

TEST_CASE("solve: trivial potential gives the straight chord") {
  auto sc = build_scenario(base_config());
  auto sols = solve_brachistochrone(sc, 64, {});
  REQUIRE(sols.size() == 1);
  CHECK(sols[0].converged);
  CHECK_THAT(sols[0].energy, WithinAbs(1.0, 1e-6));
  CHECK_THAT(sols[0].transit_time, WithinAbs(1.0, 1e-6));
  CHECK(sols[0].certificate.pass);
}

TEST_CASE("lift consistency: flowing on the sphere reproduces the chart solution") {
  auto cfg = base_config();
  cfg.potential = ScalarField::from_expression("-pow(|x|, 4)", 2);
  cfg.growth_exponent = 4.0;
  cfg.p = vec2(-1.0, 0.3);
  cfg.q = vec2(1.0, 0.3);

  auto chart_sc = build_scenario(cfg);
  auto chart_sols = solve_brachistochrone(chart_sc, 64, {});
  REQUIRE(chart_sols.size() == 1);
  REQUIRE(chart_sols[0].converged);

  cfg.lift = true;
  auto lifted_sc = build_scenario(cfg);
  auto lifted_sols = solve_brachistochrone(lifted_sc, 64, {});
  REQUIRE(lifted_sols.size() == 1);
  CHECK(lifted_sols[0].converged);
  CHECK_THAT(lifted_sols[0].energy, WithinRel(chart_sols[0].energy, 1e-4));
  CHECK(hausdorff_distance(lifted_sols[0].path, chart_sols[0].path) < 1e-2);

  // the isometry itself: lift the chart solution and compare energies
  std::vector<Vec> lifted_nodes;
  for (const auto& x : chart_sols[0].path.nodes()) lifted_nodes.push_back(stereographic_fwd(x));
  DiscretePath lifted_path(lifted_nodes,
                           Boundary::fixed(lifted_nodes.front(), lifted_nodes.back()));
  const double e_chart = energy(chart_sols[0].path, chart_sc.metric);
  const double e_lift = energy(lifted_path, *lifted_sc.lifted);
  CHECK_THAT(e_lift, WithinAbs(e_chart, 1e-8 * (1 + e_chart)));
}

TEST_CASE("multiplicity: three winding classes, strictly increasing energies") {
  // near-singular angle-deficit factor (|x|^2 + 1e-8)^(-0.85) about the
  // origin: winding classes about the declared vertex stay separated and
  // ordered (deficit cone of angle ratio 0.15 away from the tiny core)
  auto cfg = base_config();
  cfg.potential = ScalarField::from_function(
      2,
      [](const Vec& x) { return 1.0 - std::pow(x.squaredNorm() + 1e-8, 0.85); },
      [](const Vec& x) {
        return Vec(-0.85 * std::pow(x.squaredNorm() + 1e-8, -0.15) * 2.0 * x);
      });
  cfg.energy_level = 1.0;
  cfg.singular_points = {vec2(0, 0)};
  cfg.p = vec2(-1, -0.35);
  cfg.q = vec2(1, 0.0);
  cfg.seed_windings = {0, 1, 2};
  auto sc = build_scenario(cfg);

  FlowOptions opts;
  opts.max_iters = 40000;
  auto sols = solve_brachistochrone(sc, 128, opts);
  REQUIRE(sols.size() == 3);
  for (const auto& s : sols) {
    CHECK(s.converged);
    CHECK(s.certificate.straightness_residual <= 1e-6);
  }
  CHECK(sols[0].energy < sols[1].energy);
  CHECK(sols[1].energy < sols[2].energy);
  // pairwise distinct winding about the singular point
  CHECK(sols[0].winding != sols[1].winding);
  CHECK(sols[1].winding != sols[2].winding);
  CHECK(sols[0].winding != sols[2].winding);
}

TEST_CASE("deduplication collapses seeds that reach the same geodesic") {
  auto sc = build_scenario(base_config());
  ScenarioConfig cfg = sc.config;
  cfg.seed_windings = {0, 0};
  auto sc2 = build_scenario(cfg);
  auto sols = solve_brachistochrone(sc2, 48, {});
  CHECK(sols.size() == 1);
}
