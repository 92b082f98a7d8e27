#include "conegeo/metric.hpp"
#include "conegeo/path.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace conegeo;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

std::mt19937_64 rng(20240811);

Vec random_point(int dim, double lo, double hi) {
  std::uniform_real_distribution<double> U(lo, hi);
  Vec x(dim);
  for (int k = 0; k < dim; ++k) x[k] = U(rng);
  return x;
}

Vec random_sphere_point(int n) {
  std::normal_distribution<double> N01(0, 1);
  Vec y(n + 1);
  for (int k = 0; k <= n; ++k) y[k] = N01(rng);
  y.normalize();
  return y;
}

}  // namespace

TEST_CASE("metric_eval basic values") {
  CHECK(Metric::flat(3).eval(vec3(1, 2, 3)).isIdentity(1e-15));

  // dr^2 + a^2 r^2 dtheta^2 at a = 0.5, r = 2: diag(1, 1)
  Mat g = Metric::cone(0.5).eval(vec2(2.0, 0.0));
  CHECK_THAT(g(0, 0), WithinAbs(1.0, 1e-15));
  CHECK_THAT(g(1, 1), WithinAbs(1.0, 1e-15));
  CHECK_THAT(g(0, 1), WithinAbs(0.0, 1e-15));

  // conformal factor 1/(E-U) with U = 0, E = 1
  Metric conf = brach_metric(ScalarField::constant(0.0, 2), 1.0);
  CHECK(conf.eval(random_point(2, -3, 3)).isIdentity(1e-15));
}

TEST_CASE("metric_eval is symmetric positive definite off vertices") {
  std::vector<Metric> metrics;
  metrics.push_back(Metric::cone(0.7));
  metrics.push_back(Metric::conformal(ScalarField::from_expression("1/(1 + |x|*|x|)", 2)));
  metrics.push_back(
      induced_sphere_metric(Metric::conformal(ScalarField::from_expression("1/(1+|x|*|x|)", 2)), 4.0));
  for (const auto& m : metrics) {
    for (int trial = 0; trial < 50; ++trial) {
      Vec x;
      if (m.kind() == MetricKind::LiftedSphere) {
        x = random_sphere_point(2);
        if ((x - m.north_pole()).norm() < 1e-3) continue;
      } else if (m.kind() == MetricKind::EuclideanCone) {
        x = vec2(std::uniform_real_distribution<double>(0.1, 3.0)(rng),
                 std::uniform_real_distribution<double>(-6.0, 6.0)(rng));
      } else {
        x = random_point(2, -2, 2);
      }
      Mat g = m.eval(x);
      CHECK((g - g.transpose()).norm() < 1e-13);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(g)};
      // the lifted form is degenerate only along the off-sphere fiber
      const int expect_pos = m.kind() == MetricKind::LiftedSphere ? 2 : g.rows();
      int n_pos = 0;
      for (int k = 0; k < es.eigenvalues().size(); ++k)
        if (es.eigenvalues()[k] > 0) ++n_pos;
      CHECK(n_pos >= expect_pos);
    }
  }
}

TEST_CASE("metric_grad values and errors") {
  CHECK(Metric::flat(2).factor_gradient(vec2(4, -1)).isZero(1e-15));

  Metric linear = Metric::conformal(ScalarField::from_expression("1 + x1", 2));
  Vec g = linear.factor_gradient(vec2(0, 0));
  CHECK_THAT(g[0], WithinAbs(1.0, 1e-14));
  CHECK_THAT(g[1], WithinAbs(0.0, 1e-14));

  CHECK_THROWS_WITH(Metric::cone(1.0).factor_gradient(vec2(1, 0)),
                    ContainsSubstring("not defined"));
  Metric with_vertex =
      Metric::conformal(ScalarField::from_expression("|x|*|x|", 2), {vec2(0, 0)});
  CHECK_THROWS_WITH(with_vertex.factor_gradient(vec2(0, 0)), ContainsSubstring("vertex"));
}

TEST_CASE("conformal gradient of 1/(E-U) with quadratic U matches finite differences") {
  // U = -|x|^2, E = 1: factor 1/(1+|x|^2), closed-form gradient via the chain rule
  Metric m = brach_metric(ScalarField::from_expression("-|x|*|x|", 2), 1.0);
  const double h = 1e-5;
  for (int trial = 0; trial < 50; ++trial) {
    Vec x = random_point(2, -2, 2);
    Vec g = m.factor_gradient(x);
    for (int k = 0; k < 2; ++k) {
      Vec hi = x, lo = x;
      hi[k] += h;
      lo[k] -= h;
      const double fd =
          (m.eval(hi)(0, 0) - m.eval(lo)(0, 0)) / (2 * h);
      CHECK_THAT(g[k], WithinAbs(fd, 1e-6));
    }
  }
}

TEST_CASE("stereographic projection round trips") {
  CHECK((stereographic_inv(vec3(0, 0, -1)) - vec2(0, 0)).norm() < 1e-15);
  CHECK((stereographic_inv(vec3(1, 0, 0)) - vec2(1, 0)).norm() < 1e-15);

  for (int trial = 0; trial < 200; ++trial) {
    Vec x = random_point(2, -5, 5);
    CHECK((stereographic_inv(stereographic_fwd(x)) - x).norm() < 1e-12 * (1 + x.norm()));
    Vec y = random_sphere_point(2);
    if (1.0 - y[2] < 1e-6) continue;
    CHECK((stereographic_fwd(stereographic_inv(y)) - y).norm() < 1e-12);
  }

  // dimension 3 as well
  for (int trial = 0; trial < 50; ++trial) {
    Vec x = random_point(3, -4, 4);
    CHECK((stereographic_inv(stereographic_fwd(x)) - x).norm() < 1e-12 * (1 + x.norm()));
  }
}

TEST_CASE("stereographic_inv error cases") {
  CHECK_THROWS_WITH(stereographic_inv(vec3(0, 0, 1)), ContainsSubstring("north pole"));
  CHECK_THROWS_WITH(stereographic_inv(vec3(0.5, 0, 0)), ContainsSubstring("not on the unit sphere"));
}

TEST_CASE("induced metric at the south pole equals the Jacobian Gram matrix") {
  Metric base = Metric::conformal(ScalarField::constant(1.0, 2));
  Metric lifted = induced_sphere_metric(base);

  const Vec south = vec3(0, 0, -1);
  Mat g = lifted.eval(south);

  // finite-difference Jacobian of the inverse map at the south pole
  const double h = 1e-6;
  Mat J_fd = Mat::Zero(2, 3);
  for (int j = 0; j < 3; ++j) {
    Vec hi = south, lo = south;
    hi[j] += h;
    lo[j] -= h;
    J_fd.col(j) = (detail::stereo_inv_raw(hi) - detail::stereo_inv_raw(lo)) / (2 * h);
  }
  CHECK((g - Mat(J_fd.transpose() * J_fd)).norm() < 1e-6);

  // analytic check: the chart scale at the south pole is 1/2
  CHECK_THAT(g(0, 0), WithinAbs(0.25, 1e-12));
  CHECK_THAT(g(1, 1), WithinAbs(0.25, 1e-12));
  CHECK_THAT(g(2, 2), WithinAbs(0.0, 1e-12));
}

TEST_CASE("induced metric vanishes at the north pole") {
  Metric lifted = induced_sphere_metric(
      Metric::conformal(ScalarField::from_expression("1/(1 + pow(|x|, 4))", 2)), 4.0);
  CHECK(lifted.eval(vec3(0, 0, 1)).isZero(0.0));
  CHECK_FALSE(lifted.bounded_warning());

  Metric warned = induced_sphere_metric(
      Metric::conformal(ScalarField::from_expression("1/(1 + |x|)", 2)), 1.0);
  CHECK(warned.bounded_warning());
}

TEST_CASE("chart Jacobian scaling along a ray") {
  // The tangent operator norm of the inverse chart map is 1/(1 - y_{n+1}) =
  // (1+|x|^2)/2, growing quadratically in |x|; the pole gap sqrt(1-y_{n+1})
  // itself decays like 1/|x|. Both rates are pinned here.
  auto op_norm = [](const Vec& y) {
    Mat J = stereographic_inv_jacobian(y);
    // restricted to the sphere tangent space the map is conformal with
    // scale 1/(1 - y_{n+1}); measure it on an explicit tangent vector
    Vec t = vec3(-y[1], y[0], 0);
    if (t.norm() < 1e-12) t = vec3(1, 0, 0);
    t.normalize();
    return (J * t).norm();
  };
  const Vec y10 = stereographic_fwd(vec2(10, 0));
  const Vec y100 = stereographic_fwd(vec2(100, 0));

  const double ratio_norm = op_norm(y100) / op_norm(y10);
  CHECK_THAT(ratio_norm, WithinAbs((1.0 + 100.0 * 100.0) / (1.0 + 10.0 * 10.0), 0.5));

  const double gap10 = std::sqrt(1.0 - y10[2]);
  const double gap100 = std::sqrt(1.0 - y100[2]);
  CHECK_THAT(gap10 / gap100, WithinAbs(10.0, 0.5));  // factor 10 within 5%
}

TEST_CASE("brach_metric values and vertex handling") {
  // U = -|x|^2, E = 1 at (1,0): factor 1/2
  Metric m = brach_metric(ScalarField::from_expression("-|x|*|x|", 2), 1.0);
  CHECK_THAT(m.eval(vec2(1, 0))(0, 0), WithinAbs(0.5, 1e-14));

  // a potential diverging to -infinity at the origin: factor -> 0, vertex recorded
  auto U = ScalarField::from_function(
      2, [](const Vec& x) { return -1.0 / std::max(x.norm(), 1e-300); });
  Metric sing = brach_metric(U, 1.0, {vec2(0, 0)});
  REQUIRE(sing.vertices().size() == 1);
  CHECK(sing.near_vertex(vec2(0, 0)));
  CHECK(sing.eval(vec2(0, 0)).isZero(0.0));
  CHECK(sing.eval(vec2(1e-4, 0))(0, 0) < 1.1e-4);

  // energy-level violation names the point
  Metric bad = brach_metric(ScalarField::constant(2.0, 2), 1.0);
  CHECK_THROWS_WITH(bad.eval(vec2(3, 4)), ContainsSubstring("(3, 4)"));
}

TEST_CASE("pullback isometry for matched node sets") {
  Metric base = Metric::conformal(ScalarField::from_expression("1/(1 + |x|*|x|)", 2));
  Metric lifted = induced_sphere_metric(base, 4.0);
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Vec> chart, sphere;
    for (int i = 0; i <= 24; ++i) {
      Vec x = vec2(U(rng), U(rng));
      chart.push_back(x);
      sphere.push_back(stereographic_fwd(x));
    }
    DiscretePath cp(chart, Boundary::fixed(chart.front(), chart.back()));
    DiscretePath sp(sphere, Boundary::fixed(sphere.front(), sphere.back()));
    const double ec = energy(cp, base);
    const double el = energy(sp, lifted);
    CHECK_THAT(el, WithinAbs(ec, 1e-8 * (1 + std::abs(ec))));
  }
}
