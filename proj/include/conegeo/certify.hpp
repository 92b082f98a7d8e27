#pragma once

#include "conegeo/path.hpp"

#include <cmath>
#include <numeric>

namespace conegeo {

// Residuals for the three defining conditions of a conical geodesic:
// straight off the vertex set, vertex set without parameter interior,
// globally constant speed.
struct GeodesicCertificate {
  double straightness_residual = 0.0;  // chart-length units
  double speed_residual = 0.0;         // relative deviation from mean speed
  bool break_interior_violation = false;
  double tolerance = 0.0;
  bool pass = false;
  int break_count = 0;
};

// Straightness is measured as the metric-weighted (covariant) residual of
// the discrete Euler-Lagrange equation at interior, vertex-free nodes:
// |G(x_i)^{-1} dE/dx_i| / (4N). For the flat metric this is exactly the
// deviation of each node from its neighbors' midpoint. Speed constancy is
// tested globally, across breaks: that is what separates a geodesic from an
// arbitrary broken curve.
inline GeodesicCertificate certify_geodesic(const DiscretePath& path, const Metric& metric,
                                            double tol) {
  GeodesicCertificate cert;
  cert.tolerance = tol;

  const int N = path.segments();
  const BreakStructure bs = break_structure(path, metric);
  cert.break_count = static_cast<int>(bs.count());
  for (const auto& run : bs.break_runs)
    if (run.second - run.first > 2) cert.break_interior_violation = true;

  const std::vector<Vec> grad = energy_gradient(path, metric);
  double worst = 0.0;
  for (int i = 1; i < N; ++i) {
    if (metric.near_vertex(path.node(i))) continue;
    double r;
    if (metric.kind() == MetricKind::LiftedSphere) {
      // gradient lies in the range of J^T; read it back in the chart
      Mat J = stereographic_inv_jacobian(path.node(i));
      Mat JJt = J * J.transpose();
      Vec chart_grad = JJt.llt().solve(J * grad[i]);
      Vec x = detail::stereo_inv_raw(path.node(i));
      double g = metric.factor().valid() ? metric.factor().value(x) : 1.0;
      r = (chart_grad / std::max(g, 1e-300)).norm();
    } else {
      Mat G = metric.eval(path.node(i));
      r = G.llt().solve(grad[i]).norm();
    }
    worst = std::max(worst, r);
  }
  cert.straightness_residual = worst / (4.0 * N);

  double mean = 0.0;
  std::vector<double> speeds(N);
  for (int i = 0; i < N; ++i) {
    speeds[i] = N * metric.segment_length(path.node(i), path.node(i + 1));
    mean += speeds[i];
  }
  mean /= N;
  if (mean > 1e-14) {
    double dev = 0.0;
    for (double v : speeds) dev = std::max(dev, std::abs(v - mean));
    cert.speed_residual = dev / mean;
  }

  cert.pass = cert.straightness_residual <= tol && cert.speed_residual <= tol &&
              !cert.break_interior_violation;
  return cert;
}

inline std::string certificate_to_json(const GeodesicCertificate& c) {
  std::string s = "{";
  s += "\"straightness_residual\": " + format_double(c.straightness_residual) + ", ";
  s += "\"speed_residual\": " + format_double(c.speed_residual) + ", ";
  s += "\"break_interior_violation\": " + std::string(c.break_interior_violation ? "true" : "false") + ", ";
  s += "\"pass\": " + std::string(c.pass ? "true" : "false");
  s += "}";
  return s;
}

struct ShootResult {
  DiscretePath path;
  bool hit_vertex = false;  // integration halted inside a vertex ball
};

namespace detail {

inline Vec geodesic_acceleration(const Metric& metric, const Vec& x, const Vec& v) {
  switch (metric.kind()) {
    case MetricKind::FlatEuclidean:
      return Vec::Zero(x.size());
    case MetricKind::Conformal: {
      const double g = metric.factor().value(x);
      const Vec gg = metric.factor().gradient(x);
      // Christoffels of g(x) delta_ij:
      //   acc_k = -(1/2g) (2 (grad g . v) v_k - |v|^2 d_k g)
      return Vec((-1.0 / (2.0 * g)) * (2.0 * gg.dot(v) * v - v.squaredNorm() * gg));
    }
    case MetricKind::EuclideanCone: {
      const double a = metric.alpha();
      Vec acc(2);
      acc[0] = a * a * x[0] * v[1] * v[1];
      acc[1] = x[0] > 0 ? -2.0 * v[0] * v[1] / x[0] : 0.0;
      return acc;
    }
    case MetricKind::LiftedSphere:
      throw Error("shoot: integrate in the base chart; lifted-sphere shooting is not supported");
  }
  return Vec();
}

}  // namespace detail

// Fourth-order integration of the local geodesic equation from (p, v).
// Halts with a flag if the trajectory enters a vertex ball: the initial
// value problem does not continue through vertices.
inline ShootResult shoot(const Metric& metric, const Vec& p, const Vec& v, int n_steps,
                         double T_max) {
  if (n_steps < 2) throw Error("shoot: need at least 2 steps");
  if (metric.near_vertex(p)) throw Error("shoot: start point " + format_point(p) +
                                         " lies inside a vertex ball (singular start)");
  const double h = T_max / n_steps;
  std::vector<Vec> nodes;
  nodes.reserve(n_steps + 1);
  nodes.push_back(p);

  Vec x = p, u = v;
  bool hit = false;
  for (int s = 0; s < n_steps; ++s) {
    const Vec k1x = u;
    const Vec k1v = detail::geodesic_acceleration(metric, x, u);
    const Vec k2x = u + 0.5 * h * k1v;
    const Vec k2v = detail::geodesic_acceleration(metric, x + 0.5 * h * k1x, k2x);
    const Vec k3x = u + 0.5 * h * k2v;
    const Vec k3v = detail::geodesic_acceleration(metric, x + 0.5 * h * k2x, k3x);
    const Vec k4x = u + h * k3v;
    const Vec k4v = detail::geodesic_acceleration(metric, x + h * k3x, k4x);
    x = x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
    u = u + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    if (metric.near_vertex(x)) {
      hit = true;
      break;
    }
    nodes.push_back(x);
  }
  if (nodes.size() < 3) throw Error("shoot: trajectory entered a vertex ball immediately");
  Boundary bd = Boundary::fixed(nodes.front(), nodes.back());
  return ShootResult{DiscretePath(std::move(nodes), std::move(bd)), hit};
}

// Metric speed |gamma'|_g at the start of a shot trajectory; conserved along
// exact solutions (first integral of the geodesic equation).
inline double metric_speed(const Metric& metric, const Vec& x, const Vec& v) {
  if (metric.near_vertex(x)) throw Error("metric speed queried inside a vertex ball");
  Mat G = metric.eval(x);
  return std::sqrt(std::max(0.0, v.dot(G * v)));
}

}  // namespace conegeo
