#pragma once

// Independent ground-truth generators used to check the variational solver:
// analytic cone geodesics by developing the cone onto the plane, and a
// brute-force shortest path on a metric-weighted grid graph.

#include "conegeo/path.hpp"

#include <cmath>
#include <queue>
#include <vector>

namespace conegeo {

struct ConeGeodesicOracle {
  double length = 0.0;
  bool through_vertex = false;
  std::vector<Vec> witness;  // chart polyline (r, theta)
};

// Develop the cone dr^2 + a^2 r^2 dtheta^2 to the plane via phi = a * theta.
// With delta the minimal developed angular separation over angle lifts:
// delta < pi gives the direct geodesic (law of cosines in the development),
// delta >= pi the broken one through the apex, length r_p + r_q. Both
// branches agree at delta = pi.
inline ConeGeodesicOracle cone_unroll_geodesic(double alpha, const Vec& p, const Vec& q,
                                               int witness_samples = 129) {
  if (alpha <= 0) throw Error("cone_unroll_geodesic: alpha must be positive");
  if (p[0] <= 0 || q[0] <= 0)
    throw Error("cone_unroll_geodesic: endpoint radii must be positive");

  const double rp = p[0], rq = q[0];
  const double dtheta = std::remainder(q[1] - p[1], 2.0 * M_PI);  // minimal lift, in (-pi, pi]
  const double delta = alpha * std::abs(dtheta);
  const double dir = dtheta >= 0 ? 1.0 : -1.0;

  ConeGeodesicOracle out;
  if (delta < M_PI) {
    out.through_vertex = false;
    out.length = std::sqrt(rp * rp + rq * rq - 2.0 * rp * rq * std::cos(delta));
    const Vec a = vec2(rp, 0.0);
    const Vec b = vec2(rq * std::cos(delta), rq * std::sin(delta));
    for (int i = 0; i < witness_samples; ++i) {
      const double s = static_cast<double>(i) / (witness_samples - 1);
      const Vec w = a + s * (b - a);
      const double r = w.norm();
      const double phi = std::atan2(w[1], w[0]);
      out.witness.push_back(vec2(r, p[1] + dir * phi / alpha));
    }
  } else {
    out.through_vertex = true;
    out.length = rp + rq;
    const int half = witness_samples / 2;
    for (int i = 0; i <= half; ++i)
      out.witness.push_back(vec2(rp * (1.0 - static_cast<double>(i) / half), p[1]));
    for (int i = 1; i <= half; ++i)
      out.witness.push_back(vec2(rq * static_cast<double>(i) / half, q[1]));
  }
  return out;
}

// Dijkstra over the lattice graph on a rectangular chart window. Edge
// weights are the metric lengths of the straight edges (midpoint rule).
// 16-neighbor connectivity keeps the flat-metric metrication error near 1%;
// 8-neighbor would be ~8%. The result is an upper bound on the geodesic
// length that tightens as the resolution grows.
inline double graph_shortest_path(const Metric& metric, const Vec& p, const Vec& q,
                                  const Vec& window_lo, const Vec& window_hi, int resolution,
                                  int connectivity = 16) {
  if (metric.dim() != 2) throw Error("graph_shortest_path: 2-d charts only");
  if (resolution < 16) throw Error("graph_shortest_path: resolution must be at least 16");
  if (connectivity != 8 && connectivity != 16)
    throw Error("graph_shortest_path: connectivity must be 8 or 16");
  for (int k = 0; k < 2; ++k) {
    if (p[k] < window_lo[k] || p[k] > window_hi[k] || q[k] < window_lo[k] ||
        q[k] > window_hi[k])
      throw Error("graph_shortest_path: endpoints must lie inside the window");
  }

  const int R = resolution;
  const double hx = (window_hi[0] - window_lo[0]) / R;
  const double hy = (window_hi[1] - window_lo[1]) / R;
  auto node_point = [&](int ix, int iy) {
    return vec2(window_lo[0] + ix * hx, window_lo[1] + iy * hy);
  };
  auto node_id = [&](int ix, int iy) { return iy * (R + 1) + ix; };
  auto snap = [&](const Vec& x) {
    int ix = static_cast<int>(std::lround((x[0] - window_lo[0]) / hx));
    int iy = static_cast<int>(std::lround((x[1] - window_lo[1]) / hy));
    return std::pair<int, int>{std::clamp(ix, 0, R), std::clamp(iy, 0, R)};
  };

  static const int offsets8[][2] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1},
                                    {1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
  static const int offsets16[][2] = {{1, 0},  {0, 1},  {-1, 0}, {0, -1}, {1, 1},  {1, -1},
                                     {-1, 1}, {-1, -1}, {2, 1},  {1, 2},  {-1, 2}, {-2, 1},
                                     {-2, -1}, {-1, -2}, {1, -2}, {2, -1}};
  const auto* offsets = connectivity == 8 ? offsets8 : offsets16;
  const int n_off = connectivity;

  const auto [sx, sy] = snap(p);
  const auto [tx, ty] = snap(q);
  const int n_nodes = (R + 1) * (R + 1);
  std::vector<double> dist(static_cast<size_t>(n_nodes),
                           std::numeric_limits<double>::infinity());
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
  dist[static_cast<size_t>(node_id(sx, sy))] = 0.0;
  heap.push({0.0, node_id(sx, sy)});
  const int target = node_id(tx, ty);

  while (!heap.empty()) {
    auto [d, u] = heap.top();
    heap.pop();
    if (d > dist[static_cast<size_t>(u)]) continue;
    if (u == target) return d;
    const int ux = u % (R + 1), uy = u / (R + 1);
    const Vec up = node_point(ux, uy);
    for (int k = 0; k < n_off; ++k) {
      const int vx = ux + offsets[k][0], vy = uy + offsets[k][1];
      if (vx < 0 || vx > R || vy < 0 || vy > R) continue;
      const Vec vp = node_point(vx, vy);
      const double w = metric.segment_length(up, vp);
      const int v = node_id(vx, vy);
      if (dist[static_cast<size_t>(u)] + w < dist[static_cast<size_t>(v)]) {
        dist[static_cast<size_t>(v)] = dist[static_cast<size_t>(u)] + w;
        heap.push({dist[static_cast<size_t>(v)], v});
      }
    }
  }
  return dist[static_cast<size_t>(target)];
}

}  // namespace conegeo
