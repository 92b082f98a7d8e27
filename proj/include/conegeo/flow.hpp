#pragma once

#include "conegeo/certify.hpp"

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

namespace conegeo {

struct FlowOptions {
  int max_iters = 5000;
  // Convergence target for the certificate's straightness residual; vertex
  // slides must additionally be stationary.
  double tol_residual = 1e-6;
  // Initial trial step; 0 selects the default 0.1/N^2 for the plain
  // gradient and 1.0 for preconditioned directions.
  double step0 = 0.0;
  double backtrack = 0.5;       // step shrink factor per rejected trial
  double min_decrease = 1e-4;   // Armijo fraction: dE <= -nu * step * <grad, dir>
  double step_underflow = 1e-14;

  // How the descent direction is built from the energy gradient. The
  // pseudo-gradient contract only needs a positive pairing with dE.
  //   None    raw chart-coordinate gradient
  //   Metric  G^{-1}-weighted (Riemannian) gradient
  //   Sobolev Metric, then smoothed by a Dirichlet H^1 solve along the path
  enum class Precond { None, Metric, Sobolev };
  Precond precond = Precond::Sobolev;
};

struct VertexSlideEvent {
  int iteration = 0;
  double tau_before = 0.0;
  double tau_after = 0.0;
};

struct VertexCaptureEvent {
  int iteration = 0;
  int node = 0;
};

struct FlowReport {
  std::vector<double> energy_trace;  // energy after each iteration
  std::vector<double> step_trace;    // step used (0 when rejected)
  std::vector<char> accept_trace;    // 1 accepted, 0 rejected
  long accepted = 0;
  long rejected = 0;
  std::vector<VertexSlideEvent> slides;
  std::vector<VertexCaptureEvent> captures;
  bool converged = false;
  double final_energy = 0.0;
  double final_residual = 0.0;
  GeodesicCertificate final_certificate;
};

// dE(path)[w]: directional derivative of the discrete energy along a node
// displacement field. w must vanish at boundary nodes and at vertex-incident
// nodes (the admissible-variation support condition).
inline double first_variation(const DiscretePath& path, const Metric& metric,
                              const std::vector<Vec>& w) {
  if (w.size() != static_cast<size_t>(path.node_count()))
    throw Error("first_variation: displacement field has " + std::to_string(w.size()) +
                " entries for " + std::to_string(path.node_count()) + " nodes");
  std::string offenders;
  for (int i = 0; i < path.node_count(); ++i) {
    const bool admissible = path.node_movable(i) && !metric.near_vertex(path.node(i));
    if (!admissible && w[static_cast<size_t>(i)].norm() != 0.0)
      offenders += (offenders.empty() ? "" : ", ") + std::to_string(i);
  }
  if (!offenders.empty())
    throw Error("first_variation: displacement is supported on fixed or vertex-incident "
                "nodes: " + offenders);
  const std::vector<Vec> grad = energy_gradient(path, metric);
  double v = 0.0;
  for (int i = 0; i < path.node_count(); ++i) v += grad[static_cast<size_t>(i)].dot(w[static_cast<size_t>(i)]);
  return v;
}

namespace detail {

inline std::vector<char> movable_mask(const DiscretePath& path, const Metric& metric) {
  std::vector<char> mask(path.node_count(), 0);
  for (int i = 0; i < path.node_count(); ++i)
    mask[static_cast<size_t>(i)] = path.node_movable(i) && !metric.near_vertex(path.node(i));
  return mask;
}

// Covariant straightness residual from an already-computed gradient.
inline double straightness_residual(const DiscretePath& path, const Metric& metric,
                                    const std::vector<Vec>& grad,
                                    const std::vector<char>& mask) {
  const int N = path.segments();
  double worst = 0.0;
  for (int i = 1; i < N; ++i) {
    if (!mask[static_cast<size_t>(i)]) continue;
    double r;
    if (metric.kind() == MetricKind::LiftedSphere) {
      Mat J = stereographic_inv_jacobian(path.node(i));
      Mat JJt = J * J.transpose();
      Vec chart_grad = JJt.llt().solve(J * grad[static_cast<size_t>(i)]);
      Vec x = stereo_inv_raw(path.node(i));
      double g = metric.factor().valid() ? metric.factor().value(x) : 1.0;
      r = (chart_grad / std::max(g, 1e-300)).norm();
    } else {
      Mat G = metric.eval(path.node(i));
      r = G.llt().solve(grad[static_cast<size_t>(i)]).norm();
    }
    worst = std::max(worst, r);
  }
  return worst / (4.0 * N);
}

// Descent direction per the selected preconditioner. Returns the pairing
// <grad, dir> alongside. Preconditioned directions are trust-capped per
// node: the metric-norm displacement of any node at unit step stays within
// two mean cells, which keeps the quadratic model honest where the metric
// degenerates (cone angular weights near the apex).
inline std::pair<std::vector<Vec>, double> descent_direction(
    const DiscretePath& path, const Metric& metric, const std::vector<Vec>& raw_grad,
    const std::vector<char>& mask, FlowOptions::Precond precond, double path_length) {
  const int M = path.node_count();
  const bool on_sphere = metric.kind() == MetricKind::LiftedSphere;
  std::vector<Vec> dir(static_cast<size_t>(M), Vec::Zero(path.dim()));

  // Sphere nodes are retracted after every proposal, so only the tangential
  // gradient component produces energy decrease; project it out up front and
  // measure the Armijo pairing against the projected field.
  std::vector<Vec> grad = raw_grad;
  if (on_sphere) {
    for (int i = 0; i < M; ++i) {
      const Vec& y = path.node(i);
      grad[static_cast<size_t>(i)] -= grad[static_cast<size_t>(i)].dot(y) * y;
    }
  }

  // Metric weighting (identity for the plain gradient; the Sobolev branch
  // below assembles its own system and overwrites these).
  for (int i = 0; i < M && precond != FlowOptions::Precond::Sobolev; ++i) {
    if (!mask[static_cast<size_t>(i)]) continue;
    if (precond == FlowOptions::Precond::None) {
      dir[static_cast<size_t>(i)] = grad[static_cast<size_t>(i)];
    } else if (on_sphere) {
      // scale by the inverse conformal weight read through the chart
      Vec x = stereo_inv_raw(path.node(i));
      double g = metric.factor().valid() ? metric.factor().value(x) : 1.0;
      Mat J = stereographic_inv_jacobian(path.node(i));
      double scale = J.squaredNorm() / path.dim();  // ~ |J|^2, makes the step chart-sized
      dir[static_cast<size_t>(i)] = grad[static_cast<size_t>(i)] / std::max(g * scale, 1e-300);
    } else {
      Mat G = metric.eval(path.node(i));
      // tiny Tikhonov floor keeps near-vertex angular weights invertible
      G.diagonal().array() += 1e-14 * (1.0 + G.trace());
      dir[static_cast<size_t>(i)] = G.llt().solve(grad[static_cast<size_t>(i)]);
    }
  }

  if (precond != FlowOptions::Precond::None) {
    const double cap = 2.0 * std::max(path_length, 1e-9) / path.segments();
    for (int i = 0; i < M; ++i) {
      if (!mask[static_cast<size_t>(i)]) continue;
      auto& d = dir[static_cast<size_t>(i)];
      double norm_g;
      if (metric.kind() == MetricKind::LiftedSphere) {
        norm_g = d.norm();
      } else {
        Mat G = metric.eval(path.node(i));
        norm_g = std::sqrt(std::max(0.0, d.dot(G * d)));
      }
      if (norm_g > cap) d *= cap / norm_g;
      // also cap the chart displacement at the local segment reach: where
      // the form degenerates, a bounded metric step can still be a huge
      // chart swing that leaves the quadratic model's validity
      const double reach = std::max((path.node(i) - path.node(i - 1)).norm(),
                                    (path.node(i + 1) - path.node(i)).norm());
      const double chart_norm = d.norm();
      if (reach > 0 && chart_norm > reach) d *= reach / chart_norm;
    }
  }

  if (precond == FlowOptions::Precond::Sobolev) {
    // Riesz representative of dE in the metric H^1 inner product along the
    // path: solve T w = grad with T = mu diag(G(x_i)) + N^2 A_W, where A_W
    // is the second-difference operator weighted by the segment forms. T is
    // symmetric positive definite, so <grad, w> > 0 whenever grad != 0.
    const int N = path.segments();
    const double nn = static_cast<double>(N) * N;
    int i = 1;
    while (i < M - 1) {
      if (!mask[static_cast<size_t>(i)]) {
        ++i;
        continue;
      }
      int j = i;
      while (j + 1 < M - 1 && mask[static_cast<size_t>(j + 1)]) ++j;
      const int n_run = j - i + 1;
      std::vector<Mat> B(static_cast<size_t>(n_run));
      std::vector<Mat> C(static_cast<size_t>(n_run));  // coupling k -> k+1
      std::vector<Vec> r(static_cast<size_t>(n_run));
      auto tangent_proj = [&](int node) {
        const Vec& y = path.node(node);
        return Mat(Mat::Identity(path.dim(), path.dim()) - y * y.transpose());
      };
      for (int k = 0; k < n_run; ++k) {
        const int node = i + k;
        Mat W_left = metric.segment_weight(path.node(node - 1), path.node(node));
        Mat W_right = metric.segment_weight(path.node(node), path.node(node + 1));
        Mat G = metric.eval(path.node(node));
        B[static_cast<size_t>(k)] = G + nn * (W_left + W_right);
        double ridge = 1e-12;
        if (on_sphere) {
          // restrict the system to the tangent spaces the retraction acts in
          const Mat P = tangent_proj(node);
          B[static_cast<size_t>(k)] = Mat(P * B[static_cast<size_t>(k)] * P);
          ridge = 1e-9;
        }
        B[static_cast<size_t>(k)].diagonal().array() +=
            ridge * (1.0 + B[static_cast<size_t>(k)].trace());
        if (k + 1 < n_run) {
          C[static_cast<size_t>(k)] = Mat(-nn * W_right);
          if (on_sphere)
            C[static_cast<size_t>(k)] =
                Mat(tangent_proj(node) * C[static_cast<size_t>(k)] * tangent_proj(node + 1));
        }
        r[static_cast<size_t>(k)] = grad[static_cast<size_t>(node)];
      }
      // block Thomas (C is symmetric)
      std::vector<Eigen::LLT<Eigen::MatrixXd>> llt;
      llt.reserve(static_cast<size_t>(n_run));
      llt.emplace_back(Eigen::MatrixXd(B[0]));
      for (int k = 1; k < n_run; ++k) {
        Eigen::MatrixXd Cm = C[static_cast<size_t>(k - 1)];
        Eigen::MatrixXd DinvC = llt.back().solve(Cm);
        B[static_cast<size_t>(k)] -= Mat(Cm.transpose() * DinvC);
        r[static_cast<size_t>(k)] -=
            Vec(Cm.transpose() * llt.back().solve(Eigen::VectorXd(r[static_cast<size_t>(k - 1)])));
        llt.emplace_back(Eigen::MatrixXd(B[static_cast<size_t>(k)]));
      }
      Vec w = Vec(llt.back().solve(Eigen::VectorXd(r[static_cast<size_t>(n_run - 1)])));
      dir[static_cast<size_t>(j)] = w;
      for (int k = n_run - 2; k >= 0; --k) {
        Vec rhs = r[static_cast<size_t>(k)] - Vec(Eigen::MatrixXd(C[static_cast<size_t>(k)]) *
                                                  Eigen::VectorXd(dir[static_cast<size_t>(i + k + 1)]));
        dir[static_cast<size_t>(i + k)] = Vec(llt[static_cast<size_t>(k)].solve(Eigen::VectorXd(rhs)));
      }
      i = j + 1;
    }
  }

  double pairing = 0.0;
  for (int i = 0; i < M; ++i)
    if (mask[static_cast<size_t>(i)]) pairing += grad[static_cast<size_t>(i)].dot(dir[static_cast<size_t>(i)]);
  return {std::move(dir), pairing};
}

// Candidate nodes after moving along -dir by `step`, with chart projections:
// cone radii clamp at the apex, sphere nodes retract to the sphere.
inline std::vector<Vec> propose(const DiscretePath& path, const Metric& metric,
                                const std::vector<Vec>& dir, const std::vector<char>& mask,
                                double step) {
  std::vector<Vec> nodes = path.nodes();
  for (size_t i = 0; i < nodes.size(); ++i) {
    if (!mask[i]) continue;
    nodes[i] -= step * dir[i];
    if (metric.kind() == MetricKind::EuclideanCone && nodes[i][0] < 0.0) nodes[i][0] = 0.0;
    if (metric.kind() == MetricKind::LiftedSphere) nodes[i].normalize();
  }
  return nodes;
}

struct StepOutcome {
  DiscretePath path;
  bool accepted = false;
  double step_used = 0.0;
  double energy_before = 0.0;
  double energy_after = 0.0;
  double residual = 0.0;
};

inline StepOutcome shortening_step_impl(const DiscretePath& path, const Metric& metric,
                                        const FlowOptions& opts, double step_hint) {
  const auto mask = movable_mask(path, metric);
  const auto grad = energy_gradient(path, metric);
  const double res = straightness_residual(path, metric, grad, mask);
  auto [dir, pairing] =
      descent_direction(path, metric, grad, mask, opts.precond, length(path, metric));

  StepOutcome out{path, false, 0.0, energy(path, metric), 0.0, res};
  out.energy_after = out.energy_before;
  if (pairing <= 0.0) return out;  // nothing admissible to move

  double step = step_hint;
  while (step >= opts.step_underflow) {
    DiscretePath cand = path.with_nodes(propose(path, metric, dir, mask, step));
    const double e = energy(cand, metric);
    if (e - out.energy_before <= -opts.min_decrease * step * pairing) {
      out.path = std::move(cand);
      out.accepted = true;
      out.step_used = step;
      out.energy_after = e;
      return out;
    }
    step *= opts.backtrack;
  }
  return out;
}

inline double default_step0(const DiscretePath& path, const FlowOptions& opts) {
  if (opts.step0 > 0) return opts.step0;
  if (opts.precond == FlowOptions::Precond::None)
    return 0.1 / (static_cast<double>(path.segments()) * path.segments());
  return 1.0;
}

}  // namespace detail

// One curve-shortening step: energy descent over all interior, vertex-free
// nodes with backtracking acceptance. Vertex-incident and boundary nodes
// never move. A rejected step returns the path unchanged.
inline std::tuple<DiscretePath, bool, double> shortening_step(const DiscretePath& path,
                                                              const Metric& metric,
                                                              const FlowOptions& opts = {}) {
  auto out = detail::shortening_step_impl(path, metric, opts, detail::default_step0(path, opts));
  return {std::move(out.path), out.accepted, out.step_used};
}

// Closed-form energy of the break reparametrization at flow time t:
//   E(t) = c0 ( sigma^2 / a + (1-sigma)^2 / (1-a) ),  a = (1-t) tau + t sigma.
inline double vertex_flow_energy(double c0, double sigma, double tau, double t) {
  if (!(sigma > 0 && sigma < 1) || !(tau > 0 && tau < 1))
    throw Error("vertex_flow_energy: sigma and tau must lie in (0,1)");
  const double a = (1.0 - t) * tau + t * sigma;
  if (a <= 0.0 || a >= 1.0) throw Error("vertex_flow_energy: break parameter left (0,1)");
  return c0 * (sigma * sigma / a + (1.0 - sigma) * (1.0 - sigma) / (1.0 - a));
}

// d/dt of the above, including the chain factor a'(t) = sigma - tau.
// Non-positive on [0,1) whenever sigma is the constant-speed break.
inline double vertex_flow_energy_rate(double c0, double sigma, double tau, double t) {
  if (!(sigma > 0 && sigma < 1) || !(tau > 0 && tau < 1))
    throw Error("vertex_flow_energy_rate: sigma and tau must lie in (0,1)");
  const double a = (1.0 - t) * tau + t * sigma;
  if (a <= 0.0 || a >= 1.0) throw Error("vertex_flow_energy_rate: break parameter left (0,1)");
  const double s1 = (1.0 - sigma) / (1.0 - a);
  const double s0 = sigma / a;
  return c0 * (sigma - tau) * (s1 * s1 - s0 * s0);
}

// Range every break parameter of an energy-b-sublevel reparametrization of a
// broken path with leg lengths L1, L2 must lie in. From E(a) >= L1^2/a and
// E(a) >= L2^2/(1-a). Used as a runtime assertion on vertex slides.
inline std::pair<double, double> tau_bounds(double L1, double L2, double sigma, double b) {
  if (!(sigma > 0 && sigma < 1)) throw Error("tau_bounds: sigma must lie in (0,1)");
  if (L1 <= 0 || L2 <= 0) throw Error("tau_bounds: leg lengths must be positive");
  const double lo = L1 * L1 / b;
  const double hi = 1.0 - L2 * L2 / b;
  if (lo >= hi)
    throw Error("tau_bounds: inconsistent bounds (b = " + format_double(b) +
                " is below the reachable energy of legs " + format_double(L1) + ", " +
                format_double(L2) + ")");
  return {lo, hi};
}

// The explicit break reparametrization: the image is unchanged, the break
// parameter moves from tau along a(t) = (1-t) tau + t sigma toward the
// constant-speed break sigma = L1/(L1+L2). Node positions are resampled by
// the piecewise-affine parameter map; the node landing nearest a(t) is
// pinned onto the vertex so the break survives the uniform grid.
inline DiscretePath vertex_flow(const DiscretePath& path, const Metric& metric, double t) {
  const BreakStructure bs = break_structure(path, metric);
  if (bs.count() != 1)
    throw Error("vertex_flow: path has " + std::to_string(bs.count()) +
                " breaks; exactly one is required");
  if (bs.leg_lengths.size() != 2 || bs.leg_lengths[0] <= 0 || bs.leg_lengths[1] <= 0)
    throw Error("vertex_flow: break must be interior with two positive legs");

  const double tau = bs.break_params[0];
  const double L1 = bs.leg_lengths[0], L2 = bs.leg_lengths[1];
  const double sigma = L1 / (L1 + L2);
  const double a = (1.0 - t) * tau + t * sigma;

  const int N = path.segments();
  std::vector<Vec> nodes;
  nodes.reserve(N + 1);
  nodes.push_back(path.node(0));
  for (int i = 1; i < N; ++i) {
    const double s = path.param(i);
    const double u = s <= a ? tau * s / a : 1.0 - (1.0 - tau) * (1.0 - s) / (1.0 - a);
    nodes.push_back(path.at(u));
  }
  nodes.push_back(path.node(N));

  const int pin = static_cast<int>(std::lround(a * N));
  if (pin > 0 && pin < N) {
    const Vec vertex_node = path.node(bs.break_runs[0].first);
    if (metric.kind() == MetricKind::EuclideanCone) {
      nodes[static_cast<size_t>(pin)][0] = 0.0;  // keep the interpolated angle
    } else {
      nodes[static_cast<size_t>(pin)] = vertex_node;
    }
  }
  return path.with_nodes(std::move(nodes));
}

namespace detail {

// Equal-arclength resampling of a polyline stretch onto `count` segments.
inline std::vector<Vec> resample_polyline(const std::vector<Vec>& nodes, int a, int b,
                                          const Metric& metric, int count) {
  std::vector<double> cum{0.0};
  for (int i = a; i < b; ++i)
    cum.push_back(cum.back() + metric.segment_length(nodes[static_cast<size_t>(i)],
                                                     nodes[static_cast<size_t>(i + 1)]));
  const double total = cum.back();
  std::vector<Vec> out;
  out.push_back(nodes[static_cast<size_t>(a)]);
  int seg = 0;
  for (int k = 1; k < count; ++k) {
    const double target = total * k / count;
    while (seg < b - a - 1 && cum[static_cast<size_t>(seg + 1)] < target) ++seg;
    const double span = cum[static_cast<size_t>(seg + 1)] - cum[static_cast<size_t>(seg)];
    const double f = span > 0 ? (target - cum[static_cast<size_t>(seg)]) / span : 0.0;
    Vec x = nodes[static_cast<size_t>(a + seg)] +
            f * (nodes[static_cast<size_t>(a + seg + 1)] - nodes[static_cast<size_t>(a + seg)]);
    if (metric.kind() == MetricKind::LiftedSphere) x.normalize();
    out.push_back(std::move(x));
  }
  out.push_back(nodes[static_cast<size_t>(b)]);
  return out;
}

// Slide one break of a possibly multi-break path toward its leg pair's
// constant-speed position, operating on the window between the adjacent
// incident runs (or path ends). The candidate rebuilds both legs at equal
// arclength with a single vertex node pinned at the grid position nearest
// the constant-speed break, which also collapses incident runs that span
// several nodes. Accepted only if the energy strictly decreases.
inline std::optional<std::pair<double, double>> try_slide(DiscretePath& path,
                                                          const Metric& metric,
                                                          int left, int right) {
  const int n_sub = right - left;
  if (n_sub < 4) return std::nullopt;
  std::vector<Vec> sub(path.nodes().begin() + left, path.nodes().begin() + right + 1);
  DiscretePath subpath(std::move(sub), Boundary::fixed(path.node(left), path.node(right)));
  const BreakStructure bs = break_structure(subpath, metric);
  if (bs.count() != 1 || bs.leg_lengths.size() != 2) return std::nullopt;
  const double L1 = bs.leg_lengths[0], L2 = bs.leg_lengths[1];
  if (L1 <= 0 || L2 <= 0) return std::nullopt;

  const double sigma = L1 / (L1 + L2);
  const int pin = std::clamp(static_cast<int>(std::lround(sigma * n_sub)), 1, n_sub - 1);
  const auto [run_a, run_b] = bs.break_runs[0];
  if (run_a < 1 || run_b > n_sub - 1) return std::nullopt;

  std::vector<Vec> cand;
  cand.reserve(static_cast<size_t>(n_sub) + 1);
  {
    auto leg1 = resample_polyline(subpath.nodes(), 0, run_a, metric, pin);
    auto leg2 = resample_polyline(subpath.nodes(), run_b, n_sub, metric, n_sub - pin);
    cand.insert(cand.end(), leg1.begin(), leg1.end() - 1);
    Vec vertex_node = subpath.node(run_a);
    if (metric.kind() == MetricKind::EuclideanCone) vertex_node[0] = 0.0;
    cand.push_back(std::move(vertex_node));
    cand.insert(cand.end(), leg2.begin() + 1, leg2.end());
  }
  // leg1 ends one node short of the pin; the vertex node takes its place
  // only when the leg resampler produced exactly `pin` segments
  if (static_cast<int>(cand.size()) != n_sub + 1) return std::nullopt;

  const double e_before = energy(subpath, metric);
  DiscretePath slid = subpath.with_nodes(std::move(cand));
  const double e_after = energy(slid, metric);
  if (e_after >= e_before - 1e-15 * (1.0 + std::abs(e_before))) return std::nullopt;

  std::vector<Vec> nodes = path.nodes();
  for (int i = 0; i <= n_sub; ++i) nodes[static_cast<size_t>(left + i)] = slid.node(i);
  path = path.with_nodes(std::move(nodes));

  const double span = static_cast<double>(n_sub) / path.segments();
  const double tau_global = path.param(left) + bs.break_params[0] * span;
  const double tau_after_global =
      path.param(left) + (static_cast<double>(pin) / n_sub) * span;
  return std::make_pair(tau_global, tau_after_global);
}

}  // namespace detail

namespace detail {

// Discrete vertex capture: a movable node within one mean cell of a vertex
// proposes landing exactly on it; accepted only on strict energy decrease.
// Without this move the flow can settle in a spurious discrete minimum
// whose polyline cuts the corner between two near-vertex nodes, which no
// node-wise descent step can leave.
inline std::optional<int> try_vertex_capture(DiscretePath& path, const Metric& metric,
                                             double energy_now) {
  if (metric.vertices().empty()) return std::nullopt;
  const int N = path.segments();
  int best_node = -1;
  double best_ratio = 1.0;
  Vec best_target;
  for (int i = 1; i < N; ++i) {
    const Vec& x = path.node(i);
    if (metric.near_vertex(x)) continue;
    // a vertex is within reach when it is no farther than the node's
    // adjacent chart segments; chart units keep the test metric-agnostic
    const double reach = std::max((x - path.node(i - 1)).norm(),
                                  (path.node(i + 1) - x).norm());
    if (reach <= 0) continue;
    if (metric.kind() == MetricKind::EuclideanCone) {
      if (x[0] / reach < best_ratio) {
        best_ratio = x[0] / reach;
        best_node = i;
        best_target = vec2(0.0, x[1]);
      }
    } else {
      for (const auto& v : metric.vertices()) {
        const double d = (x - v).norm();
        if (d / reach < best_ratio) {
          best_ratio = d / reach;
          best_node = i;
          best_target = v;
        }
      }
    }
  }
  if (best_node < 0) return std::nullopt;
  std::vector<Vec> nodes = path.nodes();
  nodes[static_cast<size_t>(best_node)] = best_target;
  DiscretePath cand = path.with_nodes(std::move(nodes));
  const double e = energy(cand, metric);
  if (e >= energy_now - 1e-14 * (1.0 + std::abs(energy_now))) return std::nullopt;
  path = std::move(cand);
  return best_node;
}

// The reverse move: a vertex-incident interior node proposes stepping off
// the vertex toward its neighbors' midpoint (at a few blend fractions),
// accepted only on strict energy decrease. This is how a break disappears
// when the vertex corner is not locally geodesic; for a genuine broken
// geodesic every such candidate raises the energy and the break persists.
inline std::optional<int> try_vertex_release(DiscretePath& path, const Metric& metric,
                                             double energy_now) {
  if (metric.vertices().empty()) return std::nullopt;
  const int N = path.segments();
  for (int i = 1; i < N; ++i) {
    if (!metric.near_vertex(path.node(i))) continue;
    const Vec mid = 0.5 * (path.node(i - 1) + path.node(i + 1));
    for (double f : {1.0, 0.5, 0.25}) {
      Vec cand_node = path.node(i) + f * (mid - path.node(i));
      if (metric.kind() == MetricKind::LiftedSphere) cand_node.normalize();
      if (metric.near_vertex(cand_node)) continue;
      std::vector<Vec> nodes = path.nodes();
      nodes[static_cast<size_t>(i)] = std::move(cand_node);
      DiscretePath cand = path.with_nodes(std::move(nodes));
      const double e = energy(cand, metric);
      if (e < energy_now - 1e-14 * (1.0 + std::abs(energy_now))) {
        path = std::move(cand);
        return i;
      }
    }
  }
  return std::nullopt;
}

}  // namespace detail

// The composed driver: alternate curve-shortening steps with per-break
// reparametrization slides until the straightness residual is below
// tolerance and every break is slide-stationary. Breaks are re-detected
// each iteration; nodes entering a vertex ball create them (capture) and
// shortening may later pull the path off the vertex (release). Non-
// convergence is reported, not thrown.
inline std::pair<DiscretePath, FlowReport> flow_to_geodesic(const DiscretePath& seed,
                                                            const Metric& metric,
                                                            const FlowOptions& opts = {}) {
  DiscretePath path = seed;
  FlowReport report;
  double step_hint = detail::default_step0(path, opts);
  const double step_cap =
      opts.precond == FlowOptions::Precond::None ? step_hint * 1024.0 : 4.0;
  int stagnant = 0;

  auto slide_all = [&](int iter) {
    bool slid = false;
    const BreakStructure bs = break_structure(path, metric);
    for (size_t k = 0; k < bs.break_runs.size(); ++k) {
      // window between the adjacent incident runs (exclusive), or path ends
      const int left = k == 0 ? 0 : bs.break_runs[k - 1].second + 1;
      const int right = k + 1 < bs.break_runs.size() ? bs.break_runs[k + 1].first - 1
                                                     : path.segments();
      auto ev = detail::try_slide(path, metric, left, right);
      if (ev) {
        report.slides.push_back({iter, ev->first, ev->second});
        slid = true;
      }
    }
    return slid;
  };

  for (int iter = 0; iter < opts.max_iters; ++iter) {
    auto out = detail::shortening_step_impl(path, metric, opts, step_hint);
    path = std::move(out.path);
    if (out.accepted) {
      ++report.accepted;
      step_hint = std::min(out.step_used * 2.0, step_cap);
    } else {
      ++report.rejected;
      step_hint = detail::default_step0(path, opts);
    }

    bool captured = false;
    if (auto snapped = detail::try_vertex_capture(path, metric, out.energy_after)) {
      report.captures.push_back({iter, *snapped});
      captured = true;
    } else if (auto released =
                   detail::try_vertex_release(path, metric, out.energy_after)) {
      report.captures.push_back({iter, -1 - *released});  // negative marks a release
      captured = true;
    }
    const bool slid = slide_all(iter) || captured;

    const double e_now = slid ? energy(path, metric) : out.energy_after;
    report.energy_trace.push_back(e_now);
    report.step_trace.push_back(out.accepted ? out.step_used : 0.0);
    report.accept_trace.push_back(out.accepted ? 1 : 0);
    report.final_residual = out.residual;

    if (out.residual < opts.tol_residual && !slid) {
      report.converged = true;
      break;
    }
    stagnant = (!out.accepted && !slid) ? stagnant + 1 : 0;
    if (stagnant >= 12) break;  // step underflow; residual did not reach tol
  }

  // authoritative final residual and slide stationarity on the output path
  {
    const auto mask = detail::movable_mask(path, metric);
    const auto grad = energy_gradient(path, metric);
    report.final_residual = detail::straightness_residual(path, metric, grad, mask);
    bool pending = false;
    {
      DiscretePath probe = path;
      const double e_now = energy(path, metric);
      pending = detail::try_vertex_capture(probe, metric, e_now).has_value();
      if (!pending) {
        DiscretePath probe2 = path;
        pending = detail::try_vertex_release(probe2, metric, e_now).has_value();
      }
    }
    const BreakStructure bs = break_structure(path, metric);
    for (size_t k = 0; k < bs.break_runs.size() && !pending; ++k) {
      const int left = k == 0 ? 0 : bs.break_runs[k - 1].second + 1;
      const int right = k + 1 < bs.break_runs.size() ? bs.break_runs[k + 1].first - 1
                                                     : path.segments();
      DiscretePath probe = path;
      pending = detail::try_slide(probe, metric, left, right).has_value();
    }
    report.converged = report.final_residual < opts.tol_residual && !pending;
  }
  report.final_energy = energy(path, metric);
  report.final_certificate = certify_geodesic(path, metric, opts.tol_residual);
  return {std::move(path), std::move(report)};
}

inline std::string flow_report_to_json(const FlowReport& r) {
  std::string s = "{";
  s += "\"converged\": " + std::string(r.converged ? "true" : "false") + ", ";
  s += "\"accepted\": " + std::to_string(r.accepted) + ", ";
  s += "\"rejected\": " + std::to_string(r.rejected) + ", ";
  s += "\"final_energy\": " + format_double(r.final_energy) + ", ";
  s += "\"final_residual\": " + format_double(r.final_residual) + ", ";
  s += "\"certificate\": " + certificate_to_json(r.final_certificate) + ", ";
  s += "\"vertex_slides\": [";
  for (size_t i = 0; i < r.slides.size(); ++i) {
    if (i) s += ", ";
    s += "{\"iteration\": " + std::to_string(r.slides[i].iteration) +
         ", \"tau_before\": " + format_double(r.slides[i].tau_before) +
         ", \"tau_after\": " + format_double(r.slides[i].tau_after) + "}";
  }
  s += "], \"energy_trace\": [";
  for (size_t i = 0; i < r.energy_trace.size(); ++i) {
    if (i) s += ", ";
    s += format_double(r.energy_trace[i]);
  }
  s += "]}";
  return s;
}

// energy_trace as CSV rows (iteration, energy, step, event).
inline std::string flow_trace_to_csv(const FlowReport& r) {
  std::string s = "iteration,energy,step,event\n";
  for (size_t i = 0; i < r.energy_trace.size(); ++i) {
    std::string event = r.accept_trace[i] ? "accept" : "reject";
    for (const auto& ev : r.slides)
      if (ev.iteration == static_cast<int>(i)) {
        event += "+slide";
        break;
      }
    s += std::to_string(i) + "," + format_double(r.energy_trace[i]) + "," +
         format_double(r.step_trace[i]) + "," + event + "\n";
  }
  return s;
}

// Midpoint refinement: doubles the segment count, preserving the image.
inline DiscretePath refine_midpoints(const DiscretePath& path, const Metric& metric) {
  std::vector<Vec> nodes;
  nodes.reserve(2 * path.segments() + 1);
  for (int i = 0; i < path.segments(); ++i) {
    nodes.push_back(path.node(i));
    Vec mid = 0.5 * (path.node(i) + path.node(i + 1));
    if (metric.kind() == MetricKind::LiftedSphere) mid.normalize();
    nodes.push_back(std::move(mid));
  }
  nodes.push_back(path.node(path.segments()));
  return DiscretePath(std::move(nodes), path.boundary());
}

// Coarse-to-fine driver: flow at the seed's resolution, then refine by
// midpoint doubling and continue until target_segments is reached. Traces
// and iteration counts accumulate across levels.
inline std::pair<DiscretePath, FlowReport> flow_to_geodesic_multilevel(
    const DiscretePath& seed, const Metric& metric, FlowOptions opts, int target_segments) {
  DiscretePath path = seed;
  FlowReport total;
  for (;;) {
    auto [flowed, rep] = flow_to_geodesic(path, metric, opts);
    path = std::move(flowed);
    total.accepted += rep.accepted;
    total.rejected += rep.rejected;
    for (auto& e : rep.slides) total.slides.push_back(e);
    total.energy_trace.insert(total.energy_trace.end(), rep.energy_trace.begin(),
                              rep.energy_trace.end());
    total.step_trace.insert(total.step_trace.end(), rep.step_trace.begin(),
                            rep.step_trace.end());
    total.accept_trace.insert(total.accept_trace.end(), rep.accept_trace.begin(),
                              rep.accept_trace.end());
    total.converged = rep.converged;
    total.final_energy = rep.final_energy;
    total.final_residual = rep.final_residual;
    total.final_certificate = rep.final_certificate;
    if (path.segments() >= target_segments) break;
    path = refine_midpoints(path, metric);
  }
  return {std::move(path), std::move(total)};
}

}  // namespace conegeo
