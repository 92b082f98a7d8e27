#pragma once

#include "conegeo/metric.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>
#include <vector>

namespace conegeo {

struct Boundary {
  enum class Type { Fixed, Closed };
  Type type = Type::Fixed;
  Vec p, q;  // Closed uses p as the pinned basepoint

  static Boundary fixed(Vec p, Vec q) { return {Type::Fixed, std::move(p), std::move(q)}; }
  static Boundary closed(Vec basepoint) {
    Boundary b{Type::Closed, basepoint, basepoint};
    return b;
  }
};

// An ordered node sequence on the uniform parameter grid s_i = i/N.
// Immutable value type; boundary nodes never move under flows.
class DiscretePath {
 public:
  DiscretePath(std::vector<Vec> nodes, Boundary boundary)
      : nodes_(std::move(nodes)), boundary_(std::move(boundary)) {
    if (segments() < 2) throw Error("a discrete path needs at least 2 segments");
    if (boundary_.type == Boundary::Type::Closed) {
      // loops close exactly; angular charts may close up to the winding
      // 2 pi k in the final (unwrapped angle) coordinate
      Vec diff = nodes_.front() - nodes_.back();
      const int last = static_cast<int>(diff.size()) - 1;
      const double angular = std::remainder(diff[last], 2.0 * M_PI);
      diff[last] = std::abs(diff[last]) < 1e-9 ? 0.0 : angular;
      if (diff.norm() > 1e-9)
        throw Error("closed path must satisfy x_0 = x_N exactly (up to the angular period)");
    }
  }

  int segments() const { return static_cast<int>(nodes_.size()) - 1; }
  int node_count() const { return static_cast<int>(nodes_.size()); }
  int dim() const { return static_cast<int>(nodes_.front().size()); }
  const Vec& node(int i) const { return nodes_[static_cast<size_t>(i)]; }
  const std::vector<Vec>& nodes() const { return nodes_; }
  const Boundary& boundary() const { return boundary_; }
  double param(int i) const { return static_cast<double>(i) / segments(); }

  DiscretePath with_nodes(std::vector<Vec> nodes) const {
    return DiscretePath(std::move(nodes), boundary_);
  }

  bool node_movable(int i) const {
    if (i == 0 || i == segments()) return false;
    return true;
  }

  // Piecewise-linear evaluation at parameter u in [0,1].
  Vec at(double u) const {
    const int N = segments();
    double t = std::clamp(u, 0.0, 1.0) * N;
    int i = std::min(static_cast<int>(t), N - 1);
    double f = t - i;
    return Vec(nodes_[i] + f * (nodes_[i + 1] - nodes_[i]));
  }

 private:
  std::vector<Vec> nodes_;
  Boundary boundary_;
};

// E = sum_i N * Q_{g}(x_{i+1} - x_i), midpoint rule with the metric's
// vertex-incidence handling. Exact for flat piecewise-affine paths.
inline double energy(const DiscretePath& path, const Metric& metric) {
  const int N = path.segments();
  double e = 0.0;
  for (int i = 0; i < N; ++i) {
    try {
      e += metric.segment_form(path.node(i), path.node(i + 1));
    } catch (const Error& err) {
      throw Error("energy: segment " + std::to_string(i) + ": " + err.what());
    }
  }
  return e * N;
}

inline double length(const DiscretePath& path, const Metric& metric) {
  const int N = path.segments();
  double l = 0.0;
  for (int i = 0; i < N; ++i) {
    try {
      l += metric.segment_length(path.node(i), path.node(i + 1));
    } catch (const Error& err) {
      throw Error("length: segment " + std::to_string(i) + ": " + err.what());
    }
  }
  return l;
}

// Exact gradient of the discrete energy with respect to node positions.
inline std::vector<Vec> energy_gradient(const DiscretePath& path, const Metric& metric) {
  const int N = path.segments();
  std::vector<Vec> grad(path.node_count(), Vec::Zero(path.dim()));
  double Q;
  Vec dQa, dQb;
  for (int i = 0; i < N; ++i) {
    metric.segment_form_grad(path.node(i), path.node(i + 1), Q, &dQa, &dQb);
    grad[i] += N * dQa;
    grad[i + 1] += N * dQb;
  }
  return grad;
}

// Resample the node set by metric arclength: same image (up to one
// resampling cell), per-segment metric speeds equal. A single pass leaves
// second-order speed imbalance where segments straddle polyline kinks, so
// the sweep is iterated to its fixed point; that makes the operation
// idempotent and the output exactly constant-speed in the chord sense.
inline DiscretePath reparam_constant_speed(const DiscretePath& path, const Metric& metric) {
  const int N = path.segments();
  std::vector<Vec> nodes = path.nodes();
  double movement = 0.0;
  for (int sweep = 0; sweep < 256; ++sweep) {
    std::vector<double> cum(N + 1, 0.0);
    for (int i = 0; i < N; ++i)
      cum[i + 1] = cum[i] + metric.segment_length(nodes[i], nodes[i + 1]);
    const double total = cum[N];
    if (total <= 0.0) throw Error("reparametrization of a zero-length path is degenerate");

    std::vector<Vec> out;
    out.reserve(N + 1);
    out.push_back(nodes[0]);
    int seg = 0;
    movement = 0.0;
    for (int i = 1; i < N; ++i) {
      const double target = total * i / N;
      while (seg < N - 1 && cum[seg + 1] < target) ++seg;
      const double span = cum[seg + 1] - cum[seg];
      const double f = span > 0 ? (target - cum[seg]) / span : 0.0;
      Vec x = nodes[seg] + f * (nodes[seg + 1] - nodes[seg]);
      if (metric.kind() == MetricKind::LiftedSphere) x.normalize();
      movement = std::max(movement, (x - nodes[static_cast<size_t>(i)]).norm());
      out.push_back(std::move(x));
    }
    out.push_back(nodes[N]);
    nodes = std::move(out);
    if (movement < 1e-13 * (1.0 + total)) break;
  }
  return path.with_nodes(std::move(nodes));
}

// Vertex-incidence data: break parameters, the incident node runs behind
// them, metric lengths of the vertex-free legs, and the complement intervals.
struct BreakStructure {
  std::vector<double> break_params;                 // sorted, one per break interval
  std::vector<std::pair<int, int>> break_runs;      // inclusive node index ranges
  std::vector<double> leg_lengths;                  // per vertex-free component
  std::vector<std::pair<double, double>> components;  // parameter intervals

  bool empty() const { return break_params.empty(); }
  size_t count() const { return break_params.size(); }
};

inline BreakStructure break_structure(const DiscretePath& path, const Metric& metric) {
  const int N = path.segments();
  BreakStructure out;
  std::vector<bool> incident(N + 1);
  for (int i = 0; i <= N; ++i) incident[i] = metric.near_vertex(path.node(i));

  int i = 0;
  while (i <= N) {
    if (!incident[i]) {
      ++i;
      continue;
    }
    int j = i;
    while (j + 1 <= N && incident[j + 1]) ++j;
    out.break_runs.emplace_back(i, j);
    out.break_params.push_back(0.5 * (path.param(i) + path.param(j)));
    i = j + 1;
  }

  // complement components and their metric lengths
  int prev = 0;
  auto add_component = [&](int a, int b) {
    if (a >= b) return;
    out.components.emplace_back(path.param(a), path.param(b));
    double l = 0.0;
    for (int s = a; s < b; ++s) l += metric.segment_length(path.node(s), path.node(s + 1));
    out.leg_lengths.push_back(l);
  };
  for (const auto& run : out.break_runs) {
    add_component(prev, run.first);
    prev = run.second;
  }
  add_component(prev, N);
  return out;
}

// Winding of a planar path about a center, in turns. Cone charts carry the
// angle explicitly, so there the winding is read off the theta coordinate.
inline double winding_about(const DiscretePath& path, const Vec& center,
                            const Metric& metric) {
  if (metric.kind() == MetricKind::EuclideanCone)
    return (path.node(path.segments())[1] - path.node(0)[1]) / (2.0 * M_PI);
  double acc = 0.0;
  for (int i = 0; i < path.segments(); ++i) {
    Vec a = path.node(i) - center;
    Vec b = path.node(i + 1) - center;
    double cross = a[0] * b[1] - a[1] * b[0];
    double dot = a.dot(b);
    acc += std::atan2(cross, dot);
  }
  return acc / (2.0 * M_PI);
}

// Integer homotopy label of a fixed-endpoint path relative to the direct
// chord: how many extra full turns it makes about the center.
inline int winding_class(const DiscretePath& path, const Vec& center, const Metric& metric) {
  double w = winding_about(path, center, metric);
  if (metric.kind() == MetricKind::EuclideanCone) {
    double direct = std::remainder(path.node(path.segments())[1] - path.node(0)[1], 2.0 * M_PI);
    return static_cast<int>(std::lround(w - direct / (2.0 * M_PI)));
  }
  Vec a = path.node(0) - center;
  Vec b = path.node(path.segments()) - center;
  double direct = std::atan2(a[0] * b[1] - a[1] * b[0], a.dot(b));
  return static_cast<int>(std::lround(w - direct / (2.0 * M_PI)));
}

// Deterministic piecewise-affine seed joining the boundary data whose
// unwrapped angle about vertices[0] advances by the direct difference plus
// 2*pi*k. Needs N >= 8*(|k|+1) nodes to resolve the turns.
inline DiscretePath seed_path(const Boundary& boundary, int winding, const Metric& metric,
                              int N) {
  if (N < 8 * (std::abs(winding) + 1))
    throw Error("seed_path: N = " + std::to_string(N) + " is too coarse for winding " +
                std::to_string(winding) + " (need at least " +
                std::to_string(8 * (std::abs(winding) + 1)) + ")");
  if (winding != 0 && metric.vertices().empty())
    throw Error("seed_path: nonzero winding needs a vertex to wind about");

  std::vector<Vec> nodes;
  nodes.reserve(N + 1);

  if (metric.kind() == MetricKind::EuclideanCone) {
    const Vec& p = boundary.p;
    const Vec q = boundary.type == Boundary::Type::Closed ? boundary.p : boundary.q;
    double dtheta = boundary.type == Boundary::Type::Closed
                        ? 2.0 * M_PI * winding
                        : std::remainder(q[1] - p[1], 2.0 * M_PI) + 2.0 * M_PI * winding;
    for (int i = 0; i <= N; ++i) {
      double s = static_cast<double>(i) / N;
      nodes.push_back(vec2(p[0] + s * (q[0] - p[0]), p[1] + s * dtheta));
    }
    if (boundary.type == Boundary::Type::Closed && winding == 0) {
      // constant loop at the basepoint
    }
    return DiscretePath(std::move(nodes), boundary);
  }

  if (winding == 0) {
    const Vec q = boundary.type == Boundary::Type::Closed ? boundary.p : boundary.q;
    for (int i = 0; i <= N; ++i) {
      double s = static_cast<double>(i) / N;
      nodes.push_back(Vec(boundary.p + s * (q - boundary.p)));
    }
    return DiscretePath(std::move(nodes), boundary);
  }

  if (metric.dim() != 2)
    throw Error("seed_path: winding seeds are only defined on planar charts");
  const Vec c = metric.vertices()[0];
  Vec a = boundary.p - c;
  Vec b = (boundary.type == Boundary::Type::Closed ? boundary.p : boundary.q) - c;
  double ra = a.norm(), rb = b.norm();
  if (ra <= kVertexTol || rb <= kVertexTol)
    throw Error("seed_path: boundary point coincides with the winding center");
  double ta = std::atan2(a[1], a[0]);
  double tb = std::atan2(b[1], b[0]);
  double dtheta = std::remainder(tb - ta, 2.0 * M_PI) + 2.0 * M_PI * winding;
  for (int i = 0; i <= N; ++i) {
    double s = static_cast<double>(i) / N;
    double r = ra + s * (rb - ra);
    double t = ta + s * dtheta;
    nodes.push_back(Vec(c + r * vec2(std::cos(t), std::sin(t))));
  }
  if (boundary.type == Boundary::Type::Closed) nodes.back() = nodes.front();
  return DiscretePath(std::move(nodes), boundary);
}

// Symmetric Hausdorff distance between the node polylines.
inline double hausdorff_distance(const DiscretePath& a, const DiscretePath& b) {
  auto point_to_segment = [](const Vec& x, const Vec& s0, const Vec& s1) {
    Vec d = s1 - s0;
    double dd = d.squaredNorm();
    double t = dd > 0 ? std::clamp((x - s0).dot(d) / dd, 0.0, 1.0) : 0.0;
    return (x - (s0 + t * d)).norm();
  };
  auto one_sided = [&](const DiscretePath& u, const DiscretePath& v) {
    double worst = 0.0;
    for (int i = 0; i <= u.segments(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int j = 0; j < v.segments(); ++j)
        best = std::min(best, point_to_segment(u.node(i), v.node(j), v.node(j + 1)));
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(one_sided(a, b), one_sided(b, a));
}

// --- serialization ---------------------------------------------------------

inline std::string path_to_json(const DiscretePath& path) {
  std::ostringstream os;
  os << "{\"boundary\": {\"type\": \""
     << (path.boundary().type == Boundary::Type::Fixed ? "fixed" : "closed") << "\"}, "
     << "\"nodes\": [";
  for (int i = 0; i <= path.segments(); ++i) {
    if (i) os << ", ";
    os << "[";
    for (int k = 0; k < path.dim(); ++k) {
      if (k) os << ", ";
      os << format_double(path.node(i)[k]);
    }
    os << "]";
  }
  os << "]}";
  return os.str();
}

inline std::string path_to_csv(const DiscretePath& path) {
  std::ostringstream os;
  os << "s";
  for (int k = 0; k < path.dim(); ++k) os << ",x" << k + 1;
  os << "\n";
  for (int i = 0; i <= path.segments(); ++i) {
    os << format_double(path.param(i));
    for (int k = 0; k < path.dim(); ++k) os << "," << format_double(path.node(i)[k]);
    os << "\n";
  }
  return os.str();
}

}  // namespace conegeo
