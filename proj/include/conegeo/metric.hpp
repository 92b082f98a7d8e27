#pragma once

#include "conegeo/common.hpp"
#include "conegeo/scalar_field.hpp"

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

namespace conegeo {

enum class MetricKind { FlatEuclidean, EuclideanCone, Conformal, LiftedSphere };

inline const char* to_string(MetricKind k) {
  switch (k) {
    case MetricKind::FlatEuclidean: return "flat";
    case MetricKind::EuclideanCone: return "cone";
    case MetricKind::Conformal: return "conformal";
    case MetricKind::LiftedSphere: return "lifted-sphere";
  }
  return "?";
}

// Stereographic projection between R^n and the unit sphere S^n in R^{n+1},
// projecting from the north pole N = (0,...,0,1).
inline Vec stereographic_fwd(const Vec& x) {
  const int n = static_cast<int>(x.size());
  const double s = x.squaredNorm();
  Vec y(n + 1);
  y.head(n) = 2.0 * x / (1.0 + s);
  y[n] = (s - 1.0) / (s + 1.0);
  return y;
}

// Inverse map x_i = y_i / (1 - y_{n+1}). Strict preconditions: y on the
// sphere to 1e-12 and away from the pole.
inline Vec stereographic_inv(const Vec& y) {
  const int n = static_cast<int>(y.size()) - 1;
  if (n < 1) throw Error("stereographic_inv: point dimension must be at least 2");
  if (std::abs(y.norm() - 1.0) > 1e-12)
    throw Error("stereographic_inv: point " + format_point(y) + " is not on the unit sphere");
  const double gap = 1.0 - y[n];
  if (gap <= kVertexTol)
    throw Error("stereographic_inv: point " + format_point(y) + " is at the north pole");
  return Vec(y.head(n) / gap);
}

namespace detail {
// Chart formula without the sphere-membership check; valid on a neighborhood
// of S^n \ {N}. Used internally so finite differences of path energies stay
// well defined for off-sphere probe points.
inline Vec stereo_inv_raw(const Vec& y) {
  const int n = static_cast<int>(y.size()) - 1;
  const double gap = 1.0 - y[n];
  if (gap <= kVertexTol)
    throw Error("stereographic chart evaluated at the north pole: " + format_point(y));
  return Vec(y.head(n) / gap);
}
}  // namespace detail

// Jacobian of the inverse map at y: an n x (n+1) matrix.
//   d x_i / d y_j     = delta_ij / (1 - y_{n+1})
//   d x_i / d y_{n+1} = y_i / (1 - y_{n+1})^2
inline Mat stereographic_inv_jacobian(const Vec& y) {
  const int n = static_cast<int>(y.size()) - 1;
  const double gap = 1.0 - y[n];
  if (gap <= kVertexTol)
    throw Error("stereographic Jacobian evaluated at the north pole: " + format_point(y));
  Mat J = Mat::Zero(n, n + 1);
  for (int i = 0; i < n; ++i) {
    J(i, i) = 1.0 / gap;
    J(i, n) = y[i] / (gap * gap);
  }
  return J;
}

// A chart metric with a finite singular set. Values are immutable after
// construction; all evaluation is pure.
//
// Kinds:
//   FlatEuclidean  identity form, empty vertex set.
//   EuclideanCone  intrinsic polar chart (r, theta), form dr^2 + a^2 r^2 dtheta^2,
//                  vertex at r = 0; paths store theta unwrapped.
//   Conformal      g(x) * delta_ij with a scalar factor field.
//   LiftedSphere   conformal base on R^n pulled back to S^n through the
//                  stereographic chart; the north pole is a vertex where the
//                  form degenerates to zero.
class Metric {
 public:
  static Metric flat(int dim) {
    Metric m;
    m.kind_ = MetricKind::FlatEuclidean;
    m.dim_ = dim;
    return m;
  }

  static Metric cone(double alpha) {
    if (alpha <= 0) throw Error("cone-angle ratio must be positive");
    Metric m;
    m.kind_ = MetricKind::EuclideanCone;
    m.dim_ = 2;
    m.alpha_ = alpha;
    m.vertices_.push_back(vec2(0.0, 0.0));
    return m;
  }

  static Metric conformal(ScalarField factor, std::vector<Vec> vertices = {}) {
    if (!factor.valid()) throw Error("conformal metric needs a factor field");
    Metric m;
    m.kind_ = MetricKind::Conformal;
    m.dim_ = factor.dimension();
    m.factor_ = std::move(factor);
    m.vertices_ = std::move(vertices);
    return m;
  }

  MetricKind kind() const { return kind_; }

  // Dimension of chart points handled by this metric. For LiftedSphere this
  // is the ambient dimension n+1 of sphere points.
  int dim() const { return kind_ == MetricKind::LiftedSphere ? dim_ + 1 : dim_; }

  // Dimension of the underlying manifold.
  int manifold_dim() const { return dim_; }

  double alpha() const { return alpha_; }
  const ScalarField& factor() const { return factor_; }
  const std::vector<Vec>& vertices() const { return vertices_; }
  bool bounded_warning() const { return bounded_warning_; }
  double growth_exponent() const { return growth_exponent_; }

  bool near_vertex(const Vec& x) const { return vertex_index(x) >= 0; }

  int vertex_index(const Vec& x) const {
    if (kind_ == MetricKind::EuclideanCone) return x[0] <= kVertexTol ? 0 : -1;
    for (size_t i = 0; i < vertices_.size(); ++i)
      if ((x - vertices_[i]).norm() <= kVertexTol) return static_cast<int>(i);
    return -1;
  }

  // metric_eval: the symmetric form at x, with the degenerate limit at
  // vertices (zero angular block for the cone, zero form at the lifted pole).
  Mat eval(const Vec& x) const {
    check_point(x);
    switch (kind_) {
      case MetricKind::FlatEuclidean:
        return Mat::Identity(dim_, dim_);
      case MetricKind::EuclideanCone: {
        Mat g = Mat::Zero(2, 2);
        g(0, 0) = 1.0;
        double r = near_vertex(x) ? 0.0 : x[0];
        g(1, 1) = alpha_ * alpha_ * r * r;
        return g;
      }
      case MetricKind::Conformal: {
        int vi = vertex_index(x);
        double g = vi >= 0 ? 0.0 : factor_value_checked(x);
        return Mat(g * Mat::Identity(dim_, dim_));
      }
      case MetricKind::LiftedSphere: {
        if (near_vertex(x)) {
          int vi = vertex_index(x);
          if ((x - north_pole()).norm() <= kVertexTol || vi == 0)
            return Mat::Zero(dim_ + 1, dim_ + 1);
          // lifted image of a base vertex: the factor limit there is zero
          return Mat::Zero(dim_ + 1, dim_ + 1);
        }
        Mat J = stereographic_inv_jacobian(x);
        Vec chart = detail::stereo_inv_raw(x);
        double g = base_factor_value(chart);
        return Mat(g * (J.transpose() * J));
      }
    }
    return Mat();
  }

  // metric_grad: gradient of the scalar conformal factor. Only meaningful for
  // Conformal and FlatEuclidean kinds, away from vertices.
  Vec factor_gradient(const Vec& x) const {
    if (kind_ == MetricKind::FlatEuclidean) return Vec::Zero(dim_);
    if (kind_ != MetricKind::Conformal)
      throw Error(std::string("factor gradient is not defined for a ") + to_string(kind_) +
                  " metric");
    if (near_vertex(x))
      throw Error("factor gradient requested inside the vertex ball at " + format_point(x));
    return factor_.gradient(x);
  }

  Vec north_pole() const {
    Vec n = Vec::Zero(dim_ + 1);
    n[dim_] = 1.0;
    return n;
  }

  // --- discrete segment machinery -----------------------------------------
  //
  // Quadratic form of a path segment a -> b under the midpoint rule, with the
  // vertex-incidence rules:
  //  * conformal kinds evaluate the factor at the off-vertex endpoint (the
  //    factor's vertex limit is zero and would null real length);
  //  * the cone evaluates its angular coefficient at the vertex-side radius,
  //    which vanishes: at the apex every direction is the same point, so an
  //    angular jump across it carries no length.
  double segment_form(const Vec& a, const Vec& b) const {
    double Q;
    Vec da, db;
    segment_form_grad(a, b, Q, &da, &db, /*want_grad=*/false);
    return Q;
  }

  double segment_length(const Vec& a, const Vec& b) const {
    return std::sqrt(std::max(0.0, segment_form(a, b)));
  }

  // PSD weight matrix W with Q(d) = d^T W d for the segment's evaluation
  // rules (exact for flat/cone/conformal; for the lifted sphere the ambient
  // pullback form at the segment midpoint).
  Mat segment_weight(const Vec& a, const Vec& b) const {
    switch (kind_) {
      case MetricKind::FlatEuclidean:
        return Mat::Identity(dim_, dim_);
      case MetricKind::EuclideanCone: {
        const bool va = near_vertex(a), vb = near_vertex(b);
        double rc = (va || vb) ? (va ? a[0] : b[0]) : 0.5 * (a[0] + b[0]);
        Mat w = Mat::Zero(2, 2);
        w(0, 0) = 1.0;
        w(1, 1) = alpha_ * alpha_ * rc * rc;
        return w;
      }
      case MetricKind::Conformal: {
        const int via = vertex_index(a), vib = vertex_index(b);
        Vec m = (via >= 0 && vib < 0) ? b : (vib >= 0 && via < 0) ? a : Vec(0.5 * (a + b));
        return Mat(factor_value_checked(m) * Mat::Identity(dim_, dim_));
      }
      case MetricKind::LiftedSphere: {
        if (near_vertex(a) || near_vertex(b)) {
          const Vec& off = near_vertex(a) ? b : a;
          if (near_vertex(off)) return Mat::Zero(dim_ + 1, dim_ + 1);
          return eval(off);
        }
        Vec m = 0.5 * (a + b);
        m.normalize();
        return eval(m);
      }
    }
    return Mat();
  }

  // Q plus exact derivatives with respect to both endpoints.
  void segment_form_grad(const Vec& a, const Vec& b, double& Q, Vec* dQa, Vec* dQb,
                         bool want_grad = true) const {
    switch (kind_) {
      case MetricKind::FlatEuclidean: {
        Vec d = b - a;
        Q = d.squaredNorm();
        if (want_grad) {
          *dQb = 2.0 * d;
          *dQa = -*dQb;
        }
        return;
      }
      case MetricKind::EuclideanCone: {
        const double dr = b[0] - a[0];
        const double dt = b[1] - a[1];
        const bool va = near_vertex(a), vb = near_vertex(b);
        double rc;  // radius at which the angular block is charged
        double drc_da = 0, drc_db = 0;
        if (va || vb) {
          rc = va ? a[0] : b[0];  // vertex-side endpoint, effectively zero
          if (va) drc_da = 1;
          else drc_db = 1;
        } else {
          rc = 0.5 * (a[0] + b[0]);
          drc_da = drc_db = 0.5;
        }
        const double w = alpha_ * alpha_;
        Q = dr * dr + w * rc * rc * dt * dt;
        if (want_grad) {
          *dQa = Vec(2);
          *dQb = Vec(2);
          (*dQa)[0] = -2.0 * dr + 2.0 * w * rc * dt * dt * drc_da;
          (*dQb)[0] = 2.0 * dr + 2.0 * w * rc * dt * dt * drc_db;
          (*dQa)[1] = -2.0 * w * rc * rc * dt;
          (*dQb)[1] = 2.0 * w * rc * rc * dt;
        }
        return;
      }
      case MetricKind::Conformal: {
        conformal_segment(a, b, Q, dQa, dQb, want_grad,
                          [this](const Vec& x) { return factor_value_checked(x); },
                          [this](const Vec& x) { return factor_.gradient(x); });
        return;
      }
      case MetricKind::LiftedSphere: {
        lifted_segment(a, b, Q, dQa, dQb, want_grad);
        return;
      }
    }
  }

 private:
  friend Metric induced_sphere_metric(const Metric&, std::optional<double>);

  void check_point(const Vec& x) const {
    if (static_cast<int>(x.size()) != dim())
      throw Error("point " + format_point(x) + " has dimension " + std::to_string(x.size()) +
                  ", metric chart expects " + std::to_string(dim()));
  }

  double factor_value_checked(const Vec& x) const {
    double g = factor_.value(x);
    if (!std::isfinite(g))
      throw Error("conformal factor is not finite at " + format_point(x));
    return g;
  }

  double base_factor_value(const Vec& chart_x) const {
    if (!factor_.valid()) return 1.0;
    return factor_.value(chart_x);
  }

  template <class FVal, class FGrad>
  void conformal_segment(const Vec& a, const Vec& b, double& Q, Vec* dQa, Vec* dQb,
                         bool want_grad, FVal&& fval, FGrad&& fgrad) const {
    const Vec d = b - a;
    const double dd = d.squaredNorm();
    const int via = vertex_index(a), vib = vertex_index(b);
    if (via < 0 && vib < 0) {
      Vec m = 0.5 * (a + b);
      double g = fval(m);
      Q = g * dd;
      if (want_grad) {
        Vec gg = fgrad(m);
        *dQb = 2.0 * g * d + 0.5 * dd * gg;
        *dQa = -2.0 * g * d + 0.5 * dd * gg;
      }
      return;
    }
    if (via >= 0 && vib >= 0) {
      // both ends inside vertex balls: a degenerate hair, charge midpoint
      Vec m = 0.5 * (a + b);
      double g = fval(m);
      Q = g * dd;
      if (want_grad) {
        Vec gg = fgrad(m);
        *dQb = 2.0 * g * d + 0.5 * dd * gg;
        *dQa = -2.0 * g * d + 0.5 * dd * gg;
      }
      return;
    }
    const Vec& off = via < 0 ? a : b;
    double g = fval(off);
    Q = g * dd;
    if (want_grad) {
      Vec gg = fgrad(off);
      *dQa = -2.0 * g * d;
      *dQb = 2.0 * g * d;
      if (via < 0) *dQa += dd * gg;
      else *dQb += dd * gg;
    }
  }

  // LiftedSphere path segments are charged through the chart: pull both
  // endpoints back, evaluate the base conformal form there. This makes the
  // discrete energy of a lifted path equal to the chart energy of the
  // matched chart path identically, which is the isometry the construction
  // is for. Segments touching the pole ball (or a lifted base vertex) fall
  // back to the ambient pullback form at the off-vertex endpoint.
  void lifted_segment(const Vec& a, const Vec& b, double& Q, Vec* dQa, Vec* dQb,
                      bool want_grad) const {
    const int via = vertex_index(a), vib = vertex_index(b);
    if (via < 0 && vib < 0) {
      Vec xa = detail::stereo_inv_raw(a), xb = detail::stereo_inv_raw(b);
      double Qc;
      Vec dca, dcb;
      // base vertices live in the chart; test incidence there
      base_conformal_segment(xa, xb, Qc, &dca, &dcb, want_grad);
      Q = Qc;
      if (want_grad) {
        Mat Ja = stereographic_inv_jacobian(a), Jb = stereographic_inv_jacobian(b);
        *dQa = Ja.transpose() * dca;
        *dQb = Jb.transpose() * dcb;
      }
      return;
    }
    // pole- or vertex-incident: ambient quadratic form at the off-vertex end
    const Vec& off = via < 0 ? a : b;
    const Vec d = b - a;
    if (via >= 0 && vib >= 0) {
      Q = 0.0;  // entirely inside vertex balls, degenerate form
      if (want_grad) {
        *dQa = Vec::Zero(dim_ + 1);
        *dQb = Vec::Zero(dim_ + 1);
      }
      return;
    }
    Mat M = eval(off);
    Q = d.dot(M * d);
    if (want_grad) {
      Vec Md = M * d;
      *dQa = -2.0 * Md;
      *dQb = 2.0 * Md;
      // off-endpoint dependence of M itself
      Vec dM = ambient_form_point_grad(off, d);
      if (via < 0) *dQa += dM;
      else *dQb += dM;
    }
  }

  // Chart-space conformal segment with the base vertex rules.
  void base_conformal_segment(const Vec& xa, const Vec& xb, double& Q, Vec* dQa, Vec* dQb,
                              bool want_grad) const {
    auto base_vertex = [this](const Vec& x) {
      for (const auto& v : vertices_chart_)
        if ((x - v).norm() <= kVertexTol) return true;
      return false;
    };
    const Vec d = xb - xa;
    const double dd = d.squaredNorm();
    const bool va = base_vertex(xa), vb = base_vertex(xb);
    Vec m = (va && !vb) ? xb : (vb && !va) ? xa : Vec(0.5 * (xa + xb));
    double g = base_factor_value(m);
    Q = g * dd;
    if (want_grad) {
      Vec gg = factor_.valid() ? factor_.gradient(m) : Vec(Vec::Zero(dim_));
      *dQa = -2.0 * g * d;
      *dQb = 2.0 * g * d;
      if (va && !vb) *dQb += dd * gg;
      else if (vb && !va) *dQa += dd * gg;
      else {
        *dQa += 0.5 * dd * gg;
        *dQb += 0.5 * dd * gg;
      }
    }
  }

  // Gradient of v^T M(y) v with respect to the evaluation point y, where
  // M(y) = g(x(y)) J(y)^T J(y).
  Vec ambient_form_point_grad(const Vec& y, const Vec& v) const {
    const int n = dim_;
    Mat J = stereographic_inv_jacobian(y);
    Vec x = detail::stereo_inv_raw(y);
    double g = base_factor_value(x);
    Vec gg = factor_.valid() ? factor_.gradient(x) : Vec(Vec::Zero(n));
    Vec Jv = J * v;
    Vec out = Vec::Zero(n + 1);
    // d g(x(y))/dy = J^T grad g
    out += (J.transpose() * gg) * Jv.squaredNorm();
    // d |J(y) v|^2 / dy: J depends on y through gap = 1 - y_{n+1} and y'.
    const double gap = 1.0 - y[n];
    // (Jv)_i = v_i / gap + y_i v_{n+1} / gap^2
    // d(Jv)_i/dy_j     = delta_ij v_{n+1} / gap^2
    // d(Jv)_i/dy_{n+1} = v_i / gap^2 + 2 y_i v_{n+1} / gap^3
    for (int j = 0; j < n; ++j) out[j] += g * 2.0 * Jv[j] * v[n] / (gap * gap);
    double tail = 0.0;
    for (int i = 0; i < n; ++i)
      tail += 2.0 * Jv[i] * (v[i] / (gap * gap) + 2.0 * y[i] * v[n] / (gap * gap * gap));
    out[n] += g * tail;
    return out;
  }

  MetricKind kind_ = MetricKind::FlatEuclidean;
  int dim_ = 2;
  double alpha_ = 1.0;
  ScalarField factor_;
  std::vector<Vec> vertices_;        // in this metric's own chart
  std::vector<Vec> vertices_chart_;  // LiftedSphere: base vertices in R^n
  bool bounded_warning_ = false;
  double growth_exponent_ = 0.0;
};

// Pull a conformal base metric on R^n back to the sphere chart. The value of
// the form at the north pole is zero. When the caller asserts the growth
// exponent of -U and it is <= 2, the returned spec carries a boundedness
// warning (sufficient condition only; the flag is advisory).
inline Metric induced_sphere_metric(const Metric& base,
                                    std::optional<double> growth_exponent = std::nullopt) {
  if (base.kind() != MetricKind::Conformal && base.kind() != MetricKind::FlatEuclidean)
    throw Error("induced sphere metric needs a conformal (or flat) base");
  Metric m;
  m.kind_ = MetricKind::LiftedSphere;
  m.dim_ = base.manifold_dim();
  m.factor_ = base.kind() == MetricKind::Conformal
                  ? base.factor()
                  : ScalarField::constant(1.0, base.manifold_dim());
  m.vertices_chart_ = base.vertices();
  m.vertices_.push_back(m.north_pole());
  for (const auto& v : base.vertices()) m.vertices_.push_back(stereographic_fwd(v));
  if (growth_exponent) {
    m.growth_exponent_ = *growth_exponent;
    m.bounded_warning_ = *growth_exponent <= 2.0;
  }
  return m;
}

// Conformal metric of the time-of-transit problem: factor 1/(E - U(x)).
// Points where U diverges to -infinity extend the factor continuously by
// zero and enter the vertex set.
inline Metric brach_metric(const ScalarField& potential, double energy,
                           std::vector<Vec> singular_points = {}) {
  const int dim = potential.dimension();
  auto U = potential;
  auto singular = singular_points;
  auto value = [U, energy, singular](const Vec& x) {
    for (const auto& s : singular)
      if ((x - s).norm() <= kVertexTol) return 0.0;
    double u = U.value(x);
    double gap = energy - u;
    if (gap <= 0.0)
      throw Error("energy level E = " + format_double(energy) +
                  " does not exceed the potential at " + format_point(x) +
                  " (U = " + format_double(u) + ")");
    return 1.0 / gap;
  };
  auto grad = [U, energy](const Vec& x) {
    double gap = energy - U.value(x);
    // d(1/(E-U)) = grad U / (E-U)^2
    return Vec(U.gradient(x) / (gap * gap));
  };
  ScalarField f = ScalarField::from_function(dim, value, grad,
                                             "1/(" + format_double(energy) + " - U)");
  return Metric::conformal(std::move(f), std::move(singular_points));
}

}  // namespace conegeo
