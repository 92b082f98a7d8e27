#pragma once

// Time-of-transit scenarios: conformal metric 1/(E - U), optional lift to
// the sphere chart, multi-winding geodesic searches, transit times.
//
// Units: mass m = 2, so the particle's speed is sqrt(E - U) and the time of
// transit equals the metric length under 1/(E-U) delta_ij exactly. Critical
// points are unaffected by the constant factor.

#include "conegeo/flow.hpp"

#include <algorithm>
#include <cstdlib>
#include <future>
#include <optional>
#include <thread>

namespace conegeo {

struct ScenarioConfig {
  ScalarField potential;
  double energy_level = 1.0;
  std::vector<Vec> singular_points;  // the x_i where U diverges to -infinity
  double growth_exponent = 0.0;      // alpha with -U = O(|x|^alpha); 0 = unstated
  Vec p, q;
  std::vector<int> seed_windings = {0};
  bool lift = false;
  Vec window_lo, window_hi;  // validation window
};

// Radius of the excluded balls around singular points during validation.
inline constexpr double kSingularBall = 1e-3;

struct BrachScenario {
  ScenarioConfig config;
  Metric metric;                  // conformal 1/(E-U) on the chart
  std::optional<Metric> lifted;   // pullback on the sphere when lift = true
  bool bounded_warning = false;   // lift requested with growth exponent <= 2
};

// Validate E > U on a 10^4-point sample of the window (singular balls
// excluded) and assemble the scenario metric, lifting it when requested.
inline BrachScenario build_scenario(ScenarioConfig cfg) {
  if (!cfg.potential.valid()) throw Error("build_scenario: missing potential");
  if (cfg.window_lo.size() != cfg.window_hi.size() || cfg.window_lo.size() == 0)
    throw Error("build_scenario: missing validation window");

  auto in_singular_ball = [&](const Vec& x) {
    for (const auto& s : cfg.singular_points)
      if ((x - s).norm() <= kSingularBall) return true;
    return false;
  };
  if (in_singular_ball(cfg.p) || in_singular_ball(cfg.q))
    throw Error("build_scenario: endpoints must avoid the singular balls");

  const int dim = static_cast<int>(cfg.window_lo.size());
  const int per_axis = dim == 2 ? 100 : std::max(4, static_cast<int>(std::pow(1e4, 1.0 / dim)));
  std::vector<int> idx(static_cast<size_t>(dim), 0);
  Vec x(dim);
  for (;;) {
    for (int k = 0; k < dim; ++k) {
      const double f = per_axis > 1 ? static_cast<double>(idx[static_cast<size_t>(k)]) / (per_axis - 1) : 0.5;
      x[k] = cfg.window_lo[k] + f * (cfg.window_hi[k] - cfg.window_lo[k]);
    }
    if (!in_singular_ball(x)) {
      const double u = cfg.potential.value(x);
      if (u >= cfg.energy_level)
        throw Error("build_scenario: energy level E = " + format_double(cfg.energy_level) +
                    " does not exceed U at sample point " + format_point(x) +
                    " (U = " + format_double(u) + ")");
    }
    int k = 0;
    while (k < dim && ++idx[static_cast<size_t>(k)] == per_axis) idx[static_cast<size_t>(k++)] = 0;
    if (k == dim) break;
  }

  BrachScenario s{std::move(cfg), Metric::flat(2), std::nullopt, false};
  s.metric = brach_metric(s.config.potential, s.config.energy_level, s.config.singular_points);
  if (s.config.lift) {
    s.lifted = induced_sphere_metric(
        s.metric, s.config.growth_exponent > 0 ? std::optional<double>(s.config.growth_exponent)
                                               : std::nullopt);
    s.bounded_warning = s.lifted->bounded_warning();
  }
  return s;
}

// Metric length of the path under the scenario metric; with the m = 2
// convention this is the transit time.
inline double transit_time(const DiscretePath& path, const BrachScenario& scenario) {
  return length(path, scenario.metric);
}

struct GeodesicSolution {
  int seed_winding = 0;
  int winding = 0;  // measured about the first vertex/singular point
  DiscretePath path;
  double energy = 0.0;
  double transit_time = 0.0;
  GeodesicCertificate certificate;
  bool converged = false;
  FlowReport report;
};

inline int solver_thread_cap() {
  if (const char* env = std::getenv("CONE_GEO_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

// Multi-seed search under an arbitrary metric: seed per winding class,
// coarse-to-fine flow, results sorted by energy and deduplicated at
// Hausdorff distance 1e-3. Deterministic: seeds are solved independently
// and aggregated in seed order regardless of scheduling.
inline std::vector<GeodesicSolution> solve_multi_seed(const Metric& metric,
                                                      const Boundary& boundary,
                                                      const std::vector<int>& windings, int N,
                                                      FlowOptions opts,
                                                      const Metric* flow_metric = nullptr,
                                                      bool lift = false) {
  const Metric& fm = flow_metric ? *flow_metric : metric;

  auto solve_one = [&](int k) {
    const int coarse = std::max(16 * (std::abs(k) + 1), std::min(32, N));
    DiscretePath seed = seed_path(boundary, k, metric, std::min(coarse, N));
    DiscretePath start = seed;
    if (lift) {
      std::vector<Vec> lifted_nodes;
      lifted_nodes.reserve(static_cast<size_t>(seed.node_count()));
      for (const auto& x : seed.nodes()) lifted_nodes.push_back(stereographic_fwd(x));
      start = DiscretePath(std::move(lifted_nodes),
                           Boundary::fixed(stereographic_fwd(boundary.p),
                                           stereographic_fwd(boundary.type == Boundary::Type::Closed
                                                                 ? boundary.p
                                                                 : boundary.q)));
    }
    auto [flowed, rep] = flow_to_geodesic_multilevel(start, fm, opts, N);
    DiscretePath chart = flowed;
    if (lift) {
      std::vector<Vec> chart_nodes;
      chart_nodes.reserve(static_cast<size_t>(flowed.node_count()));
      for (const auto& y : flowed.nodes()) chart_nodes.push_back(stereographic_inv(y));
      chart = DiscretePath(std::move(chart_nodes), boundary);
    }
    GeodesicSolution sol{k, 0, chart, 0.0, 0.0, rep.final_certificate, rep.converged,
                         std::move(rep)};
    sol.energy = energy(chart, metric);
    sol.transit_time = length(chart, metric);
    sol.certificate = certify_geodesic(chart, metric, opts.tol_residual);
    if (!metric.vertices().empty())
      sol.winding = winding_class(chart, metric.vertices()[0], metric);
    return sol;
  };

  const int cap = std::max(1, solver_thread_cap());
  std::vector<GeodesicSolution> dense;
  dense.reserve(windings.size());
  for (size_t base = 0; base < windings.size(); base += static_cast<size_t>(cap)) {
    const size_t hi = std::min(windings.size(), base + static_cast<size_t>(cap));
    std::vector<std::future<GeodesicSolution>> batch;
    for (size_t i = base; i < hi; ++i)
      batch.push_back(std::async(std::launch::async, solve_one, windings[i]));
    for (auto& f : batch) dense.push_back(f.get());
  }

  std::stable_sort(dense.begin(), dense.end(),
                   [](const auto& a, const auto& b) { return a.energy < b.energy; });
  std::vector<GeodesicSolution> out;
  for (auto& s : dense) {
    bool dup = false;
    for (const auto& kept : out)
      if (hausdorff_distance(s.path, kept.path) < 1e-3) {
        dup = true;
        break;
      }
    if (!dup) out.push_back(std::move(s));
  }
  return out;
}

// Geodesic search for the scenario: flows run under the lifted metric when
// lift = true and results are mapped back through the stereographic chart.
inline std::vector<GeodesicSolution> solve_brachistochrone(const BrachScenario& scenario,
                                                           int N, FlowOptions opts = {}) {
  const Boundary boundary = Boundary::fixed(scenario.config.p, scenario.config.q);
  const Metric* fm = scenario.lifted ? &*scenario.lifted : nullptr;
  return solve_multi_seed(scenario.metric, boundary, scenario.config.seed_windings, N, opts,
                          fm, scenario.lifted.has_value());
}

}  // namespace conegeo
