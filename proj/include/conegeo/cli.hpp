#pragma once

// Scenario-driven front end: parse a JSON config, dispatch solves, emit
// machine-readable results and static plots.
//
// Config schema (single JSON document):
// {
//   "metric": {"kind": "flat"|"cone"|"conformal"|"brach", ...},
//     flat:      {"kind":"flat", "dimension": 2}
//     cone:      {"kind":"cone", "alpha": 0.5}
//     conformal: {"kind":"conformal", "dimension": 2, "factor": "<expr>",
//                 "vertices": [[...], ...]}
//     brach:     {"kind":"brach"}  -- derived from the scenario block
//   "endpoints": [[...],[...]] | "closed_basepoint": [...],
//   "seeds": [0, 1, ...],
//   "discretization": {"N": 128},
//   "flow": {"max_iters": 5000, "tol_residual": 1e-6},
//   "scenario": {"potential": "<expr>", "energy_level": 1.0, "lift": false,
//                "singular_points": [[...]], "growth_exponent": 4.0,
//                "window": [[lo...],[hi...]]},
//   "output": {"svg": true}
// }
//
// Scalar-field expressions: constants, coordinates x1..xn, + - * /,
// pow(a,b), exp(a), log(a), sqrt(a), and |x| for the norm of the
// coordinate vector.

#include "conegeo/brach.hpp"
#include "conegeo/oracle.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace conegeo::cli {

using nlohmann::json;

struct ConfigError : Error {
  using Error::Error;
};

namespace detail {

inline int line_of_offset(const std::string& text, size_t byte) {
  int line = 1;
  for (size_t i = 0; i < byte && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

inline Vec to_vec(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw ConfigError("config error: " + what + " must be a non-empty array");
  Vec v(static_cast<int>(j.size()));
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError("config error: " + what + " must hold numbers");
    v[static_cast<int>(i)] = j[i].get<double>();
  }
  return v;
}

inline const json& require(const json& j, const std::string& key) {
  if (!j.contains(key))
    throw ConfigError("config error: missing required key \"" + key + "\"");
  return j.at(key);
}

}  // namespace detail

struct LoadedConfig {
  json raw;
  Metric metric = Metric::flat(2);
  std::optional<BrachScenario> scenario;
  Boundary boundary = Boundary::fixed(vec2(0, 0), vec2(1, 0));
  std::vector<int> seeds = {0};
  int N = 128;
  FlowOptions flow;
  bool svg = true;
};

inline LoadedConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config error: cannot read \"" + path + "\"");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();

  LoadedConfig cfg;
  try {
    cfg.raw = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config error: line " +
                      std::to_string(detail::line_of_offset(text, e.byte)) + ": " + e.what());
  }
  const json& j = cfg.raw;

  const json& jm = detail::require(j, "metric");
  const std::string kind = detail::require(jm, "kind").get<std::string>();

  // boundary
  if (j.contains("endpoints")) {
    const json& je = j.at("endpoints");
    if (!je.is_array() || je.size() != 2)
      throw ConfigError("config error: \"endpoints\" must be a pair of points");
    cfg.boundary = Boundary::fixed(detail::to_vec(je[0], "endpoints[0]"),
                                   detail::to_vec(je[1], "endpoints[1]"));
  } else if (j.contains("closed_basepoint")) {
    cfg.boundary = Boundary::closed(detail::to_vec(j.at("closed_basepoint"), "closed_basepoint"));
  } else {
    throw ConfigError("config error: missing required key \"endpoints\" (or \"closed_basepoint\")");
  }

  if (j.contains("seeds")) {
    cfg.seeds.clear();
    for (const auto& s : j.at("seeds")) cfg.seeds.push_back(s.get<int>());
    if (cfg.seeds.empty()) throw ConfigError("config error: \"seeds\" must be non-empty");
  }
  cfg.N = detail::require(detail::require(j, "discretization"), "N").get<int>();
  if (cfg.N < 2) throw ConfigError("config error: discretization.N must be at least 2");

  if (j.contains("flow")) {
    const json& jf = j.at("flow");
    if (jf.contains("max_iters")) cfg.flow.max_iters = jf.at("max_iters").get<int>();
    if (jf.contains("tol_residual")) cfg.flow.tol_residual = jf.at("tol_residual").get<double>();
  }
  if (j.contains("output") && j.at("output").contains("svg"))
    cfg.svg = j.at("output").at("svg").get<bool>();

  if (kind == "flat") {
    const int dim = jm.contains("dimension") ? jm.at("dimension").get<int>() : 2;
    cfg.metric = Metric::flat(dim);
  } else if (kind == "cone") {
    cfg.metric = Metric::cone(detail::require(jm, "alpha").get<double>());
  } else if (kind == "conformal") {
    const int dim = jm.contains("dimension") ? jm.at("dimension").get<int>() : 2;
    ScalarField f = ScalarField::from_expression(
        detail::require(jm, "factor").get<std::string>(), dim);
    std::vector<Vec> vertices;
    if (jm.contains("vertices"))
      for (const auto& v : jm.at("vertices")) vertices.push_back(detail::to_vec(v, "vertex"));
    cfg.metric = Metric::conformal(std::move(f), std::move(vertices));
  } else if (kind == "brach") {
    const json& js = detail::require(j, "scenario");
    ScenarioConfig sc;
    const int dim = static_cast<int>(cfg.boundary.p.size());
    sc.potential = ScalarField::from_expression(
        detail::require(js, "potential").get<std::string>(), dim);
    sc.energy_level = detail::require(js, "energy_level").get<double>();
    if (js.contains("lift")) sc.lift = js.at("lift").get<bool>();
    if (js.contains("growth_exponent")) sc.growth_exponent = js.at("growth_exponent").get<double>();
    if (js.contains("singular_points"))
      for (const auto& v : js.at("singular_points"))
        sc.singular_points.push_back(detail::to_vec(v, "singular point"));
    if (js.contains("window")) {
      const json& jw = js.at("window");
      if (!jw.is_array() || jw.size() != 2)
        throw ConfigError("config error: scenario.window must be [[lo],[hi]]");
      sc.window_lo = detail::to_vec(jw[0], "window lo");
      sc.window_hi = detail::to_vec(jw[1], "window hi");
    } else {
      // inflate the endpoint bounding box
      Vec lo = cfg.boundary.p.cwiseMin(cfg.boundary.q);
      Vec hi = cfg.boundary.p.cwiseMax(cfg.boundary.q);
      Vec pad = 0.5 * (hi - lo).cwiseMax(Vec::Ones(lo.size()));
      sc.window_lo = lo - pad;
      sc.window_hi = hi + pad;
    }
    sc.p = cfg.boundary.p;
    sc.q = cfg.boundary.q;
    sc.seed_windings = cfg.seeds;
    cfg.scenario = build_scenario(std::move(sc));
    cfg.metric = cfg.scenario->metric;
  } else {
    throw ConfigError("config error: unknown metric kind \"" + kind + "\"");
  }

  if (static_cast<int>(cfg.boundary.p.size()) != cfg.metric.dim())
    throw ConfigError("config error: endpoint dimension does not match the metric chart");
  return cfg;
}

// --- output writers ---------------------------------------------------------

inline std::string results_json(const std::vector<GeodesicSolution>& sols) {
  std::ostringstream os;
  long accepted = 0, rejected = 0;
  bool all_converged = true;
  for (const auto& s : sols) {
    accepted += s.report.accepted;
    rejected += s.report.rejected;
    all_converged = all_converged && s.converged;
  }
  os << "{\n  \"solutions\": [";
  for (size_t i = 0; i < sols.size(); ++i) {
    const auto& s = sols[i];
    os << (i ? ",\n    " : "\n    ");
    os << "{\"winding\": " << s.winding << ", \"seed_winding\": " << s.seed_winding
       << ", \"energy\": " << format_double(s.energy)
       << ", \"transit_time\": " << format_double(s.transit_time)
       << ", \"converged\": " << (s.converged ? "true" : "false")
       << ", \"certificate\": " << certificate_to_json(s.certificate) << ", \"nodes\": [";
    for (int n = 0; n <= s.path.segments(); ++n) {
      os << (n ? ", [" : "[");
      for (int k = 0; k < s.path.dim(); ++k)
        os << (k ? ", " : "") << format_double(s.path.node(n)[k]);
      os << "]";
    }
    os << "]}";
  }
  os << "\n  ],\n";
  os << "  \"iterations\": {\"accepted\": " << accepted << ", \"rejected\": " << rejected
     << "},\n";
  os << "  \"all_converged\": " << (all_converged ? "true" : "false") << "\n}\n";
  return os.str();
}

inline std::string trace_csv(const std::vector<GeodesicSolution>& sols) {
  std::ostringstream os;
  os << "iteration,seed,energy,step,event\n";
  for (const auto& s : sols) {
    for (size_t i = 0; i < s.report.energy_trace.size(); ++i) {
      std::string event = s.report.accept_trace[i] ? "accept" : "reject";
      for (const auto& ev : s.report.slides)
        if (ev.iteration == static_cast<int>(i)) {
          event += "+slide";
          break;
        }
      os << i << "," << s.seed_winding << "," << format_double(s.report.energy_trace[i]) << ","
         << format_double(s.report.step_trace[i]) << "," << event << "\n";
    }
  }
  return os.str();
}

namespace detail {

inline const char* solution_color(size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#e377c2"};
  return palette[i % 8];
}

inline std::string svg_polylines(const std::vector<std::vector<Vec>>& lines,
                                 const std::vector<Vec>& crosses) {
  double lo_x = 1e300, lo_y = 1e300, hi_x = -1e300, hi_y = -1e300;
  auto grow = [&](const Vec& p) {
    lo_x = std::min(lo_x, p[0]);
    hi_x = std::max(hi_x, p[0]);
    lo_y = std::min(lo_y, p[1]);
    hi_y = std::max(hi_y, p[1]);
  };
  for (const auto& l : lines)
    for (const auto& p : l) grow(p);
  for (const auto& c : crosses) grow(c);
  if (lo_x > hi_x) {
    lo_x = lo_y = 0;
    hi_x = hi_y = 1;
  }
  const double pad = 0.05 * std::max(hi_x - lo_x, hi_y - lo_y) + 1e-6;
  lo_x -= pad, lo_y -= pad, hi_x += pad, hi_y += pad;
  const double w = hi_x - lo_x, h = hi_y - lo_y;
  const double scale = 640.0 / std::max(w, h);
  auto X = [&](double x) { return (x - lo_x) * scale; };
  auto Y = [&](double y) { return (hi_y - y) * scale; };  // flip for screen coords

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w * scale << "\" height=\""
     << h * scale << "\" viewBox=\"0 0 " << w * scale << " " << h * scale << "\">\n";
  for (size_t i = 0; i < lines.size(); ++i) {
    os << "  <polyline fill=\"none\" stroke=\"" << solution_color(i)
       << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& p : lines[i]) os << X(p[0]) << "," << Y(p[1]) << " ";
    os << "\"/>\n";
  }
  const double cs = 6.0;
  for (const auto& c : crosses) {
    os << "  <path stroke=\"#000\" stroke-width=\"1.5\" d=\"M" << X(c[0]) - cs << " " << Y(c[1])
       << " H" << X(c[0]) + cs << " M" << X(c[0]) << " " << Y(c[1]) - cs << " V"
       << Y(c[1]) + cs << "\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace detail

// Chart-coordinate rendering, one color per solution, vertices as crosses.
// Cone charts are drawn in the embedded polar picture (r, theta) ->
// (r cos theta, r sin theta); a developed (unrolled) view is emitted
// alongside by the caller.
inline std::string paths_svg(const std::vector<GeodesicSolution>& sols, const Metric& metric,
                             bool developed = false) {
  std::vector<std::vector<Vec>> lines;
  for (const auto& s : sols) {
    std::vector<Vec> pts;
    for (int i = 0; i <= s.path.segments(); ++i) {
      Vec x = s.path.node(i);
      if (metric.kind() == MetricKind::EuclideanCone) {
        const double phi = developed ? metric.alpha() * x[1] : x[1];
        pts.push_back(vec2(x[0] * std::cos(phi), x[0] * std::sin(phi)));
      } else {
        pts.push_back(vec2(x[0], x.size() > 1 ? x[1] : 0.0));
      }
    }
    lines.push_back(std::move(pts));
  }
  std::vector<Vec> crosses;
  for (const auto& v : metric.vertices()) {
    if (metric.kind() == MetricKind::EuclideanCone)
      crosses.push_back(vec2(0.0, 0.0));
    else
      crosses.push_back(vec2(v[0], v.size() > 1 ? v[1] : 0.0));
  }
  return detail::svg_polylines(lines, crosses);
}

struct RunOutcome {
  int exit_code = 0;
  std::vector<GeodesicSolution> solutions;
};

// Exit codes: 0 all seeds converged, 2 partial convergence, 1 config error.
inline RunOutcome run(const std::string& config_path, const std::string& out_dir,
                      std::optional<int> seed_filter = std::nullopt, bool quiet = false) {
  LoadedConfig cfg;
  try {
    cfg = load_config(config_path);
  } catch (const Error& e) {
    if (!quiet) std::fprintf(stderr, "%s\n", e.what());
    return {1, {}};
  }

  std::vector<int> seeds = cfg.seeds;
  if (seed_filter) {
    seeds.clear();
    for (int s : cfg.seeds)
      if (s == *seed_filter) seeds.push_back(s);
    if (seeds.empty()) {
      if (!quiet)
        std::fprintf(stderr, "config error: --seed-filter %d matches no configured seed\n",
                     *seed_filter);
      return {1, {}};
    }
  }

  RunOutcome out;
  try {
    if (cfg.scenario) {
      BrachScenario sc = *cfg.scenario;
      sc.config.seed_windings = seeds;
      if (!quiet && sc.bounded_warning)
        std::fprintf(stderr,
                     "warning: lifted metric may be unbounded (growth exponent <= 2)\n");
      out.solutions = solve_brachistochrone(sc, cfg.N, cfg.flow);
    } else {
      out.solutions = solve_multi_seed(cfg.metric, cfg.boundary, seeds, cfg.N, cfg.flow);
    }
  } catch (const Error& e) {
    if (!quiet) std::fprintf(stderr, "solve error: %s\n", e.what());
    return {1, {}};
  }

  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  auto write_file = [&](const std::string& name, const std::string& content) {
    std::ofstream f(out_dir + "/" + name, std::ios::binary);
    if (!f) throw Error("cannot write " + out_dir + "/" + name);
    f << content;
  };
  write_file("results.json", results_json(out.solutions));
  write_file("trace.csv", trace_csv(out.solutions));
  if (cfg.svg) {
    write_file("paths.svg", paths_svg(out.solutions, cfg.metric, false));
    if (cfg.metric.kind() == MetricKind::EuclideanCone)
      write_file("paths_developed.svg", paths_svg(out.solutions, cfg.metric, true));
  }

  bool all = true;
  for (const auto& s : out.solutions) all = all && s.converged;
  if (!quiet) {
    for (const auto& s : out.solutions)
      std::printf("seed %d: winding %d, energy %s, transit %s, %s\n", s.seed_winding, s.winding,
                  format_double(s.energy).c_str(), format_double(s.transit_time).c_str(),
                  s.converged ? "converged" : "not converged");
  }
  out.exit_code = all ? 0 : 2;
  return out;
}

// Schema check plus scenario preflight; no solve.
inline int validate(const std::string& config_path, bool quiet = false) {
  try {
    LoadedConfig cfg = load_config(config_path);
    if (!quiet) {
      std::printf("config ok: metric %s, N = %d, %zu seed(s)\n", to_string(cfg.metric.kind()),
                  cfg.N, cfg.seeds.size());
      if (cfg.scenario && cfg.scenario->bounded_warning)
        std::printf("warning: lifted metric may be unbounded (growth exponent <= 2)\n");
    }
    return 0;
  } catch (const Error& e) {
    if (!quiet) std::fprintf(stderr, "%s\n", e.what());
    return 1;
  }
}

}  // namespace conegeo::cli
