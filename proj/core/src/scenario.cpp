#include "qbsde/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "qbsde/errors.hpp"
#include "qbsde/parallel.hpp"
#include "qbsde/rng.hpp"
#include "qbsde/stats.hpp"
#include "qbsde/version.hpp"

namespace qbsde {
namespace {

using ojson = nlohmann::ordered_json;

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string sanitize_cell(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r' || c == '"') c = ';';
  }
  return s;
}

void write_file(const std::string& dir, const std::string& name,
                const std::string& content) {
  namespace fs = std::filesystem;
  fs::path p = fs::path(dir) / name;
  std::ofstream out(p, std::ios::binary);
  out << content;
  out.flush();
  if (!out) throw validation_error("cannot write " + p.string());
}

// ---- config parsing ---------------------------------------------------

void check_keys(const ojson& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) {
      if (it.key() == k) { ok = true; break; }
    }
    if (!ok) throw validation_error("config: unknown key '" + it.key() + "' in " + where);
  }
}

double get_num(const ojson& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number()) throw validation_error(std::string("config: '") + key + "' must be a number");
  return v.get<double>();
}

std::size_t get_size(const ojson& j, const char* key, std::size_t fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number_integer() && !v.is_number_unsigned())
    throw validation_error(std::string("config: '") + key + "' must be a nonnegative integer");
  if (v.is_number_integer() && v.get<long long>() < 0)
    throw validation_error(std::string("config: '") + key + "' must be a nonnegative integer");
  return v.get<std::size_t>();
}

std::string get_str(const ojson& j, const char* key, const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_string()) throw validation_error(std::string("config: '") + key + "' must be a string");
  return v.get<std::string>();
}

bool get_bool(const ojson& j, const char* key, bool fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_boolean()) throw validation_error(std::string("config: '") + key + "' must be a boolean");
  return v.get<bool>();
}

ojson config_to_ojson(const ScenarioConfig& c) {
  ojson j;
  j["name"] = c.name;
  if (!c.description.empty()) j["description"] = c.description;
  j["seed"] = c.seed;
  j["horizon"] = c.horizon;
  j["paths"] = c.paths;
  j["steps"] = c.steps;
  ojson gen;
  gen["family"] = c.gen_family;
  if (c.gen_family == "pure-quadratic" || c.gen_family == "entropic-linear-y")
    gen["gamma"] = c.gen_gamma;
  if (c.gen_family == "entropic-linear-y") gen["ky"] = c.gen_ky;
  if (c.gen_family == "affine-y") {
    gen["a"] = c.gen_a;
    gen["b"] = c.gen_b;
  }
  j["generator"] = gen;
  ojson term;
  term["kind"] = c.terminal_kind;
  term["scale"] = c.terminal_scale;
  term["shift"] = c.terminal_shift;
  j["terminal"] = term;
  ojson sde;
  sde["dim"] = c.dim;
  sde["drift_slope"] = c.drift_slope;
  sde["sigma"] = c.sigma;
  j["sde"] = sde;
  j["basis"] = ojson{{"degree", c.basis.degree}};
  ojson solver;
  solver["z_clamp"] = c.solver.z_clamp;
  solver["fixed_point_iters"] = c.solver.fixed_point_iters;
  solver["fixed_point_tol"] = c.solver.fixed_point_tol;
  solver["ridge"] = c.solver.ridge;
  j["solver"] = solver;
  ojson dual;
  dual["partition_p"] = c.partition_p;
  dual["partition_epsilon"] = c.partition_epsilon;
  dual["uniqueness_p"] = c.uniq_p;
  dual["uniqueness_epsilon"] = c.uniq_epsilon;
  dual["attainment_tol"] = c.attainment_tol;
  dual["battery_size"] = c.battery_size;
  j["duality"] = dual;
  if (c.has_pde) {
    ojson pde;
    pde["time_nodes"] = c.pde_grid.time_nodes;
    pde["space_nodes"] = c.pde_grid.space_nodes;
    pde["radius"] = c.pde_grid.radius;
    pde["theta"] = c.pde_grid.theta;
    ojson a4;
    a4["r"] = c.a4.r;
    a4["beta"] = c.a4.beta;
    a4["gamma"] = c.a4.gamma;
    a4["alpha"] = c.a4.alpha;
    a4["alpha_prime"] = c.a4.alpha_prime;
    pde["a4"] = a4;
    ojson probes = ojson::array();
    for (const auto& p : c.probes) probes.push_back(ojson::array({p.t, p.x}));
    pde["probes"] = probes;
    pde["tol"] = c.fk_tol;
    j["pde"] = pde;
  }
  if (!c.ladder_n.empty()) {
    j["ladder"] = ojson{{"n_values", c.ladder_n}};
  }
  if (c.dump_fields || c.dump_paths) {
    j["output"] = ojson{{"fields", c.dump_fields}, {"paths", c.dump_paths}};
  }
  return j;
}

ScenarioConfig config_from_ojson(const ojson& j) {
  if (!j.is_object()) throw validation_error("config must be a JSON object");
  check_keys(j, {"name", "description", "seed", "horizon", "paths", "steps",
                 "generator", "terminal", "sde", "basis", "solver", "duality",
                 "pde", "ladder", "output"},
             "top level");
  ScenarioConfig c;
  c.name = get_str(j, "name", c.name);
  c.description = get_str(j, "description", c.description);
  if (j.contains("seed")) c.seed = get_size(j, "seed", 1);
  c.horizon = get_num(j, "horizon", c.horizon);
  c.paths = get_size(j, "paths", c.paths);
  c.steps = get_size(j, "steps", c.steps);

  if (j.contains("generator")) {
    const auto& g = j.at("generator");
    check_keys(g, {"family", "gamma", "ky", "a", "b"}, "generator");
    c.gen_family = get_str(g, "family", c.gen_family);
    c.gen_gamma = get_num(g, "gamma", c.gen_gamma);
    c.gen_ky = get_num(g, "ky", c.gen_ky);
    c.gen_a = get_num(g, "a", c.gen_a);
    c.gen_b = get_num(g, "b", c.gen_b);
  }
  if (j.contains("terminal")) {
    const auto& t = j.at("terminal");
    check_keys(t, {"kind", "scale", "shift"}, "terminal");
    c.terminal_kind = get_str(t, "kind", c.terminal_kind);
    c.terminal_scale = get_num(t, "scale", c.terminal_scale);
    c.terminal_shift = get_num(t, "shift", c.terminal_shift);
  }
  if (j.contains("sde")) {
    const auto& s = j.at("sde");
    check_keys(s, {"dim", "drift_slope", "sigma"}, "sde");
    c.dim = get_size(s, "dim", c.dim);
    c.drift_slope = get_num(s, "drift_slope", c.drift_slope);
    c.sigma = get_num(s, "sigma", c.sigma);
  }
  if (j.contains("basis")) {
    const auto& b = j.at("basis");
    check_keys(b, {"degree"}, "basis");
    c.basis.degree = static_cast<int>(get_size(b, "degree", static_cast<std::size_t>(c.basis.degree)));
  }
  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    check_keys(s, {"z_clamp", "fixed_point_iters", "fixed_point_tol", "ridge"}, "solver");
    c.solver.z_clamp = get_num(s, "z_clamp", c.solver.z_clamp);
    c.solver.fixed_point_iters =
        static_cast<int>(get_size(s, "fixed_point_iters", static_cast<std::size_t>(c.solver.fixed_point_iters)));
    c.solver.fixed_point_tol = get_num(s, "fixed_point_tol", c.solver.fixed_point_tol);
    c.solver.ridge = get_num(s, "ridge", c.solver.ridge);
  }
  if (j.contains("duality")) {
    const auto& d = j.at("duality");
    check_keys(d, {"partition_p", "partition_epsilon", "uniqueness_p",
                   "uniqueness_epsilon", "attainment_tol", "battery_size"},
               "duality");
    c.partition_p = get_num(d, "partition_p", c.partition_p);
    c.partition_epsilon = get_num(d, "partition_epsilon", c.partition_epsilon);
    c.uniq_p = get_num(d, "uniqueness_p", c.uniq_p);
    c.uniq_epsilon = get_num(d, "uniqueness_epsilon", c.uniq_epsilon);
    c.attainment_tol = get_num(d, "attainment_tol", c.attainment_tol);
    c.battery_size = get_size(d, "battery_size", c.battery_size);
  }
  if (j.contains("pde")) {
    const auto& p = j.at("pde");
    check_keys(p, {"time_nodes", "space_nodes", "radius", "theta", "a4", "probes", "tol"},
               "pde");
    c.has_pde = true;
    c.pde_grid.time_nodes = get_size(p, "time_nodes", c.pde_grid.time_nodes);
    c.pde_grid.space_nodes = get_size(p, "space_nodes", c.pde_grid.space_nodes);
    c.pde_grid.radius = get_num(p, "radius", c.pde_grid.radius);
    c.pde_grid.theta = get_num(p, "theta", c.pde_grid.theta);
    if (p.contains("a4")) {
      const auto& a = p.at("a4");
      check_keys(a, {"r", "beta", "gamma", "alpha", "alpha_prime"}, "pde.a4");
      c.a4.r = get_num(a, "r", c.a4.r);
      c.a4.beta = get_num(a, "beta", c.a4.beta);
      c.a4.gamma = get_num(a, "gamma", c.a4.gamma);
      c.a4.alpha = get_num(a, "alpha", c.a4.alpha);
      c.a4.alpha_prime = get_num(a, "alpha_prime", c.a4.alpha_prime);
    }
    if (p.contains("probes")) {
      const auto& arr = p.at("probes");
      if (!arr.is_array()) throw validation_error("config: pde.probes must be an array");
      for (const auto& row : arr) {
        if (!row.is_array() || row.size() != 2 || !row[0].is_number() || !row[1].is_number())
          throw validation_error("config: each probe must be a [t, x] pair");
        c.probes.push_back({row[0].get<double>(), row[1].get<double>()});
      }
    }
    c.fk_tol = get_num(p, "tol", c.fk_tol);
  }
  if (j.contains("ladder")) {
    const auto& l = j.at("ladder");
    check_keys(l, {"n_values"}, "ladder");
    if (!l.contains("n_values") || !l.at("n_values").is_array())
      throw validation_error("config: ladder.n_values must be an array of numbers");
    for (const auto& v : l.at("n_values")) {
      if (!v.is_number()) throw validation_error("config: ladder.n_values must be numbers");
      double n = v.get<double>();
      if (!(n > 0.0)) throw validation_error("config: ladder levels must be > 0");
      c.ladder_n.push_back(n);
    }
  }
  if (j.contains("output")) {
    const auto& o = j.at("output");
    check_keys(o, {"fields", "paths"}, "output");
    c.dump_fields = get_bool(o, "fields", false);
    c.dump_paths = get_bool(o, "paths", false);
  }

  if (c.gen_family != "pure-quadratic" && c.gen_family != "entropic-linear-y" &&
      c.gen_family != "affine-y" && c.gen_family != "zero")
    throw validation_error("config: unknown generator family '" + c.gen_family + "'");
  // the class exponents must strictly dominate the driver's quadratic
  // growth; scale the stock defaults with gamma when the user left them alone
  const bool quad_family =
      c.gen_family == "pure-quadratic" || c.gen_family == "entropic-linear-y";
  const double gbar = quad_family ? c.gen_gamma : 0.0;
  const bool has_dual = j.contains("duality");
  if ((!has_dual || !j.at("duality").contains("partition_p")) && c.partition_p <= gbar)
    c.partition_p = 2.0 * gbar;
  if ((!has_dual || !j.at("duality").contains("uniqueness_p")) && c.uniq_p <= gbar)
    c.uniq_p = 1.5 * gbar;
  if (c.terminal_kind != "identity" && c.terminal_kind != "square" &&
      c.terminal_kind != "constant")
    throw validation_error("config: unknown terminal kind '" + c.terminal_kind + "'");
  if (!(c.horizon > 0.0) || !std::isfinite(c.horizon))
    throw validation_error("config: horizon must be finite and > 0");
  if (c.steps < 1) throw validation_error("config: steps must be >= 1");
  if (c.paths < 2) throw validation_error("config: paths must be >= 2");
  if (c.dim < 1 || c.dim > 8) throw validation_error("config: sde.dim must be in [1, 8]");
  if (!(c.sigma > 0.0) || !std::isfinite(c.sigma))
    throw validation_error("config: sde.sigma must be finite and > 0");
  if (c.basis.degree < 0 || c.basis.degree > 15)
    throw validation_error("config: basis.degree must be in [0, 15]");
  return c;
}

}  // namespace

ScenarioConfig parse_scenario_config(const std::string& json_text) {
  ojson j;
  try {
    j = ojson::parse(json_text);
  } catch (const std::exception& e) {
    throw validation_error(std::string("config parse: ") + e.what());
  }
  return config_from_ojson(j);
}

std::string scenario_config_to_json(const ScenarioConfig& cfg) {
  return config_to_ojson(cfg).dump(2) + "\n";
}

std::vector<ScenarioConfig> list_builtin_scenarios() {
  std::vector<ScenarioConfig> out;

  {
    ScenarioConfig c;
    c.name = "entropic-1d";
    c.description = "quadratic driver, linear terminal in a Brownian state; value -1/2";
    c.seed = 7;
    c.paths = 1u << 16;
    c.steps = 50;
    c.gen_family = "pure-quadratic";
    c.gen_gamma = 1.0;
    c.terminal_kind = "identity";
    out.push_back(c);
  }
  {
    ScenarioConfig c;
    c.name = "conditional-expectation";
    c.description = "driver-free squared terminal; value E[X_T^2] = 1";
    c.seed = 11;
    c.paths = 1u << 16;
    c.steps = 50;
    c.gen_family = "zero";
    c.terminal_kind = "square";
    out.push_back(c);
  }
  {
    ScenarioConfig c;
    c.name = "linear-in-y";
    c.description = "z-free linear driver with unit terminal; value e^{-1}";
    c.seed = 13;
    c.paths = 1u << 14;
    c.steps = 50;
    c.gen_family = "affine-y";
    c.gen_a = 1.0;
    c.gen_b = 0.0;
    c.terminal_kind = "constant";
    c.terminal_shift = 1.0;
    out.push_back(c);
  }
  {
    ScenarioConfig c;
    c.name = "fk-crosscheck";
    c.description = "finite-difference scheme against the regression solver on one problem";
    c.seed = 17;
    c.paths = 1u << 14;
    c.steps = 50;
    c.gen_family = "pure-quadratic";
    c.gen_gamma = 1.0;
    c.terminal_kind = "identity";
    c.has_pde = true;
    c.pde_grid = PdeGrid{101, 401, 6.0, 1.0};
    c.a4 = A4Constants{1.0, 0.0, 1.0, 0.0, 0.25};
    c.probes = {{0.0, 0.0}, {0.5, 0.5}, {0.5, -1.0}, {0.24, 1.0}};
    c.fk_tol = 0.05;
    out.push_back(c);
  }
  {
    ScenarioConfig c;
    c.name = "ladder-gn";
    c.description = "Lipschitz-envelope ladder g_n; values decrease toward -1/2";
    c.seed = 7;
    c.paths = 1u << 16;
    c.steps = 50;
    c.gen_family = "pure-quadratic";
    c.gen_gamma = 1.0;
    c.terminal_kind = "identity";
    c.ladder_n = {1.0, 2.0, 4.0, 8.0, 16.0};
    out.push_back(c);
  }
  return out;
}

ScenarioConfig builtin_scenario(const std::string& name) {
  for (auto& c : list_builtin_scenarios()) {
    if (c.name == name) return c;
  }
  throw validation_error("unknown scenario '" + name + "'; see the list subcommand");
}

ScenarioModel build_scenario_model(const ScenarioConfig& cfg) {
  ScenarioModel m;
  if (cfg.gen_family == "pure-quadratic") {
    m.gen = GeneratorSpec::pure_quadratic(cfg.gen_gamma);
  } else if (cfg.gen_family == "entropic-linear-y") {
    m.gen = GeneratorSpec::entropic_linear_y(cfg.gen_gamma, cfg.gen_ky);
  } else if (cfg.gen_family == "affine-y") {
    m.gen = GeneratorSpec::affine_y(cfg.gen_a, cfg.gen_b);
  } else if (cfg.gen_family == "zero") {
    m.gen = GeneratorSpec::zero();
  } else {
    throw validation_error("config: unknown generator family '" + cfg.gen_family + "'");
  }

  if (cfg.drift_slope == 0.0) {
    m.sde = SdeSpec::brownian(cfg.dim, cfg.sigma);
  } else {
    if (cfg.dim != 1)
      throw validation_error("config: drift_slope requires sde.dim == 1");
    m.sde = SdeSpec::scalar_linear_drift(cfg.drift_slope, cfg.sigma);
  }

  const double scale = cfg.terminal_scale;
  const double shift = cfg.terminal_shift;
  if (cfg.terminal_kind == "identity") {
    m.terminal = [scale, shift](std::span<const double> x) { return scale * x[0] + shift; };
    m.terminal1d = [scale, shift](double x) { return scale * x + shift; };
  } else if (cfg.terminal_kind == "square") {
    m.terminal = [scale, shift](std::span<const double> x) {
      double s = 0.0;
      for (double v : x) s += v * v;
      return scale * s + shift;
    };
    m.terminal1d = [scale, shift](double x) { return scale * x * x + shift; };
  } else if (cfg.terminal_kind == "constant") {
    m.terminal = [shift](std::span<const double>) { return shift; };
    m.terminal1d = [shift](double) { return shift; };
  } else {
    throw validation_error("config: unknown terminal kind '" + cfg.terminal_kind + "'");
  }
  return m;
}

namespace {

// ---- control battery ---------------------------------------------------

std::vector<ControlProcess> build_battery(const ScenarioConfig& cfg,
                                          const ControlProcess& qstar) {
  std::vector<ControlProcess> out;
  const std::size_t d = cfg.dim;

  std::size_t n_const = cfg.battery_size > 8 ? cfg.battery_size - 8 : 13;
  if (n_const < 4) n_const = 4;
  for (std::size_t i = 0; i < n_const; ++i) {
    double c = -2.0 + 3.0 * static_cast<double>(i) / static_cast<double>(n_const - 1);
    std::vector<double> v(d, 0.0);
    v[0] = c;
    out.push_back(ControlProcess::constant_control(std::move(v), "constant(" + fmt6(c) + ")"));
  }

  for (std::size_t b = 0; b < 4; ++b) {
    double a = rng::uniform(cfg.seed, rng::kBattery, b, 0, 0, -0.5, 0.5);
    double c0 = rng::uniform(cfg.seed, rng::kBattery, b, 1, 0, -1.0, 1.0);
    out.push_back(ControlProcess::feedback_control(
        [a, c0](double, std::span<const double> x, std::span<double> q) {
          for (std::size_t j = 0; j < q.size(); ++j) q[j] = a * x[j] + c0;
        },
        d, "feedback(" + fmt6(a) + "," + fmt6(c0) + ")"));
  }

  for (double delta : {0.15, -0.15}) {
    std::vector<double> table = qstar.table;
    for (std::size_t pos = 0; pos < table.size(); pos += d) table[pos] += delta;
    out.push_back(ControlProcess::table_control(std::move(table), d,
                                                "shift(" + fmt6(delta) + ")"));
  }

  for (std::size_t variant = 1; variant <= 2; ++variant) {
    std::vector<double> table = qstar.table;
    const std::size_t steps = cfg.steps;
    for (std::size_t i = 0; i < cfg.paths; ++i) {
      for (std::size_t k = 0; k < steps; ++k) {
        for (std::size_t j = 0; j < d; ++j) {
          table[(i * steps + k) * d + j] +=
              0.25 * rng::normal(cfg.seed, rng::kPerturb, i, k, j + variant * d);
        }
      }
    }
    out.push_back(ControlProcess::table_control(std::move(table), d,
                                                "jitter(" + std::to_string(variant) + ")"));
  }
  return out;
}

// ---- csv builders -------------------------------------------------------

std::string value_path_csv(const BSDESolution& sol) {
  const std::size_t M = sol.grid.steps;
  std::string csv = "step,t,y_mean";
  for (std::size_t j = 0; j < sol.dim; ++j) csv += ",z_mean_" + std::to_string(j);
  csv += ",rmse,dp_residual,clamped\n";
  const std::size_t P = sol.n_paths;
  for (std::size_t k = sol.k_begin; k <= sol.k_end; ++k) {
    double ym = stats::block_sum(P, [&](std::size_t i) { return sol.y_at(i, k); }) /
                static_cast<double>(P);
    csv += std::to_string(k) + "," + fmt17(sol.grid.node(k)) + "," + fmt17(ym);
    if (k < sol.k_end) {
      for (std::size_t j = 0; j < sol.dim; ++j) {
        double zm = stats::block_sum(P, [&](std::size_t i) { return sol.z_at(i, k, j); }) /
                    static_cast<double>(P);
        csv += "," + fmt17(zm);
      }
      const auto& dg = sol.step_diag[k];
      csv += "," + fmt17(dg.rmse) + "," + fmt17(dg.mean_abs_residual) + "," +
             std::to_string(dg.clamped);
    } else {
      for (std::size_t j = 0; j < sol.dim; ++j) csv += ",0";
      csv += ",0,0,0";
    }
    csv += "\n";
  }
  (void)M;
  return csv;
}

std::string gap_nodes_csv(const GapReport& gap, std::size_t k_begin) {
  std::string csv = "node,t,gap_mean,gap_min,gap_se\n";
  for (std::size_t r = 0; r < gap.nodes.size(); ++r) {
    const auto& nd = gap.nodes[r];
    csv += std::to_string(k_begin + r) + "," + fmt17(nd.t) + "," + fmt17(nd.mean) + "," +
           fmt17(nd.min) + "," + fmt17(nd.se) + "\n";
  }
  return csv;
}

std::string fields_csv(const BSDESolution& sol) {
  std::string csv = "path,step,t,y";
  for (std::size_t j = 0; j < sol.dim; ++j) csv += ",z_" + std::to_string(j);
  csv += "\n";
  for (std::size_t i = 0; i < sol.n_paths; ++i) {
    for (std::size_t k = sol.k_begin; k <= sol.k_end; ++k) {
      csv += std::to_string(i) + "," + std::to_string(k) + "," + fmt17(sol.grid.node(k)) +
             "," + fmt17(sol.y_at(i, k));
      for (std::size_t j = 0; j < sol.dim; ++j)
        csv += "," + (k < sol.k_end ? fmt17(sol.z_at(i, k, j)) : std::string("0"));
      csv += "\n";
    }
  }
  return csv;
}

std::string paths_csv(const PathBundle& b) {
  std::string csv = "path,node,t";
  for (std::size_t j = 0; j < b.dim; ++j) csv += ",x_" + std::to_string(j);
  csv += "\n";
  for (std::size_t i = 0; i < b.n_paths; ++i) {
    for (std::size_t k = 0; k <= b.grid.steps; ++k) {
      csv += std::to_string(i) + "," + std::to_string(k) + "," + fmt17(b.grid.node(k));
      auto xs = b.state_at(i, k);
      for (std::size_t j = 0; j < b.dim; ++j) csv += "," + fmt17(xs[j]);
      csv += "\n";
    }
  }
  return csv;
}

std::string pde_profile_csv(const PdeSolution& s) {
  std::string csv = "time_index,space_index,t,x,u\n";
  for (std::size_t m = 0; m < s.time_nodes; ++m) {
    for (std::size_t j = 0; j < s.space_nodes; ++j) {
      csv += std::to_string(m) + "," + std::to_string(j) + "," + fmt17(s.times[m]) + "," +
             fmt17(s.xs[j]) + "," + fmt17(s.at(m, j)) + "\n";
    }
  }
  return csv;
}

ojson clause_json(const ClauseReport& c) {
  ojson j;
  j["name"] = c.name;
  j["pass"] = c.pass;
  j["worst_violation"] = c.worst_violation;
  if (!c.witness.empty()) j["witness"] = c.witness;
  return j;
}

}  // namespace

ScenarioResult run_scenario(const ScenarioConfig& cfg, const std::string& out_dir,
                            bool full_battery) {
  ScenarioModel model = build_scenario_model(cfg);
  const TimeGrid grid{cfg.horizon, cfg.steps};
  const std::size_t P = cfg.paths;
  const std::size_t M = cfg.steps;

  PathBundle bundle = simulate_forward(model.sde, grid, P, cfg.seed);

  std::vector<double> xi(P);
  par::for_blocks(P, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) xi[i] = model.terminal(bundle.state_at(i, M));
  });

  BSDESolution sol = solve_bsde_lsmc(model.gen, model.terminal, bundle, cfg.basis, cfg.solver);

  SamplePlan aplan;
  aplan.count = 4000;
  aplan.t_max = cfg.horizon;
  aplan.x_dim = cfg.dim;
  aplan.z_dimension = cfg.dim;
  aplan.seed = cfg.seed;
  AssumptionReport asum = check_assumptions(model.gen, aplan);

  // lower envelope of the value at time zero
  std::vector<double> alpha_int(P, 0.0);
  if (model.gen.alpha_upper) {
    const double beta = model.gen.mono_beta;
    par::for_blocks(P, [&](std::size_t, std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < M; ++k) {
          double t = grid.node(k);
          acc += alpha_upper_at(model.gen, t, bundle.state_at(i, k)) * std::exp(beta * t) *
                 grid.dt(k);
        }
        alpha_int[i] = acc;
      }
    });
  }
  const double lower = sandwich_lower_bound(model.gen.gamma_bar, model.gen.mono_beta, 0.0,
                                            cfg.horizon, xi, alpha_int);
  const double bound_slack = std::max(0.02, 3.0 * sol.y0_se);
  const bool bound_pass = sol.y0 >= lower - bound_slack;

  // closed-form reference where one exists
  bool have_ref = false;
  double reference = 0.0;
  if (model.gen.family == GenFamily::PureQuadratic) {
    reference = entropic_value(xi, model.gen.quad_gamma);
    have_ref = true;
  } else if (model.gen.family == GenFamily::AffineY && cfg.terminal_kind == "constant") {
    const double a = model.gen.linear_y, b = model.gen.constant, T = cfg.horizon;
    reference = (a != 0.0)
                    ? (cfg.terminal_shift + b / a) * std::exp(-a * T) - b / a
                    : cfg.terminal_shift - b * T;
    have_ref = true;
  } else if (model.gen.family == GenFamily::AffineY && model.gen.linear_y == 0.0 &&
             model.gen.constant == 0.0) {
    reference = stats::mean_var(P, [&](std::size_t i) { return xi[i]; }).mean;
    have_ref = true;
  }

  // dual side: candidate optimiser, its cost, the gap
  DualGeneratorView view{model.gen, {}, true};
  ControlProcess qstar = optimal_control_from_solution(view, sol, bundle);
  CostSolution cost = evaluate_control(view, qstar, bundle, model.terminal, cfg.basis, cfg.solver);
  GapReport gap = duality_gap(sol, cost, cfg.attainment_tol);
  AdmissibilityReport adm = admissibility_check(qstar, bundle, view, model.terminal);
  EntropyReport ent = relative_entropy_identity(qstar, bundle);

  PartitionParams part = partition_count(cfg.partition_p, cfg.partition_epsilon,
                                         model.gen.gamma_bar, model.gen.beta_bar, cfg.horizon);
  UniquenessClassReport uniq =
      uniqueness_class_check(sol, bundle, model.gen, cfg.uniq_p, cfg.uniq_epsilon);

  const double thr = 1.0 / (2.0 *
                            std::exp(2.0 * model.sde.drift_lipschitz * cfg.horizon) *
                            model.sde.sigma_bound * model.sde.sigma_bound * cfg.horizon);
  ExpMomentReport xmom = exp_moment_estimate(bundle, 0.5 * thr);

  ojson report;
  report["tool"] = "qbsde";
  report["version"] = std::string(kVersion);
  report["scenario"] = cfg.name;
  report["config"] = config_to_ojson(cfg);

  {
    ojson a;
    ojson clauses = ojson::array();
    for (const auto& c : asum.clauses) clauses.push_back(clause_json(c));
    a["clauses"] = clauses;
    a["lipschitz_witness"] = asum.lip_y_witness;
    a["all_pass"] = asum.all_pass;
    report["assumptions"] = a;
  }
  {
    ojson v;
    v["y0"] = sol.y0;
    v["y0_se"] = sol.y0_se;
    v["y0_pathwise"] = sol.y0_pathwise;
    if (have_ref) v["reference"] = reference;
    v["z_clamp"] = sol.z_clamp_used;
    v["clamp_count"] = sol.clamp_count;
    double max_rmse = 0.0, max_res = 0.0;
    int max_fp = 0;
    for (std::size_t k = sol.k_begin; k < sol.k_end; ++k) {
      max_rmse = std::max(max_rmse, sol.step_diag[k].rmse);
      max_res = std::max(max_res, sol.step_diag[k].mean_abs_residual);
      max_fp = std::max(max_fp, sol.step_diag[k].fp_iters);
    }
    v["max_step_rmse"] = max_rmse;
    v["max_dp_residual"] = max_res;
    v["max_fixed_point_iters"] = max_fp;
    report["value"] = v;
  }
  {
    ojson b;
    b["lower"] = lower;
    b["margin"] = sol.y0 - lower;
    b["slack"] = bound_slack;
    b["pass"] = bound_pass;
    report["bounds"] = b;
  }
  {
    ojson d;
    d["control"] = qstar.label;
    d["cost0"] = cost.v0;
    d["cost0_se"] = cost.v0_se;
    d["min_ess"] = cost.min_ess;
    d["gap0"] = gap.gap0;
    d["gap0_se"] = gap.gap0_se;
    d["worst_violation"] = gap.worst_violation;
    d["comparison_floor"] = gap.comparison_floor;
    d["comparison_ok"] = gap.comparison_ok;
    d["attainment_ok"] = gap.attainment_ok;
    d["attainment_tol"] = gap.attainment_tol;
    d["verdict"] = gap.attainment_ok ? "attained" : "not-attained";
    report["duality"] = d;
  }
  {
    ojson a;
    a["admissible"] = adm.admissible;
    a["finite_energy"] = adm.finite_energy;
    a["max_path_energy"] = adm.max_path_energy;
    a["m_mean"] = adm.m_mean;
    a["m_se"] = adm.m_se;
    a["martingale_ok"] = adm.martingale_ok;
    a["worst_step_score"] = adm.worst_step_score;
    a["q_cost_mean"] = adm.q_cost_mean;
    a["q_cost_se"] = adm.q_cost_se;
    a["q_cost_tail"] = adm.q_cost_tail;
    a["q_energy_mean"] = adm.q_energy_mean;
    a["q_energy_se"] = adm.q_energy_se;
    a["q_energy_tail"] = adm.q_energy_tail;
    a["f_finite"] = adm.f_finite;
    if (!adm.reasons.empty()) a["reasons"] = adm.reasons;
    report["admissibility"] = a;
  }
  {
    ojson e;
    e["entropy_lhs"] = ent.entropy_lhs;
    e["lhs_se"] = ent.lhs_se;
    e["energy_rhs"] = ent.energy_rhs;
    e["rhs_se"] = ent.rhs_se;
    e["consistent"] = ent.consistent;
    report["entropy"] = e;
  }
  {
    ojson p;
    p["p"] = part.p;
    p["epsilon"] = part.epsilon;
    p["gamma_bar"] = part.gamma_bar;
    p["beta_bar"] = part.beta_bar;
    p["count"] = part.count;
    p["boundaries"] = part.boundaries;
    report["partition"] = p;
  }
  {
    ojson u;
    u["p"] = uniq.p;
    u["epsilon"] = uniq.epsilon;
    u["exp_pa"] = uniq.exp_pa;
    u["exp_pa_se"] = uniq.exp_pa_se;
    u["tail_a"] = uniq.tail_a;
    u["exp_ey"] = uniq.exp_ey;
    u["exp_ey_se"] = uniq.exp_ey_se;
    u["tail_y"] = uniq.tail_y;
    report["uniqueness_class"] = u;
  }
  {
    ojson x;
    x["lambda"] = xmom.lambda;
    x["estimate"] = xmom.estimate;
    x["se"] = xmom.se;
    x["tail_dominated"] = xmom.tail_dominated;
    x["lambda_threshold"] = xmom.lambda_threshold;
    x["lambda_certified"] = xmom.lambda_certified;
    report["state_exp_moment"] = x;
  }

  bool certified = asum.all_pass && bound_pass && gap.comparison_ok && gap.attainment_ok &&
                   adm.admissible && ent.consistent;

  // control battery (certification mode)
  std::string battery_csv;
  std::size_t adm_count = 0;
  if (full_battery) {
    battery_csv = "label,admissible,v0,v0_se,gap0,gap0_se,comparison_ok,min_ess,reasons\n";
    bool all_cmp = true;
    ojson rows = ojson::array();
    std::vector<ControlProcess> battery = build_battery(cfg, qstar);
    for (const auto& ctrl : battery) {
      ojson row;
      row["label"] = ctrl.label;
      AdmissibilityReport ar = admissibility_check(ctrl, bundle, view, model.terminal);
      bool evaluated = false;
      CostSolution cs;
      GapReport gr;
      std::string why = ar.reasons;
      if (ar.admissible) {
        try {
          cs = evaluate_control(view, ctrl, bundle, model.terminal, cfg.basis, cfg.solver);
          gr = duality_gap(sol, cs, cfg.attainment_tol);
          evaluated = true;
        } catch (const numeric_error& e) {
          ar.admissible = false;
          why = std::string("evaluation: ") + e.what();
        }
      }
      row["admissible"] = ar.admissible;
      if (evaluated) {
        ++adm_count;
        row["v0"] = cs.v0;
        row["v0_se"] = cs.v0_se;
        row["gap0"] = gr.gap0;
        row["gap0_se"] = gr.gap0_se;
        row["comparison_ok"] = gr.comparison_ok;
        row["min_ess"] = cs.min_ess;
        all_cmp = all_cmp && gr.comparison_ok;
        battery_csv += sanitize_cell(ctrl.label) + ",1," + fmt17(cs.v0) + "," +
                       fmt17(cs.v0_se) + "," + fmt17(gr.gap0) + "," + fmt17(gr.gap0_se) +
                       "," + (gr.comparison_ok ? "1" : "0") + "," + fmt17(cs.min_ess) + ",\n";
      } else {
        if (!why.empty()) row["reasons"] = why;
        battery_csv += sanitize_cell(ctrl.label) + ",0,0,0,0,0,0,0," + sanitize_cell(why) + "\n";
      }
      rows.push_back(row);
    }
    ojson b;
    b["size"] = battery.size();
    b["admissible"] = adm_count;
    b["all_comparisons_ok"] = all_cmp;
    b["rows"] = rows;
    report["battery"] = b;
    certified = certified && adm_count >= 1 && all_cmp;
  }

  // optional semilinear-problem block
  std::string pde_csv, fk_csv;
  PdeSolution psol;
  bool have_pde = false;
  if (cfg.has_pde) {
    if (cfg.dim != 1)
      throw validation_error("config: the pde block requires sde.dim == 1");
    PdeSpec pspec{model.sde, model.gen, model.terminal1d, cfg.horizon, cfg.a4};
    A4Report a4 = check_A4(pspec);
    psol = solve_pde_fd(pspec, cfg.pde_grid);
    have_pde = true;
    const double u00 = psol.interp(0.0, 0.0);

    FkRunner runner;
    runner.gen = model.gen;
    runner.sde = model.sde;
    runner.terminal = model.terminal1d;
    runner.horizon = cfg.horizon;
    runner.paths = std::min<std::size_t>(cfg.paths, 1u << 14);
    runner.steps = cfg.steps;
    runner.basis = cfg.basis;
    runner.opts = cfg.solver;
    runner.seed = cfg.seed;
    FkReport fk = feynman_kac_compare(psol, runner, cfg.probes, cfg.fk_tol);

    const std::array<std::array<double, 4>, 8> pairs = {{{0.0, 1.0, 0.0, 0.5},
                                                         {0.0, -1.0, 0.0, -0.5},
                                                         {0.0, 2.0, 0.0, 1.0},
                                                         {0.3, 1.0, 0.3, 0.9},
                                                         {0.0, 0.0, 0.2, 0.0},
                                                         {0.1, 1.0, 0.3, 1.0},
                                                         {0.0, 2.0, 0.5, 2.0},
                                                         {0.5, -2.0, 0.9, -2.0}}};
    ModulusReport mod = continuity_modulus_check(psol, pairs);

    ojson p;
    {
      ojson a;
      ojson clauses = ojson::array();
      for (const auto& c : a4.clauses) {
        ojson cj;
        cj["name"] = c.name;
        cj["pass"] = c.pass;
        cj["worst_violation"] = c.worst_violation;
        if (!c.witness.empty()) cj["witness"] = c.witness;
        clauses.push_back(cj);
      }
      a["clauses"] = clauses;
      a["smallness_lhs"] = a4.smallness_lhs;
      a["smallness_rhs"] = a4.smallness_rhs;
      a["all_pass"] = a4.all_pass;
      p["a4"] = a;
    }
    p["u0"] = u00;
    p["u0_minus_y0"] = u00 - sol.y0;
    p["fixed_point_max"] = psol.fixed_point_max;
    {
      ojson f;
      ojson rows = ojson::array();
      fk_csv = "t,x,u_fd,y_mc,se,diff,tol,pass\n";
      for (const auto& r : fk.rows) {
        ojson rj;
        rj["t"] = r.t;
        rj["x"] = r.x;
        rj["u_fd"] = r.u_fd;
        rj["y_mc"] = r.y_mc;
        rj["se"] = r.se;
        rj["diff"] = r.diff;
        rj["tol"] = r.tol;
        rj["pass"] = r.pass;
        rows.push_back(rj);
        fk_csv += fmt17(r.t) + "," + fmt17(r.x) + "," + fmt17(r.u_fd) + "," + fmt17(r.y_mc) +
                  "," + fmt17(r.se) + "," + fmt17(r.diff) + "," + fmt17(r.tol) + "," +
                  (r.pass ? "1" : "0") + "\n";
      }
      f["rows"] = rows;
      f["all_pass"] = fk.all_pass;
      p["stochastic_representation"] = f;
    }
    {
      ojson mj;
      mj["c_space"] = mod.c_space;
      mj["c_time"] = mod.c_time;
      mj["c_growth"] = mod.c_growth;
      p["modulus"] = mj;
    }
    report["pde"] = p;
    certified = certified && a4.all_pass && fk.all_pass;
    pde_csv = pde_profile_csv(psol);
  }

  // optional envelope ladder
  std::string ladder_csv;
  if (!cfg.ladder_n.empty()) {
    LadderResult lad = solve_lipschitz_sequence(model.gen, model.terminal, bundle,
                                                cfg.ladder_n, cfg.basis, cfg.solver);
    ojson l;
    ojson entries = ojson::array();
    ladder_csv = "n,y0,se\n";
    for (const auto& e : lad.entries) {
      entries.push_back(ojson{{"n", e.n}, {"y0", e.y0}, {"se", e.se}});
      ladder_csv += fmt17(e.n) + "," + fmt17(e.y0) + "," + fmt17(e.se) + "\n";
    }
    l["entries"] = entries;
    l["monotone_within_3se"] = lad.monotone_within_3se;
    l["max_increase"] = lad.max_increase;
    report["ladder"] = l;
    certified = certified && lad.monotone_within_3se;
  }

  report["certified"] = certified;
  report["verdict"] = gap.attainment_ok ? "attained" : "not-attained";

  ScenarioResult res;
  res.y0 = sol.y0;
  res.y0_se = sol.y0_se;
  res.sandwich = lower;
  res.gap0 = gap.gap0;
  res.comparison_ok = gap.comparison_ok;
  res.attainment_ok = gap.attainment_ok;
  res.certified = certified;
  res.battery_admissible = adm_count;

  std::vector<std::pair<std::string, std::string>> files;
  files.emplace_back("value_path.csv", value_path_csv(sol));
  files.emplace_back("gap_nodes.csv", gap_nodes_csv(gap, std::max(sol.k_begin, cost.k_begin)));
  if (full_battery) files.emplace_back("battery.csv", battery_csv);
  if (have_pde) {
    files.emplace_back("pde_profile.csv", pde_csv);
    files.emplace_back("fk_probes.csv", fk_csv);
  }
  if (!ladder_csv.empty()) files.emplace_back("ladder.csv", ladder_csv);
  if (cfg.dump_fields) files.emplace_back("fields.csv", fields_csv(sol));
  if (cfg.dump_paths) files.emplace_back("paths.csv", paths_csv(bundle));

  ojson names = ojson::array();
  for (const auto& f : files) names.push_back(f.first);
  names.push_back("report.json");
  report["files"] = names;

  res.report_json = report.dump(2) + "\n";
  if (!out_dir.empty()) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw validation_error("cannot create output directory " + out_dir + ": " + ec.message());
    for (const auto& f : files) {
      write_file(out_dir, f.first, f.second);
      res.files_written.push_back(f.first);
    }
    write_file(out_dir, "report.json", res.report_json);
    res.files_written.push_back("report.json");
  }
  return res;
}

DualSuiteReport dual_check_scenario(const ScenarioConfig& cfg, const std::string& out_dir) {
  ScenarioModel model = build_scenario_model(cfg);
  DualGeneratorView view{model.gen, {}, true};
  SamplePlan ranges;
  ranges.t_max = cfg.horizon;
  ranges.x_dim = cfg.dim;
  ranges.z_dimension = cfg.dim;
  ranges.seed = cfg.seed;
  DualSuiteReport rep = dual_invariant_suite(view, 10000, cfg.seed, ranges);

  if (!out_dir.empty()) {
    ojson j;
    j["tool"] = "qbsde";
    j["version"] = std::string(kVersion);
    j["scenario"] = cfg.name;
    j["driver"] = model.gen.label;
    j["draws"] = rep.draws;
    j["finite_samples"] = rep.finite_samples;
    j["infinite_samples"] = rep.infinite_samples;
    j["min_gap"] = rep.min_gap;
    j["max_convexity_violation"] = rep.max_convexity_violation;
    j["max_lipschitz_violation"] = rep.max_lipschitz_violation;
    j["max_coercivity_violation"] = rep.max_coercivity_violation;
    j["max_subdiff_gap"] = rep.max_subdiff_gap;
    j["all_pass"] = rep.all_pass;
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw validation_error("cannot create output directory " + out_dir + ": " + ec.message());
    write_file(out_dir, "dual_check.json", j.dump(2) + "\n");
  }
  return rep;
}

}  // namespace qbsde
