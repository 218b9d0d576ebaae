#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "qbsde/errors.hpp"
#include "qbsde/parallel.hpp"
#include "qbsde/scenario.hpp"
#include "qbsde/version.hpp"

namespace {

qbsde::ScenarioConfig load_config(const std::string& ref) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (fs::is_regular_file(ref, ec)) {
    std::ifstream in(ref, std::ios::binary);
    if (!in) throw qbsde::validation_error("cannot read config file " + ref);
    std::stringstream ss;
    ss << in.rdbuf();
    return qbsde::parse_scenario_config(ss.str());
  }
  return qbsde::builtin_scenario(ref);
}

struct CommonOpts {
  std::string config;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::uint64_t paths = 0;
  std::uint64_t steps = 0;
  int threads = 0;
  CLI::Option* o_seed = nullptr;
  CLI::Option* o_paths = nullptr;
  CLI::Option* o_steps = nullptr;

  void attach(CLI::App* sub, bool with_grid) {
    sub->add_option("config,--config", config,
                    "config file path or built-in scenario name")
        ->required();
    sub->add_option("--out-dir", out_dir, "output directory for report.json and CSVs");
    o_seed = sub->add_option("--seed", seed, "override the config seed");
    if (with_grid) {
      o_paths = sub->add_option("--paths", paths, "override the Monte Carlo path count");
      o_steps = sub->add_option("--steps", steps, "override the time step count");
    }
    sub->add_option("--threads", threads, "worker threads (results do not depend on this)")
        ->check(CLI::Range(1, 1024));
  }

  qbsde::ScenarioConfig resolve() const {
    qbsde::ScenarioConfig cfg = load_config(config);
    if (o_seed && o_seed->count() > 0) cfg.seed = seed;
    if (o_paths && o_paths->count() > 0) cfg.paths = static_cast<std::size_t>(paths);
    if (o_steps && o_steps->count() > 0) cfg.steps = static_cast<std::size_t>(steps);
    if (threads > 0) qbsde::par::set_worker_count(threads);
    return cfg;
  }

  std::string out_dir_for(const qbsde::ScenarioConfig& cfg) const {
    if (!out_dir.empty()) return out_dir;
    return "qbsde-out/" + cfg.name;
  }
};

void print_summary(const qbsde::ScenarioConfig& cfg, const qbsde::ScenarioResult& res,
                   const std::string& dir) {
  std::printf("scenario   %s\n", cfg.name.c_str());
  std::printf("value      %.6f  (se %.6f)\n", res.y0, res.y0_se);
  std::printf("lower      %.6f  (margin %.6f)\n", res.sandwich, res.y0 - res.sandwich);
  std::printf("gap        %.6f\n", res.gap0);
  std::printf("verdict    %s\n", res.attainment_ok ? "attained" : "not-attained");
  std::printf("certified  %s\n", res.certified ? "yes" : "no");
  std::printf("report     %s/report.json\n", dir.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"backward stochastic solver with convex-dual certification"};
  app.set_version_flag("--version", std::string(qbsde::kVersion));
  app.require_subcommand(1);

  CommonOpts run_opts, cert_opts, dual_opts;
  CLI::App* cmd_run = app.add_subcommand("run", "solve a scenario and write its report");
  run_opts.attach(cmd_run, true);
  CLI::App* cmd_cert = app.add_subcommand(
      "certify", "solve a scenario and gate on the full certification battery");
  cert_opts.attach(cmd_cert, true);
  CLI::App* cmd_dual = app.add_subcommand(
      "dual-check", "randomised validation of the driver's convex dual");
  dual_opts.attach(cmd_dual, false);
  CLI::App* cmd_list = app.add_subcommand("list", "list built-in scenarios");

  try {
    app.parse(argc, argv);

    if (cmd_list->parsed()) {
      for (const auto& c : qbsde::list_builtin_scenarios()) {
        std::printf("%-24s %s\n", c.name.c_str(), c.description.c_str());
      }
      return 0;
    }
    if (cmd_run->parsed()) {
      qbsde::ScenarioConfig cfg = run_opts.resolve();
      std::string dir = run_opts.out_dir_for(cfg);
      qbsde::ScenarioResult res = qbsde::run_scenario(cfg, dir, false);
      print_summary(cfg, res, dir);
      return 0;
    }
    if (cmd_cert->parsed()) {
      qbsde::ScenarioConfig cfg = cert_opts.resolve();
      std::string dir = cert_opts.out_dir_for(cfg);
      qbsde::ScenarioResult res = qbsde::run_scenario(cfg, dir, true);
      print_summary(cfg, res, dir);
      std::printf("battery    %zu admissible controls compared\n", res.battery_admissible);
      if (!res.certified) {
        std::fprintf(stderr, "certification failed; see %s/report.json\n", dir.c_str());
        return 4;
      }
      return 0;
    }
    if (cmd_dual->parsed()) {
      qbsde::ScenarioConfig cfg = dual_opts.resolve();
      std::string dir = dual_opts.out_dir.empty() ? std::string("qbsde-out/" + cfg.name)
                                                  : dual_opts.out_dir;
      qbsde::DualSuiteReport rep = qbsde::dual_check_scenario(cfg, dir);
      std::printf("scenario   %s\n", cfg.name.c_str());
      std::printf("draws      %zu  (finite %zu, infinite %zu)\n", rep.draws,
                  rep.finite_samples, rep.infinite_samples);
      std::printf("min gap    %.3e\n", rep.min_gap);
      std::printf("subgrad    %.3e\n", rep.max_subdiff_gap);
      std::printf("verdict    %s\n", rep.all_pass ? "pass" : "fail");
      if (!rep.all_pass) {
        std::fprintf(stderr, "dual-check failed; see %s/dual_check.json\n", dir.c_str());
        return 4;
      }
      return 0;
    }
    return 0;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const qbsde::validation_error& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return 2;
  } catch (const qbsde::certification_error& e) {
    std::fprintf(stderr, "certification error: %s\n", e.what());
    return 4;
  } catch (const qbsde::numeric_error& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
