#include "hdpde/bench/bench.hpp"
#include "hdpde/bench/properties.hpp"

#include <CLI11.hpp>
#include <malloc.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

using namespace hdpde;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config = "heat-d3";
  std::string problem;
  std::string solver;
  int dim = 0;
  std::int64_t seed = -1;
  int epochs = 0;
  std::string out;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "Preset name or JSON config file")->capture_default_str();
  app->add_option("--problem", c.problem, "heat, hjb or bs");
  app->add_option("--solver", c.solver, "Solver name");
  app->add_option("--dim", c.dim, "Spatial dimension");
  app->add_option("--seed", c.seed, "Training seed");
  app->add_option("--epochs", c.epochs, "Override the number of epochs");
  app->add_option("--out", c.out, "Output directory");
}

bench::RunConfig resolve(const Common& c) {
  bench::RunConfig cfg;
  if (fs::exists(c.config)) {
    std::ifstream in(c.config);
    cfg = bench::config_from_json(bench::json::parse(in));
    if (!c.problem.empty()) cfg.problem = c.problem;
    if (!c.solver.empty()) cfg.solver = c.solver;
  } else {
    cfg = bench::preset(c.config, c.problem.empty() ? "heat" : c.problem,
                        c.solver.empty() ? "pinn_sdgd" : c.solver);
  }
  if (c.dim > 0) cfg.dim = c.dim;
  if (c.seed >= 0) cfg.train_seed = static_cast<std::uint64_t>(c.seed);
  if (c.epochs > 0) cfg.schedule.epochs = c.epochs;
  if (!c.out.empty()) {
    cfg.output = c.out;
    cfg.cache_dir = (fs::path(c.out) / "refs").string();
  }
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  CLI::App app{"Neural solvers for high-dimensional parabolic PDEs"};
  app.set_version_flag("--version", bench::version());
  app.require_subcommand(1);

  Common common;
  bool compute_refs = false, force = false, dump = false;
  auto* run = app.add_subcommand("run", "Train one configuration and persist the result");
  add_common(run, common);
  run->add_flag("--compute-refs", compute_refs, "Compute missing references at d > 100");
  run->add_flag("--force", force, "Re-run even if a result exists");
  run->add_flag("--print-config", dump, "Print the resolved config and exit");

  int ref_points = 0;
  auto* refs = app.add_subcommand("refs", "Compute or load the reference values of a config");
  add_common(refs, common);
  refs->add_option("--points", ref_points, "Number of test points (default from config)");
  refs->add_flag("--compute-refs", compute_refs, "Compute missing references at d > 100");

  std::string root = "results";
  auto* rep = app.add_subcommand("report", "Summarize results below a directory");
  rep->add_option("root", root, "Results directory")->capture_default_str();

  app.add_subcommand("list-presets", "List named presets and solvers");
  app.add_subcommand("selftest", "Run the estimator and autodiff property checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      const auto cfg = resolve(common);
      if (dump) {
        std::cout << bench::to_json(cfg).dump(2) << "\n";
        return 0;
      }
      bench::RunOptions opts;
      opts.compute_refs = compute_refs;
      opts.force = force;
      opts.progress = [](double e) { std::fprintf(stderr, "  validation rel L2 %.3e\n", e); };
      const auto r = bench::run(cfg, opts);
      std::printf("%s %s d=%d rel_l2 %.4e%s wall %.1fs -> %s\n", r.solver.c_str(),
                  r.problem.c_str(), r.dim, r.rel_l2, r.inconclusive ? " (INCONCLUSIVE)" : "",
                  r.wall_seconds, bench::run_directory(cfg).string().c_str());
      return r.aborted ? 2 : 0;
    }
    if (refs->parsed()) {
      const auto cfg = resolve(common);
      const auto problem = bench::build_problem(cfg);
      const auto set = bench::compute_references(
          problem, ref_points > 0 ? ref_points : cfg.test_points, cfg.reference_samples,
          cfg.eval_seed, bench::PointRole::Test, cfg.cache_dir, compute_refs);
      std::printf("%d points, %s, noise floor %.3e, cache %s\n",
                  static_cast<int>(set.points.cols()), set.exact ? "exact" : "monte carlo",
                  set.noise_floor(), cfg.cache_dir.c_str());
      return 0;
    }
    if (rep->parsed()) {
      std::cout << bench::report(root);
      return 0;
    }
    if (app.got_subcommand("list-presets")) {
      for (const auto& p : bench::preset_names()) std::printf("preset  %s\n", p.c_str());
      for (const auto& s : bench::solver_names()) std::printf("solver  %s\n", s.c_str());
      for (const auto& p : bench::problem_names()) std::printf("problem %s\n", p.c_str());
      return 0;
    }
    if (app.got_subcommand("selftest")) {
      bool ok = true;
      for (const auto& r : bench::property_suite()) {
        std::printf("%s\n", bench::format(r).c_str());
        ok = ok && r.pass;
      }
      return ok ? 0 : 1;
    }
  } catch (const bench::ConfigError& e) {
    std::fprintf(stderr, "invalid config:\n");
    for (const auto& p : e.problems()) std::fprintf(stderr, "  %s\n", p.c_str());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
