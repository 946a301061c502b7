#include "hdpde/bench/bench.hpp"

#include "hdpde/common/hash.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace hdpde::bench {

namespace fs = std::filesystem;

namespace {

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : "; ") + s;
  return out;
}

bool is_pinn(const std::string& solver) { return solver.rfind("pinn_", 0) == 0; }

pinn::EstimatorKind default_kind(const std::string& solver) {
  if (solver == "pinn_full") return pinn::EstimatorKind::Full;
  if (solver == "pinn_sdgd") return pinn::EstimatorKind::SdgdBiased;
  if (solver == "pinn_hte") return pinn::EstimatorKind::HteBiased;
  return pinn::EstimatorKind::Rs;
}

bool kind_matches(const std::string& solver, pinn::EstimatorKind k) {
  using K = pinn::EstimatorKind;
  if (solver == "pinn_full") return k == K::Full;
  if (solver == "pinn_sdgd") return k == K::SdgdBiased || k == K::SdgdUnbiased;
  if (solver == "pinn_hte") return k == K::HteBiased || k == K::HteUnbiased;
  if (solver == "pinn_rs") return k == K::Rs;
  return true;
}

template <class F>
void check(std::vector<std::string>& errs, F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    errs.emplace_back(e.what());
  }
}

// Reads `key` into `out` when present; records unknown keys.
class Reader {
 public:
  Reader(const json& j, std::string where, std::vector<std::string>& errs)
      : j_(j), where_(std::move(where)), errs_(errs) {
    if (!j_.is_object()) errs_.push_back(where_ + " must be an object");
  }
  ~Reader() {
    if (!j_.is_object()) return;
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) errs_.push_back("unknown key " + where_ + it.key());
  }
  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const std::exception&) {
      errs_.push_back("bad value for " + where_ + key);
    }
  }
  const json* child(const std::string& key) {
    seen_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return nullptr;
    return &j_.at(key);
  }
  const std::string& where() const { return where_; }

 private:
  const json& j_;
  std::string where_;
  std::vector<std::string>& errs_;
  std::set<std::string> seen_;
};

std::string lower_hex(std::uint64_t v) { return hex64(v); }

}  // namespace

ConfigError::ConfigError(const std::vector<std::string>& problems)
    : std::invalid_argument("invalid run config: " + join(problems)), problems_(problems) {}

const std::vector<std::string>& solver_names() {
  static const std::vector<std::string> names = {"pinn_full", "pinn_sdgd", "pinn_hte", "pinn_rs",
                                                 "deepbsde",  "martnet",   "shotgun"};
  return names;
}

const std::vector<std::string>& problem_names() {
  static const std::vector<std::string> names = {"hjb", "bs", "heat"};
  return names;
}

std::string version() { return "0.1.0"; }

// ---- config ---------------------------------------------------------------------

void RunConfig::validate() const {
  std::vector<std::string> errs;
  const auto& ps = problem_names();
  const auto& ss = solver_names();
  if (std::find(ps.begin(), ps.end(), problem) == ps.end())
    errs.push_back("unknown problem '" + problem + "'");
  if (std::find(ss.begin(), ss.end(), solver) == ss.end())
    errs.push_back("unknown solver '" + solver + "'");
  if (dim < 1) errs.push_back("dim must be >= 1");
  if (problem == "hjb" && dim < 2) errs.push_back("hjb needs dim >= 2");
  if (!(horizon > 0.0)) errs.push_back("horizon must be positive");
  if (width < 1 || depth < 1) errs.push_back("network width and depth must be >= 1");
  check(errs, [&] { nn::activation_from_string(activation); });
  if (is_pinn(solver)) {
    check(errs, [&] { pinn.validate(dim); });
    if (!kind_matches(solver, pinn.estimator.kind))
      errs.push_back("estimator " + pinn::to_string(pinn.estimator.kind) + " does not belong to " +
                     solver);
  }
  if (solver == "deepbsde") check(errs, [&] { bsde.validate(); });
  if (solver == "martnet") check(errs, [&] { martnet.validate(); });
  if (solver == "shotgun") check(errs, [&] { shotgun.validate(); });
  check(errs, [&] { schedule.validate(); });
  if (test_points < 1) errs.push_back("test_points must be >= 1");
  if (reference_samples < 2) errs.push_back("reference_samples must be >= 2");
  if (validation_points < 0) errs.push_back("validation_points must be >= 0");
  if (validation_points > 0 && validation_samples < 2)
    errs.push_back("validation_samples must be >= 2");
  if (!(bs_scale > 0.0)) errs.push_back("bs_scale must be positive");
  if (output.empty()) errs.push_back("output must be set");
  if (!errs.empty()) throw ConfigError(errs);
}

json to_json(const RunConfig& c) {
  const auto& e = c.pinn.estimator;
  const auto& s = c.schedule;
  json j;
  j["problem"] = c.problem;
  j["dim"] = c.dim;
  j["horizon"] = c.horizon;
  j["solver"] = c.solver;
  j["network"] = {{"width", c.width}, {"depth", c.depth}, {"activation", c.activation}};
  j["pinn"] = {
      {"estimator",
       {{"kind", pinn::to_string(e.kind)},
        {"index_batch", e.index_batch},
        {"hte_count", e.hte_count},
        {"probe", pinn::to_string(e.probe)},
        {"rs_sigma", e.rs_sigma},
        {"rs_pairs", e.rs_pairs},
        {"rs_split", e.rs_split},
        {"rs_stratified", e.rs_stratified}}},
      {"terminal_weight", c.pinn.weights.terminal},
      {"residual_weight", c.pinn.weights.residual},
      {"points", c.pinn.points},
      {"path_steps", c.pinn.path_steps},
      {"declared_sampler", c.pinn.declared_sampler},
      {"adversarial_steps", c.pinn.adversarial_steps},
      {"adversarial_step", c.pinn.adversarial_step},
      {"predict_pairs", c.pinn.predict_pairs}};
  j["bsde"] = {{"paths", c.bsde.paths}, {"steps", c.bsde.steps}};
  const auto& m = c.martnet;
  j["martnet"] = {{"pilot_paths", m.pilot_paths},
                  {"pilot_steps", m.pilot_steps},
                  {"refresh_every", m.refresh_every},
                  {"paths_per_set", m.paths_per_set},
                  {"nodes_per_set", m.nodes_per_set},
                  {"test_outputs", m.test_outputs},
                  {"test_hidden", m.test_hidden},
                  {"terminal_weight", m.terminal_weight},
                  {"normalize_galerkin", m.normalize_galerkin},
                  {"antithetic_increments", m.antithetic_increments},
                  {"train_test_net", m.train_test_net},
                  {"test_lr_scale", m.test_lr_scale},
                  {"per_node", m.per_node},
                  {"warm_start_steps", m.warm_start_steps},
                  {"warm_start_lr", m.warm_start_lr},
                  {"terminal_points", m.terminal_points}};
  const auto& g = c.shotgun;
  j["shotgun"] = {{"h_local", g.difference.h_local},
                  {"pairs", g.difference.pairs},
                  {"probe", g.difference.probe == shotgun::Probe::Gaussian ? "gaussian" : "rademacher"},
                  {"weight", shotgun::to_string(g.embedding.schedule)},
                  {"cubic_n", g.embedding.cubic_n},
                  {"points", g.points},
                  {"path_steps", g.path_steps}};
  j["schedule"] = {{"epochs", s.epochs},
                   {"lr", s.adam.lr},
                   {"beta1", s.adam.beta1},
                   {"beta2", s.adam.beta2},
                   {"eps", s.adam.eps},
                   {"lr_decay", s.lr_decay},
                   {"decay_every", s.decay_every},
                   {"clip_norm", s.clip_norm},
                   {"adversarial_ratio", s.adversarial_ratio},
                   {"eval_every", s.eval_every},
                   {"keep_best", s.keep_best},
                   {"ema_decay", s.ema_decay}};
  j["seeds"] = {{"train", c.train_seed}, {"coefficient", c.coefficient_seed}, {"eval", c.eval_seed}};
  j["evaluation"] = {{"test_points", c.test_points},
                     {"reference_samples", c.reference_samples},
                     {"validation_points", c.validation_points},
                     {"validation_samples", c.validation_samples}};
  j["bs_scale"] = c.bs_scale;
  j["output"] = c.output;
  j["cache_dir"] = c.cache_dir;
  return j;
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  std::vector<std::string> errs;
  {
    Reader r(j, "", errs);
    r.get("problem", c.problem);
    r.get("dim", c.dim);
    r.get("horizon", c.horizon);
    r.get("solver", c.solver);
    r.get("bs_scale", c.bs_scale);
    r.get("output", c.output);
    r.get("cache_dir", c.cache_dir);
    if (const json* n = r.child("network")) {
      Reader rn(*n, "network.", errs);
      rn.get("width", c.width);
      rn.get("depth", c.depth);
      rn.get("activation", c.activation);
    }
    bool kind_given = false;
    if (const json* p = r.child("pinn")) {
      Reader rp(*p, "pinn.", errs);
      if (const json* e = rp.child("estimator")) {
        Reader re(*e, "pinn.estimator.", errs);
        std::string kind, probe;
        re.get("kind", kind);
        re.get("probe", probe);
        check(errs, [&] {
          if (!kind.empty()) {
            c.pinn.estimator.kind = pinn::estimator_from_string(kind);
            kind_given = true;
          }
        });
        check(errs, [&] {
          if (!probe.empty()) c.pinn.estimator.probe = pinn::probe_from_string(probe);
        });
        re.get("index_batch", c.pinn.estimator.index_batch);
        re.get("hte_count", c.pinn.estimator.hte_count);
        re.get("rs_sigma", c.pinn.estimator.rs_sigma);
        re.get("rs_pairs", c.pinn.estimator.rs_pairs);
        re.get("rs_split", c.pinn.estimator.rs_split);
        re.get("rs_stratified", c.pinn.estimator.rs_stratified);
      }
      rp.get("terminal_weight", c.pinn.weights.terminal);
      rp.get("residual_weight", c.pinn.weights.residual);
      rp.get("points", c.pinn.points);
      rp.get("path_steps", c.pinn.path_steps);
      rp.get("declared_sampler", c.pinn.declared_sampler);
      rp.get("adversarial_steps", c.pinn.adversarial_steps);
      rp.get("adversarial_step", c.pinn.adversarial_step);
      rp.get("predict_pairs", c.pinn.predict_pairs);
    }
    if (!kind_given && is_pinn(c.solver)) c.pinn.estimator.kind = default_kind(c.solver);
    if (const json* b = r.child("bsde")) {
      Reader rb(*b, "bsde.", errs);
      rb.get("paths", c.bsde.paths);
      rb.get("steps", c.bsde.steps);
    }
    if (const json* m = r.child("martnet")) {
      Reader rm(*m, "martnet.", errs);
      auto& mc = c.martnet;
      rm.get("pilot_paths", mc.pilot_paths);
      rm.get("pilot_steps", mc.pilot_steps);
      rm.get("refresh_every", mc.refresh_every);
      rm.get("paths_per_set", mc.paths_per_set);
      rm.get("nodes_per_set", mc.nodes_per_set);
      rm.get("test_outputs", mc.test_outputs);
      rm.get("test_hidden", mc.test_hidden);
      rm.get("terminal_weight", mc.terminal_weight);
      rm.get("normalize_galerkin", mc.normalize_galerkin);
      rm.get("antithetic_increments", mc.antithetic_increments);
      rm.get("train_test_net", mc.train_test_net);
      rm.get("test_lr_scale", mc.test_lr_scale);
      rm.get("per_node", mc.per_node);
      rm.get("warm_start_steps", mc.warm_start_steps);
      rm.get("warm_start_lr", mc.warm_start_lr);
      rm.get("terminal_points", mc.terminal_points);
    }
    if (const json* g = r.child("shotgun")) {
      Reader rg(*g, "shotgun.", errs);
      auto& sc = c.shotgun;
      std::string probe, weight;
      rg.get("h_local", sc.difference.h_local);
      rg.get("pairs", sc.difference.pairs);
      rg.get("probe", probe);
      rg.get("weight", weight);
      rg.get("cubic_n", sc.embedding.cubic_n);
      rg.get("points", sc.points);
      rg.get("path_steps", sc.path_steps);
      if (probe == "gaussian") sc.difference.probe = shotgun::Probe::Gaussian;
      else if (probe == "rademacher") sc.difference.probe = shotgun::Probe::Rademacher;
      else if (!probe.empty()) errs.push_back("unknown shotgun probe '" + probe + "'");
      check(errs, [&] {
        if (!weight.empty()) sc.embedding.schedule = shotgun::schedule_from_string(weight);
      });
    }
    if (const json* s = r.child("schedule")) {
      Reader rs(*s, "schedule.", errs);
      auto& sc = c.schedule;
      rs.get("epochs", sc.epochs);
      rs.get("lr", sc.adam.lr);
      rs.get("beta1", sc.adam.beta1);
      rs.get("beta2", sc.adam.beta2);
      rs.get("eps", sc.adam.eps);
      rs.get("lr_decay", sc.lr_decay);
      rs.get("decay_every", sc.decay_every);
      rs.get("clip_norm", sc.clip_norm);
      rs.get("adversarial_ratio", sc.adversarial_ratio);
      rs.get("eval_every", sc.eval_every);
      rs.get("keep_best", sc.keep_best);
      rs.get("ema_decay", sc.ema_decay);
    }
    if (const json* s = r.child("seeds")) {
      Reader rs(*s, "seeds.", errs);
      rs.get("train", c.train_seed);
      rs.get("coefficient", c.coefficient_seed);
      rs.get("eval", c.eval_seed);
    }
    if (const json* e = r.child("evaluation")) {
      Reader re(*e, "evaluation.", errs);
      re.get("test_points", c.test_points);
      re.get("reference_samples", c.reference_samples);
      re.get("validation_points", c.validation_points);
      re.get("validation_samples", c.validation_samples);
    }
  }
  if (!errs.empty()) throw ConfigError(errs);
  return c;
}

std::string config_hash(const RunConfig& cfg) {
  json j = to_json(cfg);
  j.erase("output");
  j.erase("cache_dir");
  return lower_hex(fnv1a(j.dump()));
}

// ---- presets ---------------------------------------------------------------------

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"heat-d3", "desk-d10", "large-d100", "large-d1000"};
  return names;
}

namespace {

// Desk-scale settings per solver (width 64, single CPU core).
void desk_solver_settings(RunConfig& c) {
  auto& s = c.schedule;
  s.epochs = 2000;
  s.adam.lr = 1e-3;
  s.lr_decay = 0.5;
  s.decay_every = 500;
  s.ema_decay = 0.99;
  s.eval_every = 100;
  c.pinn.points = 128;
  c.pinn.estimator.kind = default_kind(c.solver);
  c.pinn.estimator.index_batch = c.dim <= 3 ? 1 : 2;
  c.pinn.estimator.hte_count = 1;
  if (c.solver == "pinn_rs") {
    c.pinn.points = 16;
    c.pinn.estimator.rs_pairs = 16;
    c.pinn.estimator.rs_sigma = 0.05;
    c.pinn.predict_pairs = 32;
    s.epochs = 5000;
    s.decay_every = 1250;
    s.eval_every = 250;
  }
  if (c.solver == "shotgun") {
    c.shotgun.points = 128;
    c.shotgun.difference.pairs = 8;
    // The basket payoff is only Lipschitz; a wider step tames its second difference.
    if (c.problem == "bs") c.shotgun.difference.h_local = 1e-3;
  }
  if (c.solver == "martnet") {
    s.epochs = 1500;
    s.adam.lr = 3e-4;
    s.decay_every = 375;
  }
}

void martnet_settings(RunConfig& c) {
  c.martnet.per_node = true;
  c.martnet.warm_start_steps = 1500;
}

}  // namespace

RunConfig preset(const std::string& name, const std::string& problem, const std::string& solver) {
  RunConfig c;
  c.problem = problem;
  c.solver = solver;
  if (name == "heat-d3") {
    c.problem = "heat";
    c.dim = 3;
    desk_solver_settings(c);
    martnet_settings(c);
  } else if (name == "desk-d10") {
    c.dim = 10;
    c.reference_samples = 100000;
    c.test_points = 200;
    desk_solver_settings(c);
    martnet_settings(c);
  } else if (name == "large-d100" || name == "large-d1000") {
    const bool big = name == "large-d1000";
    c.dim = big ? 1000 : 100;
    c.width = 1024;
    c.depth = 4;
    c.reference_samples = 1000000;
    c.test_points = 1000;
    c.validation_points = 100;
    c.validation_samples = 100000;
    c.schedule.epochs = 10000;
    c.schedule.eval_every = 500;
    c.schedule.lr_decay = 0.5;
    c.schedule.decay_every = 2500;
    c.pinn.estimator.kind = default_kind(solver);
    if (solver == "pinn_sdgd" && problem == "hjb") {
      // L-infinity training via adversarial point updates, SDGD for the trace.
      c.pinn.adversarial_steps = 5;
      c.pinn.estimator.index_batch = 10;
    }
    c.bsde.steps = 100;
    c.martnet.pilot_steps = 100;
    martnet_settings(c);
    c.shotgun.path_steps = 20;
    c.shotgun.difference.h_local = 1e-5;
    c.shotgun.difference.pairs = big ? 32 : 8;
    c.shotgun.embedding.schedule = big ? shotgun::WeightSchedule::Cubic : shotgun::WeightSchedule::Linear;
    c.shotgun.embedding.cubic_n = 20;
  } else {
    throw std::invalid_argument("unknown preset '" + name + "'");
  }
  c.validate();
  return c;
}

// ---- construction ------------------------------------------------------------------

problems::ParabolicProblem build_problem(const RunConfig& cfg) {
  if (cfg.problem == "heat") return problems::make_problem(problems::HeatSanityInstance{cfg.dim, cfg.horizon});
  if (cfg.problem == "hjb")
    return problems::make_problem(problems::make_hjb_instance(cfg.dim, cfg.coefficient_seed, cfg.horizon));
  if (cfg.problem == "bs") {
    auto inst = problems::make_bs_instance(cfg.dim);
    inst.horizon = cfg.horizon;
    return problems::make_problem(problems::scale_bs(inst, cfg.bs_scale));
  }
  throw std::invalid_argument("unknown problem '" + cfg.problem + "'");
}

nn::MlpSpec build_network(const RunConfig& cfg, const problems::ParabolicProblem& problem) {
  nn::MlpSpec spec;
  spec.spatial_dim = cfg.dim;
  spec.hidden_widths.assign(static_cast<std::size_t>(cfg.depth), cfg.width);
  spec.activation = nn::activation_from_string(cfg.activation);
  spec.horizon = problem.horizon;
  if (cfg.problem == "bs") {
    // States start in [90, 110]^d; standardize around the strike in internal units.
    spec.input_center = 100.0 / cfg.bs_scale;
    spec.input_scale = 10.0 / cfg.bs_scale;
  }
  spec.validate();
  return spec;
}

std::unique_ptr<train::Solver> build_solver(const RunConfig& cfg) {
  cfg.validate();
  auto problem = build_problem(cfg);
  const auto spec = build_network(cfg, problem);
  const std::uint64_t seed = cfg.train_seed;
  if (is_pinn(cfg.solver)) return std::make_unique<pinn::PinnSolver>(std::move(problem), spec, seed, cfg.pinn);
  if (cfg.solver == "deepbsde") return std::make_unique<bsde::BsdeSolver>(std::move(problem), spec, seed, cfg.bsde);
  if (cfg.solver == "martnet")
    return std::make_unique<martnet::MartNetSolver>(std::move(problem), spec, seed, cfg.martnet);
  return std::make_unique<shotgun::ShotgunSolver>(std::move(problem), spec, seed, cfg.shotgun);
}

// ---- references ------------------------------------------------------------------

double ReferenceSet::noise_floor() const {
  const double n = values.norm();
  return n > 0.0 ? se.norm() / n : 0.0;
}

ReferenceSet compute_references(const problems::ParabolicProblem& problem, int points,
                                std::uint64_t samples, std::uint64_t seed, PointRole role,
                                const fs::path& cache_dir, bool allow_compute) {
  if (points < 1) throw std::invalid_argument("compute_references: need at least one point");
  if (!problem.reference) throw std::invalid_argument("compute_references: problem has no reference");
  const std::uint64_t stream = role == PointRole::Test ? 11 : 12;
  sde::NoiseSource pick(seed, stream);
  ReferenceSet out;
  out.points = problem.test_sampler(pick, points);
  out.exact = problem.reference_is_exact;
  out.values.resize(points);
  out.se.resize(points);

  std::ostringstream key;
  key << problem.identity << '|' << points << '|' << samples << '|' << seed << '|' << stream << '|'
      << hex64(fnv1a(out.points));
  const fs::path file = cache_dir / ("refs-" + hex64(fnv1a(key.str())) + ".json");

  if (!out.exact && fs::exists(file)) {
    std::ifstream in(file);
    const json j = json::parse(in);
    const auto v = j.at("values").get<std::vector<double>>();
    const auto s = j.at("se").get<std::vector<double>>();
    if (j.at("key").get<std::string>() != key.str() || v.size() != static_cast<std::size_t>(points) ||
        s.size() != v.size())
      throw std::runtime_error("reference cache " + file.string() + " does not match its key");
    for (int i = 0; i < points; ++i) {
      out.values(i) = v[static_cast<std::size_t>(i)];
      out.se(i) = s[static_cast<std::size_t>(i)];
    }
    return out;
  }
  if (!out.exact && problem.dim > 100 && !allow_compute)
    throw ReferenceCacheMiss("no cached references for " + problem.identity + " at d=" +
                             std::to_string(problem.dim) + "; rerun with --compute-refs");

  const sde::NoiseSource base(seed, stream + 100);
  for (int i = 0; i < points; ++i) {
    sde::NoiseSource n = base.split(static_cast<std::uint64_t>(i));
    const auto e = problem.reference(out.points.col(i), 0.0, samples, n);
    out.values(i) = e.value;
    out.se(i) = e.se;
  }
  if (!out.exact) {
    fs::create_directories(cache_dir);
    json j;
    j["key"] = key.str();
    j["samples"] = samples;
    j["values"] = std::vector<double>(out.values.data(), out.values.data() + points);
    j["se"] = std::vector<double>(out.se.data(), out.se.data() + points);
    const fs::path tmp = file.string() + ".tmp";
    {
      std::ofstream o(tmp);
      if (!o) throw std::runtime_error("cannot write " + tmp.string());
      o << j.dump() << '\n';
    }
    fs::rename(tmp, file);
  }
  return out;
}

RowVector predict_original(const train::Solver& solver, const problems::ParabolicProblem& problem,
                           const Matrix& points) {
  return problem.value_scale * solver.predict(points / problem.coordinate_scale);
}

double relative_l2(const RowVector& prediction, const RowVector& reference) {
  if (prediction.size() != reference.size() || reference.size() == 0)
    throw std::invalid_argument("relative_l2: size mismatch");
  const double denom = reference.norm();
  if (denom == 0.0) throw std::invalid_argument("relative_l2: zero reference");
  return (prediction - reference).norm() / denom;
}

bool is_inconclusive(double rel_l2, double noise_floor) { return rel_l2 < 3.0 * noise_floor; }

// ---- results ----------------------------------------------------------------------

json to_json(const RunResult& r) {
  json j;
  j["config_hash"] = r.config_hash;
  j["problem"] = r.problem;
  j["solver"] = r.solver;
  j["d"] = r.dim;
  j["rel_l2"] = r.rel_l2;
  j["n_test"] = r.n_test;
  j["abs_errors"] = r.abs_errors;
  j["reference_noise_floor"] = r.reference_noise_floor;
  j["inconclusive"] = r.inconclusive;
  j["validation_rel_l2"] = r.validation_rel_l2 ? json(*r.validation_rel_l2) : json(nullptr);
  j["best_epoch"] = r.best_epoch;
  j["aborted"] = r.aborted;
  j["abort_reason"] = r.abort_reason;
  j["wall_seconds"] = r.wall_seconds;
  j["seeds"] = {{"train", r.train_seed}, {"coefficient", r.coefficient_seed}, {"eval", r.eval_seed}};
  j["history_csv"] = r.history_csv;
  j["version"] = r.version;
  return j;
}

RunResult result_from_json(const json& j) {
  RunResult r;
  r.config_hash = j.at("config_hash").get<std::string>();
  r.problem = j.at("problem").get<std::string>();
  r.solver = j.at("solver").get<std::string>();
  r.dim = j.at("d").get<int>();
  r.rel_l2 = j.at("rel_l2").get<double>();
  r.n_test = j.at("n_test").get<int>();
  r.abs_errors = j.value("abs_errors", std::vector<double>{});
  r.reference_noise_floor = j.value("reference_noise_floor", 0.0);
  r.inconclusive = j.value("inconclusive", false);
  if (j.contains("validation_rel_l2") && !j.at("validation_rel_l2").is_null())
    r.validation_rel_l2 = j.at("validation_rel_l2").get<double>();
  r.best_epoch = j.value("best_epoch", -1);
  r.aborted = j.value("aborted", false);
  r.abort_reason = j.value("abort_reason", std::string());
  r.wall_seconds = j.value("wall_seconds", 0.0);
  const json& s = j.at("seeds");
  r.train_seed = s.at("train").get<std::uint64_t>();
  r.coefficient_seed = s.at("coefficient").get<std::uint64_t>();
  r.eval_seed = s.at("eval").get<std::uint64_t>();
  r.history_csv = j.value("history_csv", std::string());
  r.version = j.value("version", std::string());
  return r;
}

fs::path run_directory(const RunConfig& cfg) {
  return fs::path(cfg.output) /
         (cfg.solver + "-" + cfg.problem + "-d" + std::to_string(cfg.dim) + "-" + config_hash(cfg));
}

namespace {

void write_json(const fs::path& path, const json& j) {
  std::ofstream o(path);
  if (!o) throw std::runtime_error("cannot write " + path.string());
  o << j.dump(2) << '\n';
}

}  // namespace

RunResult run(const RunConfig& cfg, const RunOptions& options) {
  cfg.validate();
  const std::string hash = config_hash(cfg);
  const fs::path dir = run_directory(cfg);
  const fs::path result_file = dir / "result.json";
  if (!options.force && fs::exists(result_file)) {
    std::ifstream in(result_file);
    RunResult cached = result_from_json(json::parse(in));
    if (cached.config_hash == hash) return cached;
  }

  const auto start = std::chrono::steady_clock::now();
  const auto problem = build_problem(cfg);
  const fs::path cache(cfg.cache_dir);
  const ReferenceSet test = compute_references(problem, cfg.test_points, cfg.reference_samples,
                                               cfg.eval_seed, PointRole::Test, cache,
                                               options.compute_refs);
  std::optional<ReferenceSet> validation;
  if (cfg.validation_points > 0)
    validation = compute_references(problem, cfg.validation_points, cfg.validation_samples,
                                    cfg.eval_seed, PointRole::Validation, cache,
                                    options.compute_refs);

  auto solver = build_solver(cfg);
  train::TrainSchedule schedule = cfg.schedule;
  train::Evaluator evaluator;
  if (validation) {
    evaluator = [&](const train::Solver& s) {
      return relative_l2(predict_original(s, problem, validation->points), validation->values);
    };
    if (options.progress) {
      evaluator = [&, inner = evaluator](const train::Solver& s) {
        const double e = inner(s);
        options.progress(e);
        return e;
      };
    }
  } else {
    schedule.keep_best = false;
  }
  const auto trained = train::train(*solver, schedule, sde::NoiseSource(cfg.train_seed, 0x7a11), evaluator);

  const RowVector pred = predict_original(*solver, problem, test.points);
  RunResult r;
  r.config_hash = hash;
  r.problem = cfg.problem;
  r.solver = cfg.solver;
  r.dim = cfg.dim;
  r.rel_l2 = relative_l2(pred, test.values);
  r.n_test = cfg.test_points;
  const RowVector err = (pred - test.values).cwiseAbs();
  r.abs_errors.assign(err.data(), err.data() + err.size());
  r.reference_noise_floor = test.noise_floor();
  r.inconclusive = !test.exact && is_inconclusive(r.rel_l2, r.reference_noise_floor);
  r.validation_rel_l2 = trained.best_rel_l2;
  r.best_epoch = trained.best_epoch;
  r.aborted = trained.aborted;
  r.abort_reason = trained.abort_reason;
  r.train_seed = cfg.train_seed;
  r.coefficient_seed = cfg.coefficient_seed;
  r.eval_seed = cfg.eval_seed;
  r.history_csv = "history.csv";
  r.version = version();
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  fs::create_directories(dir);
  write_json(dir / "config.json", to_json(cfg));
  train::write_history_csv(trained.history, dir / "history.csv");
  write_json(result_file, to_json(r));
  return r;
}

// ---- report -----------------------------------------------------------------------

std::string report(const fs::path& root, bool write_files) {
  struct Row {
    RunResult r;
    fs::path dir;
  };
  std::vector<Row> rows;
  if (fs::exists(root))
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
      if (!entry.is_regular_file() || entry.path().filename() != "result.json") continue;
      std::ifstream in(entry.path());
      rows.push_back({result_from_json(json::parse(in)), entry.path().parent_path()});
    }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return std::tie(a.r.problem, a.r.dim, a.r.solver, a.r.config_hash) <
           std::tie(b.r.problem, b.r.dim, b.r.solver, b.r.config_hash);
  });

  std::ostringstream md, csv, curves;
  md << "| problem | d | solver | rel L2 | wall s | flags |\n";
  md << "|---|---|---|---|---|---|\n";
  csv << "problem,d,solver,config_hash,rel_l2,wall_seconds,inconclusive,aborted\n";
  curves << "problem,d,solver,config_hash,epoch,rel_l2\n";
  for (const auto& [r, dir] : rows) {
    std::string flags;
    if (r.inconclusive) flags += "INCONCLUSIVE";
    if (r.aborted) flags += std::string(flags.empty() ? "" : " ") + "ABORTED";
    char rel[32], wall[32];
    std::snprintf(rel, sizeof rel, "%.3e", r.rel_l2);
    std::snprintf(wall, sizeof wall, "%.1f", r.wall_seconds);
    md << "| " << r.problem << " | " << r.dim << " | " << r.solver << " | " << rel << " | " << wall
       << " | " << flags << " |\n";
    csv << r.problem << ',' << r.dim << ',' << r.solver << ',' << r.config_hash << ',' << rel << ','
        << wall << ',' << (r.inconclusive ? 1 : 0) << ',' << (r.aborted ? 1 : 0) << '\n';
    std::ifstream hist(dir / (r.history_csv.empty() ? "history.csv" : r.history_csv));
    std::string line;
    std::getline(hist, line);
    while (std::getline(hist, line)) {
      std::vector<std::string> cols;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) cols.push_back(cell);
      if (cols.size() >= 4 && !cols[3].empty())
        curves << r.problem << ',' << r.dim << ',' << r.solver << ',' << r.config_hash << ','
               << cols[0] << ',' << cols[3] << '\n';
    }
  }
  if (write_files && fs::exists(root)) {
    std::ofstream(root / "table.csv") << csv.str();
    std::ofstream(root / "curves.csv") << curves.str();
  }
  return md.str();
}

}  // namespace hdpde::bench
