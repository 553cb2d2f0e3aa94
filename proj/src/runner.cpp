#include "eqfree/runner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "eqfree/parallel.hpp"

namespace eqfree::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Csv {
 public:
  explicit Csv(const std::vector<std::string>& header) { row_strings(header); }

  Csv& row(const std::vector<double>& values) {
    std::vector<std::string> s;
    for (double v : values) s.push_back(format_number(v));
    return row_strings(s);
  }

  Csv& row_strings(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) text_ += (i ? "," : "") + cells[i];
    text_ += '\n';
    return *this;
  }

  void save(const fs::path& dir, const std::string& name, RunResult& result) const {
    write_text(dir / name, text_);
    result.files.push_back(name);
  }

 private:
  std::string text_;
};

// json has no nan; store non-finite values as strings
json num(double v) {
  if (std::isfinite(v)) return v;
  return format_number(v);
}

double flag(bool b) { return b ? 1.0 : 0.0; }

void add_branch_rows(Csv& csv, const continuation::Branch& b, std::vector<double> prefix = {}) {
  for (const auto& p : b.points) {
    auto r = prefix;
    const std::vector<double> cells{p.sigma, p.sigma_healed, p.v0,
                                    p.h,     p.f_sigma,      p.multiplier_valid ? p.multiplier : NAN,
                                    flag(p.stable)};
    r.insert(r.end(), cells.begin(), cells.end());
    csv.row(r);
  }
}

const std::vector<std::string> kBranchColumns{"sigma", "sigma_healed", "v0",    "h",
                                              "f_sigma", "multiplier", "stable"};

std::vector<std::string> with_prefix(const std::string& first,
                                     const std::vector<std::string>& rest) {
  std::vector<std::string> out{first};
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

json fold_json(const continuation::FoldEstimate& f) {
  return {{"sigma", f.sigma},
          {"sigma_healed", f.sigma_healed},
          {"v0", f.v0},
          {"h", f.h},
          {"index", f.index},
          {"f_sigma_sign_change", f.f_sigma_sign_change},
          {"stability_change", f.stability_change}};
}

json branch_json(const continuation::Branch& b) {
  json folds = json::array();
  for (const auto& f : continuation::detect_folds(b)) folds.push_back(fold_json(f));
  json j{{"points", b.points.size()},
         {"termination", b.termination},
         {"truncated", b.truncated},
         {"folds", folds},
         {"log", b.log}};
  if (!b.points.empty())
    j["last"] = {{"sigma", b.points.back().sigma}, {"v0", b.points.back().v0}};
  return j;
}

micro::ModelParams model_at(const RunConfig& c, double v0) {
  auto m = c.model;
  m.v0 = v0;
  return m;
}

// ---------------------------------------------------------------------------

void run_simulate(const RunConfig& c, const fs::path& out, RunResult& r) {
  std::vector<double> times;
  const auto n = static_cast<long>(std::floor(c.t_end / c.sample_dt + 1e-9));
  for (long i = 0; i <= n; ++i) times.push_back(static_cast<double>(i) * c.sample_dt);
  if (times.back() < c.t_end) times.push_back(c.t_end);
  micro::IntegrationStats stats;
  const auto states =
      micro::integrate_checkpoints(micro::perturbed_state(c.model), c.model, times, c.integrator,
                                   &stats);
  Csv csv({"t", "sigma"});
  for (std::size_t i = 0; i < times.size(); ++i)
    csv.row({times[i], coarse::restrict_state(states[i], c.model)});
  csv.save(out, "simulate.csv", r);
  r.summary = {{"final_sigma", coarse::restrict_state(states.back(), c.model)},
               {"steps_accepted", stats.accepted},
               {"steps_rejected", stats.rejected},
               {"nonpositive_headway", stats.nonpositive_headway}};
}

void run_branch(const RunConfig& c, const fs::path& out, RunResult& r) {
  const auto branch = analysis::jam_branch(c.study(), c.model.h, c.p);
  Csv csv(kBranchColumns);
  add_branch_rows(csv, branch);
  csv.save(out, "branch.csv", r);
  r.truncated = branch.truncated;
  r.summary = branch_json(branch);
  r.summary["hopf_v0_j1"] = analysis::hopf_v0(c.model.h, 1, c.model);
}

void run_fold2(const RunConfig& c, const fs::path& out, RunResult& r) {
  const auto setup = c.study();
  const auto branch = analysis::jam_branch(setup, c.model.h, c.p);
  Csv bcsv(kBranchColumns);
  add_branch_rows(bcsv, branch);
  bcsv.save(out, "branch.csv", r);
  const auto curve = analysis::fold_curve(setup, branch, c.p, c.fold_h_min, c.fold_h_max,
                                             c.fold_t_skip);
  json parts = json::array();
  for (const auto& half : curve.halves)
    parts.push_back({{"points", half.points.size()},
                     {"termination", half.termination},
                     {"truncated", half.truncated},
                     {"log", half.log}});
  Csv csv({"sigma", "sigma_healed", "v0", "h", "f_sigma", "f_sigma_sigma", "near_cusp"});
  for (const auto& p : curve.points)
    csv.row({p.sigma, p.sigma_healed, p.v0, p.h, p.f_sigma, p.derivatives.F_sigma_sigma,
             flag(p.near_cusp)});
  csv.save(out, "fold_curve.csv", r);
  r.truncated = branch.truncated || curve.truncated;
  r.summary = {{"branch", branch_json(branch)},
               {"fold_seed", fold_json(curve.seed)},
               {"fold_curve", parts}};
}

struct BackwardSetup {
  std::shared_ptr<const coarse::LiftContext> ctx;
  analysis::BackwardTrajectory trajectory;
};

BackwardSetup backward_setup(const RunConfig& c) {
  const auto params = model_at(c, c.backward_v0);
  BackwardSetup s;
  s.ctx = std::make_shared<const coarse::LiftContext>(
      analysis::jam_reference(c.model, c.backward_v0, c.model.h, c.seed_v0_first, c.jam_time,
                              c.integrator),
      params, c.p);
  coarse::TrafficProblem problem(params, s.ctx, c.integrator);
  auto cs = c.coarse;
  cs.threads = c.threads;
  s.trajectory = analysis::backward_trajectory(problem, c.backward_v0, c.model.h,
                                               s.ctx->reference_sigma() / c.p, c.delta_t,
                                               c.backward_steps, c.backward_offset, cs);
  return s;
}

void run_backward(const RunConfig& c, const fs::path& out, RunResult& r) {
  const auto s = backward_setup(c);
  const auto& t = s.trajectory;
  Csv csv({"step", "t", "sigma", "healed", "rate"});
  for (std::size_t k = 0; k < t.sigmas.size(); ++k) {
    const double healed = k == 0 ? t.steps.front().start.healed : t.steps[k - 1].healed;
    const double rate = k < t.steps.size() ? t.steps[k].start.rate : NAN;
    csv.row({static_cast<double>(k), static_cast<double>(k) * c.delta_t, t.sigmas[k], healed,
             rate});
  }
  csv.save(out, "backward.csv", r);
  r.summary = {{"stable_sigma", t.stable_sigma},
               {"unstable_sigma", t.unstable_sigma},
               {"final_sigma", t.sigmas.back()},
               {"final_distance", std::abs(t.sigmas.back() - t.unstable_sigma)},
               {"midpoint_sigma", analysis::trajectory_midpoint(t)}};
}

void run_hopf(const RunConfig& c, const fs::path& out, RunResult& r) {
  Csv csv({"h", "j", "v0", "omega"});
  for (double jd : c.hopf_modes) {
    const int j = static_cast<int>(jd);
    for (int i = 0; i < c.hopf_points; ++i) {
      const double h = c.continuation.h_min +
                       (c.continuation.h_max - c.continuation.h_min) * i / (c.hopf_points - 1);
      csv.row({h, jd, analysis::hopf_v0(h, j, c.model), analysis::hopf_frequency(h, j, c.model)});
    }
  }
  csv.save(out, "hopf.csv", r);
  r.summary = {{"v0_j1_at_h", analysis::hopf_v0(c.model.h, 1, c.model)}};
}

void run_lifting_sweep(const RunConfig& c, const fs::path& out, RunResult& r) {
  const auto grid = analysis::descending_grid(c.seed_v0_first, c.direct_v0_end, c.direct_points);
  const auto direct =
      analysis::direct_downsweep(c.model, c.model.h, grid, c.direct_time, c.integrator);
  Csv dcsv({"v0", "sigma"});
  for (const auto& d : direct) dcsv.row({d.v0, d.sigma});
  dcsv.save(out, "sweep_direct.csv", r);

  const auto sweep =
      analysis::lifting_sweep(c.study(), c.p_values, c.model.h, direct, c.sweep_a, c.sweep_b);
  Csv csv({"p", "unhealed_distance", "healed_distance", "a", "b"});
  Csv bcsv(with_prefix("p", kBranchColumns));
  json rows = json::array();
  for (const auto& row : sweep.rows) {
    csv.row({row.p, row.unhealed_distance, row.healed_distance, row.a, row.b});
    add_branch_rows(bcsv, row.branch, {row.p});
    r.truncated = r.truncated || row.branch.truncated;
    rows.push_back({{"p", row.p}, {"branch", branch_json(row.branch)}});
  }
  csv.save(out, "sweep_lifting.csv", r);
  bcsv.save(out, "sweep_lifting_branches.csv", r);
  r.summary = {{"rows", rows}, {"healed_pairwise", sweep.healed_pairwise},
               {"direct_samples", direct.size()}};
}

void run_tskip_scan(const RunConfig& c, const fs::path& out, RunResult& r) {
  const auto rows = analysis::tskip_scan(c.study(), c.tskip_values, c.model.h, c.reference_tskip,
                                         c.tskip_a, c.tskip_b);
  Csv csv({"t_skip", "distance"});
  Csv bcsv(with_prefix("t_skip", kBranchColumns));
  Csv fcsv({"t_skip", "sigma", "sigma_healed", "v0", "f_sigma_sign_change", "stability_change"});
  json js = json::array();
  for (const auto& row : rows) {
    csv.row({row.t_skip, row.distance});
    add_branch_rows(bcsv, row.branch, {row.t_skip});
    for (const auto& f : row.folds)
      fcsv.row({row.t_skip, f.sigma, f.sigma_healed, f.v0, flag(f.f_sigma_sign_change),
                flag(f.stability_change)});
    r.truncated = r.truncated || row.branch.truncated;
    js.push_back({{"t_skip", row.t_skip}, {"branch", branch_json(row.branch)}});
  }
  csv.save(out, "sweep_tskip.csv", r);
  bcsv.save(out, "sweep_tskip_branches.csv", r);
  fcsv.save(out, "sweep_tskip_folds.csv", r);
  r.summary = {{"rows", js}};
}

void run_fberror_scan(const RunConfig& c, const fs::path& out, RunResult& r) {
  const auto params = model_at(c, c.backward_v0);
  double base = c.fb_sigma;
  std::shared_ptr<const coarse::LiftContext> ctx;
  json traj;
  if (std::isnan(base)) {
    const auto s = backward_setup(c);
    ctx = s.ctx;
    base = analysis::trajectory_midpoint(s.trajectory);
    traj = {{"stable_sigma", s.trajectory.stable_sigma},
            {"unstable_sigma", s.trajectory.unstable_sigma}};
  } else {
    ctx = std::make_shared<const coarse::LiftContext>(
        analysis::jam_reference(c.model, c.backward_v0, c.model.h, c.seed_v0_first, c.jam_time,
                                c.integrator),
        params, c.p);
  }
  coarse::TrafficProblem problem(params, ctx, c.integrator);
  auto cs = c.coarse;
  cs.threads = c.threads;
  const auto rows = analysis::fberror_scan(problem, base, {base, c.backward_v0, c.model.h}, cs,
                                           c.fb_tskips, c.fb_deltas);
  Csv csv({"t_skip", "delta", "delta_t", "error", "sigma_h0", "omega_h0", "sigma_1"});
  std::vector<double> x, e;
  for (const auto& row : rows) {
    csv.row({row.t_skip, row.delta, row.delta_t, row.result.error, row.result.sigma_h0,
             row.result.omega_h0, row.result.sigma_1});
    x.push_back(-row.delta_t);
    e.push_back(row.result.error);
  }
  csv.save(out, "sweep_fberror.csv", r);

  json per_tskip = json::array();
  for (double ts : c.fb_tskips) {
    std::vector<double> xs, es;
    for (const auto& row : rows)
      if (row.t_skip == ts) {
        xs.push_back(-row.delta_t);
        es.push_back(row.result.error);
      }
    per_tskip.push_back({{"t_skip", ts}, {"slope", num(analysis::loglog_slope(xs, es))}});
  }
  r.summary = {{"base_sigma", base},
               {"trajectory", traj},
               {"pooled_slope", num(analysis::loglog_slope(x, e))},
               {"slopes", per_tskip}};
}

void run_converge_lab(const RunConfig& c, const fs::path& out, RunResult& r) {
  Csv csv({"epsilon", "t_skip", "phi", "error", "in_fit"});
  json scans = json::array();
  for (double eps : c.lab_epsilons) {
    const auto sys = c.toy(eps);
    const auto scan =
        lab::convergence_scan(c.lab_x, c.lab_slow_time / eps, sys, c.lab_tskips, c.threads);
    for (const auto& row : scan.rows)
      csv.row({eps, row.t_skip, row.phi, row.error, flag(row.in_fit)});
    scans.push_back({{"epsilon", eps},
                     {"delta", c.lab_slow_time / eps},
                     {"reference", scan.reference},
                     {"t_skip_ref", scan.t_skip_ref},
                     {"slope", num(scan.slope)},
                     {"fit_points", scan.fit_points}});
  }
  csv.save(out, "convergence.csv", r);
  r.summary = {{"scans", scans}, {"error_floor", lab::kErrorFloor}};
}

}  // namespace

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw std::runtime_error("failed writing '" + path.string() + "'");
}

RunResult run(const RunConfig& config, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  RunResult r;
  switch (config.command) {
    case Command::simulate: run_simulate(config, out_dir, r); break;
    case Command::branch: run_branch(config, out_dir, r); break;
    case Command::fold2: run_fold2(config, out_dir, r); break;
    case Command::backward: run_backward(config, out_dir, r); break;
    case Command::hopf: run_hopf(config, out_dir, r); break;
    case Command::lifting_sweep: run_lifting_sweep(config, out_dir, r); break;
    case Command::tskip_scan: run_tskip_scan(config, out_dir, r); break;
    case Command::fberror_scan: run_fberror_scan(config, out_dir, r); break;
    case Command::converge_lab: run_converge_lab(config, out_dir, r); break;
  }
  write_text(out_dir / "run.json", metadata(config, r).dump(2) + "\n");
  return r;
}

json metadata(const RunConfig& config, const RunResult& result) {
  json cfg = json::object();
  for (const auto& [k, v] : config_entries(config)) cfg[k] = v;
  return {{"command", command_name(config.command)},
          {"config_hash", config_hash(config)},
          {"config", cfg},
          {"constants",
           {{"min_reference_sigma", coarse::kMinReferenceSigma},
            {"transversality_threshold", solvers::kTransversalityThreshold},
            {"cusp_threshold", continuation::kCuspThreshold},
            {"lab_error_floor", lab::kErrorFloor},
            {"jam_dissolved_sigma", 1e-3},
            {"newton_max_condition", solvers::NewtonOptions{}.max_condition},
            {"integrator", "Dormand-Prince 5(4), RMS error norm"}}},
          {"files", result.files},
          {"truncated", result.truncated},
          {"result", result.summary}};
}

}  // namespace eqfree::cli
