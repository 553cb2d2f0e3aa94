#include "eqfree/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "eqfree/parallel.hpp"

namespace eqfree::analysis {

namespace {

void check_mode(int j, const ModelParams& params) {
  if (j < 1 || j > params.N - 1)
    throw std::invalid_argument("Hopf mode j must lie in [1, N-1], got " + std::to_string(j));
  if (2 * j == params.N)
    throw std::invalid_argument("mode j = N/2 has no Hopf point (sin(2 pi j / N) = 0)");
}

// V'(L/N) / v0
double slope_per_v0(double h, const ModelParams& params) {
  const double t = std::tanh(h - params.L / params.N);
  return 1.0 - t * t;
}

}  // namespace

double hopf_v0(double h, int j, const ModelParams& params) {
  check_mode(j, params);
  const double theta = 2.0 * std::numbers::pi * j / params.N;
  const double s = std::sin(theta);
  const double slope = (1.0 - std::cos(theta)) / (params.tau * s * s);
  return slope / slope_per_v0(h, params);
}

double hopf_frequency(double h, int j, const ModelParams& params) {
  const double v0 = hopf_v0(h, j, params);
  const double theta = 2.0 * std::numbers::pi * j / params.N;
  return v0 * slope_per_v0(h, params) * std::sin(theta);
}

std::complex<double> hopf_residual(double v0, double omega, double h, const ModelParams& params) {
  const double slope = v0 * slope_per_v0(h, params);
  const std::complex<double> z(1.0 - omega * omega * params.tau / slope, omega / slope);
  return std::pow(z, params.N) - 1.0;
}

// ---------------------------------------------------------------------------

NaturalSpline::NaturalSpline(std::vector<double> x, std::vector<double> y)
    : x_(std::move(x)), y_(std::move(y)) {
  const std::size_t n = x_.size();
  if (n != y_.size()) throw std::invalid_argument("spline: x and y differ in length");
  if (n < 2) throw std::invalid_argument("spline needs at least two knots");
  for (std::size_t i = 1; i < n; ++i)
    if (!(x_[i] > x_[i - 1])) throw std::invalid_argument("spline knots must increase strictly");

  // tridiagonal system for the interior second derivatives (Thomas algorithm)
  m_.assign(n, 0.0);
  if (n == 2) return;
  std::vector<double> c(n, 0.0), d(n, 0.0);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double h0 = x_[i] - x_[i - 1];
    const double h1 = x_[i + 1] - x_[i];
    const double rhs = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
    const double diag = 2.0 * (h0 + h1) - h0 * c[i - 1];
    c[i] = h1 / diag;
    d[i] = (rhs - h0 * d[i - 1]) / diag;
  }
  for (std::size_t i = n - 2; i >= 1; --i) m_[i] = d[i] - c[i] * m_[i + 1];
}

double NaturalSpline::operator()(double t) const {
  auto it = std::upper_bound(x_.begin(), x_.end(), t);
  std::size_t i = it == x_.begin() ? 0 : static_cast<std::size_t>(it - x_.begin()) - 1;
  i = std::min(i, x_.size() - 2);
  const double h = x_[i + 1] - x_[i];
  const double a = (x_[i + 1] - t) / h;
  const double b = (t - x_[i]) / h;
  return a * y_[i] + b * y_[i + 1] +
         ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
}

namespace {

double simpson_step(const std::function<double(double)>& f, double a, double fa, double b,
                    double fb, double m, double fm, double whole, double tol, int depth) {
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double diff = left + right - whole;
  if (depth <= 0 || std::abs(diff) <= 15.0 * tol) return left + right + diff / 15.0;
  return simpson_step(f, a, fa, m, fm, lm, flm, left, tol / 2, depth - 1) +
         simpson_step(f, m, fm, b, fb, rm, frm, right, tol / 2, depth - 1);
}

}  // namespace

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol,
                        int max_depth) {
  if (a == b) return 0.0;
  const double m = 0.5 * (a + b);
  const double fa = f(a), fb = f(b), fm = f(m);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson_step(f, a, fa, b, fb, m, fm, whole, tol, max_depth);
}

// ---------------------------------------------------------------------------

Graph branch_graph(const continuation::Branch& branch, Coordinate coordinate, double a, double b) {
  constexpr double kDuplicate = 1e-6;
  auto coord = [&](const continuation::BranchPoint& p) {
    return coordinate == Coordinate::healed ? p.sigma_healed : p.sigma;
  };
  const auto& pts = branch.points;
  std::size_t start = 0;
  while (start < pts.size()) {
    // grow a run that is monotone in sigma, skipping near-duplicates
    Graph run{{coord(pts[start]), pts[start].v0}};
    int dir = 0;
    std::size_t i = start + 1;
    for (; i < pts.size(); ++i) {
      const double d = coord(pts[i]) - run.back().first;
      if (std::abs(d) < kDuplicate) continue;
      const int s = d > 0 ? 1 : -1;
      if (dir == 0) dir = s;
      if (s != dir) break;
      run.emplace_back(coord(pts[i]), pts[i].v0);
    }
    if (dir < 0) std::reverse(run.begin(), run.end());
    if (run.size() >= 2 && run.front().first <= a && run.back().first >= b) {
      // knots inside [a, b] plus one bracketing point on each side
      auto lo = std::upper_bound(run.begin(), run.end(), a,
                                 [](double v, const auto& q) { return v < q.first; });
      auto hi = std::lower_bound(run.begin(), run.end(), b,
                                 [](const auto& q, double v) { return q.first < v; });
      if (lo != run.begin()) --lo;
      if (hi != run.end()) ++hi;
      return Graph(lo, hi);
    }
    if (i >= pts.size()) break;
    start = i - 1;
  }
  throw std::runtime_error("branch has no monotone run in sigma covering [" + std::to_string(a) +
                           ", " + std::to_string(b) + "]");
}

double graph_distance(const Graph& f, const Graph& g, const BranchDistanceSpec& spec) {
  if (!(spec.b > spec.a)) throw std::invalid_argument("distance interval must have b > a");
  auto spline = [](const Graph& gr) {
    std::vector<double> x, y;
    for (const auto& [s, v] : gr) {
      x.push_back(s);
      y.push_back(v);
    }
    return NaturalSpline(std::move(x), std::move(y));
  };
  const auto sf = spline(f);
  const auto sg = spline(g);
  for (const auto* s : {&sf, &sg})
    if (s->front() > spec.a || s->back() < spec.b)
      throw std::runtime_error("graph does not cover the distance interval");
  auto integrand = [&](double s) {
    const double d = sf(s) - sg(s);
    return spec.norm == NormKind::l2_squared ? d * d : std::abs(d);
  };
  return adaptive_simpson(integrand, spec.a, spec.b, spec.tol);
}

double branch_distance(const continuation::Branch& f, const continuation::Branch& g,
                       const BranchDistanceSpec& spec) {
  return graph_distance(branch_graph(f, spec.coordinate, spec.a, spec.b),
                        branch_graph(g, spec.coordinate, spec.a, spec.b), spec);
}

continuation::Branch branch_from_samples(const std::vector<std::pair<double, double>>& samples,
                                         double h) {
  continuation::Branch b;
  for (const auto& [sigma, v0] : samples) {
    continuation::BranchPoint p;
    p.sigma = p.sigma_healed = sigma;
    p.v0 = v0;
    p.h = h;
    p.stable = true;
    b.points.push_back(p);
  }
  b.termination = "direct simulation";
  return b;
}

// ---------------------------------------------------------------------------

std::vector<double> descending_grid(double from, double to, int n) {
  if (n < 2) throw std::invalid_argument("grid needs at least two values");
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = from + (to - from) * i / (n - 1);
  return g;
}

std::vector<DirectSample> direct_downsweep(const ModelParams& base, double h,
                                           const std::vector<double>& v0_grid, double T,
                                           const IntegratorSettings& integrator,
                                           double dissolve_sigma) {
  std::vector<DirectSample> out;
  if (v0_grid.empty()) return out;
  ModelParams params = base;
  params.v0 = v0_grid.front();
  params.h = h;
  auto state = micro::perturbed_state(params);
  for (double v0 : v0_grid) {
    params.v0 = v0;
    state = micro::integrate(state, params, T, integrator);
    const double sigma = coarse::restrict_state(state, params);
    if (sigma < dissolve_sigma) break;
    out.push_back({v0, sigma});
  }
  return out;
}

micro::MicroState jam_reference(const ModelParams& base, double v0, double h, double jam_v0,
                                double T, const IntegratorSettings& integrator) {
  ModelParams params = base;
  params.h = h;
  params.v0 = jam_v0;
  auto state = micro::integrate(micro::perturbed_state(params), params, T, integrator);
  params.v0 = v0;
  return micro::integrate(state, params, T, integrator);
}

// ---------------------------------------------------------------------------

namespace {

struct SeedStates {
  micro::MicroState first, second;
};

SeedStates seed_states(const StudySetup& setup, double h) {
  ModelParams params = setup.model;
  params.h = h;
  SeedStates s;
  params.v0 = setup.seed_v0_first;
  s.first = micro::integrate(micro::perturbed_state(params), params, setup.seed_time,
                             setup.integrator);
  params.v0 = setup.seed_v0_second;
  s.second = micro::integrate(micro::perturbed_state(params), params, setup.seed_time,
                              setup.integrator);
  return s;
}

continuation::Branch branch_from_states(const StudySetup& setup, const SeedStates& states,
                                        const CoarseSettings& coarse, double h, double p,
                                        std::optional<double> stop_below_healed) {
  const auto s0 = continuation::seed_from_reference(setup.model, states.first,
                                                    setup.seed_v0_first, h, p, setup.integrator,
                                                    coarse);
  const auto s1 = continuation::seed_from_reference(setup.model, states.second,
                                                    setup.seed_v0_second, h, p,
                                                    setup.integrator, coarse);
  ModelParams params = setup.model;
  params.h = h;
  coarse::TrafficProblem problem(params, s1.context, setup.integrator);
  auto options = setup.continuation;
  if (stop_below_healed) options.stop_below_healed = stop_below_healed;
  return continuation::continue_branch(problem, s0.point, s1.point, coarse, options);
}

}  // namespace

continuation::Branch jam_branch(const StudySetup& setup, double h, double p,
                                std::optional<double> stop_below_healed) {
  return branch_from_states(setup, seed_states(setup, h), setup.coarse, h, p, stop_below_healed);
}

FoldCurve fold_curve(const StudySetup& setup, const continuation::Branch& branch, double p,
                     double h_lo, double h_hi, double t_skip) {
  FoldCurve curve;
  CoarseSettings settings = setup.coarse;
  settings.t_skip = t_skip;
  curve.seed = continuation::detect_fold(branch);
  const auto& near = branch.points[curve.seed.index];
  ModelParams params = setup.model;
  params.h = near.h;
  params.v0 = curve.seed.v0;

  // lifting reference: a long simulation of the stable jam just above the fold
  auto ctx = std::make_shared<const coarse::LiftContext>(
      jam_reference(setup.model, curve.seed.v0 + kFoldReferenceOffset, near.h,
                    setup.seed_v0_first, setup.seed_time, setup.integrator),
      params, p);
  const MacroPoint start{curve.seed.sigma, curve.seed.v0, curve.seed.h};

  auto options = setup.continuation;
  options.h_min = h_lo;
  options.h_max = h_hi;
  for (int dir : {-1, +1}) {
    coarse::TrafficProblem problem(params, ctx, setup.integrator);
    curve.halves.push_back(continuation::continue_fold(problem, start, dir, settings, options));
    curve.truncated = curve.truncated || curve.halves.back().truncated;
  }
  const auto& lo = curve.halves[0].points;
  const auto& hi = curve.halves[1].points;
  curve.points.assign(lo.rbegin(), lo.rend());
  // both halves begin with the refined seed
  if (!hi.empty()) curve.points.insert(curve.points.end(), hi.begin() + (lo.empty() ? 0 : 1), hi.end());
  return curve;
}

std::optional<double> fold_v0_from_seed(const FoldCurve& curve, double h) {
  std::optional<double> best;
  double best_length = 0.0;
  for (const auto& half : curve.halves) {
    double length = 0.0;
    for (std::size_t i = 0; i + 1 < half.points.size(); ++i) {
      const auto& a = half.points[i];
      const auto& b = half.points[i + 1];
      if ((a.h - h) * (b.h - h) <= 0.0 && a.h != b.h) {
        if (!best || length < best_length) {
          best = a.v0 + (h - a.h) / (b.h - a.h) * (b.v0 - a.v0);
          best_length = length;
        }
        break;
      }
      length += std::hypot(b.sigma - a.sigma, b.v0 - a.v0, b.h - a.h);
    }
  }
  return best;
}

LiftingSweep lifting_sweep(const StudySetup& setup, const std::vector<double>& p_values,
                           double h, const std::vector<DirectSample>& direct, double a,
                           double b) {
  if (direct.size() < 2) throw std::invalid_argument("direct reference needs two samples");
  LiftingSweep sweep;
  sweep.direct = direct;
  sweep.rows.resize(p_values.size());

  std::vector<std::pair<double, double>> samples;
  for (const auto& d : direct) samples.emplace_back(d.sigma, d.v0);
  std::sort(samples.begin(), samples.end());
  const auto reference = branch_from_samples(samples, h);
  // compare only where the direct simulations have data
  const double lo = std::max(a, samples.front().first);
  const double hi = std::min(b, samples.back().first);
  if (!(hi > lo)) throw std::runtime_error("direct reference does not overlap [a, b]");

  const auto states = seed_states(setup, h);
  CoarseSettings inner = setup.coarse;
  inner.threads = 1;
  parallel_for(p_values.size(), setup.coarse.threads, [&](std::size_t i) {
    auto& row = sweep.rows[i];
    row.p = p_values[i];
    // stop once both coordinates have passed below a
    row.branch = branch_from_states(setup, states, inner, h, row.p, 0.8 * a);
  });

  for (auto& row : sweep.rows) {
    row.a = lo;
    row.b = hi;
    BranchDistanceSpec spec{lo, hi, NormKind::l2_squared, Coordinate::pre_image};
    row.unhealed_distance = branch_distance(row.branch, reference, spec);
    spec.coordinate = Coordinate::healed;
    row.healed_distance = branch_distance(row.branch, reference, spec);
  }

  const std::size_t n = sweep.rows.size();
  sweep.healed_pairwise.assign(n, std::vector<double>(n, 0.0));
  const BranchDistanceSpec pair_spec{a, b, NormKind::l2_squared, Coordinate::healed};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      sweep.healed_pairwise[i][j] = sweep.healed_pairwise[j][i] =
          branch_distance(sweep.rows[i].branch, sweep.rows[j].branch, pair_spec);
  return sweep;
}

std::vector<TskipScanRow> tskip_scan(const StudySetup& setup, const std::vector<double>& tskips,
                                     double h, double reference_tskip, double a, double b) {
  std::vector<double> all = tskips;
  if (std::find(all.begin(), all.end(), reference_tskip) == all.end())
    all.push_back(reference_tskip);
  const auto states = seed_states(setup, h);
  std::vector<TskipScanRow> rows(all.size());
  parallel_for(all.size(), setup.coarse.threads, [&](std::size_t i) {
    CoarseSettings cs = setup.coarse;
    cs.threads = 1;
    cs.t_skip = all[i];
    rows[i].t_skip = all[i];
    rows[i].branch = branch_from_states(setup, states, cs, h, 1.0, std::nullopt);
    rows[i].folds = continuation::detect_folds(rows[i].branch);
  });
  const auto ref = std::find_if(rows.begin(), rows.end(),
                                [&](const TskipScanRow& r) { return r.t_skip == reference_tskip; });
  const BranchDistanceSpec spec{a, b, NormKind::l1, Coordinate::healed};
  for (auto& row : rows) row.distance = branch_distance(row.branch, ref->branch, spec);
  return rows;
}

double equilibrium_below(const CoarseProblem& problem, double v0, double h, double sigma_start,
                         double scan, const CoarseSettings& settings) {
  double hi = sigma_start;
  double f_hi = macro_rhs(problem, {hi, v0, h}, settings);
  for (double lo = hi - scan; lo >= scan * 0.5; lo -= scan) {
    const double f_lo = macro_rhs(problem, {lo, v0, h}, settings);
    if ((f_lo > 0) != (f_hi > 0)) {
      const auto r = solvers::coarse_equilibrium(problem, {0.5 * (lo + hi), v0, h}, settings);
      if (!r.converged) throw SolverError("equilibrium refinement did not converge");
      return r.solution[0];
    }
    hi = lo;
    f_hi = f_lo;
  }
  throw SolverError("no sign change of F below sigma = " + std::to_string(sigma_start));
}

BackwardTrajectory backward_trajectory(const CoarseProblem& problem, double v0, double h,
                                       double stable_guess, double step, int max_steps,
                                       double start_offset, const CoarseSettings& settings) {
  if (!(step < 0.0)) throw std::invalid_argument("backward trajectory needs a negative step");
  if (!(start_offset > 0.0)) throw std::invalid_argument("start offset must be positive");
  BackwardTrajectory traj;
  const auto stable = solvers::coarse_equilibrium(problem, {stable_guess, v0, h}, settings);
  if (!stable.converged) throw SolverError("stable equilibrium did not converge");
  traj.stable_sigma = stable.solution[0];
  traj.unstable_sigma = equilibrium_below(problem, v0, h, traj.stable_sigma - start_offset,
                                          start_offset, settings);

  double sigma = traj.stable_sigma - start_offset;
  traj.sigmas.push_back(sigma);
  const MacroPoint params{sigma, v0, h};
  for (int k = 0; k < max_steps; ++k) {
    traj.steps.push_back(solvers::projective_euler_step(problem, sigma, step, params, settings));
    sigma = traj.steps.back().sigma;
    traj.sigmas.push_back(sigma);
  }
  return traj;
}

double trajectory_midpoint(const BackwardTrajectory& traj) {
  const double mid = 0.5 * (traj.stable_sigma + traj.unstable_sigma);
  for (double s : traj.sigmas)
    if (s < mid) return s;
  throw std::runtime_error("backward trajectory never crossed the midpoint");
}

std::vector<FbErrorRow> fberror_scan(const CoarseProblem& problem, double sigma_t,
                                     const MacroPoint& params, const CoarseSettings& settings,
                                     const std::vector<double>& tskips,
                                     const std::vector<double>& deltas) {
  std::vector<FbErrorRow> rows;
  for (double ts : tskips)
    for (double d : deltas) rows.push_back({ts, d, -2.0 * d, {}});
  CoarseSettings inner = settings;
  inner.threads = 1;
  parallel_for(rows.size(), settings.threads, [&](std::size_t i) {
    CoarseSettings cs = inner;
    cs.t_skip = rows[i].t_skip;
    cs.delta = rows[i].delta;
    rows[i].result =
        solvers::forward_backward_error(problem, sigma_t, rows[i].delta_t, params, cs);
  });
  return rows;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("slope fit needs two or more (x, y) pairs");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0))
      throw std::invalid_argument("slope fit needs positive values");
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double den = n * sxx - sx * sx;
  if (den == 0.0) throw std::invalid_argument("slope fit needs distinct x values");
  return (n * sxy - sx * sy) / den;
}

}  // namespace eqfree::analysis
