#include "eqfree/continuation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "eqfree/parallel.hpp"

namespace eqfree::continuation {

using solvers::Matrix;
using solvers::Vector;

namespace {

std::vector<double> normalized(const std::vector<double>& w) {
  double norm = 0.0;
  for (double c : w) norm += c * c;
  norm = std::sqrt(norm);
  if (!(norm > 0.0)) throw std::invalid_argument("zero-length secant direction");
  std::vector<double> out(w);
  for (double& c : out) c /= norm;
  return out;
}

std::string format_point(const char* what, double sigma, double v0, double h) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s at sigma=%.6f v0=%.6f h=%.6f", what, sigma, v0, h);
  return buf;
}

}  // namespace

std::vector<double> secant_direction(const BranchPoint& p0, const BranchPoint& p1) {
  std::vector<double> w{p1.sigma - p0.sigma, p1.v0 - p0.v0};
  if (w[0] == 0.0 && w[1] == 0.0) throw std::invalid_argument("secant of identical points");
  return w;
}

std::vector<double> secant_direction3(const BranchPoint& p0, const BranchPoint& p1) {
  std::vector<double> w{p1.sigma - p0.sigma, p1.v0 - p0.v0, p1.h - p0.h};
  if (w[0] == 0.0 && w[1] == 0.0 && w[2] == 0.0)
    throw std::invalid_argument("secant of identical points");
  return w;
}

MacroPoint predict(const BranchPoint& p1, const std::vector<double>& w, double s) {
  if (w.size() != 2 && w.size() != 3)
    throw std::invalid_argument("secant must have 2 or 3 components");
  const auto u = normalized(w);
  MacroPoint p{p1.sigma + s * u[0], p1.v0 + s * u[1], p1.h};
  if (u.size() == 3) p.h += s * u[2];
  return p;
}

void annotate(const CoarseProblem& problem, BranchPoint& point, const CoarseSample& sample,
              const CoarseSettings& settings) {
  MacroPoint shifted = point.macro();
  shifted.sigma += settings.d_sigma;
  const CoarseSample ahead = macro_sample(problem, shifted, settings);
  point.sigma_healed = sample.healed;
  point.rate = sample.rate;
  point.f_sigma = (ahead.rate - sample.rate) / settings.d_sigma;
  try {
    const auto m = solvers::multiplier_from_samples(sample, ahead, settings.d_sigma);
    point.multiplier = m.lambda;
    point.multiplier_valid = true;
    point.stable = m.stable;
  } catch (const SolverError&) {
    point.multiplier = std::nan("");
    point.multiplier_valid = false;
    point.stable = point.f_sigma < 0.0;
  }
}

BranchPoint correct(const CoarseProblem& problem, const MacroPoint& prediction,
                    const std::vector<double>& w, const CoarseSettings& settings) {
  if (w.size() != 2) throw std::invalid_argument("corrector expects a 2-component secant");
  const auto u = normalized(w);
  const double h = prediction.h;
  CoarseSample last;

  auto residual = [&](const Vector& x) {
    last = macro_sample(problem, {x(0), x(1), h}, settings);
    Vector r(2);
    r(0) = last.rate;
    r(1) = u[0] * (x(0) - prediction.sigma) + u[1] * (x(1) - prediction.v0);
    return r;
  };
  auto jacobian = [&](const Vector& x, const Vector& r) {
    std::array<double, 2> f{};
    const std::array<MacroPoint, 2> pts{
        {{x(0) + settings.d_sigma, x(1), h}, {x(0), x(1) + settings.d_v0, h}}};
    parallel_for(2, settings.threads,
                 [&](std::size_t i) { f[i] = macro_rhs(problem, pts[i], settings); });
    Matrix jac(2, 2);
    jac << (f[0] - r(0)) / settings.d_sigma, (f[1] - r(0)) / settings.d_v0, u[0], u[1];
    return jac;
  };

  Vector x0(2);
  x0 << prediction.sigma, prediction.v0;
  const auto report = solvers::newton_solve(residual, x0, solvers::rate_options(settings), jacobian);
  if (!report.converged)
    throw SolverError(format_point("corrector failed", prediction.sigma, prediction.v0, h) +
                      " (" + solvers::to_string(report.status) + ")");

  BranchPoint p;
  p.sigma = report.solution(0);
  p.v0 = report.solution(1);
  p.h = h;
  p.newton_iterations = report.iterations;
  annotate(problem, p, last, settings);
  return p;
}

BranchPoint equilibrium_point(const CoarseProblem& problem, const MacroPoint& guess,
                              const CoarseSettings& settings) {
  CoarseSample last;
  auto residual = [&](const Vector& x) {
    last = macro_sample(problem, {x(0), guess.v0, guess.h}, settings);
    Vector r(1);
    r(0) = last.rate;
    return r;
  };
  Vector x0(1);
  x0(0) = guess.sigma;
  const auto report = solvers::newton_solve(residual, x0, solvers::rate_options(settings));
  if (!report.converged)
    throw SolverError(format_point("equilibrium solve failed", guess.sigma, guess.v0, guess.h) +
                      " (" + solvers::to_string(report.status) + ")");
  BranchPoint p;
  p.sigma = report.solution(0);
  p.v0 = guess.v0;
  p.h = guess.h;
  p.newton_iterations = report.iterations;
  annotate(problem, p, last, settings);
  return p;
}

Branch continue_branch(CoarseProblem& problem, const BranchPoint& seed0,
                       const BranchPoint& seed1, const CoarseSettings& settings,
                       const ContinuationOptions& options) {
  settings.validate();
  Branch branch;
  branch.points = {seed0, seed1};
  branch.secant = secant_direction(seed0, seed1);
  branch.termination = "step limit reached";

  for (int k = 0; k < options.n_steps; ++k) {
    const auto& p0 = branch.points[branch.points.size() - 2];
    const auto& p1 = branch.points.back();
    branch.secant = secant_direction(p0, p1);

    double s = options.step;
    std::optional<BranchPoint> accepted;
    for (int halving = 0; halving <= options.max_halvings; ++halving) {
      const auto prediction = predict(p1, branch.secant, s);
      try {
        accepted = correct(problem, prediction, branch.secant, settings);
        break;
      } catch (const SolverError& e) {
        branch.log.push_back(std::string(e.what()) + "; halving step to " + std::to_string(s / 2));
        s /= 2;
      }
    }
    if (!accepted) {
      branch.truncated = true;
      branch.termination = "corrector failed after " + std::to_string(options.max_halvings) +
                           " step halvings";
      return branch;
    }
    accepted->step = s;
    const double previous_sigma = p1.sigma;
    branch.points.push_back(*accepted);
    problem.on_accept(accepted->macro(), settings);

    const auto& a = branch.points.back();
    if (a.sigma < options.sigma_stop && previous_sigma >= options.sigma_stop) {
      branch.termination = format_point("approached sigma = 0", a.sigma, a.v0, a.h);
      return branch;
    }
    if (a.v0 < options.v0_min || a.v0 > options.v0_max) {
      branch.termination = format_point("left the v0 range", a.sigma, a.v0, a.h);
      return branch;
    }
    if (options.stop_below_healed && a.sigma_healed < *options.stop_below_healed) {
      branch.termination = format_point("healed sigma below stop value", a.sigma, a.v0, a.h);
      return branch;
    }
  }
  return branch;
}

std::vector<FoldEstimate> detect_folds(const Branch& branch) {
  std::vector<FoldEstimate> folds;
  const auto& pts = branch.points;
  for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
    const double before = pts[i].v0 - pts[i - 1].v0;
    const double after = pts[i + 1].v0 - pts[i].v0;
    if (!(before * after < 0.0)) continue;

    // parabola v0(sigma) through the three points; its vertex is the fold
    const double s0 = pts[i - 1].sigma, s1 = pts[i].sigma, s2 = pts[i + 1].sigma;
    auto quadratic = [&](double y0, double y1, double y2) {
      // Newton divided differences
      const double d01 = (y1 - y0) / (s1 - s0);
      const double d12 = (y2 - y1) / (s2 - s1);
      const double c2 = (d12 - d01) / (s2 - s0);
      const double c1 = d01 - c2 * (s0 + s1);
      const double c0 = y0 - c1 * s0 - c2 * s0 * s0;
      return std::array<double, 3>{c0, c1, c2};
    };
    FoldEstimate f;
    f.index = i;
    f.h = pts[i].h;
    const auto v = quadratic(pts[i - 1].v0, pts[i].v0, pts[i + 1].v0);
    const bool degenerate = !std::isfinite(v[2]) || v[2] == 0.0 || s0 == s1 || s1 == s2 || s0 == s2;
    if (degenerate) {
      f.sigma = s1;
      f.v0 = pts[i].v0;
      f.sigma_healed = pts[i].sigma_healed;
    } else {
      f.sigma = std::clamp(-v[1] / (2 * v[2]), std::min({s0, s1, s2}), std::max({s0, s1, s2}));
      f.v0 = v[0] + v[1] * f.sigma + v[2] * f.sigma * f.sigma;
      const auto q = quadratic(pts[i - 1].sigma_healed, pts[i].sigma_healed,
                               pts[i + 1].sigma_healed);
      f.sigma_healed = q[0] + q[1] * f.sigma + q[2] * f.sigma * f.sigma;
    }
    const std::size_t lo = i >= 2 ? i - 2 : 0;
    const std::size_t hi = std::min(pts.size() - 1, i + 2);
    for (std::size_t j = lo; j < hi; ++j) {
      if (pts[j].f_sigma * pts[j + 1].f_sigma < 0.0) f.f_sigma_sign_change = true;
      if (pts[j].multiplier_valid && pts[j + 1].multiplier_valid &&
          (std::abs(pts[j].multiplier) < 1.0) != (std::abs(pts[j + 1].multiplier) < 1.0))
        f.stability_change = true;
    }
    folds.push_back(f);
  }
  return folds;
}

FoldEstimate detect_fold(const Branch& branch) {
  auto folds = detect_folds(branch);
  if (folds.empty()) throw std::runtime_error("branch has no v0 turning point");
  return folds.front();
}

FoldPoint correct_fold(const CoarseProblem& problem, const MacroPoint& prediction,
                       const std::vector<double>& w, const CoarseSettings& settings) {
  if (w.size() != 3) throw std::invalid_argument("fold corrector expects a 3-component secant");
  const auto u = normalized(w);
  const double ds = settings.d_sigma;
  double last_healed = 0.0, last_rate = 0.0, last_f_sigma = 0.0;

  // The F_sigma row is weighted by d_sigma so both rows carry the units of F.
  auto residual = [&](const Vector& x) {
    std::array<CoarseSample, 3> f{};
    parallel_for(3, settings.threads, [&](std::size_t i) {
      f[i] = macro_sample(problem, {x(0) + static_cast<double>(i) * ds, x(1), x(2)}, settings);
    });
    Vector r(3);
    r(0) = f[0].rate;
    r(1) = (-3 * f[0].rate + 4 * f[1].rate - f[2].rate) / 2.0;
    last_healed = f[0].healed;
    last_rate = r(0);
    last_f_sigma = r(1) / ds;
    r(2) = u[0] * (x(0) - prediction.sigma) + u[1] * (x(1) - prediction.v0) +
           u[2] * (x(2) - prediction.h);
    return r;
  };
  std::optional<solvers::StencilDerivatives> last_d;
  auto F = [&](const MacroPoint& p) { return macro_rhs(problem, p, settings); };
  auto jacobian = [&](const Vector& x, const Vector&) {
    if (x(0) < 0.0) throw SolverError("fold corrector iterate left sigma >= 0");
    last_d = solvers::fd_second_order(F, {x(0), x(1), x(2)}, settings);
    Matrix jac(3, 3);
    const auto& d = *last_d;
    jac << d.F_sigma, d.F_v0, d.F_h,  //
        ds * d.F_sigma_sigma, ds * d.F_v0_sigma, ds * d.F_h_sigma,  //
        u[0], u[1], u[2];
    return jac;
  };

  Vector x0(3);
  x0 << prediction.sigma, prediction.v0, prediction.h;
  if (x0(0) < 0.0) x0(0) = 0.0;
  // F is flat in sigma at a fold, so a small residual does not pin sigma down;
  // always take one Newton update from the prediction
  auto options = solvers::rate_options(settings);
  options.min_iter = 1;
  const auto report = solvers::newton_solve(residual, x0, options, jacobian);
  if (!report.converged)
    throw SolverError(
        format_point("fold corrector failed", prediction.sigma, prediction.v0, prediction.h) +
        " (" + solvers::to_string(report.status) + ")");

  FoldPoint p;
  p.sigma = report.solution(0);
  p.v0 = report.solution(1);
  p.h = report.solution(2);
  p.sigma_healed = last_healed;
  p.newton_iterations = report.iterations;
  // second derivatives from the last Jacobian (one Newton update away)
  p.derivatives = last_d ? *last_d : solvers::fd_second_order(F, {p.sigma, p.v0, p.h}, settings);
  p.rate = last_rate;
  p.f_sigma = last_f_sigma;
  p.near_cusp = std::abs(p.derivatives.F_sigma_sigma) < kCuspThreshold;
  return p;
}

FoldBranch continue_fold(CoarseProblem& problem, const MacroPoint& seed, int direction,
                         const CoarseSettings& settings, const ContinuationOptions& options) {
  settings.validate();
  if (direction != 1 && direction != -1) throw std::invalid_argument("direction must be +1 or -1");
  FoldBranch branch;
  branch.termination = "step limit reached";
  const std::vector<double> fixed_h{0.0, 0.0, 1.0};

  auto as_branch_point = [](const FoldPoint& f) {
    BranchPoint b;
    b.sigma = f.sigma;
    b.v0 = f.v0;
    b.h = f.h;
    return b;
  };

  // refine the seed at its own h, then take a second point at a shifted h
  branch.points.push_back(correct_fold(problem, seed, fixed_h, settings));
  problem.on_accept({branch.points.back().sigma, branch.points.back().v0, branch.points.back().h},
                    settings);
  {
    MacroPoint second{branch.points.back().sigma, branch.points.back().v0,
                      branch.points.back().h + direction * options.step};
    branch.points.push_back(correct_fold(problem, second, fixed_h, settings));
    const auto& b = branch.points.back();
    problem.on_accept({b.sigma, b.v0, b.h}, settings);
  }

  for (int k = 0; k < options.n_steps; ++k) {
    const auto p0 = as_branch_point(branch.points[branch.points.size() - 2]);
    const auto p1 = as_branch_point(branch.points.back());
    const auto w = secant_direction3(p0, p1);
    double s = options.step;
    std::optional<FoldPoint> accepted;
    for (int halving = 0; halving <= options.max_halvings; ++halving) {
      try {
        auto c = correct_fold(problem, predict(p1, w, s), w, settings);
        // the fold is flat in sigma, so Newton can slide a long way along it
        const double jump = std::hypot(c.sigma - p1.sigma, c.v0 - p1.v0, c.h - p1.h);
        if (jump > 3 * s)
          throw SolverError(format_point("fold corrector jumped", c.sigma, c.v0, c.h) +
                            " (distance " + std::to_string(jump) + ")");
        accepted = c;
        break;
      } catch (const SolverError& e) {
        branch.log.push_back(std::string(e.what()) + "; halving step to " + std::to_string(s / 2));
        s /= 2;
      }
    }
    if (!accepted) {
      branch.truncated = true;
      branch.termination = "fold corrector failed after " +
                           std::to_string(options.max_halvings) + " step halvings";
      return branch;
    }
    branch.points.push_back(*accepted);
    const auto& a = branch.points.back();
    problem.on_accept({a.sigma, a.v0, a.h}, settings);
    if (a.near_cusp) branch.log.push_back(format_point("near cusp", a.sigma, a.v0, a.h));
    if (a.h < options.h_min || a.h > options.h_max) {
      branch.termination = format_point("left the h range", a.sigma, a.v0, a.h);
      return branch;
    }
    if (a.v0 < options.v0_min || a.v0 > options.v0_max) {
      branch.termination = format_point("left the v0 range", a.sigma, a.v0, a.h);
      return branch;
    }
    if (a.sigma < options.sigma_stop) {
      branch.termination = format_point("approached sigma = 0", a.sigma, a.v0, a.h);
      return branch;
    }
  }
  return branch;
}

std::optional<double> fold_v0_at(const FoldBranch& branch, double h) {
  const auto& pts = branch.points;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double a = pts[i].h, b = pts[i + 1].h;
    if ((a - h) * (b - h) <= 0.0 && a != b) {
      const double t = (h - a) / (b - a);
      return pts[i].v0 + t * (pts[i + 1].v0 - pts[i].v0);
    }
  }
  return std::nullopt;
}

Seed seed_from_reference(const micro::ModelParams& base, micro::MicroState reference, double v0,
                         double h, double p, const micro::IntegratorSettings& integrator,
                         const CoarseSettings& settings) {
  micro::ModelParams params = base;
  params.v0 = v0;
  params.h = h;
  Seed seed;
  seed.context = std::make_shared<const coarse::LiftContext>(std::move(reference), params, p);
  coarse::TrafficProblem problem(params, seed.context, integrator);
  const MacroPoint guess{seed.context->reference_sigma() / p, v0, h};
  seed.point = equilibrium_point(problem, guess, settings);
  return seed;
}

Seed seed_from_simulation(const micro::ModelParams& base, double v0, double h, double T,
                          double p, const micro::IntegratorSettings& integrator,
                          const CoarseSettings& settings) {
  micro::ModelParams params = base;
  params.v0 = v0;
  params.h = h;
  auto end = micro::integrate(micro::perturbed_state(params), params, T, integrator);
  return seed_from_reference(base, std::move(end), v0, h, p, integrator, settings);
}

}  // namespace eqfree::continuation
