#include "eqfree/solvers.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "eqfree/parallel.hpp"

namespace eqfree::solvers {

const char* to_string(NewtonStatus status) {
  switch (status) {
    case NewtonStatus::converged: return "converged";
    case NewtonStatus::max_iterations: return "max_iterations";
    case NewtonStatus::singular_jacobian: return "singular_jacobian";
    case NewtonStatus::non_finite: return "non_finite";
  }
  return "unknown";
}

Matrix fd_jacobian(const ResidualFn& residual, const Vector& x, const Vector& fx,
                   const std::vector<double>& offsets) {
  const auto n = x.size();
  if (offsets.empty()) throw std::invalid_argument("fd_jacobian needs at least one offset");
  Matrix jac(fx.size(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double d = offsets.size() == 1 ? offsets[0] : offsets.at(static_cast<std::size_t>(j));
    Vector xs = x;
    xs(j) += d;
    jac.col(j) = (residual(xs) - fx) / d;
  }
  return jac;
}

double condition_number(const Matrix& m) {
  if (m.rows() != m.cols() || m.size() == 0) return std::numeric_limits<double>::infinity();
  if (!m.allFinite()) return std::numeric_limits<double>::infinity();
  Eigen::FullPivLU<Matrix> lu(m);
  if (!lu.isInvertible()) return std::numeric_limits<double>::infinity();
  const Matrix inv = lu.inverse();
  auto norm1 = [](const Matrix& a) { return a.cwiseAbs().colwise().sum().maxCoeff(); };
  return norm1(m) * norm1(inv);
}

NewtonReport newton_solve(const ResidualFn& residual, Vector x0, const NewtonOptions& options,
                          const JacobianFn& jacobian) {
  NewtonReport report;
  report.solution = std::move(x0);
  Vector r = residual(report.solution);
  if (r.size() != report.solution.size())
    throw std::invalid_argument("Newton residual dimension differs from the unknowns");

  for (;;) {
    if (!r.allFinite()) {
      report.residual_norm = std::numeric_limits<double>::infinity();
      report.residual_history.push_back(report.residual_norm);
      report.status = NewtonStatus::non_finite;
      return report;
    }
    report.residual_norm = r.lpNorm<Eigen::Infinity>();
    report.residual_history.push_back(report.residual_norm);
    if (report.residual_norm <= options.tol && report.iterations >= options.min_iter) {
      report.converged = true;
      report.status = NewtonStatus::converged;
      return report;
    }
    if (report.iterations >= options.max_iter) {
      report.status = NewtonStatus::max_iterations;
      return report;
    }
    const Matrix jac = jacobian ? jacobian(report.solution, r)
                                : fd_jacobian(residual, report.solution, r, options.fd_offsets);
    if (!(condition_number(jac) <= options.max_condition)) {
      report.status = NewtonStatus::singular_jacobian;
      return report;
    }
    const Vector dx = jac.fullPivLu().solve(r);
    report.solution -= options.nu * dx;
    ++report.iterations;
    r = residual(report.solution);
  }
}

NewtonOptions healed_options(const CoarseSettings& settings) {
  NewtonOptions o;
  o.tol = settings.newton_tol;
  o.max_iter = settings.newton_max_iter;
  o.nu = settings.nu;
  o.fd_offsets = {settings.d_sigma};
  return o;
}

NewtonOptions rate_options(const CoarseSettings& settings) {
  NewtonOptions o = healed_options(settings);
  o.tol = settings.rate_tol;
  return o;
}

FirstOrderDerivatives fd_first_order(const std::function<double(double, double)>& F,
                                     double sigma, double v0, const CoarseSettings& settings) {
  const double ds = settings.d_sigma, dv = settings.d_v0;
  if (!(ds > 0.0) || !(dv > 0.0)) throw std::invalid_argument("offsets must be positive");
  std::array<double, 3> f{};
  const std::array<std::pair<double, double>, 3> pts{
      {{sigma, v0}, {sigma + ds, v0}, {sigma, v0 + dv}}};
  parallel_for(3, settings.threads, [&](std::size_t i) { f[i] = F(pts[i].first, pts[i].second); });
  return {f[0], (f[1] - f[0]) / ds, (f[2] - f[0]) / dv};
}

std::array<MacroPoint, 17> stencil_points(const MacroPoint& p, const CoarseSettings& settings) {
  const double ds = settings.d_sigma, dv = settings.d_v0, dh = settings.d_h;
  const double s = p.sigma, v = p.v0, h = p.h;
  return {{
      {s, v, h},
      {s + ds, v, h},
      {s + 2 * ds, v, h},
      {s + 3 * ds, v, h},
      {s + 4 * ds, v, h},
      {s, v - dv, h},
      {s, v + dv, h},
      {s + ds, v - dv, h},
      {s + ds, v + dv, h},
      {s + 2 * ds, v - dv, h},
      {s + 2 * ds, v + dv, h},
      {s, v, h - dh},
      {s, v, h + dh},
      {s + ds, v, h - dh},
      {s + ds, v, h + dh},
      {s + 2 * ds, v, h - dh},
      {s + 2 * ds, v, h + dh},
  }};
}

StencilDerivatives fd_second_order(const std::function<double(const MacroPoint&)>& F,
                                   const MacroPoint& point, const CoarseSettings& settings) {
  const double ds = settings.d_sigma, dv = settings.d_v0, dh = settings.d_h;
  if (!(ds > 0.0) || !(dv > 0.0) || !(dh > 0.0))
    throw std::invalid_argument("offsets must be positive");
  if (point.sigma < 0.0) throw std::invalid_argument("stencil requires sigma >= 0");

  const auto pts = stencil_points(point, settings);
  // one-based to match the stencil numbering
  std::array<double, 18> f{};
  parallel_for(pts.size(), settings.threads, [&](std::size_t i) { f[i + 1] = F(pts[i]); });

  // one-sided second-order sigma difference starting at stencil points a, b, c
  auto d_sigma = [&](int a, int b, int c) { return -3 * f[a] + 4 * f[b] - f[c]; };

  StencilDerivatives d;
  d.F = f[1];
  d.F_sigma = d_sigma(1, 2, 3) / (2 * ds);
  d.F_v0 = (f[7] - f[6]) / (2 * dv);
  d.F_h = (f[13] - f[12]) / (2 * dh);
  d.F_sigma_sigma =
      (-3 * d_sigma(1, 2, 3) + 4 * d_sigma(2, 3, 4) - d_sigma(3, 4, 5)) / (4 * ds * ds);
  d.F_v0_sigma = (d_sigma(7, 9, 11) - d_sigma(6, 8, 10)) / (4 * ds * dv);
  d.F_h_sigma = (d_sigma(13, 15, 17) - d_sigma(12, 14, 16)) / (4 * ds * dh);
  d.evaluations = static_cast<int>(pts.size());
  return d;
}

namespace {

double healed_at(const CoarseProblem& problem, double sigma, const MacroPoint& params,
                 double t) {
  const double times[] = {t};
  return problem.burst({sigma, params.v0, params.h}, times).front();
}

ResidualFn scalar_residual(std::function<double(double)> g) {
  return [g = std::move(g)](const Vector& x) {
    Vector r(1);
    r(0) = g(x(0));
    return r;
  };
}

Vector scalar(double x) {
  Vector v(1);
  v(0) = x;
  return v;
}

[[noreturn]] void fail(const std::string& what, const NewtonReport& report) {
  throw SolverError(what + ": Newton " + to_string(report.status) + " after " +
                    std::to_string(report.iterations) + " iterations, residual " +
                    std::to_string(report.residual_norm));
}

}  // namespace

ImplicitStep implicit_step(const CoarseProblem& problem, double x, double delta,
                           const MacroPoint& params, const CoarseSettings& settings) {
  if (!(delta >= 0.0)) throw std::invalid_argument("implicit_step requires delta >= 0");
  const double times[] = {settings.t_skip, settings.t_skip + delta};
  ImplicitStep step;
  step.target = problem.burst({x, params.v0, params.h}, times)[1];
  const double ts = settings.t_skip;
  // newton_solve evaluates the residual at the returned solution last
  double last = 0.0;
  auto residual = scalar_residual([&](double y) {
    return (last = healed_at(problem, y, params, ts)) - step.target;
  });
  step.report = newton_solve(residual, scalar(x), healed_options(settings));
  if (!step.report.converged) fail("implicit coarse step", step.report);
  step.y = step.report.solution(0);
  step.healed_result = last;
  return step;
}

NewtonReport coarse_equilibrium(const CoarseProblem& problem, const MacroPoint& guess,
                                const CoarseSettings& settings) {
  auto residual = scalar_residual([&](double sigma) {
    return macro_rhs(problem, {sigma, guess.v0, guess.h}, settings);
  });
  return newton_solve(residual, scalar(guess.sigma), rate_options(settings));
}

Multiplier multiplier_from_samples(const CoarseSample& base, const CoarseSample& shifted,
                                   double d_sigma) {
  Multiplier m;
  m.d_healed = (shifted.healed - base.healed) / d_sigma;
  m.d_advanced = (shifted.advanced - base.advanced) / d_sigma;
  if (!(std::abs(m.d_healed) >= kTransversalityThreshold))
    throw SolverError("multiplier: dP(t_skip)/dsigma = " + std::to_string(m.d_healed) +
                      " is below the transversality threshold");
  m.lambda = m.d_advanced / m.d_healed;
  m.stable = std::abs(m.lambda) < 1.0;
  return m;
}

Multiplier multiplier(const CoarseProblem& problem, const MacroPoint& equilibrium,
                      const CoarseSettings& settings, const CoarseSample* at_point) {
  const CoarseSample base = at_point ? *at_point : macro_sample(problem, equilibrium, settings);
  MacroPoint shifted_point = equilibrium;
  shifted_point.sigma += settings.d_sigma;
  const CoarseSample shifted = macro_sample(problem, shifted_point, settings);
  return multiplier_from_samples(base, shifted, settings.d_sigma);
}

Match match_restriction(const CoarseProblem& problem, double x_target, const MacroPoint& params,
                        const CoarseSettings& settings) {
  const double ts = settings.t_skip;
  double last = 0.0;
  auto residual = scalar_residual([&](double x) {
    return (last = healed_at(problem, x, params, ts)) - x_target;
  });
  Match m;
  m.report = newton_solve(residual, scalar(x_target), healed_options(settings));
  if (!m.report.converged) fail("restriction matching", m.report);
  m.x_tilde = m.report.solution(0);
  m.healed = last;
  return m;
}

MatchedState match_restriction(const coarse::TrafficProblem& problem, double x_target,
                               const MacroPoint& params, const CoarseSettings& settings) {
  MatchedState out;
  out.match = match_restriction(static_cast<const CoarseProblem&>(problem), x_target, params,
                                settings);
  out.state = problem.evolved_state({out.match.x_tilde, params.v0, params.h}, settings.t_skip);
  return out;
}

ProjectiveStep projective_euler_step(const CoarseProblem& problem, double sigma_j, double step,
                                     const MacroPoint& params, const CoarseSettings& settings) {
  if (step == 0.0) throw std::invalid_argument("projective step size must be non-zero");
  ProjectiveStep out;
  out.start = macro_sample(problem, {sigma_j, params.v0, params.h}, settings);
  const double target = out.start.healed + out.start.rate * step;
  const double ts = settings.t_skip;
  double last = 0.0;
  auto residual = scalar_residual(
      [&](double s) { return (last = healed_at(problem, s, params, ts)) - target; });
  const auto options = healed_options(settings);
  out.report = newton_solve(residual, scalar(sigma_j), options);
  if (!out.report.converged) {
    out.report = newton_solve(residual, scalar(sigma_j + out.start.rate * step), options);
    if (!out.report.converged) fail("projective Euler step", out.report);
  }
  out.sigma = out.report.solution(0);
  out.healed = last;
  return out;
}

ForwardBackwardError forward_backward_error(const CoarseProblem& problem, double sigma_t,
                                            double delta_t, const MacroPoint& params,
                                            const CoarseSettings& settings) {
  if (!(delta_t < 0.0)) throw std::invalid_argument("forward-backward error needs delta_t < 0");
  ForwardBackwardError e;
  const auto back = projective_euler_step(problem, sigma_t, delta_t, params, settings);
  e.sigma_h0 = back.start.healed;
  e.sigma_1 = back.sigma;
  e.omega_h0 = healed_at(problem, e.sigma_1, params, settings.t_skip - delta_t);
  e.error = std::abs(e.sigma_h0 - e.omega_h0);
  return e;
}

}  // namespace eqfree::solvers
