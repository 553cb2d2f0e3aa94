#include "eqfree/convergence_lab.hpp"

#include <boost/numeric/odeint.hpp>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "eqfree/parallel.hpp"
#include "eqfree/solvers.hpp"

namespace eqfree::lab {

namespace odeint = boost::numeric::odeint;

void ToySystem::validate() const {
  if (!(epsilon > 0.0 && epsilon <= 0.1)) throw std::invalid_argument("epsilon must lie in (0, 0.1]");
  if (!(fast_rate > 0.0)) throw std::invalid_argument("fast_rate must be positive");
  if (!(tol > 0.0)) throw std::invalid_argument("toy integrator tolerance must be positive");
}

State3 toy_rhs(const State3& u, const ToySystem& sys) {
  const double x = u[0];
  return {sys.epsilon * (x - x * x * x + u[1]), -sys.fast_rate * (u[1] - x * x),
          -2.0 * sys.fast_rate * (u[2] - std::sin(x))};
}

std::vector<State3> toy_integrate(const State3& u0, const ToySystem& sys,
                                  std::span<const double> times) {
  auto stepper = odeint::make_controlled(sys.tol, sys.tol, odeint::runge_kutta_fehlberg78<State3>());
  auto rhs = [&sys](const State3& u, State3& du, double) { du = toy_rhs(u, sys); };
  std::vector<State3> out;
  out.reserve(times.size());
  State3 u = u0;
  double t = 0.0;
  for (double target : times) {
    if (target < t) throw std::invalid_argument("toy_integrate: times must be non-decreasing");
    if (target > t) odeint::integrate_adaptive(stepper, rhs, u, t, target, 0.01);
    t = target;
    out.push_back(u);
  }
  return out;
}

double toy_restrict(const State3& u, const ToySystem& sys) {
  return u[0] + sys.restriction_mix * u[1];
}

State3 toy_lift(double x, const ToySystem& sys) {
  return {x, x * x + sys.c1, std::sin(x) + sys.c2};
}

ToyProblem::ToyProblem(ToySystem sys) : sys_(sys) { sys_.validate(); }

std::vector<double> ToyProblem::burst(const MacroPoint& point,
                                      std::span<const double> times) const {
  std::vector<double> out;
  for (const auto& u : toy_integrate(toy_lift(point.sigma, sys_), sys_, times))
    out.push_back(toy_restrict(u, sys_));
  return out;
}

CoarseSettings lab_settings(double t_skip, double delta) {
  CoarseSettings s;
  s.t_skip = t_skip;
  s.delta = delta;
  s.d_sigma = 1e-6;
  s.newton_tol = 1e-14;
  s.newton_max_iter = 30;
  return s;
}

double toy_flow(double x, double delta, const ToySystem& sys, double t_skip) {
  ToyProblem problem(sys);
  return solvers::implicit_step(problem, x, delta, {x, 0.0, 0.0}, lab_settings(t_skip, delta)).y;
}

double default_reference_tskip(const ToySystem& sys) { return 50.0 / sys.fast_rate; }

double toy_reference_flow(double x, double delta, const ToySystem& sys, double t_skip_ref) {
  if (t_skip_ref < 40.0 / sys.fast_rate)
    throw std::invalid_argument("reference healing time must be at least 40 / fast_rate");
  return toy_flow(x, delta, sys, t_skip_ref);
}

ConvergenceScan convergence_scan(double x, double delta, const ToySystem& sys,
                                 const std::vector<double>& tskips, int threads) {
  sys.validate();
  ConvergenceScan scan;
  scan.t_skip_ref = default_reference_tskip(sys);
  scan.reference = toy_reference_flow(x, delta, sys, scan.t_skip_ref);
  scan.rows.resize(tskips.size());
  parallel_for(tskips.size(), threads, [&](std::size_t i) {
    auto& r = scan.rows[i];
    r.t_skip = tskips[i];
    r.phi = toy_flow(x, delta, sys, r.t_skip);
    r.error = std::abs(r.phi - scan.reference);
  });

  double n = 0, st = 0, sl = 0, stt = 0, stl = 0;
  for (auto& r : scan.rows) {
    r.in_fit = r.error >= kErrorFloor;
    if (!r.in_fit) continue;
    const double l = std::log(r.error);
    n += 1;
    st += r.t_skip;
    sl += l;
    stt += r.t_skip * r.t_skip;
    stl += r.t_skip * l;
  }
  scan.fit_points = static_cast<int>(n);
  const double den = n * stt - st * st;
  scan.slope = (n >= 2 && den != 0.0) ? (n * stl - st * sl) / den
                                      : std::numeric_limits<double>::quiet_NaN();
  return scan;
}

}  // namespace eqfree::lab
