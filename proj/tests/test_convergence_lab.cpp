#include "doctest.h"

#include <cmath>

#include "eqfree/convergence_lab.hpp"

using namespace eqfree::lab;

namespace {

// Direct integration: the lifted value y whose state relaxed for T has the
// restriction of L(x) relaxed for T + delta, found by secant iteration.
double relaxed_flow(double x, double delta, const ToySystem& sys, double T) {
  auto restricted = [&](double x0, double t_end) {
    const double t[] = {t_end};
    return toy_restrict(toy_integrate(toy_lift(x0, sys), sys, t)[0], sys);
  };
  const double target = restricted(x, T + delta);
  auto healed = [&](double y) { return restricted(y, T); };
  double a = x, b = x + 1e-3;
  double fa = healed(a) - target, fb = healed(b) - target;
  for (int i = 0; i < 50 && std::abs(fb) > 1e-15; ++i) {
    const double c = b - fb * (b - a) / (fb - fa);
    a = b;
    fa = fb;
    b = c;
    fb = healed(b) - target;
  }
  return b;
}

}  // namespace

TEST_CASE("toy vector field") {
  ToySystem sys;
  CHECK(toy_rhs({0.0, 0.0, 0.0}, sys) == State3{0.0, 0.0, 0.0});
  sys.epsilon = 0.0;
  const double x = 0.7;
  const auto on = toy_rhs({x, x * x, std::sin(x)}, sys);
  CHECK(on[0] == 0.0);
  CHECK(on[1] == 0.0);
  CHECK(on[2] == 0.0);

  // fast relaxation with x frozen
  sys.fast_rate = 1.5;
  const double times[] = {0.0, 1.0, 2.0};
  const auto u = toy_integrate({x, 1.0, -1.0}, sys, times);
  for (int i = 0; i < 3; ++i) {
    CHECK(u[i][0] == x);
    CHECK(u[i][1] == doctest::Approx(x * x + (1.0 - x * x) * std::exp(-1.5 * times[i])).epsilon(1e-12));
    CHECK(u[i][2] ==
          doctest::Approx(std::sin(x) + (-1.0 - std::sin(x)) * std::exp(-3.0 * times[i])).epsilon(1e-12));
  }

  ToySystem bad;
  bad.epsilon = 0.2;
  CHECK_THROWS(bad.validate());
  bad.epsilon = 0.01;
  bad.fast_rate = 0.0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("restriction and lift") {
  const ToySystem sys;
  const auto u = toy_lift(0.5, sys);
  CHECK(u[1] == doctest::Approx(0.25 + 0.3));
  CHECK(toy_restrict(u, sys) == doctest::Approx(0.5 + 0.1 * 0.55));
}

TEST_CASE("reference flow") {
  ToySystem sys;
  // the origin is fixed when its lift lies on its own fast fibre (c1 = 0)
  ToySystem origin = sys;
  origin.c1 = 0.0;
  CHECK(std::abs(toy_reference_flow(0.0, 10.0, origin, 50.0)) <= 1e-14);
  CHECK_THROWS_AS(toy_reference_flow(0.5, 10.0, sys, 30.0), std::invalid_argument);

  // eps delta = 0.1
  const double delta = 0.1 / sys.epsilon;
  const double ref = toy_reference_flow(0.5, delta, sys, default_reference_tskip(sys));
  const double oracle = relaxed_flow(0.5, delta, sys, 80.0);
  MESSAGE("reference " << ref << " oracle " << oracle);
  CHECK(std::abs(ref - oracle) <= 1e-6);

  // close to the reduced slow equation x' = eps (x - x^3 + x^2)
  double xs = 0.5;
  const int n = 1000;
  const double dt = 0.1 / n;
  auto f = [](double v) { return v - v * v * v + v * v; };
  for (int i = 0; i < n; ++i) {
    const double k1 = f(xs), k2 = f(xs + dt / 2 * k1), k3 = f(xs + dt / 2 * k2), k4 = f(xs + dt * k3);
    xs += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  // lifted values are x coordinates, up to the O(eps) tilt of the fast fibres
  MESSAGE("reduced equation " << xs);
  CHECK(std::abs(ref - xs) < 10 * sys.epsilon);
}

TEST_CASE("zero step") {
  const ToySystem sys;
  CHECK(toy_flow(0.5, 0.0, sys, 4.0) == doctest::Approx(0.5).epsilon(1e-14));
  const auto scan = convergence_scan(0.5, 0.0, sys, {2, 4, 6});
  for (const auto& r : scan.rows) CHECK(r.error <= kErrorFloor);
}

TEST_CASE("exponential convergence in the healing time") {
  double lo = 0.0, hi = -10.0;
  for (double eps : {0.001, 0.01, 0.05}) {
    ToySystem sys;
    sys.epsilon = eps;
    const auto scan = convergence_scan(0.5, 0.1 / eps, sys, {2, 4, 6, 8, 10});
    MESSAGE("eps " << eps << " slope " << scan.slope);
    CHECK(scan.fit_points == 5);
    CHECK(scan.slope >= -1.2);
    CHECK(scan.slope <= -0.8);
    for (std::size_t i = 1; i < scan.rows.size(); ++i)
      CHECK(scan.rows[i].error <= scan.rows[i - 1].error + kErrorFloor);
    lo = std::min(lo, scan.slope);
    hi = std::max(hi, scan.slope);
  }
  CHECK((hi - lo) / std::abs(lo) < 0.15);
}

TEST_CASE("lift offsets") {
  ToySystem a, b;
  b.c2 = 0.4;
  const double delta = 0.1 / a.epsilon;

  // the y2 offset does not feed into x or y1
  const double pa = toy_flow(0.5, delta, a, 20.0), pb = toy_flow(0.5, delta, b, 20.0);
  CHECK(std::abs(pa - pb) <= 1e-10);

  // the y1 offset changes the coordinate chart: the difference settles at an
  // eps-dependent level instead of vanishing
  ToySystem c = a;
  c.c1 = -0.1;
  auto gap = [&](double ts) {
    return std::abs(toy_flow(0.5, delta, a, ts) - toy_flow(0.5, delta, c, ts));
  };
  const double settled = gap(40.0);
  MESSAGE("c1 offset difference at t_skip 40: " << settled);
  CHECK(std::abs(gap(20.0) - settled) <= 1e-8);
  CHECK(settled < 10 * a.epsilon);
}
