#include "doctest.h"

#include <cmath>
#include <memory>
#include <numeric>

#include "eqfree/coarse_map.hpp"
#include "eqfree/continuation.hpp"

using namespace eqfree;
using namespace eqfree::coarse;

namespace {

MicroState alternating(const ModelParams& p) {
  MicroState s;
  double x = 0.0;
  for (int n = 0; n < p.N; ++n) {
    s.x.push_back(x);
    s.y.push_back(0.0);
    x += (n % 2 == 0) ? 1.1 : 0.9;
  }
  return s;
}

// a rough jam profile, good enough as a lifting reference
MicroState jam_profile(const ModelParams& p) {
  return micro::integrate(micro::perturbed_state(p), p, 2000.0, IntegratorSettings{});
}

}  // namespace

TEST_CASE("restriction") {
  const ModelParams p;
  CHECK(restrict_state(micro::uniform_flow_state(p), p) == 0.0);
  CHECK(restrict_state(alternating(p), p) == doctest::Approx(std::sqrt(60 * 0.01 / 59)).epsilon(1e-13));
  CHECK(restrict_state(alternating(p), p) == doctest::Approx(0.100844).epsilon(1e-6));

  // headways scaled by 2 about the mean
  MicroState s;
  double x = 0.0;
  for (int n = 0; n < p.N; ++n) {
    s.x.push_back(x);
    s.y.push_back(0.0);
    x += (n % 2 == 0) ? 1.2 : 0.8;
  }
  CHECK(restrict_state(s, p) == doctest::Approx(2 * restrict_state(alternating(p), p)).epsilon(1e-13));
}

TEST_CASE("lifting") {
  ModelParams p;
  p.v0 = 0.91;
  const auto ref = jam_profile(p);

  SUBCASE("restriction of the lift is p sigma") {
    double worst = 0.0;
    for (int i = 0; i < 11; ++i) {
      for (double bias : {0.9, 0.95, 1.0, 1.05, 1.1}) {
        const double sigma = 0.05 * i;
        const LiftContext ctx(ref, p, bias);
        const double r = restrict_state(lift(sigma, ctx, p), p);
        if (sigma == 0.0)
          CHECK(r == 0.0);
        else
          worst = std::max(worst, std::abs(r - bias * sigma) / (bias * sigma));
      }
    }
    CHECK(worst <= 1e-12);
    const LiftContext c95(ref, p, 0.95);
    CHECK(restrict_state(lift(0.2, c95, p), p) == doctest::Approx(0.19).epsilon(1e-12));
  }

  SUBCASE("lifting at the reference deviation recovers its headways") {
    const LiftContext ctx(ref, p, 1.0);
    const auto u = lift(ctx.reference_sigma(), ctx, p);
    CHECK(u.x[0] == 0.0);
    const auto a = micro::headways(u, p);
    const auto b = micro::headways(ref, p);
    for (int n = 0; n < p.N; ++n) CHECK(a[n] == doctest::Approx(b[n]).epsilon(1e-12));
    for (int n = 0; n < p.N; ++n) CHECK(u.y[n] == doctest::Approx(micro::ov_velocity(a[n], p)).epsilon(1e-14));
    CHECK(std::abs(std::accumulate(a.begin(), a.end(), 0.0) - p.L) < 1e-12);
  }

  SUBCASE("degenerate contexts") {
    CHECK_THROWS_AS(LiftContext(micro::uniform_flow_state(p), p, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(LiftContext(ref, p, 0.0), std::invalid_argument);
  }
}

TEST_CASE("coarse trajectory") {
  ModelParams p;
  p.v0 = 0.91;
  const auto ctx = std::make_shared<const LiftContext>(jam_profile(p), p, 1.0);
  const IntegratorSettings integ;
  CHECK(coarse_trajectory(0.0, *ctx, p, 0.0, integ) == 0.0);
  // the uniform flow is unstable at this v0, round-off grows up to the tolerance
  CHECK(coarse_trajectory(0.0, *ctx, p, 2300.0, integ) < 10 * integ.abs_tol);
  CHECK(coarse_trajectory(0.2, *ctx, p, 0.0, integ) == doctest::Approx(0.2).epsilon(1e-12));

  CoarseSettings s;
  CHECK(std::abs(macro_rhs(0.0, *ctx, p, s, integ)) < 10 * integ.abs_tol / s.delta);

  // one burst gives both restrictions
  const TrafficProblem problem(p, ctx, integ);
  const auto sample = macro_sample(problem, {0.2, 0.91, 1.2}, s);
  CHECK(sample.healed == doctest::Approx(healed_sigma(0.2, *ctx, p, s, integ)).epsilon(1e-12));
  CHECK(sample.rate == doctest::Approx(macro_rhs(0.2, *ctx, p, s, integ)).epsilon(1e-10));
}

TEST_CASE("macroscopic rhs on the stable jam branch" * doctest::timeout(600)) {
  const ModelParams base;
  const CoarseSettings s;
  const IntegratorSettings integ;
  const auto seed = continuation::seed_from_simulation(base, 0.91, 1.2, 5e4, 1.0, integ, s);
  TrafficProblem problem(base, seed.context, integ);
  const double star = seed.point.sigma;
  MESSAGE("equilibrium " << star << " healed " << seed.point.sigma_healed);
  CHECK(std::abs(seed.point.rate) <= s.rate_tol);
  CHECK(seed.point.sigma_healed > 0.2);

  // attraction on both sides
  CHECK(macro_rhs(problem, {star + 0.02, 0.91, 1.2}, s) < 0.0);
  CHECK(macro_rhs(problem, {star - 0.02, 0.91, 1.2}, s) > 0.0);

  // continuity across three decades
  const double f0 = macro_rhs(problem, {star, 0.91, 1.2}, s);
  double prev = 1e300;
  for (double e : {1e-2, 1e-3, 1e-4}) {
    const double d = std::abs(macro_rhs(problem, {star + e, 0.91, 1.2}, s) - f0);
    CHECK(d < prev);
    prev = d;
  }

  // healed equilibria do not depend on the lifting bias
  for (double bias : {0.95, 1.05}) {
    auto ctx = std::make_shared<const LiftContext>(seed.context->reference(), base, bias);
    TrafficProblem biased(base, ctx, integ);
    const auto q = continuation::equilibrium_point(biased, {star / bias, 0.91, 1.2}, s);
    MESSAGE("p " << bias << " pre-image " << q.sigma << " healed " << q.sigma_healed);
    CHECK(std::abs(q.sigma_healed - seed.point.sigma_healed) < 1e-3);
  }
}
