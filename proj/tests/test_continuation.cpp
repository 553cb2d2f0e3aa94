#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "eqfree/continuation.hpp"
#include "synthetic.hpp"

using namespace eqfree;
using namespace eqfree::continuation;

namespace {

BranchPoint point(double sigma, double v0, double h = 1.2) {
  BranchPoint p;
  p.sigma = sigma;
  p.v0 = v0;
  p.h = h;
  return p;
}

Branch synthetic_branch(test::RateProblem& problem, const CoarseSettings& s,
                        const ContinuationOptions& o) {
  const auto a = equilibrium_point(problem, {0.25, test::fold_v0(0.25, 1.2), 1.2}, s);
  const auto b = equilibrium_point(problem, {0.249, test::fold_v0(0.249, 1.2), 1.2}, s);
  return continue_branch(problem, a, b, s, o);
}

}  // namespace

TEST_CASE("secant and predictor") {
  const auto w = secant_direction(point(0.2, 0.9), point(0.21, 0.905));
  CHECK(w[0] == doctest::Approx(0.01));
  CHECK(w[1] == doctest::Approx(0.005));
  CHECK_THROWS_AS(secant_direction(point(0.2, 0.9), point(0.2, 0.9)), std::invalid_argument);

  const auto p = predict(point(0.2, 0.9), {1.0, 0.0}, 1e-3);
  CHECK(p.sigma == doctest::Approx(0.201).epsilon(1e-14));
  CHECK(p.v0 == 0.9);
  const auto same = predict(point(0.2, 0.9), {0.3, 0.4}, 0.0);
  CHECK(same.sigma == 0.2);
  CHECK(same.v0 == 0.9);
  const auto unit = predict(point(0.2, 0.9), {3.0, 4.0}, 1.0);
  CHECK(unit.sigma == doctest::Approx(0.8));
  CHECK(unit.v0 == doctest::Approx(1.7));
  CHECK(ContinuationOptions{}.step == 1e-3);
}

TEST_CASE("corrector") {
  test::RateProblem problem(test::fold_rate);
  const CoarseSettings s;
  const MacroPoint on{0.2, test::fold_v0(0.2, 1.2), 1.2};
  const auto c = correct(problem, on, {1.0, 0.0}, s);
  CHECK(c.newton_iterations == 0);
  CHECK(c.sigma == on.sigma);
  CHECK(c.v0 == on.v0);

  const MacroPoint off{0.2, 0.89, 1.2};
  const std::vector<double> w{0.6, 0.8};
  const auto d = correct(problem, off, w, s);
  CHECK(std::abs(d.rate) <= s.rate_tol);
  CHECK(std::abs(0.6 * (d.sigma - off.sigma) + 0.8 * (d.v0 - off.v0)) <= 1e-10);
  // |F| <= rate_tol leaves v0 uncertain by rate_tol / 1e-3
  CHECK(std::abs(d.v0 - test::fold_v0(d.sigma, 1.2)) <= s.rate_tol / 1e-3);
  CHECK(d.stable);
  CHECK(d.sigma_healed == doctest::Approx(d.sigma + s.t_skip * d.rate).epsilon(1e-14));
}

TEST_CASE("one-parameter branch through a fold") {
  test::RateProblem problem(test::fold_rate);
  const CoarseSettings s;
  const ContinuationOptions o;
  const auto branch = synthetic_branch(problem, s, o);
  INFO(branch.termination);
  REQUIRE(branch.points.size() > 100);
  CHECK_FALSE(branch.truncated);
  CHECK(problem.accepted == static_cast<int>(branch.points.size()) - 2);

  SUBCASE("points are equilibria spaced by the arclength step") {
    bool halved = !branch.log.empty();
    for (std::size_t i = 0; i < branch.points.size(); ++i) {
      const auto& p = branch.points[i];
      CHECK(std::abs(test::fold_rate(p.macro())) <= s.newton_tol);
      if (i > 0 && !halved) {
        const auto& q = branch.points[i - 1];
        const double d = std::hypot(p.sigma - q.sigma, p.v0 - q.v0);
        CHECK(d >= 0.5 * o.step);
        CHECK(d <= 1.5 * o.step);
      }
    }
  }

  SUBCASE("termination near sigma = 0") {
    const auto& last = branch.points.back();
    CHECK(last.sigma < o.sigma_stop);
    CHECK(last.v0 == doctest::Approx(test::fold_v0(0.0, 1.2)).epsilon(1e-3));
  }

  SUBCASE("fold and stability change") {
    const auto f = detect_fold(branch);
    CHECK(f.sigma == doctest::Approx(0.125).epsilon(1e-6));
    CHECK(f.v0 == doctest::Approx(0.88).epsilon(1e-9));
    CHECK(f.stability_change);
    CHECK(f.f_sigma_sign_change);
    CHECK(detect_folds(branch).size() == 1);
    CHECK(branch.points.front().stable);
    CHECK_FALSE(branch.points.back().stable);
  }
}

TEST_CASE("branch stop conditions") {
  test::RateProblem problem(test::fold_rate);
  const CoarseSettings s;
  ContinuationOptions o;
  o.stop_below_healed = 0.2;
  auto b = synthetic_branch(problem, s, o);
  CHECK(b.points.back().sigma_healed < 0.2);
  CHECK(b.points[b.points.size() - 2].sigma_healed >= 0.2);

  o = ContinuationOptions{};
  o.n_steps = 10;
  b = synthetic_branch(problem, s, o);
  CHECK(b.points.size() == 12);

  // a residual that fails everywhere beyond the seeds truncates the branch
  test::RateProblem broken([](const MacroPoint& q) {
    return q.sigma < 0.2485 ? std::nan("") : test::fold_rate(q);
  });
  b = synthetic_branch(broken, s, ContinuationOptions{});
  CHECK(b.truncated);
  const auto halvings = std::count_if(b.log.begin(), b.log.end(), [](const std::string& m) {
    return m.find("halving") != std::string::npos;
  });
  CHECK(halvings >= o.max_halvings + 1);
}

TEST_CASE("fold detection on synthetic branches") {
  Branch monotone;
  for (int i = 0; i < 10; ++i) monotone.points.push_back(point(0.1 + 0.01 * i, 0.9 + 0.001 * i));
  CHECK_THROWS_AS(detect_fold(monotone), std::runtime_error);
  CHECK(detect_folds(monotone).empty());

  Branch parabola;
  for (int i = 0; i <= 20; ++i) {
    const double s = 0.3 - 0.01 * i;
    parabola.points.push_back(point(s, 0.88 + 2 * (s - 0.17) * (s - 0.17)));
  }
  const auto f = detect_fold(parabola);
  CHECK(f.sigma == doctest::Approx(0.17).epsilon(1e-10));
  CHECK(f.v0 == doctest::Approx(0.88).epsilon(1e-12));
}

TEST_CASE("two-parameter fold continuation") {
  test::RateProblem problem(test::fold_rate);
  const CoarseSettings s;
  ContinuationOptions o;
  o.h_min = 1.1;
  o.h_max = 1.25;
  const MacroPoint seed{0.13, 0.8801, 1.2};

  const auto fp = correct_fold(problem, {0.125, 0.88, 1.2}, {0.0, 0.0, 1.0}, s);
  CHECK(fp.sigma == doctest::Approx(0.125).epsilon(1e-9));
  CHECK(fp.derivatives.F_sigma_sigma == doctest::Approx(-2e-3).epsilon(1e-6));
  CHECK_FALSE(fp.near_cusp);

  for (int dir : {-1, 1}) {
    const auto fb = continue_fold(problem, seed, dir, s, o);
    INFO(fb.termination);
    CHECK_FALSE(fb.truncated);
    REQUIRE(fb.points.size() > 10);
    for (const auto& p : fb.points) {
      CHECK(p.sigma == doctest::Approx(0.125).epsilon(1e-6));
      CHECK(p.v0 == doctest::Approx(0.88 + 0.5 * (p.h - 1.2)).epsilon(1e-8));
    }
    const double h = dir < 0 ? 1.12 : 1.24;
    const auto v = fold_v0_at(fb, h);
    REQUIRE(v);
    CHECK(*v == doctest::Approx(0.88 + 0.5 * (h - 1.2)).epsilon(1e-7));
    CHECK_FALSE(fold_v0_at(fb, dir < 0 ? 1.3 : 1.0));
  }
}
