// Slow-fast toy system for checking that the implicit coarse stepper converges
// exponentially in the healing time and forgets where the lifting placed the
// fast variables.
//
//   x'  = eps (x - x^3 + y1)
//   y1' = -k (y1 - x^2)
//   y2' = -2k (y2 - sin x)
//
// R(u) = x + mix * y1,  L(x) = (x, x^2 + c1, sin x + c2).

#pragma once

#include <array>
#include <span>
#include <vector>

#include "eqfree/coarse_problem.hpp"

namespace eqfree::lab {

using State3 = std::array<double, 3>;

struct ToySystem {
  double epsilon = 0.01;
  double fast_rate = 1.0;
  double c1 = 0.3;
  double c2 = -0.2;
  double restriction_mix = 0.1;
  double tol = 1e-14;  // integrator tolerance (absolute and relative)

  void validate() const;  // epsilon in (0, 0.1], fast_rate > 0
};

State3 toy_rhs(const State3& u, const ToySystem& sys);

/// Integrates the toy system, returning the state at each requested time
/// (non-decreasing, starting from t = 0).
std::vector<State3> toy_integrate(const State3& u0, const ToySystem& sys,
                                  std::span<const double> times);

double toy_restrict(const State3& u, const ToySystem& sys);
State3 toy_lift(double x, const ToySystem& sys);

class ToyProblem : public CoarseProblem {
 public:
  explicit ToyProblem(ToySystem sys);
  std::vector<double> burst(const MacroPoint& point,
                            std::span<const double> times) const override;
  [[nodiscard]] const ToySystem& system() const { return sys_; }

 private:
  ToySystem sys_;
};

/// Settings used for the implicit steps of the lab (tight Newton tolerance).
CoarseSettings lab_settings(double t_skip, double delta);

/// Phi(delta; x) of the implicit stepper at the given healing time.
double toy_flow(double x, double delta, const ToySystem& sys, double t_skip);

/// Phi(delta; x) with t_skip_ref (>= 40 / fast_rate).
double toy_reference_flow(double x, double delta, const ToySystem& sys, double t_skip_ref);

/// Default healing time of the reference: 50 / fast_rate.
double default_reference_tskip(const ToySystem& sys);

/// Errors below this are treated as measurement floor.
inline constexpr double kErrorFloor = 1e-13;

struct ConvergenceRow {
  double t_skip = 0.0;
  double phi = 0.0;
  double error = 0.0;
  bool in_fit = false;
};

struct ConvergenceScan {
  std::vector<ConvergenceRow> rows;
  double reference = 0.0;
  double t_skip_ref = 0.0;
  double slope = 0.0;  // of log(error) against t_skip, NaN with < 2 usable points
  int fit_points = 0;
};

ConvergenceScan convergence_scan(double x, double delta, const ToySystem& sys,
                                 const std::vector<double>& tskips, int threads = 1);

}  // namespace eqfree::lab
