// Generic interface between macroscopic solvers and a lift/evolve/restrict
// pipeline with a scalar macroscopic variable.

#pragma once

#include <span>
#include <stdexcept>
#include <vector>

namespace eqfree {

/// Macroscopic coordinate plus the two bifurcation parameters.
struct MacroPoint {
  double sigma = 0.0;
  double v0 = 0.0;
  double h = 0.0;
};

struct CoarseSettings {
  double t_skip = 300.0;  // healing time
  double delta = 2000.0;  // burst length of the finite-difference rate
  double d_sigma = 1e-3;
  double d_v0 = 1e-3;
  double d_h = 1e-3;
  // residual tolerance for equations posed on healed restrictions P(t_skip; .)
  double newton_tol = 1e-7;
  // residual tolerance for equations posed on the rate F
  double rate_tol = 1e-10;
  int newton_max_iter = 20;
  double nu = 1.0;  // Newton relaxation
  int threads = 1;  // concurrent stencil evaluations

  void validate() const;
};

/// P(t_skip; sigma), P(t_skip + delta; sigma) and F = (advanced - healed) / delta.
struct CoarseSample {
  double healed = 0.0;
  double advanced = 0.0;
  double rate = 0.0;
};

class CoarseProblem {
 public:
  virtual ~CoarseProblem() = default;

  /// R(M(t; L(point.sigma))) at the parameters of `point`, for each of the
  /// non-decreasing times, from one microscopic run. Must be safe to call
  /// concurrently.
  virtual std::vector<double> burst(const MacroPoint& point,
                                    std::span<const double> times) const = 0;

  /// Hook invoked by continuation after a point has been accepted.
  virtual void on_accept(const MacroPoint& /*point*/, const CoarseSettings& /*settings*/) {}
};

/// One burst of length t_skip + delta with P(t_skip) taken on the way.
CoarseSample macro_sample(const CoarseProblem& problem, const MacroPoint& point,
                          const CoarseSettings& settings);

inline double macro_rhs(const CoarseProblem& problem, const MacroPoint& point,
                        const CoarseSettings& settings) {
  return macro_sample(problem, point, settings).rate;
}

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace eqfree
