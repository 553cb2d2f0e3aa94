// Pseudo-arclength continuation of macroscopic equilibria F(sigma, v0) = 0 in
// v0, and of fold points F = F_sigma = 0 in (v0, h).

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "eqfree/coarse_map.hpp"
#include "eqfree/coarse_problem.hpp"
#include "eqfree/solvers.hpp"

namespace eqfree::continuation {

struct BranchPoint {
  double sigma = 0.0;
  double sigma_healed = 0.0;  // P(t_skip; sigma)
  double v0 = 0.0;
  double h = 0.0;
  double rate = 0.0;     // F at acceptance
  double f_sigma = 0.0;  // dF/dsigma, forward difference
  double multiplier = 0.0;
  bool multiplier_valid = false;
  bool stable = false;
  int newton_iterations = 0;
  double step = 0.0;  // arclength step used to reach this point

  [[nodiscard]] MacroPoint macro() const { return {sigma, v0, h}; }
};

struct Branch {
  std::vector<BranchPoint> points;
  std::vector<double> secant;     // last secant direction (unnormalised)
  std::vector<std::string> log;   // step halvings and termination notes
  bool truncated = false;         // stopped by corrector failure
  std::string termination;
};

struct ContinuationOptions {
  double step = 1e-3;        // arclength s in (sigma, v0[, h])
  int n_steps = 1000;
  int max_halvings = 5;
  double sigma_stop = 5e-3;  // stop on approaching sigma = 0 from above
  double v0_min = 0.8;
  double v0_max = 1.0;
  double h_min = 1.0;
  double h_max = 1.7;
  // stop once the healed sigma falls below this value (one-parameter branches)
  std::optional<double> stop_below_healed;
};

/// w = p1 - p0 in (sigma, v0). Throws std::invalid_argument for identical points.
std::vector<double> secant_direction(const BranchPoint& p0, const BranchPoint& p1);
/// w = p1 - p0 in (sigma, v0, h).
std::vector<double> secant_direction3(const BranchPoint& p0, const BranchPoint& p1);

/// p1 + s w / |w|, in as many coordinates as w has.
MacroPoint predict(const BranchPoint& p1, const std::vector<double>& w, double s);

/// Solves F(sigma, v0) = 0 with the row w.(x - prediction) = 0 by Newton from
/// the prediction (h fixed), then records the healed value, F_sigma and the
/// multiplier. Throws SolverError on Newton failure.
BranchPoint correct(const CoarseProblem& problem, const MacroPoint& prediction,
                    const std::vector<double>& w, const CoarseSettings& settings);

/// Converged equilibrium at fixed (v0, h) from a sigma guess, with the
/// same diagnostics as `correct`. Throws SolverError on failure.
BranchPoint equilibrium_point(const CoarseProblem& problem, const MacroPoint& guess,
                              const CoarseSettings& settings);

/// Fills sigma_healed, rate, f_sigma and the multiplier of a converged point.
void annotate(const CoarseProblem& problem, BranchPoint& point, const CoarseSample& sample,
              const CoarseSettings& settings);

/// Continues from two converged points (seed0 -> seed1 sets the direction).
/// After each accepted point problem.on_accept() is called. Corrector failures
/// halve the step up to options.max_halvings times before the branch is
/// returned truncated.
Branch continue_branch(CoarseProblem& problem, const BranchPoint& seed0,
                       const BranchPoint& seed1, const CoarseSettings& settings,
                       const ContinuationOptions& options);

struct FoldEstimate {
  double sigma = 0.0;
  double sigma_healed = 0.0;
  double v0 = 0.0;
  double h = 0.0;
  std::size_t index = 0;             // branch point nearest the turning point
  bool f_sigma_sign_change = false;  // F_sigma changes sign within two points
  bool stability_change = false;     // multiplier crosses |lambda| = 1 within two points
};

/// All v0-turning points of a branch, in branch order. Each is located at the
/// vertex of the parabola v0(sigma) through the three bracketing points.
std::vector<FoldEstimate> detect_folds(const Branch& branch);

/// First turning point; throws std::runtime_error if the branch has none.
FoldEstimate detect_fold(const Branch& branch);

struct FoldPoint {
  double sigma = 0.0;
  double sigma_healed = 0.0;
  double v0 = 0.0;
  double h = 0.0;
  double rate = 0.0;
  double f_sigma = 0.0;
  solvers::StencilDerivatives derivatives;
  bool near_cusp = false;  // |F_sigma_sigma| below the cusp threshold
  int newton_iterations = 0;
};

struct FoldBranch {
  std::vector<FoldPoint> points;
  std::vector<std::string> log;
  bool truncated = false;
  std::string termination;
};

/// |F_sigma_sigma| below this flags proximity to a cusp.
inline constexpr double kCuspThreshold = 1e-6;

/// Solves F = 0, F_sigma = 0 with the third row w.(x - prediction) = 0 by
/// Newton using the 17-point stencil for the Jacobian.
FoldPoint correct_fold(const CoarseProblem& problem, const MacroPoint& prediction,
                       const std::vector<double>& w, const CoarseSettings& settings);

/// Fold curve in (sigma, v0, h) starting at `seed` (e.g. from detect_fold).
/// The seed is refined at fixed h, a second point at h + direction * step,
/// then the curve is continued by secant predictor/corrector steps.
FoldBranch continue_fold(CoarseProblem& problem, const MacroPoint& seed, int direction,
                         const CoarseSettings& settings, const ContinuationOptions& options);

/// v0 of the fold curve at h by linear interpolation between bracketing points.
std::optional<double> fold_v0_at(const FoldBranch& branch, double h);

/// Seed for continuation of the traffic jam: simulates the perturbed uniform
/// flow for time T at (v0, h), uses the end state as lifting reference and
/// solves for the coarse equilibrium.
struct Seed {
  std::shared_ptr<const coarse::LiftContext> context;
  BranchPoint point;
};

/// As seed_from_simulation with a given lifting reference state.
Seed seed_from_reference(const micro::ModelParams& base, micro::MicroState reference, double v0,
                         double h, double p, const micro::IntegratorSettings& integrator,
                         const CoarseSettings& settings);

Seed seed_from_simulation(const micro::ModelParams& base, double v0, double h, double T,
                          double p, const micro::IntegratorSettings& integrator,
                          const CoarseSettings& settings);

}  // namespace eqfree::continuation
