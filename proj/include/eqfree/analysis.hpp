// Analytic Hopf curve of the uniform flow, distances between bifurcation
// diagrams, and the lifting-bias, healing-time and forward-backward error
// studies built on the continuation machinery.

#pragma once

#include <complex>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "eqfree/continuation.hpp"

namespace eqfree::analysis {

using micro::IntegratorSettings;
using micro::ModelParams;

/// v0 at which spatial mode j (1 <= j <= N-1) of the uniform flow loses
/// stability. Throws std::invalid_argument for j out of range.
double hopf_v0(double h, int j, const ModelParams& params);

/// Angular frequency of mode j at its Hopf point.
double hopf_frequency(double h, int j, const ModelParams& params);

/// (1 - w^2 tau / V' + i w / V')^N - 1 with V' = V'(L/N) at (v0, h).
std::complex<double> hopf_residual(double v0, double omega, double h, const ModelParams& params);

/// Natural cubic spline through strictly increasing knots.
class NaturalSpline {
 public:
  NaturalSpline(std::vector<double> x, std::vector<double> y);
  double operator()(double t) const;
  [[nodiscard]] double front() const { return x_.front(); }
  [[nodiscard]] double back() const { return x_.back(); }

 private:
  std::vector<double> x_, y_, m_;  // m_: second derivatives at the knots
};

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol,
                        int max_depth = 50);

enum class NormKind { l2_squared, l1 };
enum class Coordinate { pre_image, healed };

struct BranchDistanceSpec {
  double a = 0.125;
  double b = 0.25;
  NormKind norm = NormKind::l2_squared;
  Coordinate coordinate = Coordinate::pre_image;
  double tol = 1e-10;
};

/// Sorted (sigma, v0) samples of a branch that form a graph v0(sigma).
using Graph = std::vector<std::pair<double, double>>;

/// The first run of the branch that is strictly monotone in the chosen sigma
/// coordinate and covers [a, b], sorted by sigma and trimmed to the points in
/// [a, b] plus one bracketing point on each side. Points that break
/// monotonicity by less than 1e-6 are dropped. Throws std::runtime_error if no
/// run covers [a, b].
Graph branch_graph(const continuation::Branch& branch, Coordinate coordinate, double a, double b);

/// Integral over [a, b] of (f - g)^2 or |f - g| for the spline interpolants
/// of two graphs v0(sigma). Throws std::runtime_error if a graph does not
/// cover [a, b].
double graph_distance(const Graph& f, const Graph& g, const BranchDistanceSpec& spec);

double branch_distance(const continuation::Branch& f, const continuation::Branch& g,
                       const BranchDistanceSpec& spec);

/// Wraps (sigma, v0) samples, e.g. from direct simulation, as a branch whose
/// pre-image and healed coordinates coincide.
continuation::Branch branch_from_samples(const std::vector<std::pair<double, double>>& samples,
                                         double h);

// ---------------------------------------------------------------------------
// Direct simulation

struct DirectSample {
  double v0 = 0.0;
  double sigma = 0.0;
};

/// Stable jam branch by long simulations on a descending v0 grid, each run
/// warm-started from the previous end state (the first from the perturbed
/// uniform flow). Stops at the first v0 where the jam has dissolved
/// (sigma < dissolve_sigma); that sample is not included.
std::vector<DirectSample> direct_downsweep(const ModelParams& base, double h,
                                           const std::vector<double>& v0_grid, double T,
                                           const IntegratorSettings& integrator,
                                           double dissolve_sigma = 1e-3);

/// n values from `from` down to `to`, inclusive.
std::vector<double> descending_grid(double from, double to, int n);

/// A traffic jam state at (v0, h): the perturbed uniform flow is simulated for
/// T at `jam_v0` (inside the jam regime) and then for T at v0.
micro::MicroState jam_reference(const ModelParams& base, double v0, double h, double jam_v0,
                                double T, const IntegratorSettings& integrator);

// ---------------------------------------------------------------------------
// Studies

struct StudySetup {
  ModelParams model;
  IntegratorSettings integrator;
  CoarseSettings coarse;
  continuation::ContinuationOptions continuation;
  double seed_v0_first = 0.91;
  double seed_v0_second = 0.90;
  double seed_time = 5e4;
};

/// One-parameter branch seeded from direct simulations at the two seed
/// velocities, continued towards decreasing v0.
continuation::Branch jam_branch(const StudySetup& setup, double h, double p = 1.0,
                                std::optional<double> stop_below_healed = std::nullopt);

struct FoldCurve {
  std::vector<continuation::FoldPoint> points;  // ordered by increasing h
  std::vector<continuation::FoldBranch> halves;  // towards lower h, towards higher h
  continuation::FoldEstimate seed;
  bool truncated = false;
};

/// The fold curve lifts from the stable jam simulated at this distance in v0
/// above the detected fold.
inline constexpr double kFoldReferenceOffset = 1e-3;

/// Two-parameter fold curve over [h_lo, h_hi] through the first fold of
/// `branch`. The lifting reference is a long simulation of the stable jam at
/// v0 = fold + kFoldReferenceOffset. The curve is computed with healing time
/// t_skip; F_sigma = 0 only tracks the v0 turning point once t_skip is long
/// enough (2000 works, 300 does not below h ~ 1.13).
FoldCurve fold_curve(const StudySetup& setup, const continuation::Branch& branch, double p,
                     double h_lo, double h_hi, double t_skip);

/// v0 of the fold curve at h, taking the crossing reached first when walking
/// from the seed. Past a cusp the curve continues on the other fold sheet and
/// may cross h again. nullopt if neither half reaches h.
std::optional<double> fold_v0_from_seed(const FoldCurve& curve, double h);

struct LiftingSweepRow {
  double p = 1.0;
  continuation::Branch branch;
  double unhealed_distance = 0.0;  // pre-image branch vs direct simulation
  double healed_distance = 0.0;    // healed branch vs direct simulation
  double a = 0.0, b = 0.0;         // interval actually compared with the direct data
};

struct LiftingSweep {
  std::vector<LiftingSweepRow> rows;
  std::vector<DirectSample> direct;
  // pairwise L2 distances between healed branches on the nominal interval
  std::vector<std::vector<double>> healed_pairwise;
};

/// Branches for each lifting bias p, compared with a direct-simulation
/// reference on [a, b] intersected with the range the reference covers.
LiftingSweep lifting_sweep(const StudySetup& setup, const std::vector<double>& p_values,
                           double h, const std::vector<DirectSample>& direct, double a = 0.125,
                           double b = 0.25);

struct TskipScanRow {
  double t_skip = 0.0;
  continuation::Branch branch;
  double distance = 0.0;  // L1 distance to the reference branch
  std::vector<continuation::FoldEstimate> folds;
};

/// Branches for each healing time and their L1 distances (healed coordinate,
/// [a, b]) to the branch at reference_tskip.
std::vector<TskipScanRow> tskip_scan(const StudySetup& setup, const std::vector<double>& tskips,
                                     double h, double reference_tskip = 2000.0, double a = 0.01,
                                     double b = 0.28);

struct BackwardTrajectory {
  double stable_sigma = 0.0;
  double unstable_sigma = 0.0;
  std::vector<solvers::ProjectiveStep> steps;
  std::vector<double> sigmas;  // starting point followed by every step
};

/// Equilibrium below `sigma_start` at fixed (v0, h): F is sampled on a grid
/// of spacing `scan` downward from sigma_start until it changes sign, then
/// Newton refines from the bracket midpoint. Throws SolverError if no sign
/// change is found above `scan`.
double equilibrium_below(const CoarseProblem& problem, double v0, double h, double sigma_start,
                         double scan, const CoarseSettings& settings);

/// Projective backward Euler from just below the stable equilibrium at v0
/// (offset `start_offset` towards the unstable one). Both equilibria are
/// solved in the lifting context of `problem`.
BackwardTrajectory backward_trajectory(const CoarseProblem& problem, double v0, double h,
                                       double stable_guess, double step, int max_steps,
                                       double start_offset, const CoarseSettings& settings);

/// First sigma of the trajectory below the midpoint of the two equilibria.
double trajectory_midpoint(const BackwardTrajectory& traj);

struct FbErrorRow {
  double t_skip = 0.0;
  double delta = 0.0;
  double delta_t = 0.0;
  solvers::ForwardBackwardError result;
};

/// Forward-backward error for every (t_skip, delta) pair with dt = -2 delta.
std::vector<FbErrorRow> fberror_scan(const CoarseProblem& problem, double sigma_t,
                                     const MacroPoint& params, const CoarseSettings& settings,
                                     const std::vector<double>& tskips,
                                     const std::vector<double>& deltas);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace eqfree::analysis
