// Newton iteration with finite-difference Jacobians and the macroscopic
// solvers built on it: implicit coarse time stepping, coarse equilibria and
// their multipliers, restriction matching and projective Euler steps.

#pragma once

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <vector>

#include "eqfree/coarse_map.hpp"
#include "eqfree/coarse_problem.hpp"

namespace eqfree::solvers {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class NewtonStatus { converged, max_iterations, singular_jacobian, non_finite };

const char* to_string(NewtonStatus status);

struct NewtonReport {
  Vector solution;
  double residual_norm = 0.0;  // max-norm at `solution`
  int iterations = 0;          // number of updates applied
  bool converged = false;
  NewtonStatus status = NewtonStatus::max_iterations;
  std::vector<double> residual_history;  // max-norm before each update and at the end
};

struct NewtonOptions {
  double tol = 1e-7;
  int max_iter = 20;
  // updates applied even if the residual is already below tol
  int min_iter = 0;
  double nu = 1.0;
  // Jacobians whose 1-norm condition number exceeds this are treated as singular
  double max_condition = 1e10;
  // forward-difference offsets used when no Jacobian callback is supplied;
  // a single entry applies to every component
  std::vector<double> fd_offsets{1e-6};
};

using ResidualFn = std::function<Vector(const Vector&)>;
/// Jacobian at x, given the already evaluated residual r(x).
using JacobianFn = std::function<Matrix(const Vector& x, const Vector& residual)>;

/// Forward-difference Jacobian, one extra residual evaluation per column.
Matrix fd_jacobian(const ResidualFn& residual, const Vector& x, const Vector& fx,
                   const std::vector<double>& offsets);

/// 1-norm condition number; +inf for singular matrices.
double condition_number(const Matrix& m);

/// x_{k+1} = x_k - nu J(x_k)^{-1} r(x_k) until ||r||_inf <= tol.
NewtonReport newton_solve(const ResidualFn& residual, Vector x0, const NewtonOptions& options,
                          const JacobianFn& jacobian = {});

/// Options for a solve whose residual lives on healed restrictions.
NewtonOptions healed_options(const CoarseSettings& settings);
/// Options for a solve whose residual is the rate F.
NewtonOptions rate_options(const CoarseSettings& settings);

struct FirstOrderDerivatives {
  double F = 0.0;
  double F_sigma = 0.0;
  double F_v0 = 0.0;
};

/// One-sided differences from F at (s, v), (s + ds, v) and (s, v + dv).
FirstOrderDerivatives fd_first_order(const std::function<double(double, double)>& F,
                                     double sigma, double v0, const CoarseSettings& settings);

struct StencilDerivatives {
  double F = 0.0;
  double F_sigma = 0.0;
  double F_v0 = 0.0;
  double F_h = 0.0;
  double F_sigma_sigma = 0.0;
  double F_v0_sigma = 0.0;
  double F_h_sigma = 0.0;
  int evaluations = 0;
};

/// The 17 evaluation points of the second-order stencil, in stencil order.
std::array<MacroPoint, 17> stencil_points(const MacroPoint& point,
                                          const CoarseSettings& settings);

/// Second-order derivatives from F on the 17-point stencil: one-sided in
/// sigma (sigma is non-negative), centred in v0 and h.
StencilDerivatives fd_second_order(const std::function<double(const MacroPoint&)>& F,
                                   const MacroPoint& point, const CoarseSettings& settings);

struct ImplicitStep {
  double y = 0.0;
  double healed_result = 0.0;  // P(t_skip; y)
  double target = 0.0;         // P(t_skip + delta; x)
  NewtonReport report;
};

/// Coarse time stepper Phi(delta; x): solves P(t_skip; y) = P(t_skip + delta; x)
/// for y. Throws SolverError if Newton does not converge.
ImplicitStep implicit_step(const CoarseProblem& problem, double x, double delta,
                           const MacroPoint& params, const CoarseSettings& settings);

/// Root of F(sigma) = 0 at the parameters of `guess`, starting from guess.sigma.
/// Does not throw on non-convergence; inspect the report.
NewtonReport coarse_equilibrium(const CoarseProblem& problem, const MacroPoint& guess,
                                const CoarseSettings& settings);

struct Multiplier {
  double lambda = 0.0;
  bool stable = false;
  double d_healed = 0.0;    // dP(t_skip)/dsigma
  double d_advanced = 0.0;  // dP(t_skip + delta)/dsigma
};

/// Smallest |dP(t_skip)/dsigma| accepted when forming the multiplier.
inline constexpr double kTransversalityThreshold = 1e-6;

/// Generalized eigenvalue lambda = dP(t_skip + delta)/dP(t_skip) from
/// forward differences, optionally reusing the samples already taken at
/// sigma_star. Throws SolverError when dP(t_skip)/dsigma is below
/// kTransversalityThreshold.
Multiplier multiplier(const CoarseProblem& problem, const MacroPoint& equilibrium,
                      const CoarseSettings& settings, const CoarseSample* at_point = nullptr);

/// Multiplier from already evaluated samples at sigma and sigma + d_sigma.
Multiplier multiplier_from_samples(const CoarseSample& base, const CoarseSample& shifted,
                                   double d_sigma);

struct Match {
  double x_tilde = 0.0;
  double healed = 0.0;  // P(t_skip; x_tilde)
  NewtonReport report;
};

/// Solves P(t_skip; x_tilde) = x_target for x_tilde, starting from x_target.
/// Throws SolverError if Newton does not converge.
Match match_restriction(const CoarseProblem& problem, double x_target, const MacroPoint& params,
                        const CoarseSettings& settings);

struct MatchedState {
  Match match;
  micro::MicroState state;  // M(t_skip; L(x_tilde))
};

MatchedState match_restriction(const coarse::TrafficProblem& problem, double x_target,
                               const MacroPoint& params, const CoarseSettings& settings);

struct ProjectiveStep {
  double sigma = 0.0;   // sigma_{j+1}
  double healed = 0.0;  // P(t_skip; sigma_{j+1})
  CoarseSample start;   // samples at sigma_j
  NewtonReport report;
};

/// Projective Euler step P(t_skip; s_{j+1}) = P(t_skip; s_j) + F(s_j) * step.
/// Negative steps integrate backward along the slow flow. If Newton started at
/// s_j fails it is retried from the explicit predictor s_j + F(s_j) * step.
ProjectiveStep projective_euler_step(const CoarseProblem& problem, double sigma_j,
                                     double step, const MacroPoint& params,
                                     const CoarseSettings& settings);

struct ForwardBackwardError {
  double error = 0.0;
  double sigma_h0 = 0.0;  // P(t_skip; sigma(t))
  double omega_h0 = 0.0;  // P(t_skip - dt; sigma_1)
  double sigma_1 = 0.0;   // one backward Euler step from sigma(t)
};

/// Error estimate |P(t_skip; s) - P(t_skip - dt; s_1)| where s_1 is one
/// projective Euler step of (negative) size dt from s.
ForwardBackwardError forward_backward_error(const CoarseProblem& problem, double sigma_t,
                                            double delta_t, const MacroPoint& params,
                                            const CoarseSettings& settings);

}  // namespace eqfree::solvers
