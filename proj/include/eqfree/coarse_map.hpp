// Restriction, lifting and the healed coarse map of the traffic model.
//
// The macroscopic variable is the sample standard deviation sigma of the
// headways. Lifting rescales the headway deviations of a reference profile so
// that R(L_p(sigma)) = p * sigma.

#pragma once

#include <memory>
#include <span>
#include <vector>

#include "eqfree/coarse_problem.hpp"
#include "eqfree/micro_model.hpp"

namespace eqfree::coarse {

using micro::IntegratorSettings;
using micro::MicroState;
using micro::ModelParams;

/// References with a smaller headway deviation are not adopted by
/// TrafficProblem::on_accept.
inline constexpr double kMinReferenceSigma = 1e-6;

/// Sample standard deviation of the headways about their mean L/N.
double restrict_state(const MicroState& state, const ModelParams& params);

class LiftContext {
 public:
  /// Throws std::invalid_argument if the reference has sigma = 0 or p <= 0.
  LiftContext(MicroState reference, const ModelParams& params, double p = 1.0);

  [[nodiscard]] const MicroState& reference() const { return reference_; }
  [[nodiscard]] double reference_sigma() const { return reference_sigma_; }
  [[nodiscard]] double p() const { return p_; }
  [[nodiscard]] std::span<const double> reference_headways() const { return headways_; }

 private:
  MicroState reference_;
  std::vector<double> headways_;
  double reference_sigma_;
  double p_;
};

/// Builds the state with headways (p sigma / sigma_ref)(dx_ref - L/N) + L/N,
/// x_1 = 0 and velocities V(dx).
MicroState lift(double sigma, const LiftContext& ctx, const ModelParams& params);

/// P(t; sigma) = R(M(t; L(sigma))).
double coarse_trajectory(double sigma, const LiftContext& ctx, const ModelParams& params,
                         double t, const IntegratorSettings& integrator);

/// P(t_skip; sigma).
double healed_sigma(double sigma, const LiftContext& ctx, const ModelParams& params,
                    const CoarseSettings& settings, const IntegratorSettings& integrator);

/// F(sigma) = [P(t_skip + delta; sigma) - P(t_skip; sigma)] / delta, one burst.
double macro_rhs(double sigma, const LiftContext& ctx, const ModelParams& params,
                 const CoarseSettings& settings, const IntegratorSettings& integrator);

/// The traffic model as a coarse problem. The bifurcation parameters v0 and h
/// of each MacroPoint override those of the base parameters.
class TrafficProblem : public CoarseProblem {
 public:
  TrafficProblem(ModelParams base, std::shared_ptr<const LiftContext> ctx,
                 IntegratorSettings integrator);

  std::vector<double> burst(const MacroPoint& point,
                            std::span<const double> times) const override;

  /// Replaces the lifting reference with M(t_skip; L(point.sigma)) when
  /// reference updates are enabled.
  void on_accept(const MacroPoint& point, const CoarseSettings& settings) override;

  [[nodiscard]] ModelParams params_at(const MacroPoint& point) const;
  [[nodiscard]] MicroState lift_state(const MacroPoint& point) const;
  /// M(t; L(point.sigma)).
  [[nodiscard]] MicroState evolved_state(const MacroPoint& point, double t) const;

  [[nodiscard]] const LiftContext& context() const { return *ctx_; }
  [[nodiscard]] std::shared_ptr<const LiftContext> context_ptr() const { return ctx_; }
  void set_context(std::shared_ptr<const LiftContext> ctx);

  [[nodiscard]] const ModelParams& base_params() const { return base_; }
  [[nodiscard]] const IntegratorSettings& integrator() const { return integrator_; }

  void set_reference_updates(bool enabled) { update_reference_ = enabled; }
  [[nodiscard]] bool reference_updates() const { return update_reference_; }

 private:
  ModelParams base_;
  std::shared_ptr<const LiftContext> ctx_;
  IntegratorSettings integrator_;
  bool update_reference_ = true;
};

}  // namespace eqfree::coarse
