#include "eqfree/coarse_map.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace eqfree {

void CoarseSettings::validate() const {
  if (!(t_skip > 0.0)) throw std::invalid_argument("t_skip must be positive");
  if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
  if (!(d_sigma > 0.0) || !(d_v0 > 0.0) || !(d_h > 0.0))
    throw std::invalid_argument("finite-difference offsets must be positive");
  if (!(newton_tol > 0.0) || !(rate_tol > 0.0))
    throw std::invalid_argument("Newton tolerances must be positive");
  if (newton_max_iter <= 0) throw std::invalid_argument("newton_max_iter must be positive");
  if (!(nu > 0.0 && nu <= 1.0)) throw std::invalid_argument("nu must lie in (0, 1]");
  if (threads <= 0) throw std::invalid_argument("threads must be positive");
}

CoarseSample macro_sample(const CoarseProblem& problem, const MacroPoint& point,
                          const CoarseSettings& settings) {
  const double times[] = {settings.t_skip, settings.t_skip + settings.delta};
  const auto values = problem.burst(point, times);
  CoarseSample s;
  s.healed = values[0];
  s.advanced = values[1];
  s.rate = (s.advanced - s.healed) / settings.delta;
  return s;
}

}  // namespace eqfree

namespace eqfree::coarse {

double restrict_state(const MicroState& state, const ModelParams& params) {
  const auto dx = micro::headways(state, params);
  const double mean = params.L / params.N;
  double sum = 0.0;
  for (double d : dx) sum += (d - mean) * (d - mean);
  return std::sqrt(sum / (params.N - 1));
}

LiftContext::LiftContext(MicroState reference, const ModelParams& params, double p)
    : reference_(std::move(reference)), p_(p) {
  if (!(p > 0.0)) throw std::invalid_argument("lifting bias p must be positive");
  if (reference_.x.size() != static_cast<std::size_t>(params.N))
    throw std::invalid_argument("lifting reference does not have N cars");
  headways_ = micro::headways(reference_, params);
  reference_sigma_ = restrict_state(reference_, params);
  if (!(reference_sigma_ > 0.0))
    throw std::invalid_argument("lifting reference has zero headway deviation");
}

MicroState lift(double sigma, const LiftContext& ctx, const ModelParams& params) {
  const int n = params.N;
  if (ctx.reference_headways().size() != static_cast<std::size_t>(n))
    throw std::invalid_argument("lifting context does not match N");
  const double mean = params.L / n;
  const double scale = ctx.p() * sigma / ctx.reference_sigma();
  MicroState s;
  s.x.resize(n);
  s.y.resize(n);
  double pos = 0.0;
  for (int i = 0; i < n; ++i) {
    const double dx = scale * (ctx.reference_headways()[i] - mean) + mean;
    s.x[i] = pos;
    s.y[i] = micro::ov_velocity(dx, params);
    pos += dx;
  }
  return s;
}

double coarse_trajectory(double sigma, const LiftContext& ctx, const ModelParams& params,
                         double t, const IntegratorSettings& integrator) {
  return restrict_state(micro::integrate(lift(sigma, ctx, params), params, t, integrator),
                        params);
}

double healed_sigma(double sigma, const LiftContext& ctx, const ModelParams& params,
                    const CoarseSettings& settings, const IntegratorSettings& integrator) {
  return coarse_trajectory(sigma, ctx, params, settings.t_skip, integrator);
}

double macro_rhs(double sigma, const LiftContext& ctx, const ModelParams& params,
                 const CoarseSettings& settings, const IntegratorSettings& integrator) {
  TrafficProblem problem(params, std::make_shared<const LiftContext>(ctx), integrator);
  return eqfree::macro_rhs(problem, {sigma, params.v0, params.h}, settings);
}

TrafficProblem::TrafficProblem(ModelParams base, std::shared_ptr<const LiftContext> ctx,
                               IntegratorSettings integrator)
    : base_(std::move(base)), ctx_(std::move(ctx)), integrator_(std::move(integrator)) {
  if (!ctx_) throw std::invalid_argument("TrafficProblem requires a lifting context");
}

ModelParams TrafficProblem::params_at(const MacroPoint& point) const {
  ModelParams p = base_;
  p.v0 = point.v0;
  p.h = point.h;
  return p;
}

MicroState TrafficProblem::lift_state(const MacroPoint& point) const {
  return lift(point.sigma, *ctx_, params_at(point));
}

MicroState TrafficProblem::evolved_state(const MacroPoint& point, double t) const {
  const auto params = params_at(point);
  return micro::integrate(lift(point.sigma, *ctx_, params), params, t, integrator_);
}

std::vector<double> TrafficProblem::burst(const MacroPoint& point,
                                          std::span<const double> times) const {
  const auto params = params_at(point);
  const auto states =
      micro::integrate_checkpoints(lift(point.sigma, *ctx_, params), params, times, integrator_);
  std::vector<double> out;
  out.reserve(states.size());
  for (const auto& s : states) out.push_back(restrict_state(s, params));
  return out;
}

void TrafficProblem::on_accept(const MacroPoint& point, const CoarseSettings& settings) {
  if (!update_reference_) return;
  auto healed = evolved_state(point, settings.t_skip);
  // a (nearly) uniform profile cannot be rescaled; keep the previous reference
  if (restrict_state(healed, params_at(point)) < kMinReferenceSigma) return;
  ctx_ = std::make_shared<const LiftContext>(std::move(healed), params_at(point), ctx_->p());
}

void TrafficProblem::set_context(std::shared_ptr<const LiftContext> ctx) {
  if (!ctx) throw std::invalid_argument("null lifting context");
  ctx_ = std::move(ctx);
}

}  // namespace eqfree::coarse
