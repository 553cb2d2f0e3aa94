// Optimal-velocity car-following model on a ring road.
//
// N cars with positions x_n and velocities y_n obey
//   x_n' = y_n,   y_n' = (V(x_{n+1} - x_n) - y_n) / tau,
// where V(dx) = v0 (tanh(dx - h) + tanh(h)) and x_{N+1} = x_1 + L.

#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace eqfree::micro {

struct ModelParams {
  double tau = 1.0 / 1.7;  // driver/car inertia
  double v0 = 0.91;        // velocity scale
  double h = 1.2;          // inflection point of V (safety distance)
  double L = 60.0;         // road length
  int N = 60;              // number of cars
  double mu = 0.1;         // amplitude of the sinusoidal initial perturbation

  /// Throws std::invalid_argument naming the first violated constraint.
  void validate() const;
};

/// Positions (unwrapped, monotone within a lap) and velocities of the cars.
struct MicroState {
  std::vector<double> x;
  std::vector<double> y;

  [[nodiscard]] std::size_t size() const { return x.size(); }
};

struct IntegratorSettings {
  double abs_tol = 1e-8;
  double rel_tol = 1e-8;
  double initial_step = 0.01;
  double max_step = 10.0;
  long max_steps = 50'000'000;

  void validate() const;
};

struct IntegrationStats {
  long accepted = 0;
  long rejected = 0;
  long rhs_evaluations = 0;
  // set if some headway became <= 0 at an accepted step (cars overtaking)
  bool nonpositive_headway = false;
};

class IntegrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Optimal velocity V(dx). Defined for all real headways.
double ov_velocity(double dx, const ModelParams& params);

/// dV/d(dx).
double ov_velocity_slope(double dx, const ModelParams& params);

/// Headways dx_n = x_{n+1} - x_n with the last one wrapping through x_1 + L.
std::vector<double> headways(const MicroState& state, const ModelParams& params);

/// Time derivative of the state. Throws std::invalid_argument on a size mismatch.
MicroState rhs(const MicroState& state, const ModelParams& params);

MicroState uniform_flow_state(const ModelParams& params);

/// Uniform flow with positions displaced by mu * sin(2 pi n / N).
MicroState perturbed_state(const ModelParams& params);

/// Integrates the model with an embedded Dormand-Prince 5(4) pair and returns
/// the states at each of the requested times (non-decreasing, >= 0). The last
/// step before each checkpoint is shortened to land on it exactly.
std::vector<MicroState> integrate_checkpoints(const MicroState& state,
                                              const ModelParams& params,
                                              std::span<const double> times,
                                              const IntegratorSettings& settings,
                                              IntegrationStats* stats = nullptr);

MicroState integrate(const MicroState& state, const ModelParams& params, double t,
                     const IntegratorSettings& settings,
                     IntegrationStats* stats = nullptr);

}  // namespace eqfree::micro
