#include "eqfree/micro_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace eqfree::micro {

void ModelParams::validate() const {
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
  if (!(v0 > 0.0)) throw std::invalid_argument("v0 must be positive");
  if (!(L > 0.0)) throw std::invalid_argument("L must be positive");
  if (N < 2) throw std::invalid_argument("N must be at least 2");
  if (!(mu >= 0.0)) throw std::invalid_argument("mu must be non-negative");
  if (!std::isfinite(h)) throw std::invalid_argument("h must be finite");
}

void IntegratorSettings::validate() const {
  if (!(abs_tol > 0.0) || !(rel_tol > 0.0))
    throw std::invalid_argument("integrator tolerances must be positive");
  if (!(initial_step > 0.0) || !(max_step > 0.0))
    throw std::invalid_argument("integrator step bounds must be positive");
  if (max_steps <= 0) throw std::invalid_argument("max_steps must be positive");
}

double ov_velocity(double dx, const ModelParams& params) {
  return params.v0 * (std::tanh(dx - params.h) + std::tanh(params.h));
}

double ov_velocity_slope(double dx, const ModelParams& params) {
  const double t = std::tanh(dx - params.h);
  return params.v0 * (1.0 - t * t);
}

std::vector<double> headways(const MicroState& state, const ModelParams& params) {
  const std::size_t n = state.x.size();
  std::vector<double> dx(n);
  for (std::size_t i = 0; i + 1 < n; ++i) dx[i] = state.x[i + 1] - state.x[i];
  if (n > 0) dx[n - 1] = state.x[0] + params.L - state.x[n - 1];
  return dx;
}

namespace {

void check_size(const MicroState& state, const ModelParams& params) {
  const auto n = static_cast<std::size_t>(params.N);
  if (state.x.size() != n || state.y.size() != n)
    throw std::invalid_argument("state has " + std::to_string(state.x.size()) +
                                " positions and " + std::to_string(state.y.size()) +
                                " velocities, expected N = " + std::to_string(params.N));
}

// Packed layout u = (x_1..x_N, y_1..y_N).
void packed_rhs(const double* u, double* du, int n, const ModelParams& p, double inv_tau,
                double tanh_h) {
  const double* x = u;
  const double* y = u + n;
  for (int i = 0; i < n; ++i) du[i] = y[i];
  for (int i = 0; i + 1 < n; ++i) {
    const double v = p.v0 * (std::tanh(x[i + 1] - x[i] - p.h) + tanh_h);
    du[n + i] = inv_tau * (v - y[i]);
  }
  const double v_last = p.v0 * (std::tanh(x[0] + p.L - x[n - 1] - p.h) + tanh_h);
  du[2 * n - 1] = inv_tau * (v_last - y[n - 1]);
}

// Dormand-Prince 5(4) tableau.
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                 a75 = -2187.0 / 6784, a76 = 11.0 / 84;
// difference between the 5th and embedded 4th order weights
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

}  // namespace

MicroState rhs(const MicroState& state, const ModelParams& params) {
  check_size(state, params);
  const int n = params.N;
  std::vector<double> u(2 * n), du(2 * n);
  std::copy(state.x.begin(), state.x.end(), u.begin());
  std::copy(state.y.begin(), state.y.end(), u.begin() + n);
  packed_rhs(u.data(), du.data(), n, params, 1.0 / params.tau, std::tanh(params.h));
  MicroState out;
  out.x.assign(du.begin(), du.begin() + n);
  out.y.assign(du.begin() + n, du.end());
  return out;
}

MicroState uniform_flow_state(const ModelParams& params) {
  const int n = params.N;
  const double spacing = params.L / n;
  MicroState s;
  s.x.resize(n);
  for (int i = 0; i < n; ++i) s.x[i] = i * spacing;
  s.y.assign(n, ov_velocity(spacing, params));
  return s;
}

MicroState perturbed_state(const ModelParams& params) {
  MicroState s = uniform_flow_state(params);
  const int n = params.N;
  for (int i = 0; i < n; ++i)
    s.x[i] += params.mu * std::sin(2.0 * std::numbers::pi * (i + 1) / n);
  return s;
}

std::vector<MicroState> integrate_checkpoints(const MicroState& state,
                                              const ModelParams& params,
                                              std::span<const double> times,
                                              const IntegratorSettings& settings,
                                              IntegrationStats* stats) {
  check_size(state, params);
  settings.validate();
  const int n = params.N;
  const int dim = 2 * n;
  const double inv_tau = 1.0 / params.tau;
  const double tanh_h = std::tanh(params.h);

  std::vector<double> u(dim), unew(dim), tmp(dim);
  std::vector<double> k1(dim), k2(dim), k3(dim), k4(dim), k5(dim), k6(dim), k7(dim);
  std::copy(state.x.begin(), state.x.end(), u.begin());
  std::copy(state.y.begin(), state.y.end(), u.begin() + n);

  IntegrationStats local;
  auto f = [&](const double* in, double* out) {
    packed_rhs(in, out, n, params, inv_tau, tanh_h);
    ++local.rhs_evaluations;
  };

  std::vector<MicroState> out;
  out.reserve(times.size());
  double t = 0.0;
  double step = settings.initial_step;
  bool fsal_valid = false;
  constexpr double safety = 0.9, fac_min = 0.2, fac_max = 10.0;

  auto record = [&]() {
    MicroState s;
    s.x.assign(u.begin(), u.begin() + n);
    s.y.assign(u.begin() + n, u.end());
    out.push_back(std::move(s));
  };

  for (double target : times) {
    if (!(target >= t))
      throw std::invalid_argument("checkpoint times must be non-negative and non-decreasing");
    while (t < target) {
      if (local.accepted + local.rejected >= settings.max_steps)
        throw IntegrationError("integrator exceeded max_steps = " +
                               std::to_string(settings.max_steps));
      step = std::min(step, settings.max_step);
      bool clamped = false;
      double hstep = step;
      if (t + hstep >= target) {
        hstep = target - t;
        clamped = true;
      }
      if (hstep <= 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t)) &&
          !clamped)
        throw IntegrationError("integrator step size underflow at t = " + std::to_string(t));

      if (!fsal_valid) f(u.data(), k1.data());
      for (int i = 0; i < dim; ++i) tmp[i] = u[i] + hstep * a21 * k1[i];
      f(tmp.data(), k2.data());
      for (int i = 0; i < dim; ++i) tmp[i] = u[i] + hstep * (a31 * k1[i] + a32 * k2[i]);
      f(tmp.data(), k3.data());
      for (int i = 0; i < dim; ++i)
        tmp[i] = u[i] + hstep * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
      f(tmp.data(), k4.data());
      for (int i = 0; i < dim; ++i)
        tmp[i] = u[i] + hstep * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
      f(tmp.data(), k5.data());
      for (int i = 0; i < dim; ++i)
        tmp[i] = u[i] + hstep * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] +
                                 a65 * k5[i]);
      f(tmp.data(), k6.data());
      for (int i = 0; i < dim; ++i)
        unew[i] = u[i] + hstep * (a71 * k1[i] + a73 * k3[i] + a74 * k4[i] + a75 * k5[i] +
                                  a76 * k6[i]);
      f(unew.data(), k7.data());

      double err = 0.0;
      for (int i = 0; i < dim; ++i) {
        const double e = hstep * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] +
                                  e6 * k6[i] + e7 * k7[i]);
        const double scale =
            settings.abs_tol + settings.rel_tol * std::max(std::abs(u[i]), std::abs(unew[i]));
        err += (e / scale) * (e / scale);
      }
      err = std::sqrt(err / dim);
      if (!std::isfinite(err))
        throw IntegrationError("non-finite state in integrator at t = " + std::to_string(t));

      const double fac =
          err == 0.0 ? fac_max : std::clamp(safety * std::pow(err, -0.2), fac_min, fac_max);
      if (err <= 1.0) {
        t = clamped ? target : t + hstep;
        u.swap(unew);
        k1.swap(k7);
        fsal_valid = true;
        ++local.accepted;
        if (!local.nonpositive_headway) {
          for (int i = 0; i + 1 < n; ++i)
            if (u[i + 1] - u[i] <= 0.0) local.nonpositive_headway = true;
          if (u[0] + params.L - u[n - 1] <= 0.0) local.nonpositive_headway = true;
        }
        // a step clamped to a checkpoint keeps the unclamped proposal
        if (!clamped) step = hstep * fac;
        else step = std::max(step, hstep * fac);
      } else {
        step = hstep * std::min(1.0, fac);
        fsal_valid = true;  // k1 still belongs to u
        ++local.rejected;
      }
    }
    record();
  }
  if (stats) {
    stats->accepted += local.accepted;
    stats->rejected += local.rejected;
    stats->rhs_evaluations += local.rhs_evaluations;
    stats->nonpositive_headway = stats->nonpositive_headway || local.nonpositive_headway;
  }
  return out;
}

MicroState integrate(const MicroState& state, const ModelParams& params, double t,
                     const IntegratorSettings& settings, IntegrationStats* stats) {
  if (!(t >= 0.0)) throw std::invalid_argument("integration time must be non-negative");
  const double times[] = {t};
  return std::move(integrate_checkpoints(state, params, times, settings, stats).front());
}

}  // namespace eqfree::micro
