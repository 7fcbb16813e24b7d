#include "pmsm/plant.hpp"

#include <cassert>
#include <cmath>

#include "pmsm/errors.hpp"

namespace pmsm {

LinearDq linear_model(double x_d, double x_q, double r_s, double psi_m, double n, const Dq& u,
                      double omega_n) noexcept {
  const double wd = omega_n / x_d;
  const double wq = omega_n / x_q;
  LinearDq m;
  m.a = {-wd * r_s, wd * n * x_q, -wq * n * x_d, -wq * r_s};
  m.b = {wd * u.d, wq * (u.q - n * psi_m)};
  return m;
}

Dq advance(const Mat2& a, const Dq& x, const Dq& b, double dt, IntegrationMethod method) noexcept {
  if (method == IntegrationMethod::explicit_euler) return x + dt * (a * x + b);
  const double h = 0.5 * dt;
  const Mat2 lhs = Mat2::identity() - h * a;
  // det(I - h A) = (1 + h wd r)(1 + h wq r) + h^2 wd wq n^2 x_d x_q > 0 for dt > 0, r >= 0.
  assert(lhs.det() > 0.0);
  const Dq rhs = x + h * (a * x) + dt * b;
  return solve(lhs, rhs);
}

Dq electrical_derivative(const PlantState& s, const Dq& u, double omega_n) noexcept {
  const auto m = linear_model(s.params.x_d, s.params.x_q, s.params.r_s, s.params.psi_m, s.n, u, omega_n);
  return m.a * s.i + m.b;
}

double torque(const MachineParams& p, const Dq& i) noexcept {
  return p.psi_m * i.q + (p.x_d - p.x_q) * i.d * i.q;
}

double torque(const PlantState& state) noexcept { return torque(state.params, state.i); }

double mechanical_step(double n, double tau_e, double tau_l, const MechanicalParams& mech, double dt,
                       double n_scheduled) noexcept {
  if (mech.speed_mode == SpeedMode::prescribed) return n_scheduled;
  return n + dt * (tau_e - tau_l) / (2.0 * mech.inertia_h);
}

PlantState integrate_electrical(const PlantState& state, const Dq& u, double dt, IntegrationMethod method,
                                double omega_n) noexcept {
  const auto& p = state.params;
  const auto m = linear_model(p.x_d, p.x_q, p.r_s, p.psi_m, state.n, u, omega_n);
  PlantState next = state;
  next.i = advance(m.a, state.i, m.b, dt, method);
  next.theta = wrap_angle(state.theta + omega_n * state.n * dt);
  return next;
}

Dq steady_state_current(const MachineParams& p, double n, const Dq& u) {
  // [r, -n x_q; n x_d, r] i = u - (0, n psi_m)
  const Mat2 m{p.r_s, -n * p.x_q, n * p.x_d, p.r_s};
  if (m.det() == 0.0) throw ValidationError("steady state undefined at r_s = 0, n = 0");
  return solve(m, {u.d, u.q - n * p.psi_m});
}

Dq steady_state_voltage(const MachineParams& p, double n, const Dq& i) noexcept {
  return {p.r_s * i.d - n * p.x_q * i.q, p.r_s * i.q + n * p.x_d * i.d + n * p.psi_m};
}

CurrentSensor::CurrentSensor(double noise_sigma, std::uint64_t seed) : sigma_(noise_sigma), rng_(seed) {
  if (!(noise_sigma >= 0.0)) throw ValidationError("noise_sigma must be non-negative");
}

Dq CurrentSensor::measure(const PlantState& state) {
  if (sigma_ == 0.0) return state.i;
  const double nd = normal_(rng_);
  const double nq = normal_(rng_);
  return {state.i.d + sigma_ * nd, state.i.q + sigma_ * nq};
}

std::string to_string(EventTarget t) {
  switch (t) {
    case EventTarget::psi_m: return "psi_m";
    case EventTarget::r_s: return "r_s";
    case EventTarget::x_d: return "x_d";
    case EventTarget::x_q: return "x_q";
    case EventTarget::load_torque: return "load_torque";
    case EventTarget::speed_ref: return "speed_ref";
    case EventTarget::tau_ref: return "tau_ref";
  }
  return "?";
}

EventTarget event_target_from_string(const std::string& s) {
  for (auto t : {EventTarget::psi_m, EventTarget::r_s, EventTarget::x_d, EventTarget::x_q,
                 EventTarget::load_torque, EventTarget::speed_ref, EventTarget::tau_ref}) {
    if (to_string(t) == s) return t;
  }
  throw ValidationError("unknown event target '" + s + "'");
}

namespace {

double& target_ref(PlantState& state, Setpoints& sp, EventTarget t) {
  switch (t) {
    case EventTarget::psi_m: return state.params.psi_m;
    case EventTarget::r_s: return state.params.r_s;
    case EventTarget::x_d: return state.params.x_d;
    case EventTarget::x_q: return state.params.x_q;
    case EventTarget::load_torque: return sp.load_torque;
    case EventTarget::speed_ref: return sp.speed_ref;
    case EventTarget::tau_ref: return sp.tau_ref;
  }
  return sp.tau_ref;
}

void apply_one(PlantState& state, Setpoints& sp, const StepEvent& e) {
  double& v = target_ref(state, sp, e.target);
  v = e.kind == EventKind::factor ? v * e.amount : e.amount;
}

}  // namespace

std::size_t apply_step_events(PlantState& state, Setpoints& setpoints, std::span<const StepEvent> events,
                              std::size_t next, double t) {
  while (next < events.size() && events[next].time <= t) {
    apply_one(state, setpoints, events[next]);
    ++next;
  }
  return next;
}

void validate_events(std::span<const StepEvent> events, const MachineParams& initial) {
  PlantState probe;
  probe.params = initial;
  Setpoints sp;
  double last = 0.0;
  for (const auto& e : events) {
    if (!(e.time >= 0.0)) throw ValidationError("event time must be >= 0");
    if (e.time < last) throw ValidationError("events must be sorted by time");
    if (!std::isfinite(e.amount)) throw ValidationError("event amount must be finite");
    last = e.time;
    apply_one(probe, sp, e);
    try {
      probe.params.validate();
    } catch (const ValidationError& err) {
      throw ValidationError("event at t=" + std::to_string(e.time) + " on " + to_string(e.target) +
                            " leaves invalid parameters: " + err.what());
    }
  }
}

}  // namespace pmsm
