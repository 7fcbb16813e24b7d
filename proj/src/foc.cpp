#include "pmsm/foc.hpp"

#include <algorithm>
#include <cmath>

#include "pmsm/errors.hpp"

namespace pmsm {

PiStep pi_step(double ref, double meas, const PiState& state, double dt) noexcept {
  const double e = ref - meas;
  PiStep out{0.0, state};
  const double raw = state.kp * e + state.integrator;
  const double lim = state.output_limit;
  out.output = std::clamp(raw, -lim, lim);
  const bool saturated = out.output != raw;
  const bool pushing_out = (raw > lim && e > 0.0) || (raw < -lim && e < 0.0);
  if (!(saturated && pushing_out)) {
    out.state.integrator += state.kp * e * dt / state.ti;
    out.state.integrator = std::clamp(out.state.integrator, -lim, lim);
  }
  return out;
}

Dq mtpa_reference(double tau_ref, const MachineParams& est) {
  if (!(est.psi_m > 0.0)) throw ValidationError("MTPA reference needs psi_m_hat > 0");
  const double dx = est.x_q - est.x_d;
  if (std::abs(dx) < 1e-6) return {0.0, tau_ref / est.psi_m};
  const double third = est.psi_m / 3.0;
  const double id = (third - std::cbrt(third * third * third + dx * dx * tau_ref * tau_ref / (3.0 * est.psi_m))) / dx;
  const double den = est.psi_m - dx * id;
  if (std::abs(den) < 1e-9) throw ValidationError("MTPA reference infeasible: q-axis denominator vanishes");
  return {id, tau_ref / den};
}

Dq limit_current(const Dq& i_ref, double i_max) noexcept {
  const double mag = i_ref.norm();
  if (mag <= i_max || mag == 0.0) return i_ref;
  return (i_max / mag) * i_ref;
}

Dq voltage_limit(const Dq& u, double u_max) noexcept {
  const double mag = u.norm();
  if (mag <= u_max) return u;
  return (u_max / mag) * u;
}

CurrentLoop tune_current_loop(const MachineParams& est, double omega_n, double t_samp, double u_max) {
  if (!(est.r_s > 0.0)) throw ValidationError("current loop tuning needs r_s > 0");
  const double t_eq = 2.0 * t_samp;
  CurrentLoop loop;
  loop.d = {est.x_d / (omega_n * 2.0 * t_eq), est.x_d / (est.r_s * omega_n), 0.0, u_max};
  loop.q = {est.x_q / (omega_n * 2.0 * t_eq), est.x_q / (est.r_s * omega_n), 0.0, u_max};
  return loop;
}

namespace {

Dq feedforward(const References& refs, double n, const MachineParams& est) noexcept {
  return {-n * est.x_q * refs.iq_ref, n * est.x_d * refs.id_ref + n * est.psi_m};
}

}  // namespace

Dq current_controller(const References& refs, const Dq& i_meas, double n, const MachineParams& est,
                      CurrentLoop& loop, double dt, double u_max) noexcept {
  const PiStep sd = pi_step(refs.id_ref, i_meas.d, loop.d, dt);
  const PiStep sq = pi_step(refs.iq_ref, i_meas.q, loop.q, dt);
  const Dq raw = Dq{sd.output, sq.output} + feedforward(refs, n, est);
  const Dq u = voltage_limit(raw, u_max);
  if (u == raw) {
    loop.d = sd.state;
    loop.q = sq.state;
  }
  // Otherwise the integrators hold their value while the vector limit is active.
  return u;
}

void settle_current_loop(CurrentLoop& loop, const Dq& u_ss, const Dq& i_ref, double n,
                         const MachineParams& est) noexcept {
  References refs;
  refs.id_ref = i_ref.d;
  refs.iq_ref = i_ref.q;
  const Dq ff = feedforward(refs, n, est);
  loop.d.integrator = u_ss.d - ff.d;
  loop.q.integrator = u_ss.q - ff.q;
}

double speed_controller(double n_ref, double n, PiState& state, double dt) noexcept {
  const PiStep s = pi_step(n_ref, n, state, dt);
  state = s.state;
  return s.output;
}

}  // namespace pmsm
