#pragma once

#include "pmsm/dq.hpp"
#include "pmsm/pu_frames.hpp"

namespace pmsm {

struct PiState {
  double kp{0.0};
  double ti{1.0};  // s
  double integrator{0.0};
  double output_limit{1.0};
};

struct PiStep {
  double output{0.0};
  PiState state;
};

// output = clamp(kp e + integrator). The integrator advances by kp e dt / ti except while the
// output is clamped and e pushes further into the limit.
PiStep pi_step(double ref, double meas, const PiState& state, double dt) noexcept;

struct References {
  double torque_ref{0.0};
  double id_ref{0.0};
  double iq_ref{0.0};
  double speed_ref{0.0};
};

// Maximum torque per ampere currents for the estimated parameters. Throws ValidationError
// when psi_m_hat <= 0 or the q-axis denominator vanishes.
Dq mtpa_reference(double tau_ref, const MachineParams& estimated);

// Scales references onto the circle |i| = i_max when they exceed it.
Dq limit_current(const Dq& i_ref, double i_max) noexcept;

Dq voltage_limit(const Dq& u, double u_max) noexcept;

struct CurrentLoop {
  PiState d;
  PiState q;
};

// Modulus-optimum current-loop tuning: kp = x / (2 omega_n T_eq), ti = x / (r omega_n),
// with T_eq = 2 T_samp.
CurrentLoop tune_current_loop(const MachineParams& estimated, double omega_n, double t_samp, double u_max);

// PI per axis on (i_ref - i_meas) plus speed-voltage feedforward built from the estimated
// parameters only, then radially limited to u_max.
Dq current_controller(const References& refs, const Dq& i_meas, double n, const MachineParams& estimated,
                      CurrentLoop& loop, double dt, double u_max) noexcept;

// Integrators that reproduce u_ss exactly when i == i_ref (controller already settled).
void settle_current_loop(CurrentLoop& loop, const Dq& u_ss, const Dq& i_ref, double n,
                         const MachineParams& estimated) noexcept;

// Speed PI producing the torque reference, clamped to the state's output_limit.
double speed_controller(double n_ref, double n, PiState& state, double dt) noexcept;

}  // namespace pmsm
