#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pmsm/dq.hpp"
#include "pmsm/pu_frames.hpp"

namespace pmsm {

enum class SpeedMode { prescribed, dynamic };
enum class IntegrationMethod { explicit_euler, trapezoidal };

struct PlantState {
  Dq i;                // stator current, pu
  double n{0.0};       // electrical speed, pu
  double theta{0.0};   // electrical angle, rad in [0, 2pi)
  MachineParams params;  // true, possibly stepped, values
};

struct MechanicalParams {
  double inertia_h{0.5};  // s
  double load_torque{0.0};
  SpeedMode speed_mode{SpeedMode::prescribed};
};

// Time derivative of the current (per second) for the linear dq model at fixed speed.
Dq electrical_derivative(const PlantState& state, const Dq& u, double omega_n) noexcept;

// System matrix A and input vector b of di/dt = A i + b for a given parameter set.
// Shared with the estimator so plant and predictor discretize identically.
struct LinearDq {
  Mat2 a;
  Dq b;
};
LinearDq linear_model(double x_d, double x_q, double r_s, double psi_m, double n, const Dq& u,
                      double omega_n) noexcept;

// One step of x' = A x + b with b held over the step.
Dq advance(const Mat2& a, const Dq& x, const Dq& b, double dt, IntegrationMethod method) noexcept;

double torque(const PlantState& state) noexcept;
double torque(const MachineParams& p, const Dq& i) noexcept;

// dynamic: n + dt (tau_e - tau_l) / (2H); prescribed: returns n_scheduled.
double mechanical_step(double n, double tau_e, double tau_l, const MechanicalParams& mech, double dt,
                       double n_scheduled) noexcept;

// Advances current and angle over dt with the voltage u held constant and the speed at state.n.
PlantState integrate_electrical(const PlantState& state, const Dq& u, double dt, IntegrationMethod method,
                                double omega_n) noexcept;

// Current that makes electrical_derivative zero for constant u and n.
Dq steady_state_current(const MachineParams& p, double n, const Dq& u);
// Voltage that holds current i in steady state.
Dq steady_state_voltage(const MachineParams& p, double n, const Dq& i) noexcept;

// Current sensor with zero-mean Gaussian noise, deterministic per seed.
class CurrentSensor {
 public:
  CurrentSensor(double noise_sigma, std::uint64_t seed);

  Dq measure(const PlantState& state);
  double sigma() const noexcept { return sigma_; }

 private:
  double sigma_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

enum class EventTarget { psi_m, r_s, x_d, x_q, load_torque, speed_ref, tau_ref };
enum class EventKind { factor, value };

std::string to_string(EventTarget t);
EventTarget event_target_from_string(const std::string& s);

struct StepEvent {
  double time{0.0};
  EventTarget target{EventTarget::psi_m};
  EventKind kind{EventKind::factor};
  double amount{1.0};

  friend bool operator==(const StepEvent&, const StepEvent&) = default;
};

// Operator references that events may step.
struct Setpoints {
  double tau_ref{0.0};
  double speed_ref{0.0};
  double load_torque{0.0};
};

// Applies every event in events[next..] whose time is <= t and returns the index of the first
// unapplied one. Events must be sorted by time. The estimator is never told.
std::size_t apply_step_events(PlantState& state, Setpoints& setpoints, std::span<const StepEvent> events,
                              std::size_t next, double t);

// Throws ValidationError if events are unsorted, negative in time, or would leave the
// parameters invalid when applied in order to `initial`.
void validate_events(std::span<const StepEvent> events, const MachineParams& initial);

}  // namespace pmsm
