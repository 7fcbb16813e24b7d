#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "pmsm/foc.hpp"
#include "pmsm/plant.hpp"
#include "pmsm/rpem.hpp"
#include "pmsm/scenario.hpp"

namespace pmsm::runner {

struct ConvergenceReport {
  bool converged{false};
  std::optional<double> convergence_time;  // s after the reference time, absent if never settled
  double steady_state_error{0.0};           // mean relative error over the last 10% of samples
  double overshoot{0.0};                     // max excursion past the reference / step size
  double band{0.01};
};

// `reference` is the true final value, `t0` the instant the step happened (times before it are
// ignored) and `initial` the estimate at that instant, which sets the step size for overshoot.
ConvergenceReport convergence_metrics(std::span<const double> time, std::span<const double> estimate,
                                      double reference, double band, double t0 = 0.0);

// Per-step record (not decimated).
struct Sample {
  double t{0.0};
  double n{0.0};
  Dq i_meas;
  Dq u_interval;       // voltage the estimator used for the interval ending at t
  double n_interval{0.0};
  rpem::EstimatorOutput est;
  rpem::ParameterVector theta_hat;
  rpem::ParameterVector theta_true;
};

void write_log_header(std::ostream& out);
void write_log_row(std::ostream& out, const Sample& s);

// One closed loop: events, measurement, estimator, MTPA + current control, plant, mechanics.
class Simulation {
 public:
  explicit Simulation(const scenario::Scenario& s);

  bool done() const noexcept { return step_ >= total_steps_; }
  // Advances one control period. Throws NumericalDivergence when a state turns non-finite.
  const Sample& step();

  double time() const noexcept { return static_cast<double>(step_) * dt_; }
  std::size_t step_index() const noexcept { return step_; }
  std::size_t total_steps() const noexcept { return total_steps_; }
  const scenario::Scenario& scenario() const noexcept { return scenario_; }
  const rpem::Estimator& estimator() const noexcept { return estimator_; }
  const Sample& last() const noexcept { return last_; }
  const Setpoints& setpoints() const noexcept { return setpoints_; }
  // Mutable so tests can perturb the plant.
  PlantState& plant() noexcept { return plant_; }

 private:
  void check_finite() const;

  scenario::Scenario scenario_;
  double dt_;
  std::size_t total_steps_;
  std::size_t step_{0};
  double omega_n_;
  PlantState plant_;
  MechanicalParams mech_;
  Setpoints setpoints_;
  std::size_t next_event_{0};
  CurrentSensor sensor_;
  rpem::Estimator estimator_;
  MachineParams model_;  // estimated parameters seen by the controller
  CurrentLoop loop_;
  PiState speed_pi_;
  Dq u_applied_;     // voltage acting over the current interval
  double n_applied_;  // speed at the start of the current interval
  Sample last_;
};

struct Trajectory {
  std::vector<double> t;
  std::vector<double> psi_m_hat;
  std::vector<double> r_s_hat;
  std::vector<double> psi_m_true;
  std::vector<double> r_s_true;
  std::vector<double> n;
};

struct RunResult {
  Trajectory trajectory;
  ConvergenceReport psi_m;
  ConvergenceReport r_s;
  std::size_t steps{0};
  std::size_t pseudoinverse_steps{0};
  std::size_t estimator_steps{0};
};

// Instant of the last event that changes psi_m or r_s (0 when there is none).
double parameter_step_time(const scenario::Scenario& s, EventTarget target);

// Runs to completion. The log, when given, receives the header and every log_decimation-th
// sample; metrics use every sample.
RunResult run(const scenario::Scenario& s, std::ostream* log = nullptr);

}  // namespace pmsm::runner
