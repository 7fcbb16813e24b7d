#include "pmsm/runner.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "pmsm/errors.hpp"
#include "pmsm/kv_file.hpp"

namespace pmsm::runner {

ConvergenceReport convergence_metrics(std::span<const double> time, std::span<const double> estimate,
                                      double reference, double band, double t0) {
  if (time.empty() || time.size() != estimate.size()) {
    throw ValidationError("convergence_metrics: need a nonempty trajectory with matching time stamps");
  }
  if (!(band > 0.0)) throw ValidationError("convergence_metrics: band must be > 0");
  if (reference == 0.0) throw ValidationError("convergence_metrics: reference must be nonzero");

  ConvergenceReport rep;
  rep.band = band;
  const double scale = std::abs(reference);

  std::size_t first = 0;
  while (first < time.size() && time[first] < t0) ++first;
  if (first == time.size()) first = time.size() - 1;

  // Last sample outside the band; convergence is the sample after it.
  std::size_t settled_from = first;
  bool last_inside = true;
  for (std::size_t k = time.size(); k-- > first;) {
    if (std::abs(estimate[k] - reference) > band * scale) {
      settled_from = k + 1;
      last_inside = k + 1 < time.size();
      break;
    }
  }
  if (last_inside) {
    rep.converged = true;
    rep.convergence_time = std::max(0.0, time[settled_from] - t0);
  }

  const std::size_t tail = std::max<std::size_t>(1, time.size() / 10);
  double sum = 0.0;
  for (std::size_t k = time.size() - tail; k < time.size(); ++k) sum += (estimate[k] - reference) / scale;
  rep.steady_state_error = sum / static_cast<double>(tail);

  const double step = reference - estimate[first];
  if (std::abs(step) > 1e-12 * scale) {
    double worst = 0.0;
    for (std::size_t k = first; k < time.size(); ++k) {
      worst = std::max(worst, (estimate[k] - reference) * (step > 0.0 ? 1.0 : -1.0));
    }
    rep.overshoot = worst / std::abs(step);
  }
  return rep;
}

void write_log_header(std::ostream& out) {
  out << "t,n,i_d,i_q,i_hat_d,i_hat_q,eps_d,eps_q,psi_m_hat,r_s_hat,psi_m_true,r_s_true,L11,L12,L21,L22,r,detR\n";
}

void write_log_row(std::ostream& out, const Sample& s) {
  const double row[] = {s.t,
                        s.n,
                        s.i_meas.d,
                        s.i_meas.q,
                        s.est.i_hat.d,
                        s.est.i_hat.q,
                        s.est.eps.d,
                        s.est.eps.q,
                        s.theta_hat.psi_m,
                        s.theta_hat.r_s,
                        s.theta_true.psi_m,
                        s.theta_true.r_s,
                        s.est.gain.a,
                        s.est.gain.b,
                        s.est.gain.c,
                        s.est.gain.e,
                        s.est.scalar_r,
                        s.est.det_r};
  bool first = true;
  for (double v : row) {
    if (!first) out << ',';
    first = false;
    out << kv::format_double(v);
  }
  out << '\n';
}

namespace {

MachineParams with_estimate(MachineParams p, const rpem::ParameterVector& theta) {
  p.psi_m = theta.psi_m;
  p.r_s = theta.r_s;
  return p;
}

}  // namespace

Simulation::Simulation(const scenario::Scenario& s)
    : scenario_((s.validate(), s)),
      dt_(s.run.dt),
      total_steps_(s.step_count()),
      omega_n_(s.machine.base.omega_n),
      sensor_(s.plant.noise_sigma, s.run.seed),
      estimator_(s.estimator.gains, rpem::ParameterBox::around({s.machine.params.psi_m, s.machine.params.r_s},
                                                              s.estimator.box_rel),
                 s.initial_estimate(), rpem::ModelContext{s.machine.params.x_d, s.machine.params.x_q, omega_n_, dt_},
                 s.estimator.adapt) {
  const auto& c = s.control;
  plant_.params = s.machine.params;
  plant_.n = c.speed_ref;
  mech_ = {s.plant.inertia_h, c.load_torque, s.plant.speed_mode};
  setpoints_ = {c.tau_ref, c.speed_ref, c.load_torque};
  model_ = with_estimate(s.machine.params, estimator_.theta());

  // Start in the pre-step operating point with every loop settled.
  const double tau0 = c.mode == scenario::ControlMode::speed ? c.load_torque : c.tau_ref;
  const Dq i0 = limit_current(mtpa_reference(tau0, model_), c.i_max);
  plant_.i = i0;
  u_applied_ = steady_state_voltage(plant_.params, plant_.n, i0);
  n_applied_ = plant_.n;

  loop_ = tune_current_loop(model_, omega_n_, dt_, c.u_max);
  if (c.current_kp) loop_.d.kp = loop_.q.kp = *c.current_kp;
  if (c.current_ti) loop_.d.ti = loop_.q.ti = *c.current_ti;
  settle_current_loop(loop_, u_applied_, i0, plant_.n, model_);

  speed_pi_ = {c.speed_kp, c.speed_ti, tau0, torque(model_, Dq{0.0, c.i_max})};
  speed_pi_.output_limit = std::abs(speed_pi_.output_limit);

  estimator_.initialize(i0, plant_.n);
  // The first sample closes the interval before t = 0; run it so plant and predictor share it.
  for (int k = 0; k < scenario_.plant.substeps; ++k) {
    plant_ = integrate_electrical(plant_, u_applied_, dt_ / scenario_.plant.substeps, scenario_.plant.method,
                                  omega_n_);
  }
  last_.t = 0.0;
  last_.n = plant_.n;
  last_.i_meas = i0;
  last_.est.i_hat = i0;
  last_.theta_hat = estimator_.theta();
  last_.theta_true = {plant_.params.psi_m, plant_.params.r_s};
}

void Simulation::check_finite() const {
  const auto& th = estimator_.theta();
  const auto& pr = estimator_.predictor();
  const bool ok = plant_.i.finite() && std::isfinite(plant_.n) && std::isfinite(plant_.theta) &&
                  std::isfinite(th.psi_m) && std::isfinite(th.r_s) && pr.i_hat.finite() && pr.grad.finite() &&
                  u_applied_.finite();
  if (!ok) {
    const std::size_t last_valid = step_ == 0 ? 0 : step_ - 1;
    throw NumericalDivergence("non-finite state in scenario '" + scenario_.run.name + "' at step " +
                                  std::to_string(step_) + " (t = " + kv::format_double(time()) + " s)",
                              last_valid, static_cast<double>(last_valid) * dt_);
  }
}

const Sample& Simulation::step() {
  if (done()) throw ValidationError("simulation already finished");
  // Plant state may have been touched from outside since the last step.
  check_finite();

  const double t = time();
  const auto& c = scenario_.control;
  next_event_ = apply_step_events(plant_, setpoints_, scenario_.events, next_event_, t);
  mech_.load_torque = setpoints_.load_torque;
  if (scenario_.plant.speed_mode == SpeedMode::prescribed) plant_.n = setpoints_.speed_ref;

  // Sample, then let the estimator predict the interval that just ended.
  const Dq i_meas = sensor_.measure(plant_);
  const Dq u_interval = u_applied_;
  const double n_interval = n_applied_;
  const rpem::EstimatorOutput est = estimator_.step(i_meas, u_interval, n_interval);
  model_ = with_estimate(model_, estimator_.theta());

  References refs;
  refs.speed_ref = setpoints_.speed_ref;
  refs.torque_ref = c.mode == scenario::ControlMode::speed
                        ? speed_controller(setpoints_.speed_ref, plant_.n, speed_pi_, dt_)
                        : setpoints_.tau_ref;
  Dq i_ref;
  try {
    i_ref = limit_current(mtpa_reference(refs.torque_ref, model_), c.i_max);
  } catch (const ValidationError& e) {
    throw NumericalDivergence(std::string("reference calculation failed: ") + e.what(), step_ == 0 ? 0 : step_ - 1,
                              t);
  }
  refs.id_ref = i_ref.d;
  refs.iq_ref = i_ref.q;
  const Dq u_cmd = current_controller(refs, i_meas, plant_.n, model_, loop_, dt_, c.u_max);

  // The command computed now takes effect one period later.
  const double n_start = plant_.n;
  const double h = dt_ / scenario_.plant.substeps;
  for (int k = 0; k < scenario_.plant.substeps; ++k) {
    plant_ = integrate_electrical(plant_, u_applied_, h, scenario_.plant.method, omega_n_);
  }
  plant_.n = mechanical_step(plant_.n, torque(plant_), mech_.load_torque, mech_, dt_, setpoints_.speed_ref);
  u_applied_ = u_cmd;
  n_applied_ = n_start;

  ++step_;
  last_.t = t;
  last_.n = n_start;
  last_.i_meas = i_meas;
  last_.u_interval = u_interval;
  last_.n_interval = n_interval;
  last_.est = est;
  last_.theta_hat = estimator_.theta();
  last_.theta_true = {plant_.params.psi_m, plant_.params.r_s};
  check_finite();
  return last_;
}

double parameter_step_time(const scenario::Scenario& s, EventTarget target) {
  double t = 0.0;
  for (const auto& e : s.events) {
    if (e.target == target) t = e.time;
  }
  return t;
}

RunResult run(const scenario::Scenario& s, std::ostream* log) {
  Simulation sim(s);
  RunResult res;
  auto& tr = res.trajectory;
  const std::size_t n = sim.total_steps();
  for (auto* v : {&tr.t, &tr.psi_m_hat, &tr.r_s_hat, &tr.psi_m_true, &tr.r_s_true, &tr.n}) v->reserve(n);

  if (log) write_log_header(*log);
  const auto dec = static_cast<std::size_t>(s.run.log_decimation);
  while (!sim.done()) {
    const std::size_t k = sim.step_index();
    const Sample& smp = sim.step();
    if (log && k % dec == 0) write_log_row(*log, smp);
    tr.t.push_back(smp.t);
    tr.n.push_back(smp.n);
    tr.psi_m_hat.push_back(smp.theta_hat.psi_m);
    tr.r_s_hat.push_back(smp.theta_hat.r_s);
    tr.psi_m_true.push_back(smp.theta_true.psi_m);
    tr.r_s_true.push_back(smp.theta_true.r_s);
  }

  res.steps = sim.total_steps();
  res.estimator_steps = sim.estimator().steps();
  res.pseudoinverse_steps = sim.estimator().pseudoinverse_steps();
  res.psi_m = convergence_metrics(tr.t, tr.psi_m_hat, tr.psi_m_true.back(), s.run.band,
                                  parameter_step_time(s, EventTarget::psi_m));
  res.r_s = convergence_metrics(tr.t, tr.r_s_hat, tr.r_s_true.back(), s.run.band,
                                parameter_step_time(s, EventTarget::r_s));
  return res;
}

}  // namespace pmsm::runner
