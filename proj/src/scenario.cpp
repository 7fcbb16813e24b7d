#include "pmsm/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <utility>

#include "pmsm/errors.hpp"
#include "pmsm/kv_file.hpp"

namespace pmsm::scenario {

namespace {

// Generated from data/presets/*.ini: {name, text} pairs.
const std::vector<std::pair<std::string, std::string>> kPresets = {
#include "presets.inc"
};

template <class E>
E pick(const std::string& s, std::initializer_list<std::pair<const char*, E>> table, const char* what) {
  std::string names;
  for (const auto& [name, value] : table) {
    if (s == name) return value;
    names += names.empty() ? name : std::string(", ") + name;
  }
  throw ValidationError(std::string("unknown ") + what + " '" + s + "' (" + names + ")");
}

bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ValidationError("'" + key + "': expected true or false, got '" + s + "'");
}

// Consumes keys from one section, rejecting leftovers.
class Reader {
 public:
  Reader(const kv::Section& section, std::string where) : values_(section.values), where_(std::move(where)) {}

  std::optional<std::string> take(const std::string& key) {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    std::string v = it->second;
    values_.erase(it);
    return v;
  }
  void number(const std::string& key, double& out) {
    if (auto v = take(key)) out = kv::parse_double(*v, where_ + "." + key);
  }
  void number(const std::string& key, std::optional<double>& out) {
    if (auto v = take(key)) out = kv::parse_double(*v, where_ + "." + key);
  }
  void integer(const std::string& key, long long& out) {
    if (auto v = take(key)) out = kv::parse_int(*v, where_ + "." + key);
  }
  void finish() const {
    if (!values_.empty()) throw ValidationError("[" + where_ + "]: unknown key '" + values_.begin()->first + "'");
  }

 private:
  std::map<std::string, std::string> values_;
  std::string where_;
};

std::string fmt(double v) { return kv::format_double(v); }

}  // namespace

std::string to_string(ControlMode m) { return m == ControlMode::torque ? "torque" : "speed"; }
ControlMode control_mode_from_string(const std::string& s) {
  return pick<ControlMode>(s, {{"torque", ControlMode::torque}, {"speed", ControlMode::speed}}, "control mode");
}
std::string to_string(SpeedMode m) { return m == SpeedMode::prescribed ? "prescribed" : "dynamic"; }
SpeedMode speed_mode_from_string(const std::string& s) {
  return pick<SpeedMode>(s, {{"prescribed", SpeedMode::prescribed}, {"dynamic", SpeedMode::dynamic}},
                         "speed mode");
}
std::string to_string(IntegrationMethod m) {
  return m == IntegrationMethod::trapezoidal ? "trapezoidal" : "explicit_euler";
}
IntegrationMethod integration_method_from_string(const std::string& s) {
  return pick<IntegrationMethod>(
      s, {{"trapezoidal", IntegrationMethod::trapezoidal}, {"explicit_euler", IntegrationMethod::explicit_euler}},
      "integration method");
}

void Scenario::validate() const {
  machine.params.validate();
  if (!(run.duration > 0.0) || !std::isfinite(run.duration)) throw ValidationError("run: duration must be > 0");
  if (!(run.dt > 0.0) || !std::isfinite(run.dt)) throw ValidationError("run: dt must be > 0");
  if (run.dt > run.duration) throw ValidationError("run: dt exceeds duration");
  if (run.log_decimation < 1) throw ValidationError("run: log_decimation must be >= 1");
  if (!(run.band > 0.0)) throw ValidationError("run: band must be > 0");
  if (!(plant.noise_sigma >= 0.0) || !std::isfinite(plant.noise_sigma)) {
    throw ValidationError("plant: noise_sigma_pu must be >= 0");
  }
  if (!(plant.inertia_h > 0.0)) throw ValidationError("plant: inertia_H_s must be > 0");
  if (plant.substeps < 1) throw ValidationError("plant: substeps must be >= 1");
  if (!(control.i_max > 0.0)) throw ValidationError("control: i_max_pu must be > 0");
  if (!(control.u_max > 0.0)) throw ValidationError("control: u_max_pu must be > 0");
  if (!(control.speed_kp >= 0.0) || !(control.speed_ti > 0.0)) throw ValidationError("control: speed PI gains");
  if (control.current_kp && !(*control.current_kp > 0.0)) throw ValidationError("control: current_kp must be > 0");
  if (control.current_ti && !(*control.current_ti > 0.0)) throw ValidationError("control: current_ti_s must be > 0");
  if (control.mode == ControlMode::speed && plant.speed_mode != SpeedMode::dynamic) {
    throw ValidationError("control: speed mode needs plant speed_mode = dynamic");
  }
  for (double v : {control.tau_ref, control.speed_ref, control.load_torque}) {
    if (!std::isfinite(v)) throw ValidationError("control: non-finite reference");
  }
  estimator.gains.validate();
  if (!(estimator.box_rel > 0.0 && estimator.box_rel < 1.0)) throw ValidationError("estimator: box_rel in (0, 1)");
  rpem::ParameterBox::around({machine.params.psi_m, machine.params.r_s}, estimator.box_rel).validate();
  const auto theta0 = initial_estimate();
  if (!(theta0.psi_m > 0.0) || !(theta0.r_s > 0.0)) throw ValidationError("estimator: initial estimates must be > 0");
  validate_events(events, machine.params);
  for (const auto& e : events) {
    if (e.time > run.duration) throw ValidationError("event at t = " + fmt(e.time) + " s lies beyond the run");
  }
}

rpem::ParameterVector Scenario::initial_estimate() const noexcept {
  return {estimator.psi_m0.value_or(machine.params.psi_m), estimator.r_s0.value_or(machine.params.r_s)};
}

std::size_t Scenario::step_count() const noexcept {
  return static_cast<std::size_t>(std::llround(run.duration / run.dt));
}

bool operator==(const Scenario& a, const Scenario& b) {
  return a.machine.keys == b.machine.keys && a.machine.params == b.machine.params && a.plant == b.plant &&
         a.control == b.control && a.estimator == b.estimator && a.events == b.events && a.run == b.run;
}

void set_algorithm(Scenario& s, rpem::Algorithm a) {
  const auto old = s.estimator.gains;
  auto g = rpem::default_gains(a);
  g.gradient_mode = old.gradient_mode;
  g.sga_hessian = old.sga_hessian;
  g.n_lim1 = old.n_lim1;
  g.n_lim2 = old.n_lim2;
  g.r_floor = old.r_floor;
  g.det_r_floor = old.det_r_floor;
  g.i_floor = old.i_floor;
  g.pinv_tol = old.pinv_tol;
  g.hessian_init_scale = old.hessian_init_scale;
  g.reseed_after_s = old.reseed_after_s;
  s.estimator.gains = g;
}

Scenario parse(const std::string& text) {
  const kv::Document doc = kv::parse(text);
  Scenario s;
  s.machine = reference_machine();

  std::set<std::string> seen;
  std::vector<std::pair<long long, StepEvent>> events;
  const kv::Section* estimator_section = nullptr;

  for (const auto& sec : doc.sections) {
    if (sec.name.empty()) {
      if (!sec.values.empty()) throw ValidationError("scenario: keys outside a section");
      continue;
    }
    if (!seen.insert(sec.name).second) throw ValidationError("scenario: duplicate section [" + sec.name + "]");

    if (sec.name == "machine") {
      s.machine = machine_from_keys(sec.values);
    } else if (sec.name == "run") {
      Reader r(sec, "run");
      if (auto v = r.take("name")) s.run.name = *v;
      r.number("duration_s", s.run.duration);
      r.number("dt_s", s.run.dt);
      long long seed = static_cast<long long>(s.run.seed);
      r.integer("seed", seed);
      if (seed < 0) throw ValidationError("run.seed must be >= 0");
      s.run.seed = static_cast<std::uint64_t>(seed);
      long long dec = s.run.log_decimation;
      r.integer("log_decimation", dec);
      if (dec < 1 || dec > 1'000'000'000) throw ValidationError("run.log_decimation out of range");
      s.run.log_decimation = static_cast<int>(dec);
      r.number("band", s.run.band);
      r.finish();
    } else if (sec.name == "plant") {
      Reader r(sec, "plant");
      r.number("noise_sigma_pu", s.plant.noise_sigma);
      if (auto v = r.take("speed_mode")) s.plant.speed_mode = speed_mode_from_string(*v);
      r.number("inertia_H_s", s.plant.inertia_h);
      if (auto v = r.take("integration")) s.plant.method = integration_method_from_string(*v);
      long long sub = s.plant.substeps;
      r.integer("substeps", sub);
      if (sub < 1 || sub > 100000) throw ValidationError("plant.substeps out of range");
      s.plant.substeps = static_cast<int>(sub);
      r.finish();
    } else if (sec.name == "control") {
      Reader r(sec, "control");
      if (auto v = r.take("mode")) s.control.mode = control_mode_from_string(*v);
      r.number("tau_ref_pu", s.control.tau_ref);
      r.number("speed_ref_pu", s.control.speed_ref);
      r.number("load_torque_pu", s.control.load_torque);
      r.number("i_max_pu", s.control.i_max);
      r.number("u_max_pu", s.control.u_max);
      r.number("speed_kp", s.control.speed_kp);
      r.number("speed_ti_s", s.control.speed_ti);
      r.number("current_kp", s.control.current_kp);
      r.number("current_ti_s", s.control.current_ti);
      r.finish();
    } else if (sec.name == "estimator") {
      estimator_section = &sec;  // needs the algorithm first, handled below
    } else if (sec.name.rfind("event:", 0) == 0) {
      const long long id = kv::parse_int(sec.name.substr(6), "event section number");
      Reader r(sec, sec.name);
      StepEvent e;
      auto time = r.take("time_s");
      auto target = r.take("target");
      if (!time || !target) throw ValidationError("[" + sec.name + "]: needs time_s and target");
      e.time = kv::parse_double(*time, sec.name + ".time_s");
      e.target = event_target_from_string(*target);
      auto factor = r.take("factor");
      auto value = r.take("value");
      if (factor.has_value() == value.has_value()) {
        throw ValidationError("[" + sec.name + "]: give exactly one of factor or value");
      }
      e.kind = factor ? EventKind::factor : EventKind::value;
      e.amount = kv::parse_double(factor ? *factor : *value, sec.name + (factor ? ".factor" : ".value"));
      r.finish();
      events.emplace_back(id, e);
    } else {
      throw ValidationError("scenario: unknown section [" + sec.name + "]");
    }
  }

  if (estimator_section) {
    Reader r(*estimator_section, "estimator");
    rpem::Algorithm alg = rpem::Algorithm::sga;
    if (auto v = r.take("algorithm")) alg = rpem::algorithm_from_string(*v);
    auto& g = s.estimator.gains;
    g = rpem::default_gains(alg);
    r.number("gamma_l_psi_m", g.gamma_l[rpem::kPsiRow]);
    r.number("gamma_l_r_s", g.gamma_l[rpem::kRsRow]);
    r.number("gamma_r_psi_m", g.gamma_r[rpem::kPsiRow]);
    r.number("gamma_r_r_s", g.gamma_r[rpem::kRsRow]);
    if (auto v = r.take("gradient_psi_m")) g.gradient_mode[rpem::kPsiRow] = rpem::gradient_mode_from_string(*v);
    if (auto v = r.take("gradient_r_s")) g.gradient_mode[rpem::kRsRow] = rpem::gradient_mode_from_string(*v);
    if (auto v = r.take("sga_hessian")) g.sga_hessian = rpem::sga_hessian_from_string(*v);
    r.number("n_lim1_pu", g.n_lim1);
    r.number("n_lim2_pu", g.n_lim2);
    r.number("r_floor", g.r_floor);
    r.number("det_r_floor", g.det_r_floor);
    r.number("i_floor_pu", g.i_floor);
    r.number("pinv_tol", g.pinv_tol);
    r.number("hessian_init_scale", g.hessian_init_scale);
    r.number("reseed_after_s", g.reseed_after_s);
    r.number("box_rel", s.estimator.box_rel);
    r.number("psi_m0_pu", s.estimator.psi_m0);
    r.number("r_s0_pu", s.estimator.r_s0);
    if (auto v = r.take("adapt")) s.estimator.adapt = parse_bool(*v, "estimator.adapt");
    if (auto v = r.take("predictor")) s.estimator.predictor = integration_method_from_string(*v);
    r.finish();
  }

  std::sort(events.begin(), events.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (auto& [id, e] : events) s.events.push_back(e);

  s.validate();
  return s;
}

Scenario load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open scenario file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string serialize(const Scenario& s) {
  kv::Document doc;
  auto add = [&](const std::string& name) -> std::map<std::string, std::string>& {
    doc.sections.push_back({name, {}});
    return doc.sections.back().values;
  };

  auto& run = add("run");
  run["name"] = s.run.name;
  run["duration_s"] = fmt(s.run.duration);
  run["dt_s"] = fmt(s.run.dt);
  run["seed"] = std::to_string(s.run.seed);
  run["log_decimation"] = std::to_string(s.run.log_decimation);
  run["band"] = fmt(s.run.band);

  add("machine") = s.machine.keys;

  auto& plant = add("plant");
  plant["noise_sigma_pu"] = fmt(s.plant.noise_sigma);
  plant["speed_mode"] = to_string(s.plant.speed_mode);
  plant["inertia_H_s"] = fmt(s.plant.inertia_h);
  plant["integration"] = to_string(s.plant.method);
  plant["substeps"] = std::to_string(s.plant.substeps);

  auto& control = add("control");
  control["mode"] = to_string(s.control.mode);
  control["tau_ref_pu"] = fmt(s.control.tau_ref);
  control["speed_ref_pu"] = fmt(s.control.speed_ref);
  control["load_torque_pu"] = fmt(s.control.load_torque);
  control["i_max_pu"] = fmt(s.control.i_max);
  control["u_max_pu"] = fmt(s.control.u_max);
  control["speed_kp"] = fmt(s.control.speed_kp);
  control["speed_ti_s"] = fmt(s.control.speed_ti);
  if (s.control.current_kp) control["current_kp"] = fmt(*s.control.current_kp);
  if (s.control.current_ti) control["current_ti_s"] = fmt(*s.control.current_ti);

  auto& est = add("estimator");
  const auto& g = s.estimator.gains;
  est["algorithm"] = rpem::to_string(g.algorithm);
  est["gamma_l_psi_m"] = fmt(g.gamma_l[rpem::kPsiRow]);
  est["gamma_l_r_s"] = fmt(g.gamma_l[rpem::kRsRow]);
  est["gamma_r_psi_m"] = fmt(g.gamma_r[rpem::kPsiRow]);
  est["gamma_r_r_s"] = fmt(g.gamma_r[rpem::kRsRow]);
  est["gradient_psi_m"] = rpem::to_string(g.gradient_mode[rpem::kPsiRow]);
  est["gradient_r_s"] = rpem::to_string(g.gradient_mode[rpem::kRsRow]);
  est["sga_hessian"] = rpem::to_string(g.sga_hessian);
  est["n_lim1_pu"] = fmt(g.n_lim1);
  est["n_lim2_pu"] = fmt(g.n_lim2);
  est["r_floor"] = fmt(g.r_floor);
  est["det_r_floor"] = fmt(g.det_r_floor);
  est["i_floor_pu"] = fmt(g.i_floor);
  est["pinv_tol"] = fmt(g.pinv_tol);
  est["hessian_init_scale"] = fmt(g.hessian_init_scale);
  est["reseed_after_s"] = fmt(g.reseed_after_s);
  est["box_rel"] = fmt(s.estimator.box_rel);
  if (s.estimator.psi_m0) est["psi_m0_pu"] = fmt(*s.estimator.psi_m0);
  if (s.estimator.r_s0) est["r_s0_pu"] = fmt(*s.estimator.r_s0);
  est["adapt"] = s.estimator.adapt ? "true" : "false";
  est["predictor"] = to_string(s.estimator.predictor);

  for (std::size_t k = 0; k < s.events.size(); ++k) {
    const auto& e = s.events[k];
    auto& ev = add("event:" + std::to_string(k + 1));
    ev["time_s"] = fmt(e.time);
    ev["target"] = to_string(e.target);
    ev[e.kind == EventKind::factor ? "factor" : "value"] = fmt(e.amount);
  }
  return kv::write(doc);
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& [name, text] : kPresets) names.push_back(name);
  return names;
}

bool is_preset(const std::string& name) {
  return std::any_of(kPresets.begin(), kPresets.end(), [&](const auto& p) { return p.first == name; });
}

const std::string& preset_text(const std::string& name) {
  for (const auto& [n, text] : kPresets) {
    if (n == name) return text;
  }
  throw ValidationError("unknown preset '" + name + "'");
}

Scenario preset(const std::string& name) { return parse(preset_text(name)); }

Scenario resolve(const std::string& name_or_path) {
  return is_preset(name_or_path) ? preset(name_or_path) : load(name_or_path);
}

}  // namespace pmsm::scenario
