#include "pmsm/pu_frames.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "pmsm/errors.hpp"
#include "pmsm/kv_file.hpp"

namespace pmsm {

BaseQuantities make_base(double rated_voltage_ll, double rated_current, double rated_frequency, int pole_pairs) {
  if (!(rated_voltage_ll > 0.0) || !(rated_current > 0.0) || !(rated_frequency > 0.0) || pole_pairs <= 0) {
    throw ValidationError("base quantities: rated voltage, current, frequency and pole pairs must be positive");
  }
  BaseQuantities b;
  b.u_base = std::sqrt(2.0 / 3.0) * rated_voltage_ll;
  b.i_base = std::sqrt(2.0) * rated_current;
  b.z_base = b.u_base / b.i_base;
  b.omega_n = 2.0 * kPi * rated_frequency;
  b.psi_base = b.u_base / b.omega_n;
  b.pole_pairs = pole_pairs;
  // 3/2 * u_base * i_base over mechanical base speed.
  b.torque_base = 1.5 * b.u_base * b.i_base * pole_pairs / b.omega_n;
  return b;
}

void MachineParams::validate() const {
  if (!std::isfinite(x_d) || !std::isfinite(x_q) || !std::isfinite(r_s) || !std::isfinite(psi_m)) {
    throw ValidationError("machine parameters must be finite");
  }
  if (!(x_d > 0.0) || !(x_q > 0.0)) throw ValidationError("machine parameters: x_d and x_q must be positive");
  if (r_s < 0.0) throw ValidationError("machine parameters: r_s must be non-negative");
  if (psi_m < 0.0) throw ValidationError("machine parameters: psi_m must be non-negative");
  if (x_q < x_d) throw ValidationError("machine parameters: saliency convention requires x_q >= x_d");
}

MachineParams to_per_unit(const SiMachineData& si, const BaseQuantities& base) {
  if (si.r_s_ohm < 0.0 || si.l_d_h < 0.0 || si.l_q_h < 0.0 || si.psi_m_wb < 0.0) {
    throw ValidationError("machine data: resistance, inductances and flux linkage must be non-negative");
  }
  MachineParams p;
  p.r_s = si.r_s_ohm / base.z_base;
  p.x_d = base.omega_n * si.l_d_h / base.z_base;
  p.x_q = base.omega_n * si.l_q_h / base.z_base;
  p.psi_m = si.psi_m_wb / base.psi_base;
  return p;
}

SiMachineData to_si(const MachineParams& pu, const BaseQuantities& base) {
  return {pu.r_s * base.z_base, pu.x_d * base.z_base / base.omega_n, pu.x_q * base.z_base / base.omega_n,
          pu.psi_m * base.psi_base};
}

Dq park(const AlphaBeta& v, double theta) noexcept {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return {c * v.alpha + s * v.beta, -s * v.alpha + c * v.beta};
}

AlphaBeta inverse_park(const Dq& v, double theta) noexcept {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return {c * v.d - s * v.q, s * v.d + c * v.q};
}

double wrap_angle(double theta) noexcept {
  double w = std::fmod(theta, 2.0 * kPi);
  if (w < 0.0) w += 2.0 * kPi;
  if (w >= 2.0 * kPi) w = 0.0;
  return w;
}

namespace {

const std::set<std::string> kMachineKeys = {
    "rated_voltage_ll_V", "rated_current_A", "pole_pairs", "rated_speed_rpm", "rated_frequency_Hz",
    "Rs_ohm",             "Ld_H",            "Lq_H",       "psi_m_Wb",        "x_d_pu",
    "x_q_pu",             "r_s_pu",          "psi_m_pu",   "transform"};

}  // namespace

MachineConfig machine_from_keys(const std::map<std::string, std::string>& keys) {
  for (const auto& [k, v] : keys) {
    if (!kMachineKeys.count(k)) throw ValidationError("machine config: unknown key '" + k + "'");
  }
  if (auto it = keys.find("transform"); it != keys.end() && it->second != "amplitude_invariant") {
    throw ValidationError("machine config: only transform = amplitude_invariant is supported");
  }
  if (keys.count("rated_speed_rpm") && keys.count("rated_frequency_Hz")) {
    throw ValidationError("machine config: give rated_speed_rpm or rated_frequency_Hz, not both");
  }

  auto get = [&](const char* key, double fallback) {
    auto it = keys.find(key);
    return it == keys.end() ? fallback : kv::parse_double(it->second, key);
  };

  const double u_ll = get("rated_voltage_ll_V", 400.0);
  const double i_n = get("rated_current_A", 4.93);
  const double p_d = get("pole_pairs", 3.0);
  if (p_d != std::floor(p_d)) throw ValidationError("machine config: pole_pairs must be an integer");
  const int p = static_cast<int>(p_d);
  double f = 0.0;
  if (keys.count("rated_frequency_Hz")) {
    f = get("rated_frequency_Hz", 50.0);
  } else {
    f = p * get("rated_speed_rpm", 1000.0) / 60.0;
  }

  MachineConfig cfg;
  cfg.base = make_base(u_ll, i_n, f, p);
  SiMachineData si{get("Rs_ohm", 2.25), get("Ld_H", 0.0953), get("Lq_H", 0.206), get("psi_m_Wb", 1.14)};
  cfg.params = to_per_unit(si, cfg.base);
  cfg.params.x_d = get("x_d_pu", cfg.params.x_d);
  cfg.params.x_q = get("x_q_pu", cfg.params.x_q);
  cfg.params.r_s = get("r_s_pu", cfg.params.r_s);
  // The offline-identified flux linkage is the default reference, not the nameplate Wb value.
  cfg.params.psi_m = keys.count("psi_m_Wb") ? cfg.params.psi_m : 0.895;
  cfg.params.psi_m = get("psi_m_pu", cfg.params.psi_m);
  cfg.params.validate();
  cfg.keys = keys;
  return cfg;
}

MachineConfig load_machine_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open machine file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const kv::Document doc = kv::parse(ss.str());
  if (doc.sections.size() > 1 || (doc.sections.size() == 1 && doc.sections.front().name != "machine" &&
                                  !doc.sections.front().name.empty())) {
    throw ValidationError("machine file: expected only flat keys or a single [machine] section");
  }
  return machine_from_keys(doc.sections.empty() ? std::map<std::string, std::string>{}
                                                : doc.sections.front().values);
}

MachineConfig reference_machine() { return machine_from_keys({}); }

}  // namespace pmsm
