#pragma once

#include <map>
#include <string>

#include "pmsm/dq.hpp"

namespace pmsm {

inline constexpr double kPi = 3.14159265358979323846;

// Peak-phase base system: u_base = sqrt(2/3) * U_ll, i_base = sqrt(2) * I_n.
struct BaseQuantities {
  double u_base{0.0};       // V, peak phase
  double i_base{0.0};       // A, peak phase
  double z_base{0.0};       // ohm
  double psi_base{0.0};     // Wb
  double omega_n{0.0};      // rad/s, nominal electrical frequency
  double torque_base{0.0};  // Nm
  int pole_pairs{0};
};

BaseQuantities make_base(double rated_voltage_ll, double rated_current, double rated_frequency, int pole_pairs);

// Per-unit electrical parameters. x_q >= x_d for an interior-magnet rotor.
struct MachineParams {
  double x_d{0.0};
  double x_q{0.0};
  double r_s{0.0};
  double psi_m{0.0};

  // Throws ValidationError when an invariant is violated.
  void validate() const;
  friend bool operator==(const MachineParams&, const MachineParams&) = default;
};

struct SiMachineData {
  double r_s_ohm{0.0};
  double l_d_h{0.0};
  double l_q_h{0.0};
  double psi_m_wb{0.0};
};

MachineParams to_per_unit(const SiMachineData& si, const BaseQuantities& base);
SiMachineData to_si(const MachineParams& pu, const BaseQuantities& base);

struct AlphaBeta {
  double alpha{0.0};
  double beta{0.0};
};

// Amplitude-invariant rotation into rotor coordinates (by -theta) and back.
Dq park(const AlphaBeta& v, double theta) noexcept;
AlphaBeta inverse_park(const Dq& v, double theta) noexcept;

double wrap_angle(double theta) noexcept;

struct MachineConfig {
  BaseQuantities base;
  MachineParams params;
  // Raw keys as read, kept so a config can be written back unchanged.
  std::map<std::string, std::string> keys;
};

// Flat key-value machine description. Recognised keys:
//   rated_voltage_ll_V, rated_current_A, pole_pairs, rated_speed_rpm | rated_frequency_Hz,
//   Rs_ohm, Ld_H, Lq_H, psi_m_Wb, and the per-unit overrides x_d_pu, x_q_pu, r_s_pu, psi_m_pu,
//   transform (only "amplitude_invariant").
// Missing keys fall back to the 3 kW test machine. Unknown keys throw ValidationError.
MachineConfig machine_from_keys(const std::map<std::string, std::string>& keys);
MachineConfig load_machine_file(const std::string& path);

// The 3 kW, 400 V, 3 pole-pair IPMSM with the offline-identified psi_m = 0.895 pu.
MachineConfig reference_machine();

}  // namespace pmsm
