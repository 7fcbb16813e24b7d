#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pmsm/plant.hpp"
#include "pmsm/pu_frames.hpp"
#include "pmsm/rpem.hpp"

namespace pmsm::scenario {

enum class ControlMode { torque, speed };

std::string to_string(ControlMode m);
ControlMode control_mode_from_string(const std::string& s);
std::string to_string(SpeedMode m);
SpeedMode speed_mode_from_string(const std::string& s);
std::string to_string(IntegrationMethod m);
IntegrationMethod integration_method_from_string(const std::string& s);

struct PlantSettings {
  double noise_sigma{0.0};  // pu, per current axis
  SpeedMode speed_mode{SpeedMode::prescribed};
  double inertia_h{0.5};
  IntegrationMethod method{IntegrationMethod::trapezoidal};
  int substeps{1};

  friend bool operator==(const PlantSettings&, const PlantSettings&) = default;
};

struct ControlSettings {
  ControlMode mode{ControlMode::torque};
  double tau_ref{0.0};
  double speed_ref{0.0};
  double load_torque{0.0};
  double i_max{1.5};
  double u_max{1.2};
  double speed_kp{5.0};
  double speed_ti{0.5};  // s
  // Current PI overrides; tuned from the estimated parameters when absent.
  std::optional<double> current_kp;
  std::optional<double> current_ti;

  friend bool operator==(const ControlSettings&, const ControlSettings&) = default;
};

struct EstimatorSettings {
  rpem::GainConfig gains;
  double box_rel{0.3};
  // Initial estimates; the machine's values when absent.
  std::optional<double> psi_m0;
  std::optional<double> r_s0;
  bool adapt{true};
  IntegrationMethod predictor{IntegrationMethod::trapezoidal};

  friend bool operator==(const EstimatorSettings&, const EstimatorSettings&) = default;
};

struct RunSettings {
  std::string name;
  double duration{1.0};  // s
  double dt{125e-6};
  std::uint64_t seed{1};
  int log_decimation{8};
  double band{0.01};

  friend bool operator==(const RunSettings&, const RunSettings&) = default;
};

struct Scenario {
  MachineConfig machine;
  PlantSettings plant;
  ControlSettings control;
  EstimatorSettings estimator;
  std::vector<StepEvent> events;
  RunSettings run;

  // Throws ValidationError on any out-of-range field or an event outside [0, duration].
  void validate() const;

  rpem::ParameterVector initial_estimate() const noexcept;
  std::size_t step_count() const noexcept;

  friend bool operator==(const Scenario& a, const Scenario& b);
};

// Replaces the gain rates by the defaults of `a`, keeping gradient modes, schedule limits and floors.
void set_algorithm(Scenario& s, rpem::Algorithm a);

// Strict: unknown sections or keys, malformed numbers and invalid values throw ValidationError.
// Gains missing from [estimator] take the defaults of its algorithm.
Scenario parse(const std::string& text);
Scenario load(const std::string& path);
// Every field written explicitly; parse(serialize(s)) == s.
std::string serialize(const Scenario& s);

std::vector<std::string> preset_names();
bool is_preset(const std::string& name);
Scenario preset(const std::string& name);
// Text of a preset as stored.
const std::string& preset_text(const std::string& name);

// Preset if the name matches one, otherwise a scenario file.
Scenario resolve(const std::string& name_or_path);

}  // namespace pmsm::scenario
