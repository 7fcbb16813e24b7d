#pragma once

#include <complex>
#include <iosfwd>
#include <optional>
#include <vector>

#include "pmsm/dq.hpp"
#include "pmsm/plant.hpp"
#include "pmsm/pu_frames.hpp"
#include "pmsm/rpem.hpp"

namespace pmsm::analysis {

struct OperatingGrid {
  std::vector<double> speed_axis;
  std::vector<double> torque_axis;

  // Throws ValidationError unless both axes are non-empty and strictly increasing.
  void validate() const;
  std::size_t size() const noexcept { return speed_axis.size() * torque_axis.size(); }

  static OperatingGrid uniform(double n_min, double n_max, std::size_t n_points, double tau_min, double tau_max,
                               std::size_t tau_points);
  // 81 x 81 over [-1, 1] x [-1, 1].
  static OperatingGrid standard();
};

struct EigenPair {
  std::complex<double> l1;
  std::complex<double> l2;

  friend bool operator==(const EigenPair& x, const EigenPair& y) { return x.l1 == y.l1 && x.l2 == y.l2; }
};

struct TimeConstants {
  double t_d{0.0};
  double t_q{0.0};
};

// Predictor time constants x / (r_hat omega_n).
TimeConstants time_constants(double r_hat, double x_d, double x_q, double omega_n);

// Closed-form eigenvalues of the linearized predictor at speed n (per second).
EigenPair eigenvalues(double r_hat, double x_d, double x_q, double omega_n, double n);

struct DiscretePoint {
  std::complex<double> z;
  bool stable{false};
};

// Euler: z = 1 + l dt. Trapezoidal: z = (1 + l dt/2) / (1 - l dt/2). Stable iff |z| < 1.
DiscretePoint discrete_stability(std::complex<double> lambda, double dt, IntegrationMethod method);

enum class Loading {
  mtpa,    // cell torque realised with MTPA currents from the estimated parameters
  q_axis,  // i_d = 0, i_q = tau / psi_m_hat
};

struct MapInputs {
  MachineParams estimated;       // psi_m_hat, r_s_hat and the model inductances
  rpem::ParameterDelta delta;    // true - estimated
  double omega_n{2.0 * kPi * 50.0};
  double dt{125e-6};
  double i_max{2.0};
  Loading loading{Loading::mtpa};
};

struct MapCell {
  double n{0.0};
  double tau{0.0};
  bool feasible{false};
  Dq current;  // steady current loading the cell
  Dq eps;      // settled prediction error
  Mat2 psi;    // settled prediction gradient
  double r_scalar{0.0};
  double det_r{0.0};
  EigenPair lambda;
  double z_euler_mag{0.0};  // max |z| over the pair
  double z_trap_mag{0.0};

  friend bool operator==(const MapCell&, const MapCell&) = default;
};

// Every surface for one cell.
MapCell evaluate_cell(double n, double tau, const MapInputs& in) noexcept;

// Row-major over (speed, torque): index = speed_index * torque_count + torque_index.
std::vector<MapCell> evaluate_grid_serial(const OperatingGrid& grid, const MapInputs& in);
// Same table, cells distributed over OpenMP threads.
std::vector<MapCell> evaluate_grid_parallel(const OperatingGrid& grid, const MapInputs& in);

struct SensitivityCell {
  double n, tau;
  std::optional<Dq> eps;
};
struct GradientCell {
  double n, tau;
  std::optional<Mat2> psi;
};
struct HessianCell {
  double n, tau;
  std::optional<double> r_scalar;
  std::optional<double> det_r;
};

std::vector<SensitivityCell> sensitivity_map(const OperatingGrid& grid, const MapInputs& in);
std::vector<GradientCell> gradient_map(const OperatingGrid& grid, const MapInputs& in);
std::vector<HessianCell> hessian_map(const OperatingGrid& grid, const MapInputs& in);

enum Surface : unsigned {
  kSensitivity = 1u << 0,
  kGradient = 1u << 1,
  kHessian = 1u << 2,
  kEigen = 1u << 3,
  kAllSurfaces = kSensitivity | kGradient | kHessian | kEigen,
};

unsigned surface_from_string(const std::string& name);

// Fixed header; columns of surfaces not requested, and infeasible cells, are left empty.
void write_map_csv(std::ostream& out, const std::vector<MapCell>& cells, unsigned surfaces);

}  // namespace pmsm::analysis
