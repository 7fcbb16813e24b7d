#include "pmsm/analysis.hpp"

#include <cmath>
#include <ostream>

#include "pmsm/errors.hpp"
#include "pmsm/foc.hpp"
#include "pmsm/kv_file.hpp"

namespace pmsm::analysis {

void OperatingGrid::validate() const {
  auto check = [](const std::vector<double>& axis, const char* name) {
    if (axis.empty()) throw ValidationError(std::string("grid: empty ") + name + " axis");
    for (std::size_t k = 1; k < axis.size(); ++k) {
      if (!(axis[k] > axis[k - 1])) throw ValidationError(std::string("grid: ") + name + " axis not increasing");
    }
  };
  check(speed_axis, "speed");
  check(torque_axis, "torque");
}

namespace {

std::vector<double> linspace(double lo, double hi, std::size_t count) {
  if (count == 0) throw ValidationError("grid: axis needs at least one point");
  if (count == 1) return {lo};
  std::vector<double> v(count);
  for (std::size_t k = 0; k < count; ++k) v[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(count - 1);
  return v;
}

}  // namespace

OperatingGrid OperatingGrid::uniform(double n_min, double n_max, std::size_t n_points, double tau_min,
                                     double tau_max, std::size_t tau_points) {
  OperatingGrid g{linspace(n_min, n_max, n_points), linspace(tau_min, tau_max, tau_points)};
  g.validate();
  return g;
}

OperatingGrid OperatingGrid::standard() { return uniform(-1.0, 1.0, 81, -1.0, 1.0, 81); }

TimeConstants time_constants(double r_hat, double x_d, double x_q, double omega_n) {
  return {x_d / (r_hat * omega_n), x_q / (r_hat * omega_n)};
}

EigenPair eigenvalues(double r_hat, double x_d, double x_q, double omega_n, double n) {
  const auto tc = time_constants(r_hat, x_d, x_q, omega_n);
  const double half_sum = 0.5 * (1.0 / tc.t_d + 1.0 / tc.t_q);
  const double w = omega_n * n;
  const std::complex<double> disc = half_sum * half_sum - (1.0 / (tc.t_d * tc.t_q) + w * w);
  const std::complex<double> root = std::sqrt(disc);
  return {-half_sum + root, -half_sum - root};
}

DiscretePoint discrete_stability(std::complex<double> lambda, double dt, IntegrationMethod method) {
  DiscretePoint p;
  if (method == IntegrationMethod::explicit_euler) {
    p.z = 1.0 + lambda * dt;
  } else {
    p.z = (1.0 + 0.5 * lambda * dt) / (1.0 - 0.5 * lambda * dt);
  }
  p.stable = std::abs(p.z) < 1.0;
  return p;
}

MapCell evaluate_cell(double n, double tau, const MapInputs& in) noexcept {
  MapCell cell;
  cell.n = n;
  cell.tau = tau;
  const auto& est = in.estimated;

  cell.lambda = eigenvalues(est.r_s, est.x_d, est.x_q, in.omega_n, n);
  for (auto l : {cell.lambda.l1, cell.lambda.l2}) {
    cell.z_euler_mag = std::max(cell.z_euler_mag, std::abs(discrete_stability(l, in.dt, IntegrationMethod::explicit_euler).z));
    cell.z_trap_mag = std::max(cell.z_trap_mag, std::abs(discrete_stability(l, in.dt, IntegrationMethod::trapezoidal).z));
  }

  const double den = est.r_s * est.r_s + n * n * est.x_d * est.x_q;
  if (!(den > 1e-12)) return cell;
  try {
    cell.current = in.loading == Loading::mtpa ? mtpa_reference(tau, est) : Dq{0.0, tau / est.psi_m};
  } catch (const ValidationError&) {
    return cell;
  }
  if (!cell.current.finite() || cell.current.norm() > in.i_max) return cell;

  const rpem::ParameterVector theta{est.psi_m, est.r_s};
  cell.eps = rpem::steady_state_error(theta, est.x_d, est.x_q, n, cell.current, in.delta);
  cell.psi = rpem::gradient_steady_state(theta, est.x_d, est.x_q, n, cell.current);
  const Mat2& p = cell.psi;
  cell.r_scalar = p.a * p.a + p.b * p.b + p.c * p.c + p.e * p.e;
  cell.det_r = p.a * p.a * p.e * p.e + p.b * p.b * p.c * p.c - 2.0 * p.a * p.b * p.c * p.e;
  cell.feasible = true;
  return cell;
}

std::vector<MapCell> evaluate_grid_serial(const OperatingGrid& grid, const MapInputs& in) {
  grid.validate();
  const std::size_t nt = grid.torque_axis.size();
  std::vector<MapCell> cells(grid.size());
  for (std::size_t k = 0; k < cells.size(); ++k) {
    cells[k] = evaluate_cell(grid.speed_axis[k / nt], grid.torque_axis[k % nt], in);
  }
  return cells;
}

std::vector<MapCell> evaluate_grid_parallel(const OperatingGrid& grid, const MapInputs& in) {
  grid.validate();
  const std::size_t nt = grid.torque_axis.size();
  const auto total = static_cast<std::ptrdiff_t>(grid.size());
  std::vector<MapCell> cells(grid.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t k = 0; k < total; ++k) {
    const auto idx = static_cast<std::size_t>(k);
    cells[idx] = evaluate_cell(grid.speed_axis[idx / nt], grid.torque_axis[idx % nt], in);
  }
  return cells;
}

std::vector<SensitivityCell> sensitivity_map(const OperatingGrid& grid, const MapInputs& in) {
  std::vector<SensitivityCell> out;
  for (const auto& c : evaluate_grid_parallel(grid, in)) {
    out.push_back({c.n, c.tau, c.feasible ? std::optional<Dq>(c.eps) : std::nullopt});
  }
  return out;
}

std::vector<GradientCell> gradient_map(const OperatingGrid& grid, const MapInputs& in) {
  std::vector<GradientCell> out;
  for (const auto& c : evaluate_grid_parallel(grid, in)) {
    out.push_back({c.n, c.tau, c.feasible ? std::optional<Mat2>(c.psi) : std::nullopt});
  }
  return out;
}

std::vector<HessianCell> hessian_map(const OperatingGrid& grid, const MapInputs& in) {
  std::vector<HessianCell> out;
  for (const auto& c : evaluate_grid_parallel(grid, in)) {
    if (c.feasible) {
      out.push_back({c.n, c.tau, c.r_scalar, c.det_r});
    } else {
      out.push_back({c.n, c.tau, std::nullopt, std::nullopt});
    }
  }
  return out;
}

unsigned surface_from_string(const std::string& name) {
  if (name == "sensitivity") return kSensitivity;
  if (name == "gradient") return kGradient;
  if (name == "hessian") return kHessian;
  if (name == "eigen") return kEigen;
  if (name == "all") return kAllSurfaces;
  throw ValidationError("unknown surface '" + name + "' (sensitivity, gradient, hessian, eigen, all)");
}

void write_map_csv(std::ostream& out, const std::vector<MapCell>& cells, unsigned surfaces) {
  out << "n_pu,tau_pu,eps_d,eps_q,psi11,psi12,psi21,psi22,r_scalar,det_R,re_l1,im_l1,re_l2,im_l2,z_euler_mag,"
         "z_trap_mag\n";
  auto field = [&](bool present, double v) {
    out << ',';
    if (present) out << kv::format_double(v);
  };
  for (const auto& c : cells) {
    out << kv::format_double(c.n) << ',' << kv::format_double(c.tau);
    const bool sens = c.feasible && (surfaces & kSensitivity);
    const bool grad = c.feasible && (surfaces & kGradient);
    const bool hess = c.feasible && (surfaces & kHessian);
    const bool eig = (surfaces & kEigen) != 0;
    field(sens, c.eps.d);
    field(sens, c.eps.q);
    field(grad, c.psi.a);
    field(grad, c.psi.b);
    field(grad, c.psi.c);
    field(grad, c.psi.e);
    field(hess, c.r_scalar);
    field(hess, c.det_r);
    field(eig, c.lambda.l1.real());
    field(eig, c.lambda.l1.imag());
    field(eig, c.lambda.l2.real());
    field(eig, c.lambda.l2.imag());
    field(eig, c.z_euler_mag);
    field(eig, c.z_trap_mag);
    out << '\n';
  }
}

}  // namespace pmsm::analysis
