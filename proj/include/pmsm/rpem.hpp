#pragma once

#include <array>
#include <cstddef>
#include <string>

#include "pmsm/dq.hpp"
#include "pmsm/plant.hpp"

// Recursive prediction error estimation of psi_m and r_s from an open-loop current predictor.
//
// The prediction gradient is stored as a 2x2 matrix whose rows are parameters and whose columns
// are predicted-current components:
//
//   [ d i_d/d psi_m   d i_q/d psi_m ]   [ Psi11  Psi12 ]
//   [ d i_d/d r_s     d i_q/d r_s   ] = [ Psi21  Psi22 ]
//
// so that eps ~= Psi^T * delta_theta, the Hessian is R = Psi Psi^T and the gain L maps eps to
// parameter increments, theta += L eps.
namespace pmsm::rpem {

struct ParameterVector {
  double psi_m{0.0};
  double r_s{0.0};

  friend bool operator==(const ParameterVector&, const ParameterVector&) = default;
};

struct ParameterBox {
  double psi_m_min{0.0};
  double psi_m_max{0.0};
  double r_s_min{0.0};
  double r_s_max{0.0};

  void validate() const;
  // [nominal (1 - rel), nominal (1 + rel)] per axis.
  static ParameterBox around(const ParameterVector& nominal, double rel);
  friend bool operator==(const ParameterBox&, const ParameterBox&) = default;
};

ParameterVector project_parameters(const ParameterVector& theta, const ParameterBox& box) noexcept;

// Inductances the predictor treats as known, and the sample time.
struct ModelContext {
  double x_d{0.0};
  double x_q{0.0};
  double omega_n{0.0};
  double dt{0.0};
};

struct PredictorState {
  Dq i_hat;
  Mat2 grad;  // dynamic prediction gradient, layout above
};

Dq predictor_step(const Dq& i_hat, const Dq& u, double n, const ParameterVector& theta, const ModelContext& ctx,
                  IntegrationMethod method = IntegrationMethod::trapezoidal) noexcept;

// measured - predicted
constexpr Dq prediction_error(const Dq& i_meas, const Dq& i_hat) noexcept { return i_meas - i_hat; }

// Advances the sensitivity ODEs with the same discretization as the predictor, so the result is
// the exact derivative of the discrete predictor. i_hat_prev/i_hat_next bracket the step.
Mat2 gradient_dynamic_step(const Mat2& grad, const Dq& i_hat_prev, const Dq& i_hat_next, double n,
                           const ParameterVector& theta, const ModelContext& ctx,
                           IntegrationMethod method = IntegrationMethod::trapezoidal) noexcept;

// Closed-form settled gradient, denominator r_s^2 + n^2 x_d x_q. Returns zero when that
// denominator falls below `den_floor`.
Mat2 gradient_steady_state(const ParameterVector& theta, double x_d, double x_q, double n, const Dq& i_hat,
                           double den_floor = 1e-12) noexcept;

// Settled prediction error for parameter mismatch delta = true - estimated, evaluated at the
// measured current i. Estimated values are theta_hat and x_hat.
struct ParameterDelta {
  double psi_m{0.0};
  double r_s{0.0};
  double x_d{0.0};
  double x_q{0.0};
};
Dq steady_state_error(const ParameterVector& theta_hat, double x_d_hat, double x_q_hat, double n, const Dq& i,
                      const ParameterDelta& delta) noexcept;

enum class Algorithm { sga, gna, phyint };
enum class GradientMode { dynamic, steady_state };
// full_trace: one scalar r = tr{Psi Psi^T}. respective: each gain element uses the filtered
// square of its own gradient entry.
enum class SgaHessian { full_trace, respective };

std::string to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& s);
std::string to_string(GradientMode m);
GradientMode gradient_mode_from_string(const std::string& s);
std::string to_string(SgaHessian h);
SgaHessian sga_hessian_from_string(const std::string& s);

inline constexpr std::size_t kPsiRow = 0;
inline constexpr std::size_t kRsRow = 1;

struct GainConfig {
  Algorithm algorithm{Algorithm::sga};
  std::array<double, 2> gamma_l{3.25e-4, 6.25e-5};  // per parameter row
  std::array<double, 2> gamma_r{6.25e-4, 6.25e-4};  // Hessian filter, taken from the active row
  std::array<GradientMode, 2> gradient_mode{GradientMode::steady_state, GradientMode::steady_state};
  SgaHessian sga_hessian{SgaHessian::full_trace};
  double n_lim1{0.1};  // psi_m row active for |n| > n_lim1
  double n_lim2{0.01};  // r_s row active for |n| < n_lim2
  double r_floor{1e-6};
  double det_r_floor{1e-10};
  double i_floor{0.02};
  double pinv_tol{1e-9};
  double hessian_init_scale{1.0};
  double reseed_after_s{0.1};

  void validate() const;
  friend bool operator==(const GainConfig&, const GainConfig&) = default;
};

// Gain sequences used in the real-time simulations for each algorithm.
GainConfig default_gains(Algorithm a);

// gamma0 = T_samp / T0. Throws ValidationError when T0 < T_samp or T_samp <= 0.
double gamma_from_t0(double t_samp, double t0);

struct HessianState {
  double scalar_r{1.0};
  Mat2 matrix_r{Mat2::identity()};
  Mat2 element_r{Mat2::identity()};  // per-entry filtered Psi_ij^2
};

HessianState initial_hessian(const Mat2& psi, const GainConfig& cfg) noexcept;

// Hessian filter rate for the row that the schedule currently enables.
double hessian_rate(const GainConfig& cfg, double n) noexcept;

// Zeroes row 1 unless |n| > |n_lim1| and row 2 unless |n| < |n_lim2|.
Mat2 gain_schedule(const Mat2& gain, double n, const GainConfig& cfg) noexcept;
std::array<bool, 2> active_rows(double n, const GainConfig& cfg) noexcept;

// Moore-Penrose pseudoinverse of a symmetric 2x2 matrix via its eigendecomposition; eigenvalues
// with magnitude below tol * max|eigenvalue| are treated as zero.
Mat2 pseudoinverse_2x2(const Mat2& r, double tol = 1e-9) noexcept;

struct UpdateResult {
  ParameterVector theta;
  HessianState hessian;
  Mat2 gain;  // after scheduling
  bool used_pseudoinverse{false};
};

// Each update computes the raw gain, applies the speed schedule, then theta <- proj(theta + L eps).
UpdateResult sga_update(const ParameterVector& theta, const Dq& eps, const Mat2& psi, const HessianState& hess,
                        const GainConfig& cfg, const ParameterBox& box, double n) noexcept;
UpdateResult gna_update(const ParameterVector& theta, const Dq& eps, const Mat2& psi, const HessianState& hess,
                        const GainConfig& cfg, const ParameterBox& box, double n) noexcept;
UpdateResult phyint_update(const ParameterVector& theta, const Dq& eps, double n, const Dq& i_hat,
                           double x_d, double x_q, const GainConfig& cfg, const ParameterBox& box) noexcept;

// Unscheduled gains, exposed for analysis and tests.
Mat2 sga_gain(const Mat2& psi, const HessianState& filtered, const GainConfig& cfg) noexcept;
Mat2 gna_gain(const Mat2& psi, const Mat2& r, const GainConfig& cfg, bool* used_pseudoinverse = nullptr) noexcept;
Mat2 phyint_gain(double n, const Dq& i_hat, const ParameterVector& theta, double x_d, double x_q,
                 const GainConfig& cfg) noexcept;
HessianState filter_hessian(const HessianState& h, const Mat2& psi, double gamma_r, const GainConfig& cfg) noexcept;

struct EstimatorOutput {
  Dq i_hat;
  Dq eps;
  Mat2 psi;   // gradient used for the gain
  Mat2 gain;  // scheduled
  double scalar_r{0.0};
  double det_r{0.0};
  bool used_pseudoinverse{false};
};

// Per-sample pipeline: predictor -> error -> gradients -> Hessian -> gain -> schedule -> update.
class Estimator {
 public:
  Estimator(const GainConfig& cfg, const ParameterBox& box, const ParameterVector& theta0, const ModelContext& ctx,
            bool adapt = true);

  // Seeds the predictor with the measured current and the gradients/Hessian with settled values.
  void initialize(const Dq& i0, double n0);

  // u and n are the voltage applied and the speed over the interval ending at this sample.
  EstimatorOutput step(const Dq& i_meas, const Dq& u, double n);

  const ParameterVector& theta() const noexcept { return theta_; }
  const PredictorState& predictor() const noexcept { return pred_; }
  const HessianState& hessian() const noexcept { return hess_; }
  const GainConfig& config() const noexcept { return cfg_; }
  std::size_t steps() const noexcept { return steps_; }
  std::size_t pseudoinverse_steps() const noexcept { return pinv_steps_; }

 private:
  GainConfig cfg_;
  ParameterBox box_;
  ParameterVector theta_;
  ModelContext ctx_;
  bool adapt_;
  PredictorState pred_;
  HessianState hess_;
  std::array<double, 2> inactive_time_{0.0, 0.0};
  std::size_t steps_{0};
  std::size_t pinv_steps_{0};
};

}  // namespace pmsm::rpem
