#include "pmsm/rpem.hpp"

#include <algorithm>
#include <cmath>

#include "pmsm/errors.hpp"

namespace pmsm::rpem {

void ParameterBox::validate() const {
  if (!(psi_m_min < psi_m_max) || !(r_s_min < r_s_max)) {
    throw ValidationError("parameter box: min must be below max on both axes");
  }
  if (psi_m_min < 0.0 || r_s_min < 0.0) throw ValidationError("parameter box: bounds must be non-negative");
}

ParameterBox ParameterBox::around(const ParameterVector& nominal, double rel) {
  return {nominal.psi_m * (1.0 - rel), nominal.psi_m * (1.0 + rel), nominal.r_s * (1.0 - rel),
          nominal.r_s * (1.0 + rel)};
}

ParameterVector project_parameters(const ParameterVector& theta, const ParameterBox& box) noexcept {
  return {std::clamp(theta.psi_m, box.psi_m_min, box.psi_m_max), std::clamp(theta.r_s, box.r_s_min, box.r_s_max)};
}

Dq predictor_step(const Dq& i_hat, const Dq& u, double n, const ParameterVector& theta, const ModelContext& ctx,
                  IntegrationMethod method) noexcept {
  const auto m = linear_model(ctx.x_d, ctx.x_q, theta.r_s, theta.psi_m, n, u, ctx.omega_n);
  return advance(m.a, i_hat, m.b, ctx.dt, method);
}

Mat2 gradient_dynamic_step(const Mat2& grad, const Dq& i_hat_prev, const Dq& i_hat_next, double n,
                           const ParameterVector& theta, const ModelContext& ctx,
                           IntegrationMethod method) noexcept {
  const double wd = ctx.omega_n / ctx.x_d;
  const double wq = ctx.omega_n / ctx.x_q;
  const Mat2 a = linear_model(ctx.x_d, ctx.x_q, theta.r_s, theta.psi_m, n, {}, ctx.omega_n).a;

  // d/dpsi: forced by -n on the q axis.
  const Dq psi_force{0.0, -wq * n};
  // d/dr_s: forced by -i_hat, averaged over the step for the trapezoidal rule.
  const Dq i_force = method == IntegrationMethod::trapezoidal ? 0.5 * (i_hat_prev + i_hat_next) : i_hat_prev;
  const Dq rs_force{-wd * i_force.d, -wq * i_force.q};

  const Dq g_psi = advance(a, {grad.a, grad.b}, psi_force, ctx.dt, method);
  const Dq g_rs = advance(a, {grad.c, grad.e}, rs_force, ctx.dt, method);
  return {g_psi.d, g_psi.q, g_rs.d, g_rs.q};
}

Mat2 gradient_steady_state(const ParameterVector& theta, double x_d, double x_q, double n, const Dq& i_hat,
                           double den_floor) noexcept {
  const double r = theta.r_s;
  const double den = r * r + n * n * x_d * x_q;
  if (den < den_floor) return {};
  return {-n * n * x_q / den, -n * r / den, (-r * i_hat.d - n * x_q * i_hat.q) / den,
          (-r * i_hat.q + n * x_d * i_hat.d) / den};
}

Dq steady_state_error(const ParameterVector& th, double x_d, double x_q, double n, const Dq& i,
                      const ParameterDelta& dl) noexcept {
  const double r = th.r_s;
  const double den = r * r + n * n * x_d * x_q;
  const double ed = -(n * n * x_q / den) * dl.psi_m - (r / den * i.d + n * x_q / den * i.q) * dl.r_s -
                    (n * n * x_q / den * i.d) * dl.x_d + (n * r / den * i.q) * dl.x_q;
  const double eq = -(n * r / den) * dl.psi_m - (r / den * i.q - n * x_d / den * i.d) * dl.r_s -
                    (n * r / den * i.d) * dl.x_d - (n * n * x_d / den * i.q) * dl.x_q;
  return {ed, eq};
}

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::sga: return "SGA";
    case Algorithm::gna: return "GNA";
    case Algorithm::phyint: return "PhyInt";
  }
  return "?";
}

Algorithm algorithm_from_string(const std::string& s) {
  for (auto a : {Algorithm::sga, Algorithm::gna, Algorithm::phyint}) {
    if (to_string(a) == s) return a;
  }
  throw ValidationError("unknown algorithm '" + s + "' (expected SGA, GNA or PhyInt)");
}

std::string to_string(GradientMode m) { return m == GradientMode::dynamic ? "dynamic" : "steady_state"; }

GradientMode gradient_mode_from_string(const std::string& s) {
  if (s == "dynamic") return GradientMode::dynamic;
  if (s == "steady_state") return GradientMode::steady_state;
  throw ValidationError("unknown gradient mode '" + s + "'");
}

std::string to_string(SgaHessian h) { return h == SgaHessian::full_trace ? "full_trace" : "respective"; }

SgaHessian sga_hessian_from_string(const std::string& s) {
  if (s == "full_trace") return SgaHessian::full_trace;
  if (s == "respective") return SgaHessian::respective;
  throw ValidationError("unknown SGA Hessian mode '" + s + "'");
}

void GainConfig::validate() const {
  for (std::size_t i = 0; i < 2; ++i) {
    if (!(gamma_l[i] > 0.0 && gamma_l[i] <= 1.0) || !(gamma_r[i] > 0.0 && gamma_r[i] <= 1.0)) {
      throw ValidationError("gain config: gamma values must lie in (0, 1]");
    }
  }
  if (!(std::abs(n_lim1) >= std::abs(n_lim2))) throw ValidationError("gain config: need |n_lim1| >= |n_lim2|");
  if (!(r_floor > 0.0) || !(det_r_floor > 0.0) || !(i_floor >= 0.0) || !(pinv_tol > 0.0)) {
    throw ValidationError("gain config: floors must be positive");
  }
  if (!(hessian_init_scale > 0.0)) throw ValidationError("gain config: hessian_init_scale must be positive");
  if (!(reseed_after_s >= 0.0)) throw ValidationError("gain config: reseed_after_s must be >= 0");
}

GainConfig default_gains(Algorithm a) {
  GainConfig cfg;
  cfg.algorithm = a;
  if (a == Algorithm::gna) {
    cfg.gamma_r = {6.25e-4, 6.25e-5};
    cfg.gamma_l = {3.25e-4, 7.5e-6};
  } else {
    cfg.gamma_r = {6.25e-4, 6.25e-4};
    cfg.gamma_l = {3.25e-4, 6.25e-5};
  }
  return cfg;
}

double gamma_from_t0(double t_samp, double t0) {
  if (!(t_samp > 0.0)) throw ValidationError("T_samp must be positive");
  if (!(t0 >= t_samp)) throw ValidationError("T0 must be at least T_samp");
  return t_samp / t0;
}

namespace {

Mat2 outer_self(const Mat2& psi) noexcept { return psi * psi.transposed(); }

Mat2 squares(const Mat2& m) noexcept { return {m.a * m.a, m.b * m.b, m.c * m.c, m.e * m.e}; }

Mat2 scale_rows(const Mat2& m, const std::array<double, 2>& s) noexcept {
  return {s[0] * m.a, s[0] * m.b, s[1] * m.c, s[1] * m.e};
}

ParameterVector apply_gain(const ParameterVector& theta, const Mat2& gain, const Dq& eps,
                           const ParameterBox& box) noexcept {
  const Dq step = gain * eps;
  return project_parameters({theta.psi_m + step.d, theta.r_s + step.q}, box);
}

}  // namespace

HessianState initial_hessian(const Mat2& psi, const GainConfig& cfg) noexcept {
  HessianState h;
  const Mat2 rr = outer_self(psi);
  const double tr = rr.trace();
  const double s = cfg.hessian_init_scale;
  if (tr >= cfg.r_floor) {
    h.scalar_r = s * tr;
    h.matrix_r = s * rr;
    h.element_r = s * squares(psi);
  } else {
    h.scalar_r = s;
    h.matrix_r = (0.5 * s) * Mat2::identity();
    h.element_r = s * Mat2{1.0, 1.0, 1.0, 1.0};
  }
  h.scalar_r = std::max(h.scalar_r, cfg.r_floor);
  return h;
}

double hessian_rate(const GainConfig& cfg, double n) noexcept {
  return std::abs(n) < std::abs(cfg.n_lim2) ? cfg.gamma_r[kRsRow] : cfg.gamma_r[kPsiRow];
}

std::array<bool, 2> active_rows(double n, const GainConfig& cfg) noexcept {
  return {std::abs(n) > std::abs(cfg.n_lim1), std::abs(n) < std::abs(cfg.n_lim2)};
}

Mat2 gain_schedule(const Mat2& gain, double n, const GainConfig& cfg) noexcept {
  const auto rows = active_rows(n, cfg);
  Mat2 out = gain;
  if (!rows[kPsiRow]) out.a = out.b = 0.0;
  if (!rows[kRsRow]) out.c = out.e = 0.0;
  return out;
}

Mat2 pseudoinverse_2x2(const Mat2& r, double tol) noexcept {
  const double off = 0.5 * (r.b + r.c);
  const double phi = 0.5 * std::atan2(2.0 * off, r.a - r.e);
  const double c = std::cos(phi);
  const double s = std::sin(phi);
  // Eigenpairs: (l1, [c, s]) and (l2, [-s, c]).
  const double l1 = r.a * c * c + 2.0 * off * c * s + r.e * s * s;
  const double l2 = r.a * s * s - 2.0 * off * c * s + r.e * c * c;
  const double cutoff = tol * std::max(std::abs(l1), std::abs(l2));
  Mat2 out;
  if (std::abs(l1) > cutoff && l1 != 0.0) out = out + (1.0 / l1) * Mat2::outer({c, s}, {c, s});
  if (std::abs(l2) > cutoff && l2 != 0.0) out = out + (1.0 / l2) * Mat2::outer({-s, c}, {-s, c});
  return out;
}

HessianState filter_hessian(const HessianState& h, const Mat2& psi, double gamma_r, const GainConfig& cfg) noexcept {
  const Mat2 rr = outer_self(psi);
  HessianState out;
  out.scalar_r = std::max(cfg.r_floor, h.scalar_r + gamma_r * (rr.trace() - h.scalar_r));
  out.matrix_r = h.matrix_r + gamma_r * (rr - h.matrix_r);
  out.element_r = h.element_r + gamma_r * (squares(psi) - h.element_r);
  return out;
}

Mat2 sga_gain(const Mat2& psi, const HessianState& h, const GainConfig& cfg) noexcept {
  if (cfg.sga_hessian == SgaHessian::full_trace) {
    return scale_rows((1.0 / std::max(h.scalar_r, cfg.r_floor)) * psi, cfg.gamma_l);
  }
  auto elem = [&](double p, double r) { return p / std::max(r, cfg.r_floor); };
  return scale_rows({elem(psi.a, h.element_r.a), elem(psi.b, h.element_r.b), elem(psi.c, h.element_r.c),
                     elem(psi.e, h.element_r.e)},
                    cfg.gamma_l);
}

Mat2 gna_gain(const Mat2& psi, const Mat2& r, const GainConfig& cfg, bool* used_pseudoinverse) noexcept {
  const double r12 = 0.5 * (r.b + r.c);
  const double det = r.a * r.e - r12 * r12;
  Mat2 raw;
  if (det >= cfg.det_r_floor) {
    // L |R| = [psi11 R22 - psi21 R12, psi12 R22 - psi22 R12; psi21 R11 - psi11 R12, psi22 R11 - psi12 R12]
    raw = (1.0 / det) * Mat2{psi.a * r.e - psi.c * r12, psi.b * r.e - psi.e * r12, psi.c * r.a - psi.a * r12,
                             psi.e * r.a - psi.b * r12};
    if (used_pseudoinverse) *used_pseudoinverse = false;
  } else {
    raw = pseudoinverse_2x2({r.a, r12, r12, r.e}, cfg.pinv_tol) * psi;
    if (used_pseudoinverse) *used_pseudoinverse = true;
  }
  return scale_rows(raw, cfg.gamma_l);
}

Mat2 phyint_gain(double n, const Dq& i_hat, const ParameterVector& theta, double x_d, double x_q,
                 const GainConfig& cfg) noexcept {
  const double r = theta.r_s;
  const double den = r * r + n * n * x_d * x_q;
  const double den_d = -r * i_hat.d - n * x_q * i_hat.q;
  const double den_q = -r * i_hat.q + n * x_d * i_hat.d;
  Mat2 g;
  g.a = -cfg.gamma_l[kPsiRow] * x_d;
  g.b = 0.0;
  // Denominators are voltages; compare them with the drop i_floor would produce.
  if (std::abs(den_d) >= cfg.i_floor * (r + std::abs(n) * x_q) && den_d != 0.0) {
    g.c = cfg.gamma_l[kRsRow] * den / den_d;
  }
  if (std::abs(den_q) >= cfg.i_floor * (r + std::abs(n) * x_d) && den_q != 0.0) {
    g.e = cfg.gamma_l[kRsRow] * den / den_q;
  }
  return g;
}

UpdateResult sga_update(const ParameterVector& theta, const Dq& eps, const Mat2& psi, const HessianState& hess,
                        const GainConfig& cfg, const ParameterBox& box, double n) noexcept {
  UpdateResult out;
  out.hessian = filter_hessian(hess, psi, hessian_rate(cfg, n), cfg);
  out.gain = gain_schedule(sga_gain(psi, out.hessian, cfg), n, cfg);
  out.theta = apply_gain(theta, out.gain, eps, box);
  return out;
}

UpdateResult gna_update(const ParameterVector& theta, const Dq& eps, const Mat2& psi, const HessianState& hess,
                        const GainConfig& cfg, const ParameterBox& box, double n) noexcept {
  UpdateResult out;
  out.hessian = filter_hessian(hess, psi, hessian_rate(cfg, n), cfg);
  out.gain = gain_schedule(gna_gain(psi, out.hessian.matrix_r, cfg, &out.used_pseudoinverse), n, cfg);
  out.theta = apply_gain(theta, out.gain, eps, box);
  return out;
}

UpdateResult phyint_update(const ParameterVector& theta, const Dq& eps, double n, const Dq& i_hat, double x_d,
                           double x_q, const GainConfig& cfg, const ParameterBox& box) noexcept {
  UpdateResult out;
  out.gain = gain_schedule(phyint_gain(n, i_hat, theta, x_d, x_q, cfg), n, cfg);
  out.theta = apply_gain(theta, out.gain, eps, box);
  return out;
}

Estimator::Estimator(const GainConfig& cfg, const ParameterBox& box, const ParameterVector& theta0,
                     const ModelContext& ctx, bool adapt)
    : cfg_(cfg), box_(box), theta_(theta0), ctx_(ctx), adapt_(adapt) {
  cfg_.validate();
  box_.validate();
  if (!(ctx.dt > 0.0) || !(ctx.omega_n > 0.0) || !(ctx.x_d > 0.0) || !(ctx.x_q > 0.0)) {
    throw ValidationError("estimator: model context needs positive dt, omega_n, x_d, x_q");
  }
  theta_ = project_parameters(theta_, box_);
}

void Estimator::initialize(const Dq& i0, double n0) {
  pred_.i_hat = i0;
  pred_.grad = gradient_steady_state(theta_, ctx_.x_d, ctx_.x_q, n0, i0);
  hess_ = initial_hessian(pred_.grad, cfg_);
  inactive_time_ = {0.0, 0.0};
}

EstimatorOutput Estimator::step(const Dq& i_meas, const Dq& u, double n) {
  const Dq i_prev = pred_.i_hat;

  // Rows re-enabled after a long dead band restart from settled gradients.
  const auto rows = active_rows(n, cfg_);
  const Mat2 settled_prev = gradient_steady_state(theta_, ctx_.x_d, ctx_.x_q, n, i_prev);
  for (std::size_t row = 0; row < 2; ++row) {
    if (rows[row] && inactive_time_[row] >= cfg_.reseed_after_s && inactive_time_[row] > 0.0) {
      if (row == kPsiRow) {
        pred_.grad.a = settled_prev.a;
        pred_.grad.b = settled_prev.b;
      } else {
        pred_.grad.c = settled_prev.c;
        pred_.grad.e = settled_prev.e;
      }
    }
    inactive_time_[row] = rows[row] ? 0.0 : inactive_time_[row] + ctx_.dt;
  }

  pred_.i_hat = predictor_step(i_prev, u, n, theta_, ctx_);
  const Dq eps = prediction_error(i_meas, pred_.i_hat);
  pred_.grad = gradient_dynamic_step(pred_.grad, i_prev, pred_.i_hat, n, theta_, ctx_);

  const Mat2 settled = gradient_steady_state(theta_, ctx_.x_d, ctx_.x_q, n, pred_.i_hat);
  Mat2 psi = pred_.grad;
  if (cfg_.gradient_mode[kPsiRow] == GradientMode::steady_state) {
    psi.a = settled.a;
    psi.b = settled.b;
  }
  if (cfg_.gradient_mode[kRsRow] == GradientMode::steady_state) {
    psi.c = settled.c;
    psi.e = settled.e;
  }

  UpdateResult upd;
  switch (cfg_.algorithm) {
    case Algorithm::sga: upd = sga_update(theta_, eps, psi, hess_, cfg_, box_, n); break;
    case Algorithm::gna: upd = gna_update(theta_, eps, psi, hess_, cfg_, box_, n); break;
    case Algorithm::phyint:
      upd = phyint_update(theta_, eps, n, pred_.i_hat, ctx_.x_d, ctx_.x_q, cfg_, box_);
      upd.hessian = filter_hessian(hess_, psi, hessian_rate(cfg_, n), cfg_);
      break;
  }
  hess_ = upd.hessian;
  if (adapt_) theta_ = upd.theta;
  ++steps_;
  if (upd.used_pseudoinverse) ++pinv_steps_;

  EstimatorOutput out;
  out.i_hat = pred_.i_hat;
  out.eps = eps;
  out.psi = psi;
  out.gain = upd.gain;
  out.scalar_r = hess_.scalar_r;
  out.det_r = hess_.matrix_r.det();
  out.used_pseudoinverse = upd.used_pseudoinverse;
  return out;
}

}  // namespace pmsm::rpem
