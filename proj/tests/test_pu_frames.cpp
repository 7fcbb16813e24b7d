#include <doctest.h>

#include <cmath>
#include <random>

#include "pmsm/errors.hpp"
#include "pmsm/pu_frames.hpp"

using namespace pmsm;

TEST_SUITE("pu_frames") {

TEST_CASE("base quantities of the 400 V, 4.93 A, 50 Hz machine") {
  const auto b = make_base(400.0, 4.93, 50.0, 3);
  // Frozen from an independent numpy evaluation of the peak-phase base formulas.
  CHECK(b.u_base == doctest::Approx(326.598632371).epsilon(1e-10));
  CHECK(b.i_base == doctest::Approx(6.9720728625).epsilon(1e-10));
  CHECK(b.z_base == doctest::Approx(46.8438352284).epsilon(1e-10));
  CHECK(b.psi_base == doctest::Approx(1.03959573498).epsilon(1e-10));
  CHECK(b.torque_base == doctest::Approx(32.6166174532).epsilon(1e-10));
  CHECK(b.omega_n == doctest::Approx(2.0 * kPi * 50.0));
  // Same impedance from line quantities.
  CHECK(b.z_base == doctest::Approx(400.0 / (std::sqrt(3.0) * 4.93)).epsilon(1e-12));
  CHECK(std::abs(b.z_base - 46.85) < 0.01);
  CHECK(std::abs(b.psi_base - 1.0395) < 1e-4);
}

TEST_CASE("invalid ratings are rejected") {
  CHECK_THROWS_AS(make_base(400.0, 4.93, 0.0, 3), ValidationError);
  CHECK_THROWS_AS(make_base(-1.0, 4.93, 50.0, 3), ValidationError);
  CHECK_THROWS_AS(make_base(400.0, 0.0, 50.0, 3), ValidationError);
  CHECK_THROWS_AS(make_base(400.0, 4.93, 50.0, 0), ValidationError);
}

TEST_CASE("nameplate data in per unit") {
  const auto b = make_base(400.0, 4.93, 50.0, 3);
  const auto pu = to_per_unit({2.25, 0.0953, 0.206, 1.14}, b);
  CHECK(pu.r_s == doctest::Approx(0.0480319339574).epsilon(1e-10));
  CHECK(pu.x_d == doctest::Approx(0.639131656124).epsilon(1e-10));
  CHECK(pu.x_q == doctest::Approx(1.38154376875).epsilon(1e-10));
  CHECK(pu.psi_m == doctest::Approx(1.09658010479).epsilon(1e-10));
  CHECK(std::abs(pu.r_s - 0.0480) < 1e-4);
  CHECK(std::abs(pu.x_d - 0.639) < 1e-3);
  CHECK(std::abs(pu.x_q - 1.381) < 1e-3);

  const auto zero = to_per_unit({0.0, 0.0953, 0.206, 1.14}, b);
  CHECK(zero.r_s == 0.0);

  const auto si = to_si(pu, b);
  CHECK(si.r_s_ohm == doctest::Approx(2.25).epsilon(1e-14));
  CHECK(si.l_d_h == doctest::Approx(0.0953).epsilon(1e-14));
  CHECK(si.l_q_h == doctest::Approx(0.206).epsilon(1e-14));
  CHECK(si.psi_m_wb == doctest::Approx(1.14).epsilon(1e-14));
}

TEST_CASE("machine parameter invariants") {
  MachineParams p{0.639, 1.381, 0.048, 0.895};
  CHECK_NOTHROW(p.validate());
  auto bad = p;
  bad.x_q = 0.5;  // x_q < x_d
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = p;
  bad.psi_m = -0.1;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = p;
  bad.r_s = -1e-3;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("park transform") {
  const Dq a = park({1.0, 0.0}, 0.0);
  CHECK(a.d == doctest::Approx(1.0));
  CHECK(a.q == doctest::Approx(0.0));
  const Dq b = park({0.0, 1.0}, kPi / 2.0);
  CHECK(b.d == doctest::Approx(1.0));
  CHECK(std::abs(b.q) < 1e-15);

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int k = 0; k < 1000; ++k) {
    const AlphaBeta v{u(rng), u(rng)};
    const double th = 4.0 * u(rng);
    const AlphaBeta back = inverse_park(park(v, th), th);
    CHECK(std::abs(back.alpha - v.alpha) < 1e-12);
    CHECK(std::abs(back.beta - v.beta) < 1e-12);
    // Rotation keeps the amplitude.
    CHECK(park(v, th).norm() == doctest::Approx(std::hypot(v.alpha, v.beta)).epsilon(1e-13));
  }
}

TEST_CASE("angle wrapping") {
  CHECK(wrap_angle(0.0) == 0.0);
  CHECK(wrap_angle(2.0 * kPi + 0.5) == doctest::Approx(0.5));
  CHECK(wrap_angle(-0.5) == doctest::Approx(2.0 * kPi - 0.5));
}

TEST_CASE("machine config keys") {
  const auto ref = reference_machine();
  CHECK(ref.params.psi_m == 0.895);
  CHECK(ref.params.x_d == doctest::Approx(0.639131656124).epsilon(1e-10));
  CHECK(ref.base.pole_pairs == 3);

  const auto with_wb = machine_from_keys({{"psi_m_Wb", "1.14"}});
  CHECK(with_wb.params.psi_m == doctest::Approx(1.09658010479).epsilon(1e-10));

  const auto over = machine_from_keys({{"x_d_pu", "0.7"}, {"r_s_pu", "0.05"}});
  CHECK(over.params.x_d == 0.7);
  CHECK(over.params.r_s == 0.05);

  const auto by_freq = machine_from_keys({{"rated_frequency_Hz", "60"}});
  CHECK(by_freq.base.omega_n == doctest::Approx(2.0 * kPi * 60.0));

  CHECK_THROWS_AS(machine_from_keys({{"colour", "red"}}), ValidationError);
  CHECK_THROWS_AS(machine_from_keys({{"transform", "power_invariant"}}), ValidationError);
  CHECK_THROWS_AS(machine_from_keys({{"Ld_H", "abc"}}), ValidationError);
  CHECK_THROWS_AS(machine_from_keys({{"rated_speed_rpm", "1000"}, {"rated_frequency_Hz", "50"}}), ValidationError);
  CHECK_THROWS_AS(machine_from_keys({{"Lq_H", "0.05"}}), ValidationError);  // x_q < x_d
}

}  // TEST_SUITE
