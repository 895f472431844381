#include <doctest.h>

#include "jcep/steering.hpp"
#include "jcep/types.hpp"
#include "oracles.hpp"

using namespace jcep;

TEST_CASE("delay steering follows its phase definition") {
  const CVector ones = steering_delay(0.0, 8, 120e3);
  CHECK((ones - CVector::Ones(8)).norm() == doctest::Approx(0.0));

  const double df = 120e3;
  const int n = 16;
  const CVector b = steering_delay(1.0 / (n * df), n, df);
  for (int i = 0; i < n; ++i) CHECK(std::abs(b(i) - oracle::expj(-2.0 * M_PI * i / n)) < 1e-12);

  // One grid step at the larger geometry.
  const double tau2 = 2.0 / (204 * df);
  CHECK(tau2 == doctest::Approx(8.1699e-8).epsilon(1e-4));
  const CVector b2 = steering_delay(tau2, 204, df);
  CHECK(std::abs(b2(1) - oracle::expj(-4.0 * M_PI / 204)) < 1e-12);
  CHECK(b2.squaredNorm() == doctest::Approx(204.0));
  for (int i = 0; i < 204; ++i) CHECK(std::abs(b2(i)) == doctest::Approx(1.0));
}

TEST_CASE("spatial steering") {
  CHECK((steering_space(0.0, 4) - CVector::Ones(4)).norm() == doctest::Approx(0.0));
  const CVector c = steering_space(2.0 / 4, 4);
  for (int i = 0; i < 4; ++i) CHECK(std::abs(c(i) - oracle::expj(-M_PI * i * 0.5)) < 1e-12);
  CHECK(std::abs(steering_space(1.0, 3)(2) - cplx(1.0, 0.0)) < 1e-12);
}

TEST_CASE("Doppler steering uses the positive phase sign") {
  const double dT = 2e-3;
  CHECK((steering_doppler(0.0, 5, dT) - CVector::Ones(5)).norm() == doctest::Approx(0.0));
  const int K = 4;
  const CVector d = steering_doppler(1.0 / (K * dT), K, dT);
  for (int i = 0; i < K; ++i) CHECK(std::abs(d(i) - oracle::expj(2.0 * M_PI * i / K)) < 1e-12);
  const GridSpec g = GridSpec::from_config(SystemConfig::desk_profile());
  CHECK(g.doppler_grid(g.n_doppler / 2) == doctest::Approx(0.0));
}

TEST_CASE("subband phase") {
  SystemConfig cfg = SystemConfig::paper_profile();
  CHECK(std::abs(subband_phase(0, 1e-7, 100.0, cfg) - cplx(1.0, 0.0)) < 1e-12);
  for (int l = 0; l < cfg.n_subbands; ++l) CHECK(std::abs(subband_phase(l, 0.0, 0.0, cfg) - cplx(1.0, 0.0)) < 1e-12);
  CHECK(cfg.subband_spacing() == doctest::Approx(24.48e6));
  const double expected = 2.0 * M_PI * (cfg.dt_srs * 100.0 - 2.448);
  const cplx got = subband_phase(1, 1e-7, 100.0, cfg);
  CHECK(std::abs(got - oracle::expj(expected)) < 1e-9);
  CHECK(std::abs(got) == doctest::Approx(1.0));
}

TEST_CASE("sinc kernel matches the normalized geometric sum") {
  for (int n : {1, 2, 4, 7, 16}) {
    for (double x : {-1.3, -1.0, -0.5, 0.0, 1e-13, 0.03, 0.125, 0.25, 0.5, 1.0, 2.0, 2.7}) {
      cplx sum = 0.0;
      for (int i = 0; i < n; ++i) sum += oracle::expj(-2.0 * M_PI * i * x);
      sum /= std::sqrt(static_cast<double>(n));
      CHECK(std::abs(sinc_kernel(x, n) - sum) < 1e-9);
      CHECK(std::abs(sinc_kernel(x, n)) <= std::sqrt(static_cast<double>(n)) + 1e-12);
    }
  }
  CHECK(std::abs(sinc_kernel(0.0, 9) - cplx(3.0, 0.0)) < 1e-12);
  for (int m = 1; m < 8; ++m) CHECK(std::abs(sinc_kernel(static_cast<double>(m) / 8, 8)) < 1e-12);
  const cplx v = sinc_kernel(0.125, 4);
  CHECK(std::abs(v) == doctest::Approx(1.3066).epsilon(1e-4));
  CHECK(std::arg(v) == doctest::Approx(-3.0 * M_PI / 8).epsilon(1e-9));
}

TEST_CASE("on-grid delay steering is one-hot in the DFT domain") {
  const int n = 16;
  const double df = 120e3;
  const CMatrix F = oracle::dft(n);
  for (int m = 0; m < n; ++m) {
    const CVector img = F.adjoint() * steering_delay(static_cast<double>(m) / (n * df), n, df) /
                        std::sqrt(static_cast<double>(n));
    for (int i = 0; i < n; ++i) {
      if (i == m) {
        CHECK(std::abs(img(i)) == doctest::Approx(std::sqrt(static_cast<double>(n))));
      } else {
        CHECK(std::abs(img(i)) < 1e-10);
      }
    }
  }
}

TEST_CASE("grids and configuration invariants") {
  const SystemConfig desk = SystemConfig::desk_profile();
  CHECK_NOTHROW(desk.validate());
  CHECK(desk.srs_len * desk.n_subbands * desk.n_comb == desk.n_sc);
  const GridSpec g = GridSpec::from_config(desk);
  CHECK(g.n_delay == 16);
  CHECK(g.n_doppler == 12);
  CHECK(g.columns() == 1536);
  CHECK(desk.rows() == 512);
  CHECK(g.delay_grid(0) == 0.0);
  CHECK(g.delay_grid(g.n_delay - 1) < 1.0 / desk.delta_f());
  CHECK(g.elev_cos_grid(0) == doctest::Approx(-1.0));
  CHECK(g.doppler_grid(0) == doctest::Approx(-1.0 / (2.0 * desk.dT_full)));
  CHECK(g.doppler_step() == doctest::Approx(1.0 / (12 * desk.dT_full)));

  SystemConfig bad = desk;
  bad.hop_schedule = {0, 0, 1, 2};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = desk;
  bad.n_sc += 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = desk;
  bad.m_h = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("offset clamping") {
  const GridSpec g = GridSpec::from_config(SystemConfig::desk_profile());
  OffGridParams w = OffGridParams::zeros(g);
  CHECK(w.is_zero());
  w.alpha(3) = 10.0 * g.delay_step();
  w.eta(0) = -10.0 * g.doppler_step();
  w.beta(1) = 0.1 * g.elev_step();
  w.clamp(g);
  CHECK(w.alpha(3) == doctest::Approx(0.5 * g.delay_step()));
  CHECK(w.eta(0) == doctest::Approx(-0.5 * g.doppler_step()));
  CHECK(w.beta(1) == doctest::Approx(0.1 * g.elev_step()));
  for (Axis a : kAllAxes) CHECK(axis_size(g, a) == w.axis(a).size());
  const Index j = g.column(3, 1, 2, 5);
  CHECK(axis_index(g, j, Axis::Delay) == 3);
  CHECK(axis_index(g, j, Axis::Elevation) == 1);
  CHECK(axis_index(g, j, Axis::Azimuth) == 2);
  CHECK(axis_index(g, j, Axis::Doppler) == 5);
}
