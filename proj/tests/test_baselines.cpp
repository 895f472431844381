#include <doctest.h>

#include "jcep/baselines.hpp"
#include "jcep/channel.hpp"
#include "jcep/predict.hpp"
#include "jcep/rng.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <set>

using namespace jcep;

namespace {

SystemConfig small_config() {
  SystemConfig c = SystemConfig::desk_profile();
  c.srs_len = 8;
  c.n_sc = 8 * 4 * 4;
  c.n_fft = 256;
  c.m_h = 2;
  c.doppler_oversample = 2;
  return c;
}

CMatrix random_cmatrix(Index r, Index c, Rng& rng) {
  CMatrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.cgauss(1.0);
  return m;
}

std::set<Index> as_set(const std::vector<Index>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_CASE("OMP examples") {
  const SystemConfig c = small_config();
  const GridSpec g = GridSpec::from_config(c);
  const DictionarySet d = build_dictionary(g, c);
  const CVector s = qpsk_pilots(static_cast<int>(d.rows()), 1);
  const CMatrix A = s.asDiagonal() * d.W;

  SUBCASE("single atom, exact recovery") {
    const Index j = g.column(3, 1, 0, 5);
    const cplx h(0.3, -1.2);
    const GreedyResult r = omp(h * A.col(j), s, d.W, {1});
    REQUIRE(r.support.size() == 1);
    CHECK(r.support[0] == j);
    CHECK(std::abs(r.coefficients(0, 0) - h) < 1e-8);
  }

  SUBCASE("zero measurement gives an empty support") {
    const GreedyResult r = omp(CVector::Zero(d.rows()), s, d.W, {3});
    CHECK(r.support.empty());
    CHECK(r.coefficients.rows() == 0);
    CHECK(greedy_to_dad(r, d.cols(), 1).norm() == 0.0);
  }

  SUBCASE("three atoms on distinct delay bins") {
    // Atoms on different delay bins are orthogonal when the delay grid is not oversampled.
    const std::vector<Index> truth = {g.column(1, 0, 1, 2), g.column(4, 1, 0, 7), g.column(6, 1, 1, 0)};
    double coherence = 0.0;
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = a + 1; b < 3; ++b)
        coherence = std::max(coherence, std::abs(A.col(truth[a]).dot(A.col(truth[b]))) / A.col(truth[a]).squaredNorm());
    REQUIRE(coherence < 1e-12);
    const CVector y = A.col(truth[0]) * 1.0 + A.col(truth[1]) * cplx(0.0, 0.7) - A.col(truth[2]) * 0.5;
    const GreedyResult r = omp(y, s, d.W, {3});
    CHECK(as_set(r.support) == as_set(truth));
    CHECK(r.residual_norms.back() < 1e-10 * y.norm());
  }

  SUBCASE("k = 0 and invalid sparsity") {
    CHECK(omp(A.col(0), s, d.W, {0}).support.empty());
    CHECK_THROWS_AS(omp(A.col(0), s, d.W, {-1}), ConfigError);
    CHECK_THROWS_AS(omp(A.col(0).head(5), s, d.W, {1}), ConfigError);
  }

  SUBCASE("residual stop") {
    const CVector y = A.col(10) + 0.5 * A.col(200);
    GreedyStop stop;
    stop.residual_sq_stop = 1e-6 * y.squaredNorm();
    const GreedyResult r = omp(y, s, d.W, stop);
    CHECK(r.support.size() >= 2);
    CHECK(r.residual_norms.back() * r.residual_norms.back() <= stop.residual_sq_stop);
  }
}

TEST_CASE("OMP residual is orthogonal to the selected atoms") {
  const SystemConfig c = small_config();
  const GridSpec g = GridSpec::from_config(c);
  const DictionarySet d = build_dictionary(g, c);
  const CVector s = qpsk_pilots(static_cast<int>(d.rows()), 2);
  const CMatrix A = s.asDiagonal() * d.W;
  Rng rng(3);
  const CVector y = random_cmatrix(d.rows(), 1, rng);
  for (int k = 1; k <= 6; ++k) {
    const GreedyResult r = omp(y, s, d.W, {k});
    CMatrix As(A.rows(), static_cast<Index>(r.support.size()));
    for (std::size_t c2 = 0; c2 < r.support.size(); ++c2) As.col(static_cast<Index>(c2)) = A.col(r.support[c2]);
    const CVector res = y - As * r.coefficients;
    CHECK(res.norm() == doctest::Approx(r.residual_norms.back()).epsilon(1e-10));
    CHECK((As.adjoint() * res).norm() <= 1e-8 * As.norm() * res.norm());
  }
}

TEST_CASE("greedy tie-breaking and rank deficiency") {
  CMatrix W = CMatrix::Zero(3, 3);
  W(0, 0) = 1.0;
  W(1, 1) = 1.0;
  W(0, 2) = 1.0;
  W(1, 2) = 1.0;
  const CVector s = CVector::Ones(3);
  SUBCASE("equal scores pick the lowest index") {
    CVector y(3);
    y << 1.0, 1.0, 0.0;
    CMatrix Wt = CMatrix::Identity(3, 3);
    const GreedyResult r = omp(y, s, Wt, {1});
    CHECK(r.support[0] == 0);
  }
  SUBCASE("an atom in the span of the support is dropped") {
    CVector y(3);
    y << 2.0, 1.0, 1.0;
    const GreedyResult r = omp(y, s, W, {3});
    CHECK(r.dropped.size() == 1);
    CHECK(r.support.size() == 2);
  }
}

TEST_CASE("SOMP") {
  const SystemConfig c = small_config();
  const GridSpec g = GridSpec::from_config(c);
  const DictionarySet d = build_dictionary(g, c);
  const CVector s = qpsk_pilots(static_cast<int>(d.rows()), 4);
  Rng rng(5);

  SUBCASE("one column is OMP") {
    for (int t = 0; t < 5; ++t) {
      const CVector y = random_cmatrix(d.rows(), 1, rng);
      const GreedyResult a = omp(y, s, d.W, {4});
      const GreedyResult b = somp(CMatrix(y), s, d.W, {4});
      CHECK(a.support == b.support);
      CHECK(a.coefficients == b.coefficients);
    }
  }

  SUBCASE("identical columns select the OMP support") {
    const CVector y = random_cmatrix(d.rows(), 1, rng);
    const CMatrix Y = y.replicate(1, 4);
    CHECK(somp(Y, s, d.W, {5}).support == omp(y, s, d.W, {5}).support);
    CHECK(somp(Y, s, d.W, {0}).support.empty());
  }

  SUBCASE("joint support recovery beats per-column recovery") {
    const CMatrix A = s.asDiagonal() * d.W;
    int omp_hits = 0, somp_hits = 0;
    const int trials = 100;
    for (int t = 0; t < trials; ++t) {
      std::set<Index> truth;
      while (truth.size() < 4) truth.insert(rng.uniform_int(0, static_cast<int>(d.cols()) - 1));
      CMatrix Y = CMatrix::Zero(d.rows(), 4);
      for (Index j : truth)
        for (int l = 0; l < 4; ++l) Y.col(l) += rng.cgauss(1.0) * A.col(j);
      const double nv = Y.squaredNorm() / static_cast<double>(Y.size()) / std::pow(10.0, 0.5);
      for (Index i = 0; i < Y.size(); ++i) Y.data()[i] += rng.cgauss(nv);
      if (as_set(somp(Y, s, d.W, {4}).support) == truth) ++somp_hits;
      bool all = true;
      for (int l = 0; l < 4; ++l) all = all && as_set(omp(Y.col(l), s, d.W, {4}).support) == truth;
      if (all) ++omp_hits;
    }
    MESSAGE("exact support: SOMP " << somp_hits << ", OMP " << omp_hits << " of " << trials);
    CHECK(somp_hits >= omp_hits);
  }
}

TEST_CASE("EM-BG-AMP") {
  const SystemConfig c = small_config();
  const GridSpec g = GridSpec::from_config(c);
  const DictionarySet d = build_dictionary(g, c);
  Scenario sc;
  sc.n_paths = 3;
  sc.doppler_max = 0.4 / c.dT_full;
  const CMatrix G = synth_fst_channel(sample_paths(sc, g, c, 9), c);
  const ReceivedSignal rx = synth_received(G, qpsk_pilots(static_cast<int>(c.rows()), 10), 15.0, 11);

  SUBCASE("dense and operator forms agree") {
    AmpOptions o;
    const EstimateResult a = em_bg_amp(rx.y, rx.pilots, rx.noise_var, d.W, o);
    const OffGridOperator op(d, OffGridParams::zeros(g), OffGridOperator::Mode::Factored);
    const EstimateResult b = em_bg_amp(rx.y, rx.pilots, rx.noise_var, op, o);
    CHECK(a.iterations == b.iterations);
    CHECK(oracle::rel_err(b.h_hat, a.h_hat) < 1e-9);
    CHECK(oracle::rel_err(b.g_hat, a.g_hat) < 1e-9);
  }

  SUBCASE("one column: joint and independent modes coincide") {
    AmpOptions o;
    const CMatrix y = rx.y.col(1);
    o.mmv = true;
    const EstimateResult a = em_bg_amp(y, rx.pilots, rx.noise_var, d.W, o);
    o.mmv = false;
    const EstimateResult b = em_bg_amp(y, rx.pilots, rx.noise_var, d.W, o);
    CHECK(a.h_hat == b.h_hat);
    CHECK(a.llr == b.llr);
  }

  SUBCASE("estimates improve on the measurement") {
    const EstimateResult a = em_bg_amp(rx.y, rx.pilots, rx.noise_var, d.W, AmpOptions{});
    // Matched-filter estimate conj(s) y has NMSE equal to 1/SNR (-15 dB).
    CHECK(nmse_db(G, a.g_hat) < -15.0);
  }

  SUBCASE("shape errors") {
    CHECK_THROWS_AS(em_bg_amp(rx.y.topRows(4), rx.pilots, rx.noise_var, d.W, AmpOptions{}), ConfigError);
  }
}
