#include <doctest.h>

#include "jcep/channel.hpp"
#include "jcep/hyper.hpp"
#include "jcep/rng.hpp"
#include "oracles.hpp"

using namespace jcep;

namespace {

// A posterior snapshot with a few strong grid points, weak background and a
// measurement-side mean that does not match W mu_h exactly.
PosteriorMoments random_moments(const DictionarySet& d, std::uint64_t seed, int L = 4) {
  Rng rng(seed);
  PosteriorMoments m;
  m.mu_h = CMatrix::Zero(d.cols(), L);
  for (int s = 0; s < 6; ++s) {
    const Index j = rng.uniform_int(0, static_cast<int>(d.cols()) - 1);
    for (int l = 0; l < L; ++l) m.mu_h(j, l) = rng.cgauss(1.0);
  }
  for (Index j = 0; j < d.cols(); ++j)
    for (int l = 0; l < L; ++l) m.mu_h(j, l) += rng.cgauss(1e-4);
  m.sigma_h.resize(d.cols());
  for (Index j = 0; j < d.cols(); ++j) m.sigma_h(j) = rng.uniform(0.0, 1e-3);
  m.mu_g = d.W * m.mu_h;
  for (Index i = 0; i < m.mu_g.size(); ++i) m.mu_g.data()[i] += rng.cgauss(0.5);
  return m;
}

OffGridParams small_offsets(const GridSpec& g, std::uint64_t seed, double frac) {
  Rng rng(seed);
  OffGridParams w = OffGridParams::zeros(g);
  for (Axis a : kAllAxes)
    for (Index i = 0; i < w.axis(a).size(); ++i) w.axis(a)(i) = rng.uniform(-frac, frac) * half_spacing(g, a);
  return w;
}

double objective_at(const RVector& x, Axis a, const PosteriorMoments& m, const DictionarySet& d,
                    const OffGridParams& w) {
  return em_offgrid_objective(x, a, m, d, w);
}

RVector fd_gradient(const RVector& x0, Axis a, const PosteriorMoments& m, const DictionarySet& d,
                    const OffGridParams& w) {
  const double h = 1e-3 * half_spacing(d.grid, a);
  RVector grad(x0.size());
  for (Index i = 0; i < x0.size(); ++i) {
    RVector xp = x0, xm = x0;
    xp(i) += h;
    xm(i) -= h;
    grad(i) = (objective_at(xp, a, m, d, w) - objective_at(xm, a, m, d, w)) / (2.0 * h);
  }
  return grad;
}

}  // namespace

TEST_CASE("sparsity-rate update") {
  CHECK(update_rho(RVector::Constant(10, 0.5)) == doctest::Approx(0.5));
  CHECK(update_rho(RVector::Zero(10)) == kRhoMin);
  CHECK(update_rho(RVector::Ones(10)) == kRhoMax);
  RVector one_hot = RVector::Zero(100);
  one_hot(17) = 1.0;
  CHECK(update_rho(one_hot) == doctest::Approx(0.01));
}

TEST_CASE("slab-variance updates") {
  CHECK(update_sigma(CMatrix::Zero(3, 4), RMatrix::Ones(3, 4)).isApprox(RVector::Ones(3)));
  CHECK(update_sigma(CMatrix::Constant(1, 1, 1.0), RMatrix::Zero(1, 1))(0) == doctest::Approx(1.0));
  CMatrix mu(1, 2);
  mu << cplx(1.0, 0.0), cplx(0.0, 1.0);
  CHECK(update_sigma(mu, RMatrix::Constant(1, 2, 0.5))(0) == doctest::Approx(1.5));

  // Pooled: second moments over the expected number of active entries.
  CMatrix m2 = CMatrix::Zero(4, 2);
  m2(0, 0) = 2.0;
  m2(0, 1) = cplx(0.0, 2.0);
  RMatrix t2 = RMatrix::Zero(4, 2);
  t2(1, 0) = 0.5;
  RVector z(4);
  z << 1.0, 0.5, 0.0, 0.0;
  CHECK(update_sigma_pooled(m2, t2, z) == doctest::Approx((4.0 + 4.0 + 0.5) / (2.0 * 1.5)));
  CHECK(update_sigma_pooled(m2, t2, RVector::Zero(4)) == 0.0);
  CHECK_THROWS_AS(update_sigma_pooled(m2, t2, RVector::Zero(3)), ConfigError);
}

TEST_CASE("EM objective") {
  const SystemConfig c = SystemConfig::desk_profile();
  const GridSpec g = GridSpec::from_config(c);
  const DictionarySet d = build_dictionary(g, c);

  SUBCASE("noiseless on-grid data leaves only the trace term") {
    PosteriorMoments m = random_moments(d, 1);
    m.mu_g = d.W * m.mu_h;
    const double trace = m.sigma_h.sum() * static_cast<double>(c.rows());
    for (Axis a : kAllAxes)
      CHECK(em_offgrid_objective(RVector::Zero(axis_size(g, a)), a, m, d, OffGridParams::zeros(g)) ==
            doctest::Approx(trace).epsilon(1e-10));
  }

  SUBCASE("the objective is quadratic in each axis") {
    const PosteriorMoments m = random_moments(d, 2);
    const OffGridParams w = small_offsets(g, 3, 0.3);
    for (Axis a : kAllAxes) {
      const Index n = axis_size(g, a);
      Rng rng(5);
      RVector dir(n);
      for (Index i = 0; i < n; ++i) dir(i) = rng.uniform(-1, 1) * half_spacing(g, a);
      std::vector<double> second;
      for (double s : {-0.4, 0.0, 0.3}) {
        const double h = 0.1;
        const double f0 = objective_at(s * dir, a, m, d, w);
        const double fp = objective_at((s + h) * dir, a, m, d, w);
        const double fm = objective_at((s - h) * dir, a, m, d, w);
        second.push_back((fp - 2.0 * f0 + fm) / (h * h));
      }
      CHECK(second[1] == doctest::Approx(second[0]).epsilon(1e-6));
      CHECK(second[2] == doctest::Approx(second[0]).epsilon(1e-6));
    }
  }
}

TEST_CASE("exact quadratic form agrees with the objective") {
  const SystemConfig c = SystemConfig::desk_profile();
  const GridSpec g = GridSpec::from_config(c);
  const DictionarySet d = build_dictionary(g, c);
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const PosteriorMoments m = random_moments(d, seed);
    const OffGridParams w = small_offsets(g, seed + 10, 0.3);
    for (Axis a : kAllAxes) {
      const QuadraticForm qf = build_quadratic_exact(a, m, d, w);
      const Index n = axis_size(g, a);
      CHECK((qf.Xi - qf.Xi.transpose()).norm() <= 1e-12 * qf.Xi.norm());
      const RVector grad = fd_gradient(RVector::Zero(n), a, m, d, w);
      CHECK(oracle::rel_err(RMatrix(-2.0 * qf.chi), RMatrix(grad)) < 1e-5);
      if (seed > 1) continue;
      // Hessian column 0 from differences of the gradient.
      RVector e = RVector::Zero(n);
      e(0) = 0.2 * half_spacing(g, a);
      const RVector hcol = (fd_gradient(e, a, m, d, w) - fd_gradient(-e, a, m, d, w)) / (2.0 * e(0));
      CHECK(oracle::rel_err(RMatrix(2.0 * qf.Xi.col(0)), RMatrix(hcol)) < 1e-4);
    }
  }

  SUBCASE("zero moments give zero forms") {
    PosteriorMoments z;
    z.mu_g = CMatrix::Zero(d.rows(), 4);
    z.mu_h = CMatrix::Zero(d.cols(), 4);
    z.sigma_h = RVector::Zero(d.cols());
    for (Axis a : kAllAxes) {
      const QuadraticForm qe = build_quadratic_exact(a, z, d, OffGridParams::zeros(g));
      CHECK(qe.Xi.norm() == 0.0);
      CHECK(qe.chi.norm() == 0.0);
    }
  }

  SUBCASE("a single active point drives only its own delay slice") {
    PosteriorMoments m;
    const Index j = g.column(6, 1, 2, 4);
    m.mu_h = CMatrix::Zero(d.cols(), 4);
    m.mu_h.row(j).setConstant(cplx(1.0, 0.5));
    OffGridParams truth = OffGridParams::zeros(g);
    truth.alpha(6) = 0.2 * g.delay_step();
    m.mu_g = exact_W(g, truth, c) * m.mu_h;
    m.sigma_h = RVector::Zero(d.cols());
    const QuadraticForm qf = build_quadratic_exact(Axis::Delay, m, d, OffGridParams::zeros(g));
    Index arg;
    qf.chi.cwiseAbs().maxCoeff(&arg);
    CHECK(arg == 6);
    for (Index i = 0; i < qf.chi.size(); ++i)
      if (i != 6) CHECK(std::abs(qf.chi(i)) < 1e-9 * std::abs(qf.chi(6)));
  }
}

TEST_CASE("fast quadratic forms") {
  const SystemConfig c = SystemConfig::desk_profile();
  SUBCASE("match the exact forms when the Doppler grid is not oversampled") {
    const GridSpec g = GridSpec::from_config(c, c.n_soundings);
    const DictionarySet d = build_dictionary(g, c);
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const PosteriorMoments m = random_moments(d, seed);
      for (Axis a : kAllAxes) {
        const QuadraticForm e = build_quadratic_exact(a, m, d, OffGridParams::zeros(g));
        const QuadraticForm f = build_quadratic_fast(a, m, d, OffGridParams::zeros(g));
        CHECK(oracle::rel_err(f.Xi, e.Xi) < 1e-6);
        CHECK(oracle::rel_err(RMatrix(f.chi), RMatrix(e.chi)) < 1e-6);
      }
    }
  }
  SUBCASE("match the exact forms on the oversampled grid with offsets on other axes") {
    const GridSpec g = GridSpec::from_config(c);
    const DictionarySet d = build_dictionary(g, c);
    const PosteriorMoments m = random_moments(d, 8);
    const OffGridParams w = small_offsets(g, 9, 0.3);
    for (Axis a : kAllAxes) {
      const QuadraticForm e = build_quadratic_exact(a, m, d, w);
      const QuadraticForm f = build_quadratic_fast(a, m, d, w);
      CHECK(oracle::rel_err(f.Xi, e.Xi) < 1e-8);
      CHECK(oracle::rel_err(RMatrix(f.chi), RMatrix(e.chi)) < 1e-8);
    }
  }
  SUBCASE("grids that break the premises are rejected") {
    SystemConfig c2 = c;
    const GridSpec g = GridSpec::from_config(c2);
    DictionarySet d = build_dictionary(g, c2);
    d.grid.n_delay = 8;
    PosteriorMoments m = random_moments(build_dictionary(g, c2), 1);
    CHECK_THROWS_AS(build_quadratic_fast(Axis::Delay, m, d, OffGridParams::zeros(g)), ConfigError);
  }
}

TEST_CASE("axis solve") {
  const GridSpec g = GridSpec::from_config(SystemConfig::desk_profile());
  QuadraticForm qf{2.0 * RMatrix::Identity(2, 2), RVector::Zero(2)};
  CHECK(solve_offgrid_axis(qf, g, Axis::Elevation).norm() == 0.0);
  qf.chi << 1.0, 0.0;
  const RVector x = solve_offgrid_axis(qf, g, Axis::Elevation, false, 0.0);
  CHECK(x(0) == doctest::Approx(0.5));
  CHECK(x(1) == doctest::Approx(0.0));
  CHECK(solve_offgrid_axis(qf, g, Axis::Elevation)(0) == doctest::Approx(0.5).epsilon(1e-6));
  qf.chi << 100.0, -100.0;
  const RVector xc = solve_offgrid_axis(qf, g, Axis::Elevation);
  CHECK(xc(0) == doctest::Approx(half_spacing(g, Axis::Elevation)));
  CHECK(xc(1) == doctest::Approx(-half_spacing(g, Axis::Elevation)));
  QuadraticForm zero{RMatrix::Zero(2, 2), RVector::Ones(2)};
  CHECK(solve_offgrid_axis(zero, g, Axis::Elevation).norm() == 0.0);
  QuadraticForm bad{RMatrix::Identity(2, 2), RVector::Constant(2, std::nan(""))};
  CHECK_THROWS_AS(solve_offgrid_axis(bad, g, Axis::Elevation), ConfigError);
}

TEST_CASE("solved offsets minimize the objective") {
  const SystemConfig c = SystemConfig::desk_profile();
  const GridSpec g = GridSpec::from_config(c);
  const DictionarySet d = build_dictionary(g, c);
  const PosteriorMoments m = random_moments(d, 4);
  const OffGridParams w = OffGridParams::zeros(g);
  for (Axis a : kAllAxes) {
    const QuadraticForm qf = build_quadratic_exact(a, m, d, w);
    const RVector x = solve_offgrid_axis(qf, g, a, false, 0.0);
    const Index n = x.size();
    const double f0 = objective_at(RVector::Zero(n), a, m, d, w);
    const double fx = objective_at(x, a, m, d, w);
    CHECK(fx <= f0);
    // Stationarity of the unclamped, unregularized solution.
    const RVector grad = fd_gradient(x, a, m, d, w);
    CHECK(grad.norm() <= 1e-5 * std::abs(f0));
    for (Index i = 0; i < n; ++i)
      for (double s : {-0.1, 0.1}) {
        RVector xp = x;
        xp(i) += s * 2.0 * half_spacing(g, a);
        CHECK(objective_at(xp, a, m, d, w) >= fx);
      }
    // Descent also holds for the clamped solution.
    CHECK(objective_at(solve_offgrid_axis(qf, g, a), a, m, d, w) <= f0);
  }
}

TEST_CASE("offset update sweep") {
  const SystemConfig c = SystemConfig::desk_profile();
  const GridSpec g = GridSpec::from_config(c);
  const DictionarySet d = build_dictionary(g, c);

  SUBCASE("zero signal keeps zero offsets") {
    PosteriorMoments z;
    z.mu_g = CMatrix::Zero(d.rows(), 4);
    z.mu_h = CMatrix::Zero(d.cols(), 4);
    z.sigma_h = RVector::Zero(d.cols());
    for (auto mode : {OffGridMode::Exact, OffGridMode::Fast}) CHECK(update_offgrid(z, d, OffGridParams::zeros(g), mode).is_zero());
  }

  SUBCASE("on-grid truth keeps offsets small") {
    Scenario sc;
    sc.n_paths = 3;
    sc.on_grid = true;
    sc.doppler_max = 0.45 / c.dT_full;
    const PathSet ps = sample_paths(sc, g, c, 6);
    PosteriorMoments m;
    m.mu_h = CMatrix::Zero(d.cols(), c.n_subbands);
    const CMatrix G = synth_fst_channel(ps, c);
    // Least-squares DAD coefficients on the true support.
    std::vector<Index> sup;
    for (const Path& p : ps.paths) {
      int n = 0, mv = 0, mh = 0, k = 0;
      (g.delay_grid.array() - p.delay).abs().minCoeff(&n);
      (g.elev_cos_grid.array() - p.elev_cos).abs().minCoeff(&mv);
      (g.azim_cos_grid.array() - p.azim_cos).abs().minCoeff(&mh);
      (g.doppler_grid.array() - p.doppler).abs().minCoeff(&k);
      sup.push_back(g.column(n, mv, mh, k));
    }
    CMatrix A(d.rows(), 3);
    for (int s = 0; s < 3; ++s) A.col(s) = d.W.col(sup[s]);
    const CMatrix coef = A.colPivHouseholderQr().solve(G);
    for (int s = 0; s < 3; ++s) m.mu_h.row(sup[s]) = coef.row(s);
    m.mu_g = G;
    m.sigma_h = RVector::Zero(d.cols());
    for (auto mode : {OffGridMode::Exact, OffGridMode::Fast}) {
      OffGridParams w = OffGridParams::zeros(g);
      for (int r = 0; r < 3; ++r) w = update_offgrid(m, d, w, mode);
      double num = 0.0, den = 0.0;
      for (Axis a : kAllAxes) {
        num += w.axis(a).squaredNorm() / std::pow(2.0 * half_spacing(g, a), 2);
        den += static_cast<double>(axis_size(g, a));
      }
      CHECK(std::sqrt(num / den) < 0.1);
    }
  }
}
