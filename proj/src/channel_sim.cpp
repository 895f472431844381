#include "jcep/channel.hpp"
#include "jcep/rng.hpp"
#include "jcep/steering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace jcep {

namespace {

constexpr double kSpeedOfLight = 299792458.0;

CVector kron(const CVector& a, const CVector& b) {
  CVector out(a.size() * b.size());
  for (Index i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a(i) * b;
  return out;
}

// Delay/space part of a path response, length N*M.
CVector space_freq_response(const Path& p, const SystemConfig& cfg) {
  return kron(kron(steering_delay(p.delay, cfg.srs_len, cfg.delta_f()), steering_space(p.elev_cos, cfg.m_v)),
              steering_space(p.azim_cos, cfg.m_h));
}

double max_delay(const Scenario& sc, const SystemConfig& cfg) {
  return sc.delay_spread > 0.0 ? sc.delay_spread : 1.0 / cfg.delta_f();
}

void add_rays(PathSet& out, const Path& base, const Scenario& sc, const SystemConfig& cfg, Rng& rng) {
  const double var = 1.0 / (static_cast<double>(sc.n_paths) * sc.subpaths);
  const double nu_lim = (1.0 - 1e-9) / (2.0 * cfg.dT_full);
  for (int s = 0; s < sc.subpaths; ++s) {
    Path p = base;
    if (sc.subpaths > 1 && sc.subpath_doppler_spread > 0.0)
      p.doppler = std::clamp(base.doppler + rng.uniform(-0.5, 0.5) * sc.subpath_doppler_spread, -nu_lim, nu_lim);
    p.gain = rng.cgauss(var);
    out.paths.push_back(p);
  }
}

}  // namespace

void Scenario::validate(const SystemConfig& cfg) const {
  if (n_paths < 1) throw ConfigError("scenario: paths must be >= 1");
  if (subpaths < 1) throw ConfigError("scenario: subpaths must be >= 1");
  if (doppler_max < 0.0) throw ConfigError("scenario: doppler_max must be non-negative");
  if (doppler_max >= 1.0 / (2.0 * cfg.dT_full))
    throw ConfigError("scenario: doppler_max must be below 1/(2 dT) to avoid Doppler aliasing");
  if (delay_spread < 0.0 || delay_spread > 1.0 / cfg.delta_f())
    throw ConfigError("scenario: delay_spread must lie in [0, 1/df]");
  if (subpath_doppler_spread < 0.0) throw ConfigError("scenario: subpath_doppler_spread must be non-negative");
}

double doppler_from_speed(double velocity_kmh, double carrier_freq) {
  return velocity_kmh / 3.6 * carrier_freq / kSpeedOfLight;
}

PathSet sample_paths(const Scenario& sc, const GridSpec& grid, const SystemConfig& cfg, std::uint64_t seed) {
  sc.validate(cfg);
  Rng rng(seed);
  PathSet out;
  if (sc.on_grid) {
    // Candidate vertices: nonzero delay bins up to the spread, all angle bins, Doppler
    // bins inside +-doppler_max.
    int n_max = grid.n_delay - 1;
    if (sc.delay_spread > 0.0)
      n_max = std::min(n_max, static_cast<int>(std::floor(sc.delay_spread / grid.delay_step() + 1e-9)));
    std::vector<int> doppler_bins;
    for (int k = 0; k < grid.n_doppler; ++k)
      if (std::abs(grid.doppler_grid(k)) <= sc.doppler_max + 1e-9) doppler_bins.push_back(k);
    const long long per_delay = static_cast<long long>(grid.n_angle()) * doppler_bins.size();
    const long long total = std::max(0, n_max) * per_delay;
    if (sc.n_paths > total)
      throw ConfigError("scenario: " + std::to_string(sc.n_paths) + " on-grid paths exceed the " +
                        std::to_string(total) + " admissible grid vertices");
    // Partial Fisher-Yates over the admissible vertex indices.
    std::vector<long long> idx(static_cast<std::size_t>(total));
    std::iota(idx.begin(), idx.end(), 0LL);
    for (int p = 0; p < sc.n_paths; ++p) {
      std::uniform_int_distribution<long long> pick(p, total - 1);
      std::swap(idx[p], idx[pick(rng.engine())]);
    }
    for (int p = 0; p < sc.n_paths; ++p) {
      long long v = idx[p];
      const int kb = static_cast<int>(v % static_cast<long long>(doppler_bins.size()));
      v /= static_cast<long long>(doppler_bins.size());
      const int mh = static_cast<int>(v % grid.n_azim);
      v /= grid.n_azim;
      const int mv = static_cast<int>(v % grid.n_elev);
      const int n = 1 + static_cast<int>(v / grid.n_elev);
      Path base;
      base.delay = grid.delay_grid(n);
      base.elev_cos = grid.elev_cos_grid(mv);
      base.azim_cos = grid.azim_cos_grid(mh);
      base.doppler = grid.doppler_grid(doppler_bins[kb]);
      add_rays(out, base, sc, cfg, rng);
    }
    return out;
  }
  const double tau_max = max_delay(sc, cfg);
  for (int p = 0; p < sc.n_paths; ++p) {
    Path base;
    base.delay = tau_max - rng.uniform(0.0, tau_max);  // (0, tau_max]
    // Directional cosines of a uniformly drawn direction in the front half-space.
    double u = 0.0, v = 0.0;
    do {
      u = rng.uniform(-1.0, 1.0);
      v = rng.uniform(-1.0, 1.0);
    } while (u * u + v * v > 1.0);
    base.elev_cos = u;
    base.azim_cos = v;
    base.doppler = rng.uniform(-sc.doppler_max, sc.doppler_max);
    add_rays(out, base, sc, cfg, rng);
  }
  return out;
}

CMatrix synth_fst_channel(const PathSet& paths, const SystemConfig& cfg) {
  CMatrix g = CMatrix::Zero(cfg.rows(), cfg.n_subbands);
  for (const Path& p : paths.paths) {
    const CVector r = path_response(p, cfg);
    for (int l = 0; l < cfg.n_subbands; ++l) g.col(l) += (p.gain * subband_phase(l, p.delay, p.doppler, cfg)) * r;
  }
  return g;
}

CMatrix synth_channel_at_times(const PathSet& paths, const SystemConfig& cfg, const std::vector<double>& times) {
  const Index nm = static_cast<Index>(cfg.srs_len) * cfg.n_antennas();
  CMatrix g = CMatrix::Zero(nm * static_cast<Index>(times.size()), cfg.n_subbands);
  for (const Path& p : paths.paths) {
    const CVector r = space_freq_response(p, cfg);
    for (std::size_t t = 0; t < times.size(); ++t) {
      const cplx time_phase = std::polar(1.0, 2.0 * kPi * times[t] * p.doppler);
      for (int l = 0; l < cfg.n_subbands; ++l)
        g.block(static_cast<Index>(t) * nm, l, nm, 1) +=
            (p.gain * time_phase * subband_phase(l, p.delay, p.doppler, cfg)) * r;
    }
  }
  return g;
}

CVector qpsk_pilots(int n, std::uint64_t seed) {
  Rng rng(seed);
  CVector s(n);
  const double h = std::sqrt(0.5);
  for (int i = 0; i < n; ++i) {
    const int sym = rng.uniform_int(0, 3);
    s(i) = cplx((sym & 1) ? -h : h, (sym & 2) ? -h : h);
  }
  return s;
}

ReceivedSignal synth_received(const CMatrix& g, const CVector& pilots, double snr_db, std::uint64_t seed) {
  if (pilots.size() != g.rows()) throw ConfigError("synth_received: pilot length must equal channel rows");
  for (Index i = 0; i < pilots.size(); ++i)
    if (std::abs(std::abs(pilots(i)) - 1.0) > 1e-9) throw ConfigError("synth_received: pilots must be unit modulus");
  const double energy = g.squaredNorm();
  if (!(energy > 0.0)) throw ConfigError("synth_received: zero-energy channel, SNR undefined");
  ReceivedSignal r;
  r.pilots = pilots;
  r.y = pilots.asDiagonal() * g;
  if (std::isinf(snr_db) && snr_db > 0.0) return r;
  r.noise_var = energy / (static_cast<double>(g.size()) * std::pow(10.0, snr_db / 10.0));
  Rng rng(seed);
  for (Index l = 0; l < g.cols(); ++l)
    for (Index i = 0; i < g.rows(); ++i) r.y(i, l) += rng.cgauss(r.noise_var);
  return r;
}

namespace {

// ||C_l - C_0||^2 against its null expectation (1/T) E||g_l g_l^H - g_0 g_0^H||^2.
double covariance_ratio(const CMatrix& g0, const CMatrix& gl) {
  const double t = static_cast<double>(g0.cols());
  const CMatrix diff = (gl * gl.adjoint() - g0 * g0.adjoint()) / t;
  double per_trial = 0.0;
  for (Index c = 0; c < g0.cols(); ++c) {
    const double a = g0.col(c).squaredNorm();
    const double b = gl.col(c).squaredNorm();
    per_trial += a * a + b * b - 2.0 * std::norm(g0.col(c).dot(gl.col(c)));
  }
  per_trial /= t;
  return diff.squaredNorm() / (per_trial / t);
}

}  // namespace

SubbandStats empirical_subband_stats(int trials, const Scenario& sc, const GridSpec& grid, const SystemConfig& cfg,
                                     std::uint64_t seed, int batches) {
  if (trials < 2 || batches < 2 || trials % batches != 0)
    throw ConfigError("empirical_subband_stats: trials must be a multiple of batches (both >= 2)");
  const int L = cfg.n_subbands;
  std::vector<CMatrix> cols(L, CMatrix(cfg.rows(), trials));
  for (int t = 0; t < trials; ++t) {
    const CMatrix g = synth_fst_channel(sample_paths(sc, grid, cfg, derive_seed(seed, t)), cfg);
    for (int l = 0; l < L; ++l) cols[l].col(t) = g.col(l);
  }
  SubbandStats st;
  st.trials = trials;
  for (int l = 0; l < L; ++l) st.covariance.push_back(cols[l] * cols[l].adjoint() / static_cast<double>(trials));
  st.cov_ratio.resize(L - 1);
  st.cov_ratio_batch_sd.resize(L - 1);
  const int bsize = trials / batches;
  for (int l = 1; l < L; ++l) {
    st.cov_ratio(l - 1) = covariance_ratio(cols[0], cols[l]);
    RVector rb(batches);
    for (int b = 0; b < batches; ++b)
      rb(b) = covariance_ratio(cols[0].middleCols(b * bsize, bsize), cols[l].middleCols(b * bsize, bsize));
    const double mean = rb.mean();
    st.cov_ratio_batch_sd(l - 1) = std::sqrt((rb.array() - mean).square().sum() / (batches - 1));
  }
  std::vector<double> z;
  for (int a = 0; a < L; ++a)
    for (int b = a + 1; b < L; ++b) {
      double worst = 0.0;
      for (Index i = 0; i < cfg.rows(); ++i) {
        const CVector x = (cols[a].row(i).transpose().array() * cols[b].row(i).adjoint().array()).matrix();
        const cplx m = x.mean();
        const double var = (x.array() - m).abs2().sum() / (trials - 1);
        const double se = std::sqrt(var / trials);
        if (se > 0.0) worst = std::max(worst, std::abs(m) / se);
      }
      z.push_back(worst);
    }
  st.max_cross_z = Eigen::Map<RVector>(z.data(), static_cast<Index>(z.size()));
  return st;
}

}  // namespace jcep
