#include "jcep/steering.hpp"
#include "jcep/types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace jcep {

namespace {

// Kronecker product of dense column vectors, left factor varies slowest.
CVector kron(const CVector& a, const CVector& b) {
  CVector out(a.size() * b.size());
  for (Index i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a(i) * b;
  return out;
}

}  // namespace

void SystemConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("SystemConfig: " + what);
  };
  require(n_fft >= 1 && n_sc >= 1 && n_subbands >= 1 && n_comb >= 1, "counts must be >= 1");
  require(srs_len >= 1 && m_v >= 1 && m_h >= 1, "counts must be >= 1");
  require(n_soundings >= 1 && doppler_oversample >= 1, "counts must be >= 1");
  require(srs_len * n_subbands * n_comb == n_sc, "srs_len * n_subbands * n_comb must equal n_sc");
  require(n_sc <= n_fft, "n_sc must not exceed n_fft");
  require(subcarrier_spacing > 0.0, "subcarrier_spacing must be positive");
  require(dt_srs >= 0.0 && dT_full > 0.0, "timing intervals must be positive");
  require(static_cast<int>(hop_schedule.size()) == n_subbands, "hop_schedule must have n_subbands entries");
  std::vector<int> sorted = hop_schedule;
  std::sort(sorted.begin(), sorted.end());
  for (int l = 0; l < n_subbands; ++l)
    require(sorted[l] == l, "hop_schedule must be a permutation of 0..L-1");
  require(noise_var >= 0.0, "noise_var must be non-negative");
}

SystemConfig SystemConfig::paper_profile() {
  SystemConfig c;
  c.n_fft = 4096;
  c.n_sc = 3264;
  c.subcarrier_spacing = 30e3;
  c.n_subbands = 4;
  c.n_comb = 4;
  c.srs_len = 204;
  c.m_v = 4;
  c.m_h = 8;
  c.n_soundings = 10;
  c.doppler_oversample = 3;
  c.dt_srs = c.symbol_duration();
  c.dT_full = 4.0 * c.slot_duration();
  c.hop_schedule = {0, 1, 2, 3};
  c.carrier_freq = 3.5e9;
  return c;
}

SystemConfig SystemConfig::desk_profile() {
  SystemConfig c = paper_profile();
  c.srs_len = 16;
  c.n_sc = 16 * 4 * 4;
  c.n_fft = 512;
  c.m_v = 2;
  c.m_h = 4;
  c.n_soundings = 4;
  return c;
}

double GridSpec::delay_step() const { return delay_grid.size() > 1 ? delay_grid(1) - delay_grid(0) : 0.0; }

double GridSpec::doppler_step() const {
  return doppler_grid.size() > 1 ? doppler_grid(1) - doppler_grid(0) : 0.0;
}

GridSpec GridSpec::from_config(const SystemConfig& cfg) {
  return from_config(cfg, cfg.doppler_oversample * cfg.n_soundings);
}

GridSpec GridSpec::from_config(const SystemConfig& cfg, int n_doppler) {
  if (n_doppler < 1) throw ConfigError("GridSpec: n_doppler must be >= 1");
  GridSpec g;
  g.n_delay = cfg.srs_len;
  g.n_elev = cfg.m_v;
  g.n_azim = cfg.m_h;
  g.n_doppler = n_doppler;
  const double df = cfg.delta_f();
  g.delay_grid = RVector::LinSpaced(g.n_delay, 0, g.n_delay - 1) / (g.n_delay * df);
  g.elev_cos_grid = RVector::LinSpaced(g.n_elev, 0, g.n_elev - 1) * (2.0 / g.n_elev) - RVector::Ones(g.n_elev);
  g.azim_cos_grid = RVector::LinSpaced(g.n_azim, 0, g.n_azim - 1) * (2.0 / g.n_azim) - RVector::Ones(g.n_azim);
  g.doppler_grid.resize(n_doppler);
  for (int k = 0; k < n_doppler; ++k)
    g.doppler_grid(k) = (k - n_doppler / 2.0) / (n_doppler * cfg.dT_full);
  return g;
}

void GridSpec::validate_against(const SystemConfig& cfg) const {
  if (n_delay != cfg.srs_len || n_elev != cfg.m_v || n_azim != cfg.m_h) {
    std::ostringstream os;
    os << "GridSpec: delay/angle grid sizes (" << n_delay << "," << n_elev << "," << n_azim
       << ") must equal (N, M_v, M_h) = (" << cfg.srs_len << "," << cfg.m_v << "," << cfg.m_h << ")";
    throw ConfigError(os.str());
  }
  if (n_doppler < 1) throw ConfigError("GridSpec: empty Doppler grid");
  if (delay_grid.size() != n_delay || elev_cos_grid.size() != n_elev || azim_cos_grid.size() != n_azim ||
      doppler_grid.size() != n_doppler)
    throw ConfigError("GridSpec: grid arrays do not match grid sizes");
}

const char* axis_name(Axis axis) {
  switch (axis) {
    case Axis::Delay: return "alpha";
    case Axis::Elevation: return "beta";
    case Axis::Azimuth: return "gamma";
    case Axis::Doppler: return "eta";
  }
  return "?";
}

OffGridParams OffGridParams::zeros(const GridSpec& grid) {
  OffGridParams w;
  w.alpha = RVector::Zero(grid.n_delay);
  w.beta = RVector::Zero(grid.n_elev);
  w.gamma = RVector::Zero(grid.n_azim);
  w.eta = RVector::Zero(grid.n_doppler);
  return w;
}

RVector& OffGridParams::axis(Axis a) {
  switch (a) {
    case Axis::Delay: return alpha;
    case Axis::Elevation: return beta;
    case Axis::Azimuth: return gamma;
    case Axis::Doppler: return eta;
  }
  return alpha;
}

const RVector& OffGridParams::axis(Axis a) const { return const_cast<OffGridParams*>(this)->axis(a); }

bool OffGridParams::is_zero() const {
  for (Axis a : kAllAxes)
    if (axis(a).size() > 0 && axis(a).cwiseAbs().maxCoeff() != 0.0) return false;
  return true;
}

void OffGridParams::clamp(const GridSpec& grid) {
  for (Axis a : kAllAxes) {
    const double h = half_spacing(grid, a);
    axis(a) = axis(a).cwiseMax(-h).cwiseMin(h);
  }
}

double half_spacing(const GridSpec& grid, Axis axis) {
  switch (axis) {
    case Axis::Delay: return 0.5 * grid.delay_step();
    case Axis::Elevation: return 0.5 * grid.elev_step();
    case Axis::Azimuth: return 0.5 * grid.azim_step();
    case Axis::Doppler: return 0.5 * grid.doppler_step();
  }
  return 0.0;
}

int axis_size(const GridSpec& grid, Axis axis) {
  switch (axis) {
    case Axis::Delay: return grid.n_delay;
    case Axis::Elevation: return grid.n_elev;
    case Axis::Azimuth: return grid.n_azim;
    case Axis::Doppler: return grid.n_doppler;
  }
  return 0;
}

int axis_index(const GridSpec& grid, Index column, Axis axis) {
  const Index k = column % grid.n_doppler;
  Index rest = column / grid.n_doppler;
  const Index mh = rest % grid.n_azim;
  rest /= grid.n_azim;
  const Index mv = rest % grid.n_elev;
  const Index n = rest / grid.n_elev;
  switch (axis) {
    case Axis::Delay: return static_cast<int>(n);
    case Axis::Elevation: return static_cast<int>(mv);
    case Axis::Azimuth: return static_cast<int>(mh);
    case Axis::Doppler: return static_cast<int>(k);
  }
  return 0;
}

CVector steering_delay(double tau, int n_entries, double delta_f) {
  CVector v(n_entries);
  for (int n = 0; n < n_entries; ++n) v(n) = std::polar(1.0, -2.0 * kPi * n * delta_f * tau);
  return v;
}

CVector steering_space(double u, int n_entries) {
  CVector v(n_entries);
  for (int n = 0; n < n_entries; ++n) v(n) = std::polar(1.0, -kPi * n * u);
  return v;
}

CVector steering_doppler(double nu, int n_entries, double delta_T) {
  CVector v(n_entries);
  for (int n = 0; n < n_entries; ++n) v(n) = std::polar(1.0, 2.0 * kPi * n * delta_T * nu);
  return v;
}

cplx subband_phase(int l, double tau, double nu, const SystemConfig& cfg) {
  if (l < 0 || l >= cfg.n_subbands) throw ConfigError("subband_phase: subband index out of range");
  const double q = cfg.hop_schedule.at(l);
  return std::polar(1.0, 2.0 * kPi * (l * cfg.dt_srs * nu - q * cfg.subband_spacing() * tau));
}

cplx sinc_kernel(double x, int n) {
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  const cplx phase = std::polar(1.0, -kPi * (n - 1) * x);
  const double den = std::sin(kPi * x);
  if (std::abs(den) < 1e-12) {
    // At integer x the geometric sum has every term equal to 1.
    return cplx(sqrt_n, 0.0);
  }
  return phase * (std::sin(kPi * n * x) / (sqrt_n * den));
}

CVector path_response(const Path& p, const SystemConfig& cfg) {
  const CVector b = steering_delay(p.delay, cfg.srs_len, cfg.delta_f());
  const CVector cv = steering_space(p.elev_cos, cfg.m_v);
  const CVector ch = steering_space(p.azim_cos, cfg.m_h);
  const CVector d = steering_doppler(p.doppler, cfg.n_soundings, cfg.dT_full);
  return kron(kron(kron(b, cv), ch), d);
}

}  // namespace jcep
