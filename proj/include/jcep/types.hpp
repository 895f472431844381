#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace jcep {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr cplx kJ{0.0, 1.0};

/// Raised for configuration or shape violations detected at API boundaries.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Sounding geometry of the frequency-hopping SRS system.
///
/// Row index of every FST-domain vector is n*M*K + m*K + k with
/// m = m_v*M_h + m_h. Column l of the measurement matrix is the l-th hop,
/// which sounds subband hop_schedule[l].
struct SystemConfig {
  int n_fft = 4096;
  int n_sc = 3264;
  double subcarrier_spacing = 30e3;  // Hz
  int n_subbands = 4;                // L
  int n_comb = 4;                    // N_TC
  int srs_len = 204;                 // N = N_SC / (L * N_TC)
  int m_v = 4;
  int m_h = 8;
  int n_soundings = 10;              // K
  int doppler_oversample = 3;        // S_nu
  double dt_srs = 0.0;               // seconds between consecutive hops
  double dT_full = 0.0;              // seconds between fullband soundings
  std::vector<int> hop_schedule;     // q_l
  double noise_var = 0.0;
  double carrier_freq = 3.5e9;

  int n_antennas() const { return m_v * m_h; }
  /// N*M*K, the length of one subband measurement column.
  int rows() const { return srs_len * n_antennas() * n_soundings; }
  /// Pilot subcarrier spacing inside one subband (N_TC * subcarrier spacing).
  double delta_f() const { return n_comb * subcarrier_spacing; }
  /// Frequency offset between adjacent subbands.
  double subband_spacing() const { return n_sc * subcarrier_spacing / n_subbands; }
  /// OFDM symbol duration including cyclic prefix, assuming 14 symbols per slot.
  double symbol_duration() const { return slot_duration() / 14.0; }
  /// Slot duration under the 3GPP numerology implied by the subcarrier spacing.
  double slot_duration() const { return 1e-3 * 15e3 / subcarrier_spacing; }

  void validate() const;

  /// Full scale (f_c 3.5 GHz, N 204, 4x8 UPA, K 10).
  static SystemConfig paper_profile();
  /// Small geometry whose dense dictionary fits comfortably in memory.
  static SystemConfig desk_profile();
};

/// Uniform sampling grids of the delay-angle-Doppler domain.
struct GridSpec {
  int n_delay = 0;
  int n_elev = 0;
  int n_azim = 0;
  int n_doppler = 0;
  RVector delay_grid;      // seconds
  RVector elev_cos_grid;   // directional cosine u
  RVector azim_cos_grid;   // directional cosine v
  RVector doppler_grid;    // Hz

  int n_angle() const { return n_elev * n_azim; }
  int columns() const { return n_delay * n_angle() * n_doppler; }

  double delay_step() const;
  double elev_step() const { return 2.0 / n_elev; }
  double azim_step() const { return 2.0 / n_azim; }
  double doppler_step() const;

  /// Column index of grid vertex (n, m_v, m_h, k).
  Index column(int n, int mv, int mh, int k) const {
    return ((static_cast<Index>(n) * n_elev + mv) * n_azim + mh) * n_doppler + k;
  }

  /// Grids with N~ = N, M~ = M and K~ = S_nu * K.
  static GridSpec from_config(const SystemConfig& cfg);
  /// Same construction with an explicit Doppler grid size.
  static GridSpec from_config(const SystemConfig& cfg, int n_doppler);

  void validate_against(const SystemConfig& cfg) const;
};

enum class Axis { Delay = 0, Elevation = 1, Azimuth = 2, Doppler = 3 };

inline constexpr Axis kAllAxes[4] = {Axis::Delay, Axis::Elevation, Axis::Azimuth, Axis::Doppler};

const char* axis_name(Axis axis);

/// Per-axis off-grid offsets: alpha (s), beta, gamma (cosines), eta (Hz).
struct OffGridParams {
  RVector alpha;
  RVector beta;
  RVector gamma;
  RVector eta;

  static OffGridParams zeros(const GridSpec& grid);

  RVector& axis(Axis a);
  const RVector& axis(Axis a) const;

  bool is_zero() const;
  /// Clamp every offset to half the local grid spacing.
  void clamp(const GridSpec& grid);
};

/// Half the grid spacing along an axis, the bound on |offset|.
double half_spacing(const GridSpec& grid, Axis axis);
/// Number of grid points along an axis.
int axis_size(const GridSpec& grid, Axis axis);
/// Index of a DAD column along the given axis.
int axis_index(const GridSpec& grid, Index column, Axis axis);

struct Path {
  double delay = 0.0;     // seconds
  double elev_cos = 0.0;  // u = cos(theta)
  double azim_cos = 0.0;  // v = sin(theta) cos(phi)
  double doppler = 0.0;   // Hz
  cplx gain{0.0, 0.0};
};

struct PathSet {
  std::vector<Path> paths;
  std::size_t size() const { return paths.size(); }
};

}  // namespace jcep
