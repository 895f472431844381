#pragma once

#include "jcep/types.hpp"

#include <cstdint>

namespace jcep {

struct Scenario {
  int n_paths = 6;
  /// Largest path delay in seconds; 0 selects the whole unambiguous range 1/df.
  double delay_spread = 0.0;
  /// Largest |Doppler| in Hz.
  double doppler_max = 0.0;
  bool on_grid = false;
  /// Rays per virtual path. Rays share delay and angles; their Doppler shifts spread
  /// uniformly over subpath_doppler_spread Hz around the path Doppler.
  int subpaths = 1;
  double subpath_doppler_spread = 0.0;

  void validate(const SystemConfig& cfg) const;
};

/// Maximum Doppler shift v f_c / c for a UE speed in km/h.
double doppler_from_speed(double velocity_kmh, double carrier_freq);

/// Draws a random path set. Off-grid paths have continuous uniform parameters; on-grid
/// paths occupy distinct grid vertices. Gains are CN(0, 1/P) so E||g_l||^2 = NMK.
PathSet sample_paths(const Scenario& sc, const GridSpec& grid, const SystemConfig& cfg, std::uint64_t seed);

/// FST-domain channel, NMK x L; column l is sum_p a_p psi_l(p) b (x) c_v (x) c_h (x) d.
CMatrix synth_fst_channel(const PathSet& paths, const SystemConfig& cfg);

/// Channel sampled at arbitrary absolute times (seconds, sounding 0 at t = 0) for
/// every hop column. Rows are ordered (time, n, m); NM rows per time instant.
CMatrix synth_channel_at_times(const PathSet& paths, const SystemConfig& cfg, const std::vector<double>& times);

/// Unit-modulus QPSK pilot sequence.
CVector qpsk_pilots(int n, std::uint64_t seed);

struct ReceivedSignal {
  CMatrix y;
  CVector pilots;
  double noise_var = 0.0;
};

/// y_l = diag(s) g_l + z_l with sigma_z = ||G||^2 / (NMKL 10^{snr/10}). Infinite SNR
/// gives the noiseless signal.
ReceivedSignal synth_received(const CMatrix& g, const CVector& pilots, double snr_db, std::uint64_t seed);

struct SubbandStats {
  int trials = 0;
  /// Per-subband sample covariances (1/T) sum_t g_l g_l^H.
  std::vector<CMatrix> covariance;
  /// ||C_l - C_0||_F^2 normalized by its expectation under equal covariances; one
  /// entry per l >= 1, plus the same statistic over batches for its spread.
  RVector cov_ratio;
  RVector cov_ratio_batch_sd;
  /// Per-row sample cross-correlation E[g_l g_l'^*] over studentized magnitude,
  /// maximized over rows, for every pair l < l'.
  RVector max_cross_z;
};

SubbandStats empirical_subband_stats(int trials, const Scenario& sc, const GridSpec& grid,
                                     const SystemConfig& cfg, std::uint64_t seed, int batches = 20);

}  // namespace jcep
