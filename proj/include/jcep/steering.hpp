#pragma once

#include "jcep/types.hpp"

namespace jcep {

/// Delay steering vector, entry n = exp(-j 2 pi n df tau).
CVector steering_delay(double tau, int n_entries, double delta_f);

/// Spatial steering vector of a half-wavelength array, entry n = exp(-j pi n u).
/// Serves both the vertical (u = cos theta) and horizontal (v = sin theta cos phi)
/// factors of the UPA.
CVector steering_space(double u, int n_entries);

/// Doppler steering vector across fullband soundings, entry n = exp(+j 2 pi n dT nu).
CVector steering_doppler(double nu, int n_entries, double delta_T);

/// Phase of hop l relative to hop 0: exp(j 2 pi (l dt nu - q_l dF tau)).
cplx subband_phase(int l, double tau, double nu, const SystemConfig& cfg);

/// Normalized Dirichlet kernel
///   f_N(x) = exp(-j pi (N-1) x) sin(pi N x) / (sqrt(N) sin(pi x)),
/// continued analytically at integer x.
cplx sinc_kernel(double x, int n);

/// Full FST-domain response of one path at the K sounding instants, without
/// the subband phase: b(tau) (x) c_v(u) (x) c_h(v) (x) d(nu).
CVector path_response(const Path& p, const SystemConfig& cfg);

}  // namespace jcep
