#pragma once

#include "jcep/dictionary.hpp"
#include "jcep/types.hpp"

namespace jcep {

/// Quadratic model J(x) = x' Xi x - 2 chi' x + const of the EM objective along one axis.
struct QuadraticForm {
  RMatrix Xi;
  RVector chi;
};

/// Posterior moments entering the off-grid EM step, on the full DAD grid.
struct PosteriorMoments {
  CMatrix mu_g;     // NMK x L
  CMatrix mu_h;     // J x L
  RVector sigma_h;  // J, (1/L) sum_l tau_h
};

enum class OffGridMode { Exact, Fast };

inline constexpr double kRhoMin = 1e-6;
inline constexpr double kRhoMax = 1.0 - 1e-6;

/// Mean activity, clamped to [kRhoMin, kRhoMax].
double update_rho(const RVector& zeta);
/// Per-grid-point slab variance (1/L) sum_l (|mu_h|^2 + tau_h).
RVector update_sigma(const CMatrix& mu_h, const RMatrix& tau_h);
/// One slab variance for all grid points: the activity-weighted mean of the slab
/// second moments, sum_{j,l} (|mu_h|^2 + tau_h) / (L sum_j zeta_j).
double update_sigma_pooled(const CMatrix& mu_h, const RMatrix& tau_h, const RVector& zeta);

/// Slab-variance learning rule. PerGrid keeps one variance per grid point; Pooled
/// shares a single variance across the grid.
enum class SigmaRule { PerGrid, Pooled };

/// (1/L) sum_l ||mu_g_l - W(w) mu_h_l||^2 + Tr{W(w) Sigma_h W(w)^H} with the offsets of
/// `axis` replaced by x and the other axes held at `current`.
double em_offgrid_objective(const RVector& x, Axis axis, const PosteriorMoments& mom, const DictionarySet& dict,
                            const OffGridParams& current);

/// Dense construction from the explicit derivative operator.
QuadraticForm build_quadratic_exact(Axis axis, const PosteriorMoments& mom, const DictionarySet& dict,
                                    const OffGridParams& current);
/// Kronecker construction from per-axis Gram factors; never forms a J x J matrix.
QuadraticForm build_quadratic_fast(Axis axis, const PosteriorMoments& mom, const DictionarySet& dict,
                                   const OffGridParams& current);

/// Solves (Xi + lambda I) x = chi with lambda = reg * trace(Xi) / dim and clamps to
/// half the grid spacing. An all-zero Xi yields zero offsets.
RVector solve_offgrid_axis(const QuadraticForm& qf, const GridSpec& grid, Axis axis, bool clamp = true,
                           double reg = 1e-8);

/// One sweep alpha -> beta -> gamma -> eta, each axis solved against the freshest offsets
/// with ridge factor `reg` (see solve_offgrid_axis).
OffGridParams update_offgrid(const PosteriorMoments& mom, const DictionarySet& dict, const OffGridParams& current,
                             OffGridMode mode, double reg = 1e-8);

}  // namespace jcep
