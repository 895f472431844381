#pragma once

#include "jcep/hmp.hpp"
#include "jcep/types.hpp"

#include <functional>
#include <vector>

namespace jcep {

struct GreedyResult {
  std::vector<Index> support;
  CMatrix coefficients;                // |support| x L
  std::vector<double> residual_norms;  // after each accepted atom
  std::vector<Index> dropped;          // atoms rejected for a rank-deficient refit
};

/// Stopping rule: stop after `sparsity` atoms, or earlier once the squared residual
/// norm falls to `residual_sq_stop` (ignored when negative).
struct GreedyStop {
  int sparsity = 0;
  double residual_sq_stop = -1.0;
};

/// Orthogonal matching pursuit on the sensing matrix diag(s) W for one column.
GreedyResult omp(const CVector& y, const CVector& pilots, const CMatrix& W, const GreedyStop& stop);

/// Simultaneous OMP: atoms scored by the sum over columns of squared correlations.
GreedyResult somp(const CMatrix& Y, const CVector& pilots, const CMatrix& W, const GreedyStop& stop);

/// Scatters greedy coefficients into a J x L DAD matrix.
CMatrix greedy_to_dad(const GreedyResult& r, Index n_cols, Index L);

struct AmpOptions {
  int iterations = 90;
  double damping = 0.5;
  double variance_floor = 1e-12;
  double llr_threshold = 0.0;
  /// Joint support across columns (EM-BG-AMP-MMV) versus independent columns.
  bool mmv = true;
  bool learn_rho = true;
  bool learn_sigma = true;
  SigmaRule sigma_rule = SigmaRule::Pooled;
  /// Scale the initial slab variance to the measured energy instead of 1.
  bool data_init = true;
  bool early_exit = true;
  double early_exit_tol = 1e-6;
  double divergence_factor = 1e3;
};

/// Estimate snapshot after one GAMP iteration, for cross-checking other implementations.
struct AmpIterate {
  int iteration = 0;
  const CMatrix* x_hat = nullptr;
  const RMatrix* tau_x = nullptr;
  const RMatrix* pi = nullptr;
};

/// EM-BG-AMP with a fixed on-grid dictionary and known noise variance, written in GAMP
/// notation (p, tau_p, s, tau_s, r, tau_r, x, tau_x).
EstimateResult em_bg_amp(const CMatrix& Y, const CVector& pilots, double noise_var, const CMatrix& W,
                         const AmpOptions& opts, const std::function<void(const AmpIterate&)>& observer = {});

/// Same estimator driven by a matrix-free dictionary operator.
EstimateResult em_bg_amp(const CMatrix& Y, const CVector& pilots, double noise_var, const OffGridOperator& W,
                         const AmpOptions& opts, const std::function<void(const AmpIterate&)>& observer = {});

}  // namespace jcep
