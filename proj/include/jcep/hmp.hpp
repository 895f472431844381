#pragma once

#include "jcep/dictionary.hpp"
#include "jcep/hyper.hpp"
#include "jcep/types.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace jcep {

/// Raised when the message passing produces non-finite values or the residual blows up.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int iteration, const std::string& what)
      : std::runtime_error(what + " (inner iteration " + std::to_string(iteration) + ")"), iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

struct HmpOptions {
  int outer_iters = 10;
  int inner_iters = 30;
  /// Weight of the new value when mixing mu_h and beta_h with their previous values.
  double damping = 0.5;
  double llr_threshold = 0.0;
  double variance_floor = 1e-12;
  bool learn_offgrid = true;
  OffGridMode offgrid_mode = OffGridMode::Fast;
  /// Ridge on each offset solve, relative to the mean curvature of the axis. Slices that
  /// carry almost no posterior energy are not identifiable and shrink to zero.
  double offset_ridge = 1e-3;
  /// Keep the 1/(NMK) terms of the tau_r and beta_h messages. Without them and without
  /// off-grid learning the engine reduces to EM-BG-AMP(-MMV).
  bool finite_size_terms = true;
  /// Share activity, sparsity rate and slab variance across subbands (MMV coupling).
  bool shared_support = true;
  bool learn_rho = true;
  bool learn_sigma = true;
  SigmaRule sigma_rule = SigmaRule::Pooled;
  /// Scale the initial slab variance to the measured energy instead of 1.
  bool data_init = true;
  bool early_exit = true;
  double early_exit_tol = 1e-6;
  double divergence_factor = 1e3;
  OffGridOperator::Mode operator_mode = OffGridOperator::Mode::Dense;
  /// Optional restriction of the message passing to these DAD columns (full-grid mask).
  std::vector<bool> active_mask;
  bool record_trace = false;
};

struct GaussMoments {
  cplx mean;
  double var;
};

/// Moments of p(y|g) CN(g; mu_q, tau_q) for y = s g + z, z ~ CN(0, sigma_z).
/// sigma_z = 0 and sigma_z = inf are handled as limits.
GaussMoments gaussian_output_posterior(cplx y, cplx s, cplx mu_q, double tau_q, double sigma_z);

/// Moments of zeta CN(h; 0, sigma) CN(h; mu_r, tau_r) + (1 - zeta) delta(h), variance floored.
GaussMoments bg_input_posterior(cplx mu_r, double tau_r, double sigma, double zeta, double floor = 1e-12);

/// Per-subband evidence ln CN(mu_r; 0, tau_r + sigma) / CN(mu_r; 0, tau_r).
double llr_evidence(cplx mu_r, double tau_r, double sigma);

/// 1 - 1/(1 + e^llr) with the LLR clamped to +-40.
double activity_from_llr(double llr);

/// Per-iteration messages. Per-grid quantities (zeta, llr, sigma) are stored as J x L;
/// with shared support every column holds the same values.
struct HmpState {
  CMatrix mu_h, mu_r, mu_q, mu_g, alpha_g;
  RMatrix tau_h, beta_h, tau_r, tau_q, tau_g, eps;
  RMatrix zeta, llr, sigma;
  RVector rho;
  CMatrix w_mu;  // W mu_h for the mu_h that entered the latest iteration
  OffGridParams offsets;
  int iteration = 0;
  int tau_r_clamped = 0;
  int beta_fallback = 0;
  double last_change = 0.0;
};

HmpState init_state(Index rows, Index cols, Index L, const GridSpec& grid);

/// Initial slab variance matching the measured energy: (||Y||^2 - I L sigma_z) /
/// (L ||W||_F^2 rho0), floored at a small fraction of the raw energy.
double data_scaled_slab(const CMatrix& Y, double noise_var, double w_fro2, double rho0);

/// One pass of the inner loop. Y and the state columns must match op.
void inner_iteration(HmpState& st, const OffGridOperator& op, const CMatrix& Y, const CVector& pilots,
                     double noise_var, const HmpOptions& opts);

struct TraceRow {
  int iteration = 0;
  double residual = 0.0;  // ||Y - S W mu_h|| / ||Y||
  double nmse_db = 0.0;   // against the supplied truth, NaN without truth
};

struct EstimateResult {
  CMatrix h_hat;  // J x L on the full grid, gated by the LLR threshold
  RMatrix llr;    // J x L
  std::vector<bool> active_mask;
  CMatrix g_hat;  // NMK x L
  OffGridParams offsets;
  RMatrix zeta;
  RVector rho;
  RMatrix sigma;
  int iterations = 0;
  int tau_r_clamped = 0;
  int beta_fallback = 0;
  std::vector<TraceRow> trace;
};

EstimateResult hmp_run(const CMatrix& Y, const CVector& pilots, double noise_var, const DictionarySet& dict,
                       const HmpOptions& opts, const CMatrix* truth_g = nullptr);

/// Writes a trace as CSV with header iteration,residual,nmse_db.
std::string trace_csv(const std::vector<TraceRow>& trace);

}  // namespace jcep
