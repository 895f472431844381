#include "jcep/hmp.hpp"
#include "jcep/predict.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace jcep {

namespace {

constexpr double kLlrClamp = 40.0;

bool finite(const CMatrix& m) { return m.allFinite(); }
bool finite(const RMatrix& m) { return m.allFinite(); }

}  // namespace

GaussMoments gaussian_output_posterior(cplx y, cplx s, cplx mu_q, double tau_q, double sigma_z) {
  if (!(tau_q > 0.0) || sigma_z < 0.0 || std::isnan(sigma_z))
    throw ConfigError("gaussian_output_posterior: variances must be positive");
  const cplx obs = std::conj(s) * y;
  if (std::isinf(sigma_z)) return {mu_q, tau_q};
  if (sigma_z == 0.0) return {obs, 0.0};
  if (std::isinf(tau_q)) return {obs, sigma_z};
  const double tau_g = tau_q * sigma_z / (tau_q + sigma_z);
  return {tau_g * (mu_q / tau_q + obs / sigma_z), tau_g};
}

GaussMoments bg_input_posterior(cplx mu_r, double tau_r, double sigma, double zeta, double floor) {
  if (!(zeta >= 0.0 && zeta <= 1.0)) throw ConfigError("bg_input_posterior: activity must lie in [0, 1]");
  if (!(tau_r > 0.0) || !(sigma > 0.0)) throw ConfigError("bg_input_posterior: variances must be positive");
  const double v = sigma * tau_r / (sigma + tau_r);
  const cplx m = (sigma / (sigma + tau_r)) * mu_r;  // v mu_r / tau_r
  const cplx mean = zeta * m;
  // zeta (|m|^2 + v) - |zeta m|^2, rearranged to avoid cancellation.
  const double var = zeta * (1.0 - zeta) * std::norm(m) + zeta * v;
  return {mean, std::max(var, floor)};
}

double llr_evidence(cplx mu_r, double tau_r, double sigma) {
  return std::log(tau_r / (tau_r + sigma)) + std::norm(mu_r) * sigma / (tau_r * (tau_r + sigma));
}

double activity_from_llr(double llr) {
  const double x = std::clamp(llr, -kLlrClamp, kLlrClamp);
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

HmpState init_state(Index rows, Index cols, Index L, const GridSpec& grid) {
  HmpState st;
  st.mu_h = CMatrix::Zero(cols, L);
  st.tau_h = RMatrix::Ones(cols, L);
  st.alpha_g = CMatrix::Zero(rows, L);
  st.beta_h = RMatrix::Ones(cols, L);
  st.zeta = RMatrix::Constant(cols, L, 0.5);
  st.llr = RMatrix::Zero(cols, L);
  st.sigma = RMatrix::Ones(cols, L);
  st.rho = RVector::Constant(L, 0.2);
  st.mu_g = CMatrix::Zero(rows, L);
  st.mu_q = CMatrix::Zero(rows, L);
  st.mu_r = CMatrix::Zero(cols, L);
  st.tau_q = RMatrix::Ones(rows, L);
  st.tau_g = RMatrix::Zero(rows, L);
  st.eps = RMatrix::Zero(rows, L);
  st.tau_r = RMatrix::Ones(cols, L);
  st.w_mu = CMatrix::Zero(rows, L);
  st.offsets = OffGridParams::zeros(grid);
  return st;
}

double data_scaled_slab(const CMatrix& Y, double noise_var, double w_fro2, double rho0) {
  const double raw = Y.squaredNorm();
  const double L = static_cast<double>(Y.cols());
  const double signal = std::max(raw - static_cast<double>(Y.size()) * noise_var, 1e-3 * raw);
  if (!(signal > 0.0) || !(w_fro2 > 0.0)) return 1.0;
  return signal / (L * w_fro2 * rho0);
}

void inner_iteration(HmpState& st, const OffGridOperator& op, const CMatrix& Y, const CVector& pilots,
                     double noise_var, const HmpOptions& opts) {
  const Index I = op.rows();
  const Index J = op.cols();
  const Index L = Y.cols();
  if (Y.rows() != I || pilots.size() != I || st.mu_h.rows() != J || st.mu_h.cols() != L)
    throw ConfigError("inner_iteration: shape mismatch between state, operator and measurements");
  const double fl = opts.variance_floor;
  const double nmk = static_cast<double>(I);
  const double kappa = opts.damping;

  // Output side: tau_q, mu_q, Gaussian output posterior, eps, alpha_g.
  st.tau_q = op.abs2_row_sums(st.beta_h.cwiseInverse()).cwiseMax(fl);
  st.w_mu = op.apply(st.mu_h);
  st.mu_q = st.w_mu - st.alpha_g.cwiseProduct(st.tau_q.cast<cplx>());
  st.tau_g.resize(I, L);
  st.mu_g.resize(I, L);
  for (Index l = 0; l < L; ++l)
    for (Index i = 0; i < I; ++i) {
      const GaussMoments m = gaussian_output_posterior(Y(i, l), pilots(i), st.mu_q(i, l), st.tau_q(i, l), noise_var);
      st.mu_g(i, l) = m.mean;
      st.tau_g(i, l) = m.var;
    }
  st.eps = st.tau_q.cwiseInverse() - st.tau_g.cwiseQuotient(st.tau_q.cwiseAbs2());
  st.alpha_g = (st.mu_g - st.mu_q).cwiseQuotient(st.tau_q.cast<cplx>());

  // Input side: tau_r, beta_h (with the previous tau_h), mu_r.
  const RMatrix col = op.abs2_col_sums(st.eps);
  for (Index l = 0; l < L; ++l)
    for (Index j = 0; j < J; ++j) {
      double tr = 1.0 / col(j, l);
      if (opts.finite_size_terms) tr -= 1.0 / (nmk * st.beta_h(j, l));
      if (!(tr > fl)) {
        tr = fl;
        ++st.tau_r_clamped;
      }
      st.tau_r(j, l) = tr;
      double b = 1.0 / st.tau_h(j, l);
      if (opts.finite_size_terms) {
        const double corrected = b - 1.0 / (nmk * tr);
        if (corrected > 0.0) {
          b = corrected;
        } else {
          ++st.beta_fallback;
        }
      }
      st.beta_h(j, l) = kappa * b + (1.0 - kappa) * st.beta_h(j, l);
    }
  st.mu_r = st.mu_h + st.tau_r.cast<cplx>().cwiseProduct(op.apply_adjoint(st.alpha_g));

  // Bernoulli-Gaussian posterior with the previous activity, damped mean.
  double change = 0.0;
  double norm = 0.0;
  for (Index l = 0; l < L; ++l)
    for (Index j = 0; j < J; ++j) {
      const GaussMoments m = bg_input_posterior(st.mu_r(j, l), st.tau_r(j, l), st.sigma(j, l), st.zeta(j, l), fl);
      const cplx mixed = kappa * m.mean + (1.0 - kappa) * st.mu_h(j, l);
      change += std::norm(mixed - st.mu_h(j, l));
      norm += std::norm(mixed);
      st.mu_h(j, l) = mixed;
      st.tau_h(j, l) = m.var;
    }
  st.last_change = change == 0.0 ? 0.0 : std::sqrt(change / std::max(norm, std::numeric_limits<double>::min()));

  // Activity detection.
  RMatrix ev(J, L);
  for (Index l = 0; l < L; ++l)
    for (Index j = 0; j < J; ++j) ev(j, l) = llr_evidence(st.mu_r(j, l), st.tau_r(j, l), st.sigma(j, l));
  if (opts.shared_support) {
    const double prior = std::log(st.rho(0) / (1.0 - st.rho(0)));
    const RVector llr = ev.rowwise().sum().array() + prior;
    for (Index l = 0; l < L; ++l) st.llr.col(l) = llr;
  } else {
    for (Index l = 0; l < L; ++l) st.llr.col(l) = ev.col(l).array() + std::log(st.rho(l) / (1.0 - st.rho(l)));
  }
  st.zeta = st.llr.unaryExpr([](double x) { return activity_from_llr(x); });

  // Sparsity rate and slab variance.
  if (opts.shared_support) {
    if (opts.learn_rho) st.rho.setConstant(update_rho(st.zeta.col(0)));
    if (opts.learn_sigma && opts.sigma_rule == SigmaRule::PerGrid) {
      const RVector s = update_sigma(st.mu_h, st.tau_h).cwiseMax(fl);
      for (Index l = 0; l < L; ++l) st.sigma.col(l) = s;
    } else if (opts.learn_sigma) {
      st.sigma.setConstant(std::max(update_sigma_pooled(st.mu_h, st.tau_h, st.zeta.col(0)), fl));
    }
  } else {
    for (Index l = 0; l < L; ++l) {
      if (opts.learn_rho) st.rho(l) = update_rho(st.zeta.col(l));
      if (opts.learn_sigma && opts.sigma_rule == SigmaRule::PerGrid) {
        st.sigma.col(l) = (st.mu_h.col(l).cwiseAbs2() + st.tau_h.col(l)).cwiseMax(fl);
      } else if (opts.learn_sigma) {
        st.sigma.col(l).setConstant(
            std::max(update_sigma_pooled(st.mu_h.col(l), st.tau_h.col(l), st.zeta.col(l)), fl));
      }
    }
  }
  ++st.iteration;
  if (!finite(st.mu_h) || !finite(st.tau_h) || !finite(st.beta_h) || !finite(st.mu_g))
    throw DivergenceError(st.iteration, "non-finite message");
}

EstimateResult hmp_run(const CMatrix& Y, const CVector& pilots, double noise_var, const DictionarySet& dict,
                       const HmpOptions& opts, const CMatrix* truth_g) {
  if (opts.outer_iters < 1 || opts.inner_iters < 0) throw ConfigError("hmp_run: T_out >= 1 and T_in >= 0 required");
  if (Y.rows() != dict.rows() || pilots.size() != dict.rows())
    throw ConfigError("hmp_run: measurement rows must equal NMK");
  if (!(opts.damping > 0.0 && opts.damping <= 1.0)) throw ConfigError("hmp_run: damping must lie in (0, 1]");
  const Index J = dict.cols();
  const Index L = Y.cols();

  std::vector<Index> active;
  if (!opts.active_mask.empty()) {
    if (static_cast<Index>(opts.active_mask.size()) != J) throw ConfigError("hmp_run: active mask length mismatch");
    for (Index j = 0; j < J; ++j)
      if (opts.active_mask[j]) active.push_back(j);
    if (active.empty()) throw ConfigError("hmp_run: empty active mask");
  }
  auto scatter = [&](const auto& X) {
    using M = std::decay_t<decltype(X)>;
    if (active.empty()) return M(X);
    M full = M::Zero(J, X.cols());
    for (std::size_t c = 0; c < active.size(); ++c) full.row(active[c]) = X.row(static_cast<Index>(c));
    return full;
  };

  OffGridParams offsets = OffGridParams::zeros(dict.grid);
  auto make_op = [&]() { return OffGridOperator(dict, offsets, opts.operator_mode, active); };
  OffGridOperator op = make_op();
  HmpState st = init_state(dict.rows(), op.cols(), L, dict.grid);
  if (opts.data_init) {
    const double w_fro2 = op.abs2_col_sums(RMatrix::Ones(dict.rows(), 1)).sum();
    const double s0 = data_scaled_slab(Y, noise_var, w_fro2, st.rho(0));
    st.sigma.setConstant(s0);
    st.tau_h.setConstant(st.rho(0) * s0);
    st.beta_h.setConstant(1.0 / (st.rho(0) * s0));
  }
  const double y_norm = Y.norm();
  EstimateResult res;

  auto check_residual = [&](const CMatrix& w_mu, int iter) {
    const double r = (Y - pilots.asDiagonal() * w_mu).norm();
    if (!std::isfinite(r) || (y_norm > 0.0 && r > opts.divergence_factor * y_norm))
      throw DivergenceError(iter, "residual growth beyond the divergence bound");
    return y_norm > 0.0 ? r / y_norm : r;
  };

  for (int t_out = 0; t_out < opts.outer_iters; ++t_out) {
    for (int t_in = 0; t_in < opts.inner_iters; ++t_in) {
      inner_iteration(st, op, Y, pilots, noise_var, opts);
      check_residual(st.w_mu, st.iteration);
      if (opts.record_trace) {
        const CMatrix w_mu = op.apply(st.mu_h);
        TraceRow row;
        row.iteration = st.iteration;
        row.residual = check_residual(w_mu, st.iteration);
        row.nmse_db = truth_g ? nmse_db(*truth_g, w_mu) : std::numeric_limits<double>::quiet_NaN();
        res.trace.push_back(row);
      }
      if (opts.early_exit && st.last_change < opts.early_exit_tol) break;
    }
    if (opts.learn_offgrid && st.iteration > 0) {
      PosteriorMoments mom;
      mom.mu_g = st.mu_g;
      mom.mu_h = scatter(st.mu_h);
      mom.sigma_h = scatter(RMatrix(st.tau_h)).rowwise().mean();
      if (!active.empty()) {
        // Columns outside the active set carry no posterior mass.
        std::vector<bool> on(static_cast<std::size_t>(J), false);
        for (Index j : active) on[static_cast<std::size_t>(j)] = true;
        for (Index j = 0; j < J; ++j)
          if (!on[static_cast<std::size_t>(j)]) mom.sigma_h(j) = 0.0;
      }
      offsets = update_offgrid(mom, dict, offsets, opts.offgrid_mode, opts.offset_ridge);
      st.offsets = offsets;
      op = make_op();
    }
  }

  CMatrix gated = st.mu_h;
  for (Index l = 0; l < L; ++l)
    for (Index j = 0; j < gated.rows(); ++j)
      if (!(st.llr(j, l) > opts.llr_threshold)) gated(j, l) = 0.0;
  res.g_hat = op.apply(gated);
  check_residual(res.g_hat, st.iteration);
  res.h_hat = scatter(gated);
  res.llr = scatter(st.llr);
  if (!active.empty()) {
    // Pruned columns are treated as certainly inactive.
    RMatrix full = RMatrix::Constant(J, L, -kLlrClamp);
    for (std::size_t c = 0; c < active.size(); ++c) full.row(active[c]) = st.llr.row(static_cast<Index>(c));
    res.llr = full;
  }
  res.zeta = res.llr.unaryExpr([](double x) { return activity_from_llr(x); });
  res.active_mask.assign(static_cast<std::size_t>(J), false);
  for (Index j = 0; j < J; ++j)
    for (Index l = 0; l < L; ++l)
      if (res.llr(j, l) > opts.llr_threshold) res.active_mask[static_cast<std::size_t>(j)] = true;
  res.offsets = offsets;
  res.rho = st.rho;
  res.sigma = scatter(st.sigma);
  res.iterations = st.iteration;
  res.tau_r_clamped = st.tau_r_clamped;
  res.beta_fallback = st.beta_fallback;
  return res;
}

std::string trace_csv(const std::vector<TraceRow>& trace) {
  std::ostringstream os;
  os.precision(17);
  os << "iteration,residual,nmse_db\n";
  for (const TraceRow& r : trace) os << r.iteration << ',' << r.residual << ',' << r.nmse_db << '\n';
  return os.str();
}

}  // namespace jcep
