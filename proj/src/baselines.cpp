#include "jcep/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

namespace jcep {

namespace {

// Shared greedy loop; scores are summed over the columns of Y.
GreedyResult pursue(const CMatrix& Y, const CVector& pilots, const CMatrix& W, const GreedyStop& stop) {
  if (Y.rows() != W.rows() || pilots.size() != W.rows()) throw ConfigError("greedy pursuit: shape mismatch");
  if (stop.sparsity < 0 || stop.sparsity > W.rows()) throw ConfigError("greedy pursuit: sparsity must lie in [0, NMK]");
  const CMatrix A = pilots.asDiagonal() * W;
  GreedyResult res;
  res.coefficients = CMatrix::Zero(0, Y.cols());
  CMatrix R = Y;
  std::vector<bool> excluded(static_cast<std::size_t>(A.cols()), false);
  const int limit = stop.sparsity > 0 ? stop.sparsity : (stop.residual_sq_stop >= 0.0 ? static_cast<int>(A.rows()) : 0);
  while (static_cast<int>(res.support.size()) < limit) {
    const double rsq = R.squaredNorm();
    if (rsq == 0.0 || (stop.residual_sq_stop >= 0.0 && rsq <= stop.residual_sq_stop)) break;
    const RVector score = (A.adjoint() * R).cwiseAbs2().rowwise().sum();
    Index best = -1;
    double best_score = -1.0;
    for (Index j = 0; j < score.size(); ++j)
      if (!excluded[static_cast<std::size_t>(j)] && score(j) > best_score) {
        best_score = score(j);
        best = j;
      }
    if (best < 0) break;
    excluded[static_cast<std::size_t>(best)] = true;
    std::vector<Index> trial = res.support;
    trial.push_back(best);
    CMatrix As(A.rows(), static_cast<Index>(trial.size()));
    for (std::size_t c = 0; c < trial.size(); ++c) As.col(static_cast<Index>(c)) = A.col(trial[c]);
    Eigen::ColPivHouseholderQR<CMatrix> qr(As);
    if (qr.rank() < As.cols()) {
      res.dropped.push_back(best);
      std::clog << "greedy pursuit: atom " << best << " makes the support rank deficient, dropped\n";
      continue;
    }
    res.support = std::move(trial);
    res.coefficients = qr.solve(Y);
    R = Y - As * res.coefficients;
    res.residual_norms.push_back(R.norm());
  }
  return res;
}

}  // namespace

GreedyResult omp(const CVector& y, const CVector& pilots, const CMatrix& W, const GreedyStop& stop) {
  return pursue(CMatrix(y), pilots, W, stop);
}

GreedyResult somp(const CMatrix& Y, const CVector& pilots, const CMatrix& W, const GreedyStop& stop) {
  return pursue(Y, pilots, W, stop);
}

CMatrix greedy_to_dad(const GreedyResult& r, Index n_cols, Index L) {
  CMatrix h = CMatrix::Zero(n_cols, L);
  for (std::size_t c = 0; c < r.support.size(); ++c) h.row(r.support[c]) = r.coefficients.row(static_cast<Index>(c));
  return h;
}

namespace {

// Matrix-free view of the dictionary: products with W, W^H, |W|^2 and |W|^2^T.
struct AmpOperator {
  Index rows = 0;
  Index cols = 0;
  std::function<CMatrix(const CMatrix&)> apply;
  std::function<CMatrix(const CMatrix&)> apply_adjoint;
  std::function<RMatrix(const RMatrix&)> abs2;
  std::function<RMatrix(const RMatrix&)> abs2_t;
};

EstimateResult amp_core(const CMatrix& Y, const CVector& pilots, double noise_var, const AmpOperator& W,
                        const AmpOptions& opts, const std::function<void(const AmpIterate&)>& observer) {
  const Index M = W.rows;
  const Index N = W.cols;
  const Index L = Y.cols();
  if (Y.rows() != M || pilots.size() != M) throw ConfigError("em_bg_amp: shape mismatch");
  const double floor = opts.variance_floor;
  const double kappa = opts.damping;

  // Signal-side state.
  CMatrix x_hat = CMatrix::Zero(N, L);
  RMatrix tau_x = RMatrix::Ones(N, L);
  RMatrix prec = RMatrix::Ones(N, L);  // damped 1 / tau_x driving tau_p
  RMatrix pi = RMatrix::Constant(N, L, 0.5);
  RMatrix lambda_llr = RMatrix::Zero(N, L);
  RMatrix theta = RMatrix::Ones(N, L);  // slab variance
  RVector lam = RVector::Constant(L, 0.2);
  if (opts.data_init) {
    const double s0 = data_scaled_slab(Y, noise_var, W.abs2_t(RMatrix::Ones(M, 1)).sum(), lam(0));
    theta.setConstant(s0);
    tau_x.setConstant(lam(0) * s0);
    prec.setConstant(1.0 / (lam(0) * s0));
  }
  // Measurement-side state.
  CMatrix s_hat = CMatrix::Zero(M, L);

  const double y_norm = Y.norm();
  int it = 0;
  for (; it < opts.iterations; ++it) {
    const RMatrix tau_p = W.abs2(prec.cwiseInverse()).cwiseMax(floor);
    const CMatrix Wx = W.apply(x_hat);
    const CMatrix p_hat = Wx - s_hat.cwiseProduct(tau_p.cast<cplx>());
    if (y_norm > 0.0 && (Y - pilots.asDiagonal() * Wx).norm() > opts.divergence_factor * y_norm)
      throw DivergenceError(it, "em_bg_amp residual growth");

    // Output channel y = s z + noise.
    RMatrix tau_s(M, L);
    for (Index l = 0; l < L; ++l)
      for (Index m = 0; m < M; ++m) {
        cplx z;
        double vz;
        const cplx obs = std::conj(pilots(m)) * Y(m, l);
        if (noise_var == 0.0) {
          z = obs;
          vz = 0.0;
        } else {
          vz = 1.0 / (1.0 / tau_p(m, l) + 1.0 / noise_var);
          z = vz * (p_hat(m, l) / tau_p(m, l) + obs / noise_var);
        }
        s_hat(m, l) = (z - p_hat(m, l)) / tau_p(m, l);
        tau_s(m, l) = (1.0 - vz / tau_p(m, l)) / tau_p(m, l);
      }

    RMatrix tau_r = W.abs2_t(tau_s).cwiseInverse();
    for (Index l = 0; l < L; ++l)
      for (Index n = 0; n < N; ++n)
        if (!(tau_r(n, l) > floor)) tau_r(n, l) = floor;
    // Precision damping uses the variance from the previous iteration.
    prec = kappa * tau_x.cwiseInverse() + (1.0 - kappa) * prec;
    const CMatrix r_hat = x_hat + tau_r.cast<cplx>().cwiseProduct(W.apply_adjoint(s_hat));

    // Bernoulli-Gaussian denoiser with the previous activity probabilities.
    double change = 0.0, norm = 0.0;
    for (Index l = 0; l < L; ++l)
      for (Index n = 0; n < N; ++n) {
        const double th = theta(n, l);
        const double tr = tau_r(n, l);
        const double gain = th / (th + tr);
        const cplx m = gain * r_hat(n, l);
        const double v = gain * tr;
        const double a = pi(n, l);
        const cplx x_new = a * m;
        tau_x(n, l) = std::max(a * (std::norm(m) + v) - std::norm(x_new), floor);
        const cplx damped = kappa * x_new + (1.0 - kappa) * x_hat(n, l);
        change += std::norm(damped - x_hat(n, l));
        norm += std::norm(damped);
        x_hat(n, l) = damped;
      }

    // Activity log-odds: ln CN(r; 0, theta + tau_r) - ln CN(r; 0, tau_r).
    RMatrix evid(N, L);
    for (Index l = 0; l < L; ++l)
      for (Index n = 0; n < N; ++n) {
        const double th = theta(n, l);
        const double tr = tau_r(n, l);
        evid(n, l) = std::log(tr) - std::log(tr + th) + std::norm(r_hat(n, l)) * (1.0 / tr - 1.0 / (tr + th));
      }
    if (opts.mmv) {
      const RVector joint = evid.rowwise().sum().array() + std::log(lam(0) / (1.0 - lam(0)));
      for (Index l = 0; l < L; ++l) lambda_llr.col(l) = joint;
    } else {
      for (Index l = 0; l < L; ++l) lambda_llr.col(l) = evid.col(l).array() + std::log(lam(l) / (1.0 - lam(l)));
    }
    for (Index l = 0; l < L; ++l)
      for (Index n = 0; n < N; ++n) {
        const double t = std::clamp(lambda_llr(n, l), -40.0, 40.0);
        pi(n, l) = 1.0 / (1.0 + std::exp(-t));
      }

    // EM updates of the sparsity rate and slab variance.
    const RMatrix second = x_hat.cwiseAbs2() + tau_x;
    if (opts.mmv) {
      if (opts.learn_rho) lam.setConstant(std::clamp(pi.col(0).mean(), 1e-6, 1.0 - 1e-6));
      if (opts.learn_sigma && opts.sigma_rule == SigmaRule::PerGrid) {
        const RVector th = second.rowwise().mean().cwiseMax(floor);
        for (Index l = 0; l < L; ++l) theta.col(l) = th;
      } else if (opts.learn_sigma) {
        const double act = pi.col(0).sum() * static_cast<double>(L);
        if (act > 0.0) theta.setConstant(std::max(second.sum() / act, floor));
      }
    } else {
      for (Index l = 0; l < L; ++l) {
        if (opts.learn_rho) lam(l) = std::clamp(pi.col(l).mean(), 1e-6, 1.0 - 1e-6);
        if (opts.learn_sigma && opts.sigma_rule == SigmaRule::PerGrid) {
          theta.col(l) = second.col(l).cwiseMax(floor);
        } else if (opts.learn_sigma) {
          if (pi.col(l).sum() > 0.0) theta.col(l).setConstant(std::max(second.col(l).sum() / pi.col(l).sum(), floor));
        }
      }
    }
    if (!x_hat.allFinite() || !tau_x.allFinite()) throw DivergenceError(it + 1, "em_bg_amp non-finite estimate");
    if (observer) observer(AmpIterate{it + 1, &x_hat, &tau_x, &pi});
    const double rel = change == 0.0 ? 0.0 : std::sqrt(change / std::max(norm, std::numeric_limits<double>::min()));
    if (opts.early_exit && rel < opts.early_exit_tol) {
      ++it;
      break;
    }
  }

  EstimateResult res;
  res.h_hat = x_hat;
  for (Index l = 0; l < L; ++l)
    for (Index n = 0; n < N; ++n)
      if (!(lambda_llr(n, l) > opts.llr_threshold)) res.h_hat(n, l) = 0.0;
  res.g_hat = W.apply(res.h_hat);
  res.llr = lambda_llr;
  res.zeta = pi;
  res.rho = lam;
  res.sigma = theta;
  res.iterations = it;
  res.active_mask.assign(static_cast<std::size_t>(N), false);
  for (Index n = 0; n < N; ++n)
    for (Index l = 0; l < L; ++l)
      if (lambda_llr(n, l) > opts.llr_threshold) res.active_mask[static_cast<std::size_t>(n)] = true;
  return res;
}

}  // namespace

EstimateResult em_bg_amp(const CMatrix& Y, const CVector& pilots, double noise_var, const CMatrix& W,
                         const AmpOptions& opts, const std::function<void(const AmpIterate&)>& observer) {
  const RMatrix W2 = W.cwiseAbs2();
  const CMatrix Wh = W.adjoint();
  const RMatrix W2t = W2.transpose();
  AmpOperator op;
  op.rows = W.rows();
  op.cols = W.cols();
  op.apply = [&](const CMatrix& X) { return CMatrix(W * X); };
  op.apply_adjoint = [&](const CMatrix& X) { return CMatrix(Wh * X); };
  op.abs2 = [&](const RMatrix& X) { return RMatrix(W2 * X); };
  op.abs2_t = [&](const RMatrix& X) { return RMatrix(W2t * X); };
  return amp_core(Y, pilots, noise_var, op, opts, observer);
}

EstimateResult em_bg_amp(const CMatrix& Y, const CVector& pilots, double noise_var, const OffGridOperator& W,
                         const AmpOptions& opts, const std::function<void(const AmpIterate&)>& observer) {
  AmpOperator op;
  op.rows = W.rows();
  op.cols = W.cols();
  op.apply = [&](const CMatrix& X) { return W.apply(X); };
  op.apply_adjoint = [&](const CMatrix& X) { return W.apply_adjoint(X); };
  op.abs2 = [&](const RMatrix& X) { return W.abs2_row_sums(X); };
  op.abs2_t = [&](const RMatrix& X) { return W.abs2_col_sums(X); };
  return amp_core(Y, pilots, noise_var, op, opts, observer);
}

}  // namespace jcep
