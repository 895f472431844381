#include "jcep/hyper.hpp"

#include <algorithm>

namespace jcep {

namespace {

OffGridParams with_axis(const OffGridParams& base, Axis axis, const RVector& x) {
  OffGridParams w = base;
  w.axis(axis) = x;
  return w;
}

void check_moments(const PosteriorMoments& mom, const DictionarySet& dict) {
  if (mom.mu_g.rows() != dict.rows() || mom.mu_h.rows() != dict.cols() || mom.sigma_h.size() != dict.cols() ||
      mom.mu_g.cols() != mom.mu_h.cols())
    throw ConfigError("posterior moments do not match the dictionary shape");
}

// sum over the columns of each axis slice.
RVector slice_sum(const RVector& v, const DictionarySet& dict, Axis axis) {
  RVector out = RVector::Zero(axis_size(dict.grid, axis));
  const auto& idx = dict.col_axis[static_cast<int>(axis)];
  for (Index j = 0; j < v.size(); ++j) out(idx[j]) += v(j);
  return out;
}

}  // namespace

double update_rho(const RVector& zeta) {
  if (zeta.size() == 0) return kRhoMin;
  return std::clamp(zeta.mean(), kRhoMin, kRhoMax);
}

RVector update_sigma(const CMatrix& mu_h, const RMatrix& tau_h) {
  return (mu_h.cwiseAbs2() + tau_h).rowwise().mean();
}

double update_sigma_pooled(const CMatrix& mu_h, const RMatrix& tau_h, const RVector& zeta) {
  if (zeta.size() != mu_h.rows() || tau_h.rows() != mu_h.rows() || tau_h.cols() != mu_h.cols())
    throw ConfigError("update_sigma_pooled: shape mismatch");
  const double active = zeta.sum() * static_cast<double>(mu_h.cols());
  if (!(active > 0.0)) return 0.0;
  return (mu_h.cwiseAbs2() + tau_h).sum() / active;
}

double em_offgrid_objective(const RVector& x, Axis axis, const PosteriorMoments& mom, const DictionarySet& dict,
                            const OffGridParams& current) {
  check_moments(mom, dict);
  const auto mode = dict.has_dense() ? OffGridOperator::Mode::Dense : OffGridOperator::Mode::Factored;
  const OffGridOperator op(dict, with_axis(current, axis, x), mode);
  const double L = static_cast<double>(mom.mu_h.cols());
  const double fit = (mom.mu_g - op.apply(mom.mu_h)).squaredNorm() / L;
  const RVector col_energy = op.abs2_col_sums(RMatrix::Ones(dict.rows(), 1)).col(0);
  return fit + mom.sigma_h.dot(col_energy);
}

QuadraticForm build_quadratic_exact(Axis axis, const PosteriorMoments& mom, const DictionarySet& dict,
                                    const OffGridParams& current) {
  check_moments(mom, dict);
  const int na = axis_size(dict.grid, axis);
  const auto& idx = dict.col_axis[static_cast<int>(axis)];
  const Index J = dict.cols();
  const Index L = mom.mu_h.cols();

  // W with this axis' offsets removed, i.e. W(w) - dW_x diag(R_x x).
  const OffGridOperator rest(dict, with_axis(current, axis, RVector::Zero(na)), OffGridOperator::Mode::Dense);
  const CMatrix Wrest = rest.dense();
  const CMatrix dW = dict.dW(axis);
  const CMatrix resid = mom.mu_g - Wrest * mom.mu_h;

  QuadraticForm qf{RMatrix::Zero(na, na), RVector::Zero(na)};
  for (Index l = 0; l < L; ++l) {
    // Column a of Z is dW applied to mu_h restricted to slice a.
    CMatrix M = CMatrix::Zero(J, na);
    for (Index j = 0; j < J; ++j) M(j, idx[j]) = mom.mu_h(j, l);
    const CMatrix Z = dW * M;
    qf.Xi += (Z.adjoint() * Z).real();
    qf.chi += (Z.adjoint() * resid.col(l)).real();
  }
  qf.Xi /= static_cast<double>(L);
  qf.chi /= static_cast<double>(L);
  for (Index j = 0; j < J; ++j) {
    const double s = mom.sigma_h(j);
    if (s == 0.0) continue;
    qf.Xi(idx[j], idx[j]) += s * dW.col(j).squaredNorm();
    qf.chi(idx[j]) -= s * dW.col(j).dot(Wrest.col(j)).real();
  }
  return qf;
}

QuadraticForm build_quadratic_fast(Axis axis, const PosteriorMoments& mom, const DictionarySet& dict,
                                   const OffGridParams& current) {
  check_moments(mom, dict);
  const GridSpec& g = dict.grid;
  const SystemConfig& cfg = dict.cfg;
  if (g.n_delay != cfg.srs_len || g.n_elev != cfg.m_v || g.n_azim != cfg.m_h)
    throw ConfigError("build_quadratic_fast: requires N~ = N and M~ = M");
  const int ax = static_cast<int>(axis);
  const int na = axis_size(g, axis);
  const Index J = dict.cols();
  const Index L = mom.mu_h.cols();
  const std::array<Index, 4> dims0 = {g.n_delay, g.n_elev, g.n_azim, g.n_doppler};

  // Gram factors of dW_x = dF_x (x) (other factors). The delay and angle Grams of the
  // zero-offset factors are scaled identities on these grids; the Doppler Gram is not.
  std::array<CMatrix, 4> gram;
  for (int m = 0; m < 4; ++m) gram[m] = m == ax ? CMatrix(dict.dfactor[m].adjoint() * dict.dfactor[m])
                                                : CMatrix(dict.factor[m].adjoint() * dict.factor[m]);
  double scale = 1.0;
  for (int m = 0; m < 3; ++m)
    if (m != ax) scale *= gram[m](0, 0).real();

  // T = unfold_x(mu) unfold_x(Q)^H with Q = mu after the Doppler Gram (unless x = eta).
  const Index other = J / na;
  CMatrix T = CMatrix::Zero(na, na);
  CMatrix Qall = mom.mu_h;
  if (ax != 3) {
    std::array<Index, 4> dims = dims0;
    Qall = mode_product(Qall, dims, 3, gram[3]);
  }
  for (Index l = 0; l < L; ++l) {
    const auto q = Qall.col(l);
    CMatrix P(na, other), Q(na, other);
    for (Index j = 0; j < J; ++j) {
      // Column index within the unfolding: every mode except `ax`, last fastest.
      Index j_axes[4];
      Index r = j;
      for (int m = 3; m >= 0; --m) {
        j_axes[m] = r % dims0[m];
        r /= dims0[m];
      }
      Index c = 0;
      for (int m = 0; m < 4; ++m)
        if (m != ax) c = c * dims0[m] + j_axes[m];
      P(j_axes[ax], c) = mom.mu_h(j, l);
      Q(j_axes[ax], c) = q(j);
    }
    T += P * Q.adjoint();
  }
  QuadraticForm qf;
  qf.Xi = scale * (gram[ax].conjugate().cwiseProduct(T)).real() / static_cast<double>(L);

  // Diagonal Sigma_h term: G_jj is the product of the factor-Gram diagonals.
  RVector gdiag(J);
  for (Index j = 0; j < J; ++j) {
    double v = 1.0;
    for (int m = 0; m < 4; ++m) {
      const int a = dict.col_axis[m][j];
      v *= gram[m](a, a).real();
    }
    gdiag(j) = v;
  }
  qf.Xi.diagonal() += slice_sum(mom.sigma_h.cwiseProduct(gdiag), dict, axis);

  // chi_1 = (1/L) sum_l Re{ mu_h^* (.) dW_x^H (mu_g - W_rest mu_h) } summed per slice.
  const OffGridOperator rest(dict, with_axis(current, axis, RVector::Zero(na)), OffGridOperator::Mode::Factored);
  const CMatrix resid = mom.mu_g - rest.apply(mom.mu_h);
  const CMatrix scaled = (dict.row_coeff.col(ax).cast<cplx>() * (-kJ)).asDiagonal() * resid;
  const CMatrix V = kron4_apply(dict.factor, scaled, true);
  const RVector chi1 = (mom.mu_h.conjugate().cwiseProduct(V)).real().rowwise().sum() / static_cast<double>(L);

  // chi_2: Re{dw_j^H w_rest_j} = sum_{y != x} d_y,j sum_i a_x,i a_y,i.
  const RMatrix S = dict.row_coeff.transpose() * dict.row_coeff;
  RVector cross = RVector::Zero(J);
  for (Axis y : kAllAxes) {
    const int yi = static_cast<int>(y);
    if (yi == ax) continue;
    cross += S(ax, yi) * dict.replicate(y, current.axis(y).size() ? current.axis(y) : RVector::Zero(axis_size(g, y)));
  }
  qf.chi = slice_sum(chi1, dict, axis) - slice_sum(mom.sigma_h.cwiseProduct(cross), dict, axis);
  return qf;
}

RVector solve_offgrid_axis(const QuadraticForm& qf, const GridSpec& grid, Axis axis, bool clamp, double reg) {
  const Index n = qf.chi.size();
  if (qf.Xi.rows() != n || qf.Xi.cols() != n) throw ConfigError("solve_offgrid_axis: shape mismatch");
  if (!qf.Xi.allFinite() || !qf.chi.allFinite()) throw ConfigError("solve_offgrid_axis: non-finite quadratic form");
  if (qf.Xi.cwiseAbs().maxCoeff() == 0.0) return RVector::Zero(n);
  const double lambda = reg * qf.Xi.trace() / static_cast<double>(n);
  const RMatrix A = qf.Xi + lambda * RMatrix::Identity(n, n);
  RVector x = A.ldlt().solve(qf.chi);
  if (!x.allFinite()) x = A.completeOrthogonalDecomposition().solve(qf.chi);
  if (clamp) {
    const double h = half_spacing(grid, axis);
    x = x.cwiseMax(-h).cwiseMin(h);
  }
  return x;
}

OffGridParams update_offgrid(const PosteriorMoments& mom, const DictionarySet& dict, const OffGridParams& current,
                             OffGridMode mode, double reg) {
  OffGridParams w = current;
  for (Axis a : kAllAxes)
    if (w.axis(a).size() == 0) w.axis(a) = RVector::Zero(axis_size(dict.grid, a));
  for (Axis a : kAllAxes) {
    const QuadraticForm qf =
        mode == OffGridMode::Exact ? build_quadratic_exact(a, mom, dict, w) : build_quadratic_fast(a, mom, dict, w);
    w.axis(a) = solve_offgrid_axis(qf, dict.grid, a, true, reg);
  }
  return w;
}

}  // namespace jcep
