#include "jcep/dictionary.hpp"

#include <algorithm>
#include <sstream>
#include <vector>

#include "jcep/steering.hpp"

namespace jcep {

namespace {

// Factor matrix whose column j is the steering vector at grid value + offset.
template <typename Steer>
CMatrix factor_matrix(const RVector& grid_vals, const RVector& offsets, int n_rows, Steer steer) {
  CMatrix F(n_rows, grid_vals.size());
  for (Index j = 0; j < grid_vals.size(); ++j) F.col(j) = steer(grid_vals(j) + (offsets.size() ? offsets(j) : 0.0));
  return F;
}

std::array<CMatrix, 4> factors_at(const GridSpec& grid, const OffGridParams& w, const SystemConfig& cfg) {
  const double df = cfg.delta_f();
  const double dT = cfg.dT_full;
  return {
      factor_matrix(grid.delay_grid, w.alpha, cfg.srs_len, [&](double t) { return steering_delay(t, cfg.srs_len, df); }),
      factor_matrix(grid.elev_cos_grid, w.beta, cfg.m_v, [&](double u) { return steering_space(u, cfg.m_v); }),
      factor_matrix(grid.azim_cos_grid, w.gamma, cfg.m_h, [&](double v) { return steering_space(v, cfg.m_h); }),
      factor_matrix(grid.doppler_grid, w.eta, cfg.n_soundings,
                    [&](double nu) { return steering_doppler(nu, cfg.n_soundings, dT); }),
  };
}

}  // namespace

CMatrix mode_product(const CMatrix& X, std::array<Index, 4>& dims, int mode, const CMatrix& F) {
  Index inner = 1;
  for (int d = mode + 1; d < 4; ++d) inner *= dims[d];
  Index outer = X.cols();
  for (int d = 0; d < mode; ++d) outer *= dims[d];
  const Index n_in = dims[mode];
  const Index n_out = F.rows();
  CMatrix Y(X.rows() / n_in * n_out, X.cols());
  if (inner == 1) {
    Eigen::Map<const CMatrix> xs(X.data(), n_in, outer);
    Eigen::Map<CMatrix> ys(Y.data(), n_out, outer);
    ys.noalias() = F * xs;
  } else {
    // Bring the contracted mode to the front so one product covers every slice.
    CMatrix Z(n_in, inner * outer);
    const cplx* x = X.data();
    for (Index o = 0; o < outer; ++o)
      for (Index k = 0; k < n_in; ++k)
        for (Index i = 0; i < inner; ++i) Z(k, o * inner + i) = x[(o * n_in + k) * inner + i];
    const CMatrix R = F * Z;
    cplx* y = Y.data();
    for (Index o = 0; o < outer; ++o)
      for (Index k = 0; k < n_out; ++k)
        for (Index i = 0; i < inner; ++i) y[(o * n_out + k) * inner + i] = R(k, o * inner + i);
  }
  dims[mode] = n_out;
  return Y;
}

CMatrix kron4(const CMatrix& a, const CMatrix& b, const CMatrix& c, const CMatrix& d) {
  auto kron2 = [](const CMatrix& x, const CMatrix& y) {
    CMatrix out(x.rows() * y.rows(), x.cols() * y.cols());
    for (Index i = 0; i < x.rows(); ++i)
      for (Index j = 0; j < x.cols(); ++j) out.block(i * y.rows(), j * y.cols(), y.rows(), y.cols()) = x(i, j) * y;
    return out;
  };
  return kron2(kron2(kron2(a, b), c), d);
}

CMatrix kron4_apply(const std::array<CMatrix, 4>& factors, const CMatrix& X, bool adjoint) {
  std::array<Index, 4> in_dims;
  Index expect = 1;
  for (int m = 0; m < 4; ++m) {
    in_dims[m] = adjoint ? factors[m].rows() : factors[m].cols();
    expect *= in_dims[m];
  }
  if (X.rows() != expect) throw ConfigError("kron4_apply: input rows do not match the Kronecker operator");
  Index out_rows = 1;
  for (int m = 0; m < 4; ++m) out_rows *= adjoint ? factors[m].cols() : factors[m].rows();
  std::array<Index, 4> dims = in_dims;
  CMatrix V = X;
  // Shrinking modes first keeps the intermediate tensors small.
  std::array<int, 4> order = {3, 2, 1, 0};
  auto growth = [&](int m) {
    const double r = static_cast<double>(factors[m].rows()) / static_cast<double>(factors[m].cols());
    return adjoint ? 1.0 / r : r;
  };
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return growth(a) < growth(b); });
  for (int m : order) V = mode_product(V, dims, m, adjoint ? CMatrix(factors[m].adjoint()) : factors[m]);
  if (V.rows() != out_rows) throw ConfigError("kron4_apply: internal shape mismatch");
  return V;
}

CMatrix DictionarySet::dW(Axis axis) const {
  if (!has_dense()) throw ConfigError("DictionarySet::dW: dense dictionary not built");
  const RVector& a = row_coeff.col(static_cast<int>(axis));
  return (a.cast<cplx>() * kJ).asDiagonal() * W;
}

RVector DictionarySet::replicate(Axis axis, const RVector& x) const {
  const auto& idx = col_axis[static_cast<int>(axis)];
  if (x.size() != axis_size(grid, axis)) throw ConfigError("replicate: offset vector has the wrong length");
  RVector out(static_cast<Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out(static_cast<Index>(j)) = x(idx[j]);
  return out;
}

RMatrix DictionarySet::replication_matrix(Axis axis) const {
  const auto& idx = col_axis[static_cast<int>(axis)];
  RMatrix R = RMatrix::Zero(static_cast<Index>(idx.size()), axis_size(grid, axis));
  for (std::size_t j = 0; j < idx.size(); ++j) R(static_cast<Index>(j), idx[j]) = 1.0;
  return R;
}

DictionarySet build_dictionary(const GridSpec& grid, const SystemConfig& cfg, bool dense) {
  cfg.validate();
  grid.validate_against(cfg);
  DictionarySet d;
  d.cfg = cfg;
  d.grid = grid;
  d.factor = factors_at(grid, OffGridParams{}, cfg);

  const double df = cfg.delta_f();
  const std::array<RVector, 4> coeff = {
      RVector::LinSpaced(cfg.srs_len, 0, cfg.srs_len - 1) * (-2.0 * kPi * df),
      RVector::LinSpaced(cfg.m_v, 0, cfg.m_v - 1) * (-kPi),
      RVector::LinSpaced(cfg.m_h, 0, cfg.m_h - 1) * (-kPi),
      RVector::LinSpaced(cfg.n_soundings, 0, cfg.n_soundings - 1) * (2.0 * kPi * cfg.dT_full),
  };
  for (int m = 0; m < 4; ++m) d.dfactor[m] = (coeff[m].cast<cplx>() * kJ).asDiagonal() * d.factor[m];

  const Index I = cfg.rows();
  d.row_coeff.resize(I, 4);
  for (int n = 0; n < cfg.srs_len; ++n)
    for (int mv = 0; mv < cfg.m_v; ++mv)
      for (int mh = 0; mh < cfg.m_h; ++mh)
        for (int k = 0; k < cfg.n_soundings; ++k) {
          const Index i = ((static_cast<Index>(n) * cfg.m_v + mv) * cfg.m_h + mh) * cfg.n_soundings + k;
          d.row_coeff(i, 0) = coeff[0](n);
          d.row_coeff(i, 1) = coeff[1](mv);
          d.row_coeff(i, 2) = coeff[2](mh);
          d.row_coeff(i, 3) = coeff[3](k);
        }

  const Index J = grid.columns();
  for (Axis a : kAllAxes) {
    auto& idx = d.col_axis[static_cast<int>(a)];
    idx.resize(static_cast<std::size_t>(J));
    for (Index j = 0; j < J; ++j) idx[static_cast<std::size_t>(j)] = axis_index(grid, j, a);
  }
  if (dense) d.W = kron4(d.factor[0], d.factor[1], d.factor[2], d.factor[3]);
  return d;
}

OffGridOperator::OffGridOperator(const DictionarySet& dict, const OffGridParams& offsets, Mode mode,
                                 std::vector<Index> active)
    : dict_(&dict), offsets_(offsets), mode_(mode), active_(std::move(active)) {
  const GridSpec& g = dict.grid;
  for (Axis a : kAllAxes) {
    RVector& x = offsets_.axis(a);
    if (x.size() == 0) x = RVector::Zero(axis_size(g, a));
    if (x.size() != axis_size(g, a)) {
      std::ostringstream os;
      os << "OffGridOperator: offset vector " << axis_name(a) << " has length " << x.size() << ", expected "
         << axis_size(g, a);
      throw ConfigError(os.str());
    }
  }
  for (Index j : active_)
    if (j < 0 || j >= dict.cols()) throw ConfigError("OffGridOperator: active column out of range");
  col_off_.resize(cols(), 4);
  for (Axis a : kAllAxes) {
    const RVector full = dict.replicate(a, offsets_.axis(a));
    for (Index c = 0; c < cols(); ++c) col_off_(c, static_cast<int>(a)) = full(active_.empty() ? c : active_[c]);
  }
  if (mode_ == Mode::Dense) {
    if (!dict.has_dense()) throw ConfigError("OffGridOperator: dense mode requires a dense dictionary");
    CMatrix base;
    if (active_.empty()) {
      base = dict.W;
    } else {
      base.resize(dict.rows(), cols());
      for (Index c = 0; c < cols(); ++c) base.col(c) = dict.W.col(active_[c]);
    }
    const RMatrix phase = dict.row_coeff * col_off_.transpose();
    Wd_ = base.array() * (1.0 + kJ * phase.array().cast<cplx>());
    A2_ = Wd_.cwiseAbs2();
  }
}

CMatrix OffGridOperator::scatter(const CMatrix& X) const {
  if (active_.empty()) return X;
  CMatrix full = CMatrix::Zero(dict_->cols(), X.cols());
  for (Index c = 0; c < cols(); ++c) full.row(active_[c]) = X.row(c);
  return full;
}

CMatrix OffGridOperator::gather(const CMatrix& X) const {
  if (active_.empty()) return X;
  CMatrix out(cols(), X.cols());
  for (Index c = 0; c < cols(); ++c) out.row(c) = X.row(active_[c]);
  return out;
}

CMatrix OffGridOperator::apply(const CMatrix& X) const {
  if (X.rows() != cols()) throw ConfigError("OffGridOperator::apply: shape mismatch");
  if (mode_ == Mode::Dense) return Wd_ * X;
  // Stack the zero-offset input with every offset-scaled copy so one Kronecker pass serves all terms.
  std::vector<int> used;
  for (int a = 0; a < 4; ++a)
    if (col_off_.col(a).cwiseAbs().maxCoeff() != 0.0) used.push_back(a);
  const Index L = X.cols();
  CMatrix stacked(X.rows(), L * static_cast<Index>(1 + used.size()));
  stacked.leftCols(L) = X;
  for (std::size_t u = 0; u < used.size(); ++u)
    stacked.middleCols(L * static_cast<Index>(u + 1), L) = col_off_.col(used[u]).cast<cplx>().asDiagonal() * X;
  const CMatrix out = kron4_apply(dict_->factor, scatter(stacked), false);
  CMatrix Y = out.leftCols(L);
  for (std::size_t u = 0; u < used.size(); ++u)
    Y += (dict_->row_coeff.col(used[u]).cast<cplx>() * kJ).asDiagonal() * out.middleCols(L * static_cast<Index>(u + 1), L);
  return Y;
}

CMatrix OffGridOperator::apply_adjoint(const CMatrix& Y) const {
  if (Y.rows() != rows()) throw ConfigError("OffGridOperator::apply_adjoint: shape mismatch");
  if (mode_ == Mode::Dense) return Wd_.adjoint() * Y;
  std::vector<int> used;
  for (int a = 0; a < 4; ++a)
    if (col_off_.col(a).cwiseAbs().maxCoeff() != 0.0) used.push_back(a);
  const Index L = Y.cols();
  CMatrix stacked(Y.rows(), L * static_cast<Index>(1 + used.size()));
  stacked.leftCols(L) = Y;
  for (std::size_t u = 0; u < used.size(); ++u)
    stacked.middleCols(L * static_cast<Index>(u + 1), L) =
        (dict_->row_coeff.col(used[u]).cast<cplx>() * (-kJ)).asDiagonal() * Y;
  const CMatrix out = gather(kron4_apply(dict_->factor, stacked, true));
  CMatrix X = out.leftCols(L);
  for (std::size_t u = 0; u < used.size(); ++u)
    X += col_off_.col(used[u]).cast<cplx>().asDiagonal() * out.middleCols(L * static_cast<Index>(u + 1), L);
  return X;
}

RMatrix OffGridOperator::abs2_row_sums(const RMatrix& weights) const {
  if (weights.rows() != cols()) throw ConfigError("abs2_row_sums: shape mismatch");
  if (mode_ == Mode::Dense) return A2_ * weights;
  // |w_ij(w)|^2 = 1 + (a_i . d_j)^2 because the zeroth-order entries are unit modulus.
  const RMatrix& A = dict_->row_coeff;
  RMatrix out(rows(), weights.cols());
  for (Index l = 0; l < weights.cols(); ++l) {
    const RMatrix Q = col_off_.transpose() * weights.col(l).asDiagonal() * col_off_;
    out.col(l) = ((A * Q).cwiseProduct(A)).rowwise().sum().array() + weights.col(l).sum();
  }
  return out;
}

RMatrix OffGridOperator::abs2_col_sums(const RMatrix& weights) const {
  if (weights.rows() != rows()) throw ConfigError("abs2_col_sums: shape mismatch");
  if (mode_ == Mode::Dense) return A2_.transpose() * weights;
  const RMatrix& A = dict_->row_coeff;
  RMatrix out(cols(), weights.cols());
  for (Index l = 0; l < weights.cols(); ++l) {
    const RMatrix Q = A.transpose() * weights.col(l).asDiagonal() * A;
    out.col(l) = ((col_off_ * Q).cwiseProduct(col_off_)).rowwise().sum().array() + weights.col(l).sum();
  }
  return out;
}

CMatrix OffGridOperator::dense() const {
  if (mode_ == Mode::Dense) return Wd_;
  return apply(CMatrix::Identity(cols(), cols()));
}

OffGridOperator compose_W(const DictionarySet& dict, const OffGridParams& offsets, OffGridOperator::Mode mode) {
  return OffGridOperator(dict, offsets, mode);
}

CMatrix exact_W(const GridSpec& grid, const OffGridParams& offsets, const SystemConfig& cfg) {
  const auto f = factors_at(grid, offsets, cfg);
  return kron4(f[0], f[1], f[2], f[3]);
}

OffGridOperator prune(const OffGridOperator& op, const std::vector<bool>& mask) {
  const DictionarySet& d = op.dictionary();
  if (static_cast<Index>(mask.size()) != d.cols()) throw ConfigError("prune: mask length must equal grid size");
  std::vector<Index> active;
  for (std::size_t j = 0; j < mask.size(); ++j)
    if (mask[j]) active.push_back(static_cast<Index>(j));
  if (active.empty()) throw ConfigError("prune: empty mask");
  return OffGridOperator(d, op.offsets(), op.mode(), std::move(active));
}

}  // namespace jcep
