#pragma once

#include "jcep/types.hpp"

#include <array>
#include <vector>

namespace jcep {

/// Zeroth-order DAD transform W = B (x) C_v (x) C_h (x) D at zero offsets and its
/// first-order derivative factors.
///
/// Derivatives are anchored at zero offsets, so every derivative operator is a row
/// scaling of W: dW_x = j diag(a_x) W with a_alpha = -2 pi n df, a_beta = -pi m_v,
/// a_gamma = -pi m_h and a_eta = 2 pi k dT for row (n, m_v, m_h, k).
struct DictionarySet {
  SystemConfig cfg;
  GridSpec grid;
  std::array<CMatrix, 4> factor;   // B, C_v, C_h, D
  std::array<CMatrix, 4> dfactor;  // dB, dC_v, dC_h, dD
  RMatrix row_coeff;               // NMK x 4, columns a_alpha .. a_eta
  std::array<std::vector<int>, 4> col_axis;  // axis index of every DAD column
  CMatrix W;                       // dense NMK x J, empty when not built

  Index rows() const { return row_coeff.rows(); }
  Index cols() const { return grid.columns(); }
  bool has_dense() const { return W.size() > 0; }

  /// Dense derivative operator dW_x.
  CMatrix dW(Axis axis) const;
  /// R_x x: per-column offsets, constant within each slice of the axis.
  RVector replicate(Axis axis, const RVector& x) const;
  /// Explicit J x axis_size replication matrix.
  RMatrix replication_matrix(Axis axis) const;
};

DictionarySet build_dictionary(const GridSpec& grid, const SystemConfig& cfg, bool dense = true);

/// Mode product of each column of X laid out as a 4-way tensor, last index fastest.
/// dims holds the current tensor sizes and is updated; F maps dims[mode] -> F.rows().
CMatrix mode_product(const CMatrix& X, std::array<Index, 4>& dims, int mode, const CMatrix& F);

/// Applies a Kronecker product of four factors to the columns of X (and the adjoint
/// when adjoint is set) without forming the product.
CMatrix kron4_apply(const std::array<CMatrix, 4>& factors, const CMatrix& X, bool adjoint);

/// Dense Kronecker product of four matrices, first factor varying slowest.
CMatrix kron4(const CMatrix& a, const CMatrix& b, const CMatrix& c, const CMatrix& d);

/// First-order composed transform W(w) = W + sum_x dW_x diag(R_x x), optionally
/// restricted to a subset of DAD columns.
class OffGridOperator {
 public:
  enum class Mode { Dense, Factored };

  OffGridOperator(const DictionarySet& dict, const OffGridParams& offsets, Mode mode = Mode::Dense,
                  std::vector<Index> active = {});

  Index rows() const { return dict_->rows(); }
  Index cols() const { return static_cast<Index>(active_.empty() ? dict_->cols() : active_.size()); }
  Mode mode() const { return mode_; }
  const OffGridParams& offsets() const { return offsets_; }
  /// Column subset in full-grid indices; empty means all columns.
  const std::vector<Index>& active() const { return active_; }
  const DictionarySet& dictionary() const { return *dict_; }

  CMatrix apply(const CMatrix& X) const;
  CMatrix apply_adjoint(const CMatrix& Y) const;
  /// sum_j |w_ij|^2 weights_jl for every row i and column l of the weights.
  RMatrix abs2_row_sums(const RMatrix& weights) const;
  /// sum_i |w_ij|^2 weights_il for every column j.
  RMatrix abs2_col_sums(const RMatrix& weights) const;
  /// Explicit matrix of the operator.
  CMatrix dense() const;

 private:
  CMatrix scatter(const CMatrix& X) const;
  CMatrix gather(const CMatrix& X) const;

  const DictionarySet* dict_;
  OffGridParams offsets_;
  Mode mode_;
  std::vector<Index> active_;
  RMatrix col_off_;  // cols() x 4, entry (j, x) = (R_x x)_j
  CMatrix Wd_;       // dense mode only
  RMatrix A2_;       // |Wd|^2, dense mode only
};

/// Convenience wrapper for OffGridOperator construction.
OffGridOperator compose_W(const DictionarySet& dict, const OffGridParams& offsets,
                          OffGridOperator::Mode mode = OffGridOperator::Mode::Dense);

/// Exact off-grid transform B(alpha) (x) C_v(beta) (x) C_h(gamma) (x) D(eta), dense.
CMatrix exact_W(const GridSpec& grid, const OffGridParams& offsets, const SystemConfig& cfg);

/// Restricts an operator to the DAD columns selected by mask (full-grid length).
OffGridOperator prune(const OffGridOperator& op, const std::vector<bool>& mask);

}  // namespace jcep
