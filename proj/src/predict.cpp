#include "jcep/predict.hpp"

#include <algorithm>
#include <cmath>

namespace jcep {

double nmse_db(const CMatrix& truth, const CMatrix& estimate) {
  if (truth.rows() != estimate.rows() || truth.cols() != estimate.cols())
    throw ConfigError("nmse_db: shape mismatch");
  const double e = truth.squaredNorm();
  if (!(e > 0.0)) throw ConfigError("nmse_db: zero-energy truth");
  const double r = (estimate - truth).squaredNorm() / e;
  if (!(r > 0.0)) return kNmseFloorDb;
  return std::max(kNmseFloorDb, 10.0 * std::log10(r));
}

std::vector<double> default_horizons(const SystemConfig& cfg, int count) {
  if (count < 1) throw ConfigError("default_horizons: count must be >= 1");
  std::vector<double> h(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) h[static_cast<std::size_t>(i)] = (i + 1) * cfg.dT_full / count;
  return h;
}

std::vector<double> horizon_times(const SystemConfig& cfg, const std::vector<double>& horizons) {
  std::vector<double> t(horizons.size());
  for (std::size_t i = 0; i < horizons.size(); ++i) t[i] = (cfg.n_soundings - 1) * cfg.dT_full + horizons[i];
  return t;
}

CMatrix extrapolate(const CMatrix& h_hat, const OffGridParams& offsets, const DictionarySet& dict,
                    const std::vector<double>& horizons) {
  if (horizons.empty()) throw ConfigError("extrapolate: empty horizon");
  for (double h : horizons)
    if (!(h >= 0.0) || !std::isfinite(h)) throw ConfigError("extrapolate: horizons must be finite and non-negative");
  if (h_hat.rows() != dict.cols()) throw ConfigError("extrapolate: estimate rows must equal the grid size");
  const SystemConfig& cfg = dict.cfg;
  const GridSpec& g = dict.grid;
  const auto mode = dict.has_dense() ? OffGridOperator::Mode::Dense : OffGridOperator::Mode::Factored;
  const OffGridOperator op(dict, offsets, mode);
  const RVector eta = offsets.eta.size() ? offsets.eta : RVector::Zero(g.n_doppler);
  RVector nu(dict.cols());
  for (Index j = 0; j < dict.cols(); ++j) {
    const int k = dict.col_axis[3][static_cast<std::size_t>(j)];
    nu(j) = g.doppler_grid(k) + eta(k);
  }
  const Index nm = static_cast<Index>(cfg.srs_len) * cfg.n_antennas();
  const int K = cfg.n_soundings;
  CMatrix out(nm * static_cast<Index>(horizons.size()), h_hat.cols());
  for (std::size_t t = 0; t < horizons.size(); ++t) {
    CVector phase(dict.cols());
    for (Index j = 0; j < dict.cols(); ++j) phase(j) = std::polar(1.0, 2.0 * kPi * horizons[t] * nu(j));
    const CMatrix full = op.apply(phase.asDiagonal() * h_hat);
    for (Index r = 0; r < nm; ++r) out.row(static_cast<Index>(t) * nm + r) = full.row(r * K + (K - 1));
  }
  return out;
}

}  // namespace jcep
