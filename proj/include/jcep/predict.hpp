#pragma once

#include "jcep/dictionary.hpp"
#include "jcep/types.hpp"

#include <vector>

namespace jcep {

inline constexpr double kNmseFloorDb = -300.0;

/// 10 log10(||G_hat - G||^2 / ||G||^2), floored at kNmseFloorDb.
double nmse_db(const CMatrix& truth, const CMatrix& estimate);

/// Default horizons: `count` evenly spaced instants in (0, dT] after the last sounding.
std::vector<double> default_horizons(const SystemConfig& cfg, int count = 8);

/// Predicted channel at the given horizons after the last sounding, rows ordered
/// (horizon, n, m) exactly as synth_channel_at_times. The estimate keeps the composed
/// delay/space/Doppler row of sounding K-1 and advances every DAD column by
/// exp(j 2 pi h nu_hat) with nu_hat the off-grid corrected Doppler.
CMatrix extrapolate(const CMatrix& h_hat, const OffGridParams& offsets, const DictionarySet& dict,
                    const std::vector<double>& horizons);

/// Absolute times (K-1) dT + h for the horizons.
std::vector<double> horizon_times(const SystemConfig& cfg, const std::vector<double>& horizons);

}  // namespace jcep
