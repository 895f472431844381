#pragma once

// Brute-force reference computations shared by the unit tests. Everything here is
// written directly from the defining formulas, loop by loop, without calling into
// the library's own composition code.

#include "jcep/types.hpp"

#include <cmath>
#include <complex>

namespace oracle {

using jcep::cplx;
using jcep::CMatrix;
using jcep::CVector;
using jcep::Index;

inline cplx expj(double phase) { return {std::cos(phase), std::sin(phase)}; }

inline double rel_err(const CMatrix& a, const CMatrix& b) {
  const double den = std::max(b.norm(), 1e-300);
  return (a - b).norm() / den;
}

inline double rel_err(const jcep::RMatrix& a, const jcep::RMatrix& b) {
  const double den = std::max(b.norm(), 1e-300);
  return (a - b).norm() / den;
}

// Unnormalized DFT matrix, entry (n, m) = e^{-j 2 pi n m / N}.
inline CMatrix dft(int n) {
  CMatrix F(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) F(r, c) = expj(-2.0 * M_PI * r * c / n);
  return F;
}

// One entry of the DAD dictionary at continuous parameters, straight from the
// steering definitions.
inline cplx atom_entry(int n, int mv, int mh, int k, double tau, double u, double v, double nu, double df,
                       double dT) {
  return expj(-2.0 * M_PI * n * df * tau) * expj(-M_PI * mv * u) * expj(-M_PI * mh * v) *
         expj(2.0 * M_PI * k * dT * nu);
}

}  // namespace oracle
