#pragma once

#include <unsupported/Eigen/FFT>

#include <vector>

#include "flp/common.hpp"

namespace flp {

namespace detail {
// One FFT object per thread; it caches plans per transform length internally.
inline Eigen::FFT<double>& fft_engine() {
  thread_local Eigen::FFT<double> fft;
  return fft;
}
}  // namespace detail

// Unitary DFT: X[k] = n^{-1/2} * sum_m x[m] e^{-j 2 pi k m / n}.
inline std::vector<cplx> unitary_dft(const std::vector<cplx>& x) {
  require(!x.empty(), "unitary_dft: empty input");
  std::vector<cplx> out;
  detail::fft_engine().fwd(out, x);
  const double s = 1.0 / std::sqrt(static_cast<double>(x.size()));
  for (auto& v : out) v *= s;
  return out;
}

// Unitary inverse DFT: x[m] = n^{-1/2} * sum_k X[k] e^{+j 2 pi k m / n}.
inline std::vector<cplx> unitary_idft(const std::vector<cplx>& X) {
  require(!X.empty(), "unitary_idft: empty input");
  std::vector<cplx> out;
  detail::fft_engine().inv(out, X);  // Eigen scales by 1/n
  const double s = std::sqrt(static_cast<double>(X.size()));
  for (auto& v : out) v *= s;
  return out;
}

}  // namespace flp
