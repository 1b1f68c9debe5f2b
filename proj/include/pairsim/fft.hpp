/*
 * Copyright 2026 The pairsim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Thin RAII wrapper over FFTW real transforms of arbitrary length.

#ifndef PAIRSIM_FFT_HPP_
#define PAIRSIM_FFT_HPP_

#include <fftw3.h>

#include <complex>
#include <cstring>
#include <mutex>
#include <span>
#include <vector>

#include "pairsim/common.hpp"

namespace pairsim {

namespace detail {
// FFTW's planner is not thread-safe; execution is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

// Forward r2c / inverse c2r pair for one transform length. FFTW_ESTIMATE
// plans are deterministic, so repeated runs give bit-identical output.
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    if (n == 0) throw InvalidArgument("RealFft: zero length");
    time_ = fftw_alloc_real(n);
    freq_ = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard lock(detail::fftw_planner_mutex());
    fwd_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), time_, freq_, FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), freq_, time_, FFTW_ESTIMATE);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;
  ~RealFft() {
    {
      std::lock_guard lock(detail::fftw_planner_mutex());
      fftw_destroy_plan(fwd_);
      fftw_destroy_plan(inv_);
    }
    fftw_free(time_);
    fftw_free(freq_);
  }

  std::size_t size() const noexcept { return n_; }
  std::size_t bins() const noexcept { return n_ / 2 + 1; }

  std::vector<std::complex<double>> forward(std::span<const double> x) {
    if (x.size() != n_) throw InvalidArgument("RealFft::forward: length mismatch");
    std::memcpy(time_, x.data(), n_ * sizeof(double));
    fftw_execute(fwd_);
    std::vector<std::complex<double>> out(bins());
    for (std::size_t k = 0; k < bins(); ++k) out[k] = {freq_[k][0], freq_[k][1]};
    return out;
  }

  // Normalized: inverse(forward(x)) == x.
  std::vector<double> inverse(std::span<const std::complex<double>> X) {
    if (X.size() != bins()) throw InvalidArgument("RealFft::inverse: length mismatch");
    for (std::size_t k = 0; k < bins(); ++k) {
      freq_[k][0] = X[k].real();
      freq_[k][1] = X[k].imag();
    }
    fftw_execute(inv_);
    std::vector<double> out(time_, time_ + n_);
    const double scale = 1.0 / static_cast<double>(n_);
    for (auto& v : out) v *= scale;
    return out;
  }

 private:
  std::size_t n_;
  double* time_ = nullptr;
  fftw_complex* freq_ = nullptr;
  fftw_plan fwd_ = nullptr;
  fftw_plan inv_ = nullptr;
};

// Bin k of an n-point transform at rate `sr`.
inline double bin_frequency(std::size_t k, std::size_t n, int sr) {
  return static_cast<double>(k) * sr / static_cast<double>(n);
}

}  // namespace pairsim

#endif  // PAIRSIM_FFT_HPP_
