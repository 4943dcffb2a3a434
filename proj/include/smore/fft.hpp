#pragma once

#include <cstddef>
#include <vector>

namespace smore::fft {

// One-dimensional DFT plan for a fixed length n. Powers of two run the
// iterative radix-2 Cooley-Tukey transform; everything else goes through
// Bluestein's chirp-z algorithm on a power-of-two convolution. Complex data
// is interleaved (re, im). Plans are immutable after construction and safe
// to share across threads.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n);

  std::size_t length() const { return n_; }
  // Non-redundant bin count of a real-input transform: floor(n/2) + 1.
  std::size_t bins() const { return n_ / 2 + 1; }

  // In-place complex DFT, sign -1 in the exponent. Buffer holds 2n doubles.
  void forward(double* io) const;
  // In-place inverse complex DFT including the 1/n factor.
  void inverse(double* io) const;

  // Real row of n values -> bins() complex values (interleaved).
  void rfft(const double* x, double* spec) const;
  // bins() complex values -> n real values via Hermitian extension. The
  // imaginary parts of the DC bin (and Nyquist bin for even n) do not enter
  // the output, matching the redundancy of a real-input spectrum.
  void irfft(const double* spec, double* x) const;

  // Exact transposes of the linear maps above, used for reverse-mode
  // gradients. rfft_adjoint maps a spectrum cotangent (2*bins doubles) to a
  // row cotangent (n doubles); irfft_adjoint the other way around.
  void rfft_adjoint(const double* gspec, double* gx) const;
  void irfft_adjoint(const double* gx, double* gspec) const;

 private:
  void radix2(double* io, std::size_t n, const std::vector<double>& tw) const;
  void bluestein_forward(double* io) const;

  std::size_t n_;
  bool pow2_;
  std::vector<double> tw_;        // radix-2 twiddles exp(-2*pi*i*k/n), k < n/2
  std::vector<double> cos_, sin_; // cos/sin(2*pi*t/n) for t < n (adjoint tables)
  // Bluestein state
  std::size_t m_ = 0;
  std::vector<double> mtw_;
  std::vector<double> chirp_;     // exp(-i*pi*k^2/n), k < n
  std::vector<double> kernel_;    // FFT_m of the embedded conjugate chirp
};

// Process-wide plan cache keyed by length.
const FftPlan& plan_for(std::size_t n);

// Batched row-wise transforms over an nrows x n (or nrows x bins) matrix.
// Parallel versions split by row and are bitwise equal to the serial ones.
void rfft_rows(const FftPlan& plan, const double* X, double* S, std::size_t nrows);
void irfft_rows(const FftPlan& plan, const double* S, double* X, std::size_t nrows);
void rfft_adjoint_rows(const FftPlan& plan, const double* G, double* GX, std::size_t nrows);
void irfft_adjoint_rows(const FftPlan& plan, const double* G, double* GS, std::size_t nrows);

namespace serial {
void rfft_rows(const FftPlan& plan, const double* X, double* S, std::size_t nrows);
void irfft_rows(const FftPlan& plan, const double* S, double* X, std::size_t nrows);
}  // namespace serial

}  // namespace smore::fft
