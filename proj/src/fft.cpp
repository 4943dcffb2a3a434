#include "smore/fft.hpp"

#include <cmath>
#include <cstring>
#include <map>
#include <mutex>

#include "smore/error.hpp"

namespace smore::fft {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_pow2(std::size_t n) {
  std::size_t m = 1;
  while (m < n) m <<= 1;
  return m;
}

std::vector<double> make_twiddles(std::size_t n) {
  std::vector<double> tw(n);  // n/2 complex entries
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double a = -2.0 * kPi * static_cast<double>(k) / static_cast<double>(n);
    tw[2 * k] = std::cos(a);
    tw[2 * k + 1] = std::sin(a);
  }
  return tw;
}

}  // namespace

FftPlan::FftPlan(std::size_t n) : n_(n), pow2_(is_pow2(n)) {
  if (n < 1) throw ShapeError("FFT length must be >= 1");
  cos_.resize(n_);
  sin_.resize(n_);
  for (std::size_t t = 0; t < n_; ++t) {
    const double a = 2.0 * kPi * static_cast<double>(t) / static_cast<double>(n_);
    cos_[t] = std::cos(a);
    sin_[t] = std::sin(a);
  }
  if (pow2_) {
    tw_ = make_twiddles(n_);
    return;
  }
  // Bluestein: convolution length m >= 2n-1, power of two.
  m_ = next_pow2(2 * n_ - 1);
  mtw_ = make_twiddles(m_);
  chirp_.resize(2 * n_);
  for (std::size_t k = 0; k < n_; ++k) {
    // angle = -pi * k^2 / n, reduced mod 2n to keep the argument small
    const std::size_t t = (k * k) % (2 * n_);
    const double a = -kPi * static_cast<double>(t) / static_cast<double>(n_);
    chirp_[2 * k] = std::cos(a);
    chirp_[2 * k + 1] = std::sin(a);
  }
  kernel_.assign(2 * m_, 0.0);
  for (std::size_t k = 0; k < n_; ++k) {
    // conj(chirp) embedded circularly at k and m-k
    kernel_[2 * k] = chirp_[2 * k];
    kernel_[2 * k + 1] = -chirp_[2 * k + 1];
    if (k > 0) {
      kernel_[2 * (m_ - k)] = chirp_[2 * k];
      kernel_[2 * (m_ - k) + 1] = -chirp_[2 * k + 1];
    }
  }
  radix2(kernel_.data(), m_, mtw_);
}

void FftPlan::radix2(double* io, std::size_t n, const std::vector<double>& tw) const {
  if (n == 1) return;
  // bit-reversal permutation
  std::size_t levels = 0;
  for (std::size_t t = n; t > 1; t >>= 1) ++levels;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j = 0, x = i;
    for (std::size_t l = 0; l < levels; ++l, x >>= 1) j = (j << 1) | (x & 1);
    if (j > i) {
      std::swap(io[2 * i], io[2 * j]);
      std::swap(io[2 * i + 1], io[2 * j + 1]);
    }
  }
  // decimation-in-time butterflies
  for (std::size_t size = 2; size <= n; size <<= 1) {
    const std::size_t half = size / 2;
    const std::size_t step = n / size;
    for (std::size_t i = 0; i < n; i += size) {
      std::size_t k = 0;
      for (std::size_t j = i; j < i + half; ++j, k += step) {
        const double wr = tw[2 * k];
        const double wi = tw[2 * k + 1];
        const double xr = io[2 * (j + half)];
        const double xi = io[2 * (j + half) + 1];
        const double tr = xr * wr - xi * wi;
        const double ti = xr * wi + xi * wr;
        io[2 * (j + half)] = io[2 * j] - tr;
        io[2 * (j + half) + 1] = io[2 * j + 1] - ti;
        io[2 * j] += tr;
        io[2 * j + 1] += ti;
      }
    }
  }
}

void FftPlan::bluestein_forward(double* io) const {
  std::vector<double> a(2 * m_, 0.0);
  for (std::size_t j = 0; j < n_; ++j) {
    const double xr = io[2 * j], xi = io[2 * j + 1];
    const double cr = chirp_[2 * j], ci = chirp_[2 * j + 1];
    a[2 * j] = xr * cr - xi * ci;
    a[2 * j + 1] = xr * ci + xi * cr;
  }
  radix2(a.data(), m_, mtw_);
  for (std::size_t t = 0; t < m_; ++t) {
    const double ar = a[2 * t], ai = a[2 * t + 1];
    const double kr = kernel_[2 * t], ki = kernel_[2 * t + 1];
    a[2 * t] = ar * kr - ai * ki;
    a[2 * t + 1] = ar * ki + ai * kr;
  }
  // inverse FFT of length m via conjugation
  for (std::size_t t = 0; t < m_; ++t) a[2 * t + 1] = -a[2 * t + 1];
  radix2(a.data(), m_, mtw_);
  const double inv_m = 1.0 / static_cast<double>(m_);
  for (std::size_t k = 0; k < n_; ++k) {
    const double wr = a[2 * k] * inv_m;
    const double wi = -a[2 * k + 1] * inv_m;
    const double cr = chirp_[2 * k], ci = chirp_[2 * k + 1];
    io[2 * k] = wr * cr - wi * ci;
    io[2 * k + 1] = wr * ci + wi * cr;
  }
}

void FftPlan::forward(double* io) const {
  if (pow2_)
    radix2(io, n_, tw_);
  else
    bluestein_forward(io);
}

void FftPlan::inverse(double* io) const {
  for (std::size_t t = 0; t < n_; ++t) io[2 * t + 1] = -io[2 * t + 1];
  forward(io);
  const double inv_n = 1.0 / static_cast<double>(n_);
  for (std::size_t t = 0; t < n_; ++t) {
    io[2 * t] *= inv_n;
    io[2 * t + 1] *= -inv_n;
  }
}

void FftPlan::rfft(const double* x, double* spec) const {
  std::vector<double> buf(2 * n_);
  for (std::size_t j = 0; j < n_; ++j) {
    buf[2 * j] = x[j];
    buf[2 * j + 1] = 0.0;
  }
  forward(buf.data());
  std::memcpy(spec, buf.data(), 2 * bins() * sizeof(double));
}

void FftPlan::irfft(const double* spec, double* x) const {
  const std::size_t nb = bins();
  std::vector<double> buf(2 * n_, 0.0);
  buf[0] = spec[0];  // DC imaginary part is redundant and dropped
  buf[1] = 0.0;
  const bool even = (n_ % 2 == 0);
  const std::size_t last = even ? nb - 2 : nb - 1;  // highest paired bin
  for (std::size_t k = 1; k <= last; ++k) {
    buf[2 * k] = spec[2 * k];
    buf[2 * k + 1] = spec[2 * k + 1];
    buf[2 * (n_ - k)] = spec[2 * k];
    buf[2 * (n_ - k) + 1] = -spec[2 * k + 1];
  }
  if (even && n_ >= 2) {
    buf[2 * (n_ / 2)] = spec[2 * (nb - 1)];
    buf[2 * (n_ / 2) + 1] = 0.0;
  }
  inverse(buf.data());
  for (std::size_t j = 0; j < n_; ++j) x[j] = buf[2 * j];
}

void FftPlan::rfft_adjoint(const double* gspec, double* gx) const {
  const std::size_t nb = bins();
  for (std::size_t j = 0; j < n_; ++j) {
    double s = 0.0;
    for (std::size_t k = 0; k < nb; ++k) {
      const std::size_t t = (j * k) % n_;
      s += gspec[2 * k] * cos_[t] - gspec[2 * k + 1] * sin_[t];
    }
    gx[j] = s;
  }
}

void FftPlan::irfft_adjoint(const double* gx, double* gspec) const {
  const std::size_t nb = bins();
  const bool even = (n_ % 2 == 0);
  const std::size_t last = even ? nb - 2 : nb - 1;
  const double inv_n = 1.0 / static_cast<double>(n_);
  double s0 = 0.0;
  for (std::size_t j = 0; j < n_; ++j) s0 += gx[j];
  gspec[0] = s0 * inv_n;
  gspec[1] = 0.0;
  for (std::size_t k = 1; k <= last; ++k) {
    double sre = 0.0, sim = 0.0;
    for (std::size_t j = 0; j < n_; ++j) {
      const std::size_t t = (j * k) % n_;
      sre += gx[j] * cos_[t];
      sim += gx[j] * sin_[t];
    }
    gspec[2 * k] = 2.0 * inv_n * sre;
    gspec[2 * k + 1] = -2.0 * inv_n * sim;
  }
  if (even && n_ >= 2) {
    double s = 0.0;
    for (std::size_t j = 0; j < n_; ++j) s += (j % 2 == 0 ? gx[j] : -gx[j]);
    gspec[2 * (nb - 1)] = s * inv_n;
    gspec[2 * (nb - 1) + 1] = 0.0;
  }
}

const FftPlan& plan_for(std::size_t n) {
  static std::map<std::size_t, FftPlan> cache;
  static std::mutex mutex;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, FftPlan(n)).first;
  return it->second;
}

void rfft_rows(const FftPlan& plan, const double* X, double* S, std::size_t nrows) {
  const std::size_t n = plan.length(), nb = plan.bins();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(nrows); ++r)
    plan.rfft(X + r * n, S + r * 2 * nb);
}

void irfft_rows(const FftPlan& plan, const double* S, double* X, std::size_t nrows) {
  const std::size_t n = plan.length(), nb = plan.bins();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(nrows); ++r)
    plan.irfft(S + r * 2 * nb, X + r * n);
}

void rfft_adjoint_rows(const FftPlan& plan, const double* G, double* GX, std::size_t nrows) {
  const std::size_t n = plan.length(), nb = plan.bins();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(nrows); ++r)
    plan.rfft_adjoint(G + r * 2 * nb, GX + r * n);
}

void irfft_adjoint_rows(const FftPlan& plan, const double* G, double* GS, std::size_t nrows) {
  const std::size_t n = plan.length(), nb = plan.bins();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(nrows); ++r)
    plan.irfft_adjoint(G + r * n, GS + r * 2 * nb);
}

namespace serial {

void rfft_rows(const FftPlan& plan, const double* X, double* S, std::size_t nrows) {
  const std::size_t n = plan.length(), nb = plan.bins();
  for (std::size_t r = 0; r < nrows; ++r) plan.rfft(X + r * n, S + r * 2 * nb);
}

void irfft_rows(const FftPlan& plan, const double* S, double* X, std::size_t nrows) {
  const std::size_t n = plan.length(), nb = plan.bins();
  for (std::size_t r = 0; r < nrows; ++r) plan.irfft(S + r * 2 * nb, X + r * n);
}

}  // namespace serial

}  // namespace smore::fft
