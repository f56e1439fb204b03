#include "dtt/fft.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <string>

#include "dtt/error.hpp"

namespace dtt {
namespace {

// exp(sign * 2 pi i * k / n), with k reduced first so large k stays accurate.
Complex twiddle(std::size_t k, std::size_t n, double sign) {
  const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(k % n) /
                       static_cast<double>(n);
  return {std::cos(angle), std::sin(angle)};
}

void radix2(std::vector<Complex> &a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    std::vector<Complex> w(half);
    for (std::size_t k = 0; k < half; ++k) w[k] = twiddle(k, len, sign);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const Complex u = a[i + k];
        const Complex v = a[i + k + half] * w[k];
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
    }
  }
}

std::vector<Complex> bluestein(std::span<const Complex> x, bool inverse) {
  const std::size_t n = x.size();
  const std::size_t m = std::bit_ceil(2 * n - 1);
  const double sign = inverse ? 1.0 : -1.0;
  // chirp[k] = exp(sign * pi i * k^2 / n); k^2 taken mod 2n.
  std::vector<Complex> chirp(n);
  for (std::size_t k = 0; k < n; ++k) chirp[k] = twiddle((k * k) % (2 * n), 2 * n, sign);

  std::vector<Complex> a(m), b(m);
  for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * chirp[k];
  b[0] = std::conj(chirp[0]);
  for (std::size_t k = 1; k < n; ++k) b[k] = b[m - k] = std::conj(chirp[k]);

  radix2(a, false);
  radix2(b, false);
  for (std::size_t k = 0; k < m; ++k) a[k] *= b[k];
  radix2(a, true);

  std::vector<Complex> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = a[k] / static_cast<double>(m) * chirp[k];
  return out;
}

}  // namespace

std::vector<Complex> dft(std::span<const Complex> x, bool inverse) {
  if (x.empty()) return {};
  if (std::has_single_bit(x.size())) {
    std::vector<Complex> a(x.begin(), x.end());
    radix2(a, inverse);
    return a;
  }
  return bluestein(x, inverse);
}

std::vector<Complex> fft_real(std::span<const double> signal) {
  if (signal.empty()) throw InputError("signal is empty");
  std::vector<Complex> full(signal.begin(), signal.end());
  full = dft(full);
  full.resize(signal.size() / 2 + 1);
  return full;
}

std::vector<double> ifft_real(std::span<const Complex> spectrum, std::size_t n) {
  if (n == 0) throw InputError("signal length must be >= 1");
  if (spectrum.size() != n / 2 + 1) {
    throw InputError("spectrum has " + std::to_string(spectrum.size()) + " bins, expected " +
                     std::to_string(n / 2 + 1) + " for length " + std::to_string(n));
  }
  std::vector<Complex> full(n);
  full[0] = spectrum[0].real();
  for (std::size_t k = 1; k < spectrum.size(); ++k) {
    if (2 * k == n) {
      full[k] = spectrum[k].real();
    } else {
      full[k] = spectrum[k];
      full[n - k] = std::conj(spectrum[k]);
    }
  }
  const std::vector<Complex> time = dft(full, true);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = time[i].real() / static_cast<double>(n);
  return out;
}

}  // namespace dtt
