#pragma once

#include <complex>
#include <span>
#include <vector>

namespace dtt {

using Complex = std::complex<double>;

// Unnormalized DFT of any length: radix-2 for powers of two, Bluestein
// otherwise. `inverse` flips the exponent sign and does not scale.
std::vector<Complex> dft(std::span<const Complex> x, bool inverse = false);

// Bins 0..N/2 of the unnormalized forward DFT. Throws InputError for N = 0.
std::vector<Complex> fft_real(std::span<const double> signal);

// Inverse of fft_real with the 1/N factor. The imaginary parts of the DC and
// (for even N) Nyquist bins are ignored. Throws InputError unless
// spectrum.size() == n/2 + 1.
std::vector<double> ifft_real(std::span<const Complex> spectrum, std::size_t n);

}  // namespace dtt
