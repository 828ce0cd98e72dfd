#include "fan/spectral.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <utility>

#include "fan/errors.hpp"

namespace fan {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

namespace {

void require_power_of_two(std::size_t n, const char* what) {
  if (!is_power_of_two(n)) {
    throw ConfigError(std::string(what) + ": length " + std::to_string(n) + " is not a power of two");
  }
}

}  // namespace

std::vector<double> fit_to_length(std::span<const double> series, std::size_t n) {
  require_power_of_two(n, "fit_to_length");
  std::vector<double> out(n, 0.0);
  if (series.size() >= n) {
    std::copy(series.end() - static_cast<std::ptrdiff_t>(n), series.end(), out.begin());
  } else {
    std::copy(series.begin(), series.end(), out.begin() + static_cast<std::ptrdiff_t>(n - series.size()));
  }
  return out;
}

std::vector<std::complex<double>> fft_complex(std::span<const double> series) {
  const std::size_t n = series.size();
  require_power_of_two(n, "fft");
  std::vector<std::complex<double>> x(series.begin(), series.end());

  // bit-reversal permutation
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        // Twiddles from the exact angle rather than a running product, so the
        // error does not compound across k.
        const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(len);
        const std::complex<double> w(std::cos(angle), std::sin(angle));
        const auto even = x[start + k];
        const auto odd = w * x[start + k + half];
        x[start + k] = even + odd;
        x[start + k + half] = even - odd;
      }
    }
  }
  return x;
}

std::vector<std::complex<double>> dft_brute_complex(std::span<const double> series) {
  const std::size_t n = series.size();
  if (n == 0) throw ConfigError("dft_brute: empty series");
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      // reduce k*t mod n first to keep the angle small
      const double angle =
          -2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
      acc += series[t] * std::complex<double>(std::cos(angle), std::sin(angle));
    }
    out[k] = acc;
  }
  return out;
}

Spectrum to_spectrum(std::span<const std::complex<double>> bins) {
  Spectrum s;
  s.amplitude.resize(bins.size());
  s.phase.resize(bins.size());
  for (std::size_t k = 0; k < bins.size(); ++k) {
    s.amplitude[k] = std::abs(bins[k]);
    s.phase[k] = s.amplitude[k] <= kZeroAmplitude ? 0.0 : std::atan2(bins[k].imag(), bins[k].real());
    // atan2 can return -pi for a negative real axis with -0.0 imaginary part
    if (s.phase[k] == -std::numbers::pi) s.phase[k] = std::numbers::pi;
  }
  return s;
}

Spectrum fft(std::span<const double> series) {
  const auto bins = fft_complex(series);
  return to_spectrum(bins);
}

Spectrum dft_brute(std::span<const double> series) {
  const auto bins = dft_brute_complex(series);
  return to_spectrum(bins);
}

}  // namespace fan
