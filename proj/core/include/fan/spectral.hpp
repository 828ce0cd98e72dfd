#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace fan {

/// Amplitude and phase of every DFT bin (all N bins, not just N/2+1).
struct Spectrum {
  std::vector<double> amplitude;
  std::vector<double> phase;  // radians in (-pi, pi]; 0 where amplitude <= kZeroAmplitude
};

/// Bins at or below this amplitude get phase 0.
inline constexpr double kZeroAmplitude = 1e-12;

bool is_power_of_two(std::size_t n);

/// Maps a series of any length onto exactly n points: keeps the n most
/// recent entries, or left-pads with zeros so the latest entries sit at the
/// right end. n must be a power of two.
std::vector<double> fit_to_length(std::span<const double> series, std::size_t n);

/// Complex DFT X_k = sum_t s[t] exp(-2 pi i k t / N) by iterative radix-2
/// Cooley-Tukey. Length must be a power of two.
std::vector<std::complex<double>> fft_complex(std::span<const double> series);

Spectrum fft(std::span<const double> series);

/// O(N^2) direct summation; any length >= 1. Reference for fft().
std::vector<std::complex<double>> dft_brute_complex(std::span<const double> series);
Spectrum dft_brute(std::span<const double> series);

/// Amplitude/phase extraction with the zero-amplitude phase convention.
Spectrum to_spectrum(std::span<const std::complex<double>> bins);

}  // namespace fan
