#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "fan/errors.hpp"
#include "fan/spectral.hpp"

namespace fan {
namespace {

std::vector<double> random_series(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<int> count(0, 9);
  std::bernoulli_distribution integer(0.5);
  std::uniform_real_distribution<double> real(-3.0, 3.0);
  std::vector<double> s(n);
  // Mix count-like series (the real input) with arbitrary reals.
  const bool counts = integer(rng);
  for (auto& v : s) v = counts ? count(rng) : real(rng);
  return s;
}

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  return a;
}

TEST(FitToLength, EmptySeriesIsAllZeros) {
  EXPECT_EQ(fit_to_length({}, 8), std::vector<double>(8, 0.0));
}

TEST(FitToLength, LongSeriesKeepsMostRecent) {
  std::vector<double> s(40);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<double>(i + 1);  // s_1..s_40
  const auto out = fit_to_length(s, 32);
  ASSERT_EQ(out.size(), 32u);
  EXPECT_EQ(out.front(), 9.0);
  EXPECT_EQ(out.back(), 40.0);
}

TEST(FitToLength, ShortSeriesIsLeftPadded) {
  const std::vector<double> s{1, 2, 3, 4, 5};
  EXPECT_EQ(fit_to_length(s, 8), (std::vector<double>{0, 0, 0, 1, 2, 3, 4, 5}));
}

TEST(FitToLength, RejectsNonPowerOfTwo) {
  EXPECT_THROW(fit_to_length(std::vector<double>{1, 2}, 12), ConfigError);
  EXPECT_THROW(fit_to_length(std::vector<double>{1, 2}, 0), ConfigError);
}

TEST(Fft, ConstantSeriesHasOnlyDc) {
  const auto s = fft(std::vector<double>{2, 2, 2, 2});
  EXPECT_EQ(s.amplitude[0], 8.0);
  for (std::size_t k = 1; k < 4; ++k) EXPECT_NEAR(s.amplitude[k], 0.0, 1e-15);
  EXPECT_EQ(s.phase, (std::vector<double>{0, 0, 0, 0}));
}

TEST(Fft, UnitImpulseHasFlatSpectrum) {
  const auto s = fft(std::vector<double>{1, 0, 0, 0});
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_DOUBLE_EQ(s.amplitude[k], 1.0);
    EXPECT_EQ(s.phase[k], 0.0);
  }
}

TEST(Fft, RejectsNonPowerOfTwo) {
  EXPECT_THROW(fft(std::vector<double>{1, 2, 3}), ConfigError);
  EXPECT_THROW(fft(std::vector<double>{}), ConfigError);
}

TEST(Fft, PhaseLiesInHalfOpenInterval) {
  // X_0 = -1 sits on the branch cut; the convention maps it to +pi.
  const auto s = fft(std::vector<double>{-1, 0, 0, 0});
  EXPECT_DOUBLE_EQ(s.phase[0], std::numbers::pi);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    for (double p : fft(random_series(rng, 16)).phase) {
      EXPECT_GT(p, -std::numbers::pi);
      EXPECT_LE(p, std::numbers::pi);
    }
  }
}

TEST(DftBrute, ZeroAndConstantSeries) {
  for (double a : dft_brute(std::vector<double>(8, 0.0)).amplitude) EXPECT_EQ(a, 0.0);
  const auto s = dft_brute(std::vector<double>(8, 1.0));
  EXPECT_NEAR(s.amplitude[0], 8.0, 1e-12);
  for (std::size_t k = 1; k < 8; ++k) EXPECT_NEAR(s.amplitude[k], 0.0, 1e-12);
  EXPECT_THROW(dft_brute(std::vector<double>{}), ConfigError);
}

TEST(DftBrute, AcceptsAnyLength) {
  const auto s = dft_brute(std::vector<double>{1, 2, 3});
  EXPECT_NEAR(s.amplitude[0], 6.0, 1e-12);
  EXPECT_NEAR(s.amplitude[1], std::sqrt(3.0), 1e-12);
}

TEST(Fft, AgreesWithBruteForceAcrossLengths) {
  std::mt19937_64 rng(11);
  for (std::size_t n : {4u, 8u, 16u, 32u, 64u}) {
    for (int trial = 0; trial < 40; ++trial) {
      const auto s = random_series(rng, n);
      const auto fast = fft_complex(s);
      const auto slow = dft_brute_complex(s);
      for (std::size_t k = 0; k < n; ++k) {
        ASSERT_NEAR(fast[k].real(), slow[k].real(), 1e-9) << "n=" << n << " k=" << k;
        ASSERT_NEAR(fast[k].imag(), slow[k].imag(), 1e-9) << "n=" << n << " k=" << k;
      }
    }
  }
}

TEST(Fft, ConjugateSymmetryAndParseval) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = random_series(rng, 32);
    const auto transform = fft(s);
    double energy = 0, spectral = 0;
    for (double v : s) energy += v * v;
    for (std::size_t k = 0; k < 32; ++k) {
      EXPECT_GE(transform.amplitude[k], 0.0);
      spectral += transform.amplitude[k] * transform.amplitude[k];
      if (k == 0) continue;
      EXPECT_NEAR(transform.amplitude[k], transform.amplitude[32 - k], 1e-9);
      if (transform.amplitude[k] > 1e-12) EXPECT_NEAR(wrap_angle(transform.phase[k] + transform.phase[32 - k]), 0.0, 1e-9);
    }
    if (energy > 0) EXPECT_NEAR(spectral / 32.0, energy, 1e-9 * energy);
  }
}

TEST(Fft, Linearity) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    const auto s1 = random_series(rng, 16);
    const auto s2 = random_series(rng, 16);
    const double a = 1.7, b = -0.3;
    std::vector<double> mix(16);
    for (std::size_t t = 0; t < 16; ++t) mix[t] = a * s1[t] + b * s2[t];
    const auto x1 = fft_complex(s1), x2 = fft_complex(s2), xm = fft_complex(mix);
    for (std::size_t k = 0; k < 16; ++k) EXPECT_LT(std::abs(xm[k] - (a * x1[k] + b * x2[k])), 1e-9);
  }
}

TEST(Fft, CircularShiftRotatesPhases) {
  std::mt19937_64 rng(14);
  const std::size_t n = 32;
  for (int trial = 0; trial < 30; ++trial) {
    const auto s = random_series(rng, n);
    std::vector<double> shifted(n);
    for (std::size_t t = 0; t < n; ++t) shifted[(t + 1) % n] = s[t];
    const auto x = fft_complex(s), xs = fft_complex(shifted);
    const auto a = fft(s), as = fft(shifted);
    for (std::size_t k = 0; k < n; ++k) {
      const auto twiddle = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n));
      EXPECT_LT(std::abs(xs[k] - x[k] * twiddle), 1e-9);
      EXPECT_NEAR(as.amplitude[k], a.amplitude[k], 1e-9);
      if (a.amplitude[k] > 1e-6) {
        const double expected = a.phase[k] - 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
        EXPECT_NEAR(wrap_angle(as.phase[k] - expected), 0.0, 1e-9);
      }
    }
  }
}

TEST(ToSpectrum, ZeroAmplitudePhaseIsPinned) {
  const std::vector<std::complex<double>> bins{{0, 0}, {1e-13, -1e-13}, {0, -2}};
  const auto s = to_spectrum(bins);
  EXPECT_EQ(s.phase[0], 0.0);
  EXPECT_EQ(s.phase[1], 0.0);
  EXPECT_DOUBLE_EQ(s.phase[2], -std::numbers::pi / 2);
}

TEST(IsPowerOfTwo, SmallValues) {
  EXPECT_FALSE(is_power_of_two(0));
  EXPECT_TRUE(is_power_of_two(1));
  EXPECT_TRUE(is_power_of_two(32));
  EXPECT_FALSE(is_power_of_two(48));
}

}  // namespace
}  // namespace fan
