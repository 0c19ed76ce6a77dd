#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace uniflow::fft {

using Complex = std::complex<double>;

inline constexpr std::size_t kDirectBelow = 8;

/// In-place forward DFT, X_k = sum_t x_t exp(-2 pi i k t / n).
/// Powers of two use an iterative radix-2 kernel. Other lengths below
/// kDirectBelow are summed directly; the rest go through Bluestein's chirp-z
/// reformulation on a padded radix-2 transform.
void transform(std::vector<Complex>& data);

/// Unnormalized inverse: x_t = sum_k X_k exp(+2 pi i k t / n).
void inverse_unnormalized(std::vector<Complex>& data);

/// Real-input transform returning the n/2 + 1 non-redundant bins.
std::vector<Complex> rfft(std::span<const double> x);

bool is_power_of_two(std::size_t n);

}  // namespace uniflow::fft
