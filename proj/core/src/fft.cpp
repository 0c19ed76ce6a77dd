#include "uniflow/fft.hpp"

#include <cmath>
#include <numbers>
#include <utility>

namespace uniflow::fft {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

namespace {

void radix2(std::vector<Complex>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::size_t half = len / 2;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < half; ++k) {
        // Twiddles from std::polar per index keep errors from compounding.
        const Complex w = std::polar(1.0, ang * static_cast<double>(k));
        const Complex u = a[i + k];
        const Complex v = a[i + k + half] * w;
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
    }
  }
}

void bluestein(std::vector<Complex>& a) {
  const std::size_t n = a.size();
  std::size_t m = 1;
  while (m < 2 * n - 1) m <<= 1;

  // chirp_k = exp(-i pi k^2 / n); k^2 reduced mod 2n to keep the angle small.
  std::vector<Complex> chirp(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t k2 = (k * k) % (2 * n);
    chirp[k] = std::polar(1.0, -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n));
  }
  std::vector<Complex> u(m), v(m);
  for (std::size_t k = 0; k < n; ++k) u[k] = a[k] * chirp[k];
  v[0] = std::conj(chirp[0]);
  for (std::size_t k = 1; k < n; ++k) v[k] = v[m - k] = std::conj(chirp[k]);

  radix2(u);
  radix2(v);
  for (std::size_t i = 0; i < m; ++i) u[i] *= v[i];
  // Inverse via conjugation.
  for (auto& z : u) z = std::conj(z);
  radix2(u);
  const double scale = 1.0 / static_cast<double>(m);
  for (std::size_t k = 0; k < n; ++k) a[k] = std::conj(u[k]) * scale * chirp[k];
}

void direct(std::vector<Complex>& a) {
  const std::size_t n = a.size();
  std::vector<Complex> out(n);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t t = 0; t < n; ++t)
      out[k] += a[t] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n));
  a = std::move(out);
}

}  // namespace

void transform(std::vector<Complex>& data) {
  if (data.size() <= 1) return;
  if (is_power_of_two(data.size())) {
    radix2(data);
  } else if (data.size() < kDirectBelow) {
    direct(data);
  } else {
    bluestein(data);
  }
}

void inverse_unnormalized(std::vector<Complex>& data) {
  for (auto& z : data) z = std::conj(z);
  transform(data);
  for (auto& z : data) z = std::conj(z);
}

std::vector<Complex> rfft(std::span<const double> x) {
  std::vector<Complex> buf(x.begin(), x.end());
  transform(buf);
  buf.resize(x.size() / 2 + 1);
  return buf;
}

}  // namespace uniflow::fft
