#pragma once

// Mixed-radix discrete Fourier transform for arbitrary lengths. Small prime
// factors use Cooley-Tukey decimation in time; a remaining large prime factor
// falls back to a direct O(p^2) sum at that stage.

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace ftfd::signal {

class Fft {
 public:
  explicit Fft(std::size_t n) : n_(n), twiddle_(n) {
    for (std::size_t k = 0; k < n; ++k) {
      const double angle = -2.0 * std::numbers::pi * double(k) / double(n);
      twiddle_[k] = {std::cos(angle), std::sin(angle)};
    }
    std::size_t rest = n;
    for (std::size_t f = 2; rest > 1;) {
      if (rest % f == 0) {
        factors_.push_back(f);
        rest /= f;
      } else {
        f = (f * f > rest) ? rest : f + 1;
      }
    }
  }

  std::size_t size() const { return n_; }

  std::vector<std::complex<double>> forward(const std::vector<std::complex<double>>& x) const {
    std::vector<std::complex<double>> out(n_);
    if (n_ == 0) return out;
    transform(x.data(), 1, out.data(), n_, 0);
    return out;
  }

  /// Forward transform of a real signal.
  std::vector<std::complex<double>> forward_real(const std::vector<double>& x) const {
    std::vector<std::complex<double>> c(x.begin(), x.end());
    return forward(c);
  }

 private:
  // Transforms the length-`n` subsequence in[0], in[stride], ... into out[0..n).
  void transform(const std::complex<double>* in, std::size_t stride, std::complex<double>* out, std::size_t n,
                 std::size_t level) const {
    if (n == 1) {
      out[0] = in[0];
      return;
    }
    const std::size_t radix = factors_[level];
    const std::size_t m = n / radix;
    for (std::size_t r = 0; r < radix; ++r) transform(in + r * stride, stride * radix, out + r * m, m, level + 1);
    // Butterfly: combine `radix` sub-transforms of length m.
    std::vector<std::complex<double>> tmp(radix);
    const std::size_t tw_step = n_ / n;
    for (std::size_t k = 0; k < m; ++k) {
      for (std::size_t r = 0; r < radix; ++r) tmp[r] = out[r * m + k] * twiddle_[(r * k * tw_step) % n_];
      for (std::size_t q = 0; q < radix; ++q) {
        std::complex<double> acc = 0;
        for (std::size_t r = 0; r < radix; ++r) acc += tmp[r] * twiddle_[(r * q * m * tw_step) % n_];
        out[q * m + k] = acc;
      }
    }
  }

  std::size_t n_;
  std::vector<std::complex<double>> twiddle_;
  std::vector<std::size_t> factors_;
};

}  // namespace ftfd::signal
