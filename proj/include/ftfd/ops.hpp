#pragma once

// Differentiable tensor operations. Spatial ops take [N,C,H,W] tensors and
// also accept a single [C,H,W] sample, returning the same rank they were given.

#include <cstdint>
#include <limits>
#include <random>

#include "ftfd/blas.hpp"
#include "ftfd/tensor.hpp"

namespace ftfd {

enum class Mode { train, eval };

namespace detail {

inline std::size_t check_index(std::string_view op, long axis, std::size_t rank) {
  const long r = static_cast<long>(rank);
  if (axis < -r || axis >= r) shape_fail(op, "axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  return static_cast<std::size_t>(axis < 0 ? axis + r : axis);
}

template <class T>
void add_into(std::vector<T>& dst, std::span<const T> src) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

struct Nchw {
  std::size_t n, c, h, w;
  bool batched;
};

template <class T>
Nchw nchw(std::string_view op, const Tensor<T>& x) {
  if (x.rank() == 4) return {x.dim(0), x.dim(1), x.dim(2), x.dim(3), true};
  if (x.rank() == 3) return {1, x.dim(0), x.dim(1), x.dim(2), false};
  shape_fail(op, "expected [N,C,H,W] or [C,H,W], got " + to_string(x.shape()));
}

inline Shape nchw_shape(const Nchw& s, std::size_t c, std::size_t h, std::size_t w) {
  return s.batched ? Shape{s.n, c, h, w} : Shape{c, h, w};
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) shape_fail("add", "shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) + " differ");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_result<T>("add", a.shape(), std::move(out), {&a, &b}, [](Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (self.input(k).requires_grad) detail::add_into<T>(self.input(k).grad_buffer(), self.grad);
    }
  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) shape_fail("sub", "shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) + " differ");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_result<T>("sub", a.shape(), std::move(out), {&a, &b}, [](Node<T>& self) {
    if (self.input(0).requires_grad) detail::add_into<T>(self.input(0).grad_buffer(), self.grad);
    if (self.input(1).requires_grad) {
      auto& g = self.input(1).grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) shape_fail("mul", "shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) + " differ");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result<T>("mul", a.shape(), std::move(out), {&a, &b}, [](Node<T>& self) {
    auto& x = self.input(0);
    auto& y = self.input(1);
    if (x.requires_grad) {
      auto& g = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y.value[i];
    }
    if (y.requires_grad) {
      auto& g = y.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x.value[i];
    }
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  return make_result<T>("scale", a.shape(), std::move(out), {&a}, [factor](Node<T>& self) {
    auto& g = self.input(0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  T total{0};
  for (auto v : a.data()) total += v;
  return make_result<T>("sum", {}, {total}, {&a}, [](Node<T>& self) {
    auto& g = self.input(0).grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T{1} / static_cast<T>(a.size()));
}

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel(shape) != a.size()) shape_fail("reshape", "cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  return make_result<T>("reshape", std::move(shape), a.values(), {&a}, [](Node<T>& self) {
    detail::add_into<T>(self.input(0).grad_buffer(), self.grad);
  });
}

/// [N, ...] -> [N, prod(...)]
template <class T>
Tensor<T> flatten(const Tensor<T>& a) {
  if (a.rank() < 1) shape_fail("flatten", "rank-0 tensor");
  return reshape(a, {a.dim(0), a.size() / a.dim(0)});
}

enum class Activation { relu, sigmoid };

template <class T>
T sigmoid_scalar(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] > T{0} ? a[i] : T{0};
  return make_result<T>("relu", a.shape(), std::move(out), {&a}, [](Node<T>& self) {
    auto& x = self.input(0);
    auto& g = x.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x.value[i] > T{0}) g[i] += self.grad[i];
    }
  });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_scalar(a[i]);
  return make_result<T>("sigmoid", a.shape(), std::move(out), {&a}, [](Node<T>& self) {
    auto& g = self.input(0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T s = self.value[i];
      g[i] += self.grad[i] * s * (T{1} - s);
    }
  });
}

template <class T>
Tensor<T> activation(Activation kind, const Tensor<T>& a) {
  return kind == Activation::relu ? relu(a) : sigmoid(a);
}

// ---------------------------------------------------------------- linear algebra

/// [L,D] x [D,M] -> [L,M], or batched [B,L,D] x [B,D,M] -> [B,L,M].
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const bool batched = a.rank() == 3;
  if (!(a.rank() == 2 || a.rank() == 3) || b.rank() != a.rank()) {
    shape_fail("matmul", "expected two rank-2 or two rank-3 operands, got " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  const std::size_t batch = batched ? a.dim(0) : 1;
  if (batched && b.dim(0) != batch) shape_fail("matmul", "batch dim 0 differs: " + std::to_string(batch) + " vs " + std::to_string(b.dim(0)));
  const std::size_t off = batched ? 1 : 0;
  const std::size_t l = a.dim(off), d = a.dim(off + 1), m = b.dim(off + 1);
  if (b.dim(off) != d) shape_fail("matmul", "inner dims differ: " + std::to_string(d) + " vs " + std::to_string(b.dim(off)));
  std::vector<T> out(batch * l * m);
  for (std::size_t s = 0; s < batch; ++s) {
    blas::gemm(false, false, int(l), int(m), int(d), T{1}, a.data().data() + s * l * d, int(d),
               b.data().data() + s * d * m, int(m), T{0}, out.data() + s * l * m, int(m));
  }
  Shape shape = batched ? Shape{batch, l, m} : Shape{l, m};
  return make_result<T>("matmul", std::move(shape), std::move(out), {&a, &b}, [batch, l, d, m](Node<T>& self) {
    auto& x = self.input(0);
    auto& y = self.input(1);
    for (std::size_t s = 0; s < batch; ++s) {
      const T* gout = self.grad.data() + s * l * m;
      if (x.requires_grad) {
        blas::gemm(false, true, int(l), int(d), int(m), T{1}, gout, int(m), y.value.data() + s * d * m, int(m), T{1},
                   x.grad_buffer().data() + s * l * d, int(d));
      }
      if (y.requires_grad) {
        blas::gemm(true, false, int(d), int(m), int(l), T{1}, x.value.data() + s * l * d, int(d), gout, int(m), T{1},
                   y.grad_buffer().data() + s * d * m, int(m));
      }
    }
  });
}

/// Swaps the last two axes of a rank-2 or rank-3 tensor.
template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2 && a.rank() != 3) shape_fail("transpose", "expected rank 2 or 3, got " + to_string(a.shape()));
  const bool batched = a.rank() == 3;
  const std::size_t batch = batched ? a.dim(0) : 1;
  const std::size_t r = a.dim(a.rank() - 2), c = a.dim(a.rank() - 1);
  std::vector<T> out(a.size());
  for (std::size_t s = 0; s < batch; ++s)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[s * r * c + j * r + i] = a[s * r * c + i * c + j];
  Shape shape = batched ? Shape{batch, c, r} : Shape{c, r};
  return make_result<T>("transpose", std::move(shape), std::move(out), {&a}, [batch, r, c](Node<T>& self) {
    auto& g = self.input(0).grad_buffer();
    for (std::size_t s = 0; s < batch; ++s)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[s * r * c + i * c + j] += self.grad[s * r * c + j * r + i];
  });
}

/// y = x W^T + b over the trailing axis. `bias` may be undefined.
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (weight.rank() != 2) shape_fail("linear", "weight must be [D_out,D_in], got " + to_string(weight.shape()));
  if (x.rank() < 1) shape_fail("linear", "input must have a trailing feature dim");
  const std::size_t din = weight.dim(1), dout = weight.dim(0);
  if (x.shape().back() != din) {
    shape_fail("linear", "input trailing dim " + std::to_string(x.shape().back()) + " != weight D_in " + std::to_string(din));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != dout)) {
    shape_fail("linear", "bias must be [" + std::to_string(dout) + "], got " + to_string(bias.shape()));
  }
  const std::size_t rows = x.size() / din;
  std::vector<T> out(rows * dout, T{0});
  if (bias.defined()) {
    for (std::size_t r = 0; r < rows; ++r) std::copy(bias.data().begin(), bias.data().end(), out.begin() + r * dout);
  }
  blas::gemm(false, true, int(rows), int(dout), int(din), T{1}, x.data().data(), int(din), weight.data().data(), int(din),
             T{1}, out.data(), int(dout));
  Shape shape = x.shape();
  shape.back() = dout;
  const bool has_bias = bias.defined();
  std::vector<Tensor<T>> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result<T>("linear", std::move(shape), std::move(out), inputs, [rows, din, dout, has_bias](Node<T>& self) {
    auto& in = self.input(0);
    auto& w = self.input(1);
    if (in.requires_grad) {
      blas::gemm(false, false, int(rows), int(din), int(dout), T{1}, self.grad.data(), int(dout), w.value.data(), int(din),
                 T{1}, in.grad_buffer().data(), int(din));
    }
    if (w.requires_grad) {
      blas::gemm(true, false, int(dout), int(din), int(rows), T{1}, self.grad.data(), int(dout), in.value.data(), int(din),
                 T{1}, w.grad_buffer().data(), int(din));
    }
    if (has_bias && self.input(2).requires_grad) {
      auto& gb = self.input(2).grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t o = 0; o < dout; ++o) gb[o] += self.grad[r * dout + o];
    }
  });
}

// ---------------------------------------------------------------- convolution

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

namespace detail {

template <class T>
void im2col(const T* img, std::size_t c, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
            std::size_t stride, std::size_t pad, std::size_t oh, std::size_t ow, T* col) {
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t ky = 0; ky < kh; ++ky)
      for (std::size_t kx = 0; kx < kw; ++kx) {
        T* row = col + ((ci * kh + ky) * kw + kx) * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const long iy = long(oy * stride + ky) - long(pad);
          T* dst = row + oy * ow;
          if (iy < 0 || iy >= long(h)) {
            std::fill(dst, dst + ow, T{0});
            continue;
          }
          const T* src = img + (ci * h + std::size_t(iy)) * w;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const long ix = long(ox * stride + kx) - long(pad);
            dst[ox] = (ix < 0 || ix >= long(w)) ? T{0} : src[ix];
          }
        }
      }
}

template <class T>
void col2im_add(const T* col, std::size_t c, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
                std::size_t stride, std::size_t pad, std::size_t oh, std::size_t ow, T* img) {
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t ky = 0; ky < kh; ++ky)
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const T* row = col + ((ci * kh + ky) * kw + kx) * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const long iy = long(oy * stride + ky) - long(pad);
          if (iy < 0 || iy >= long(h)) continue;
          T* dst = img + (ci * h + std::size_t(iy)) * w;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const long ix = long(ox * stride + kx) - long(pad);
            if (ix >= 0 && ix < long(w)) dst[ix] += row[oy * ow + ox];
          }
        }
      }
}

}  // namespace detail

/// 2-D cross-correlation. weight: [C_out,C_in,kH,kW]; bias: [C_out] or undefined.
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, Conv2dOptions opt = {}) {
  const auto s = detail::nchw("conv2d", input);
  if (weight.rank() != 4) shape_fail("conv2d", "weight must be [C_out,C_in,kH,kW], got " + to_string(weight.shape()));
  const std::size_t cout = weight.dim(0), cin = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
  if (cin != s.c) {
    shape_fail("conv2d", "input channels (dim C) = " + std::to_string(s.c) + " but weight expects C_in = " + std::to_string(cin));
  }
  if (opt.stride == 0) shape_fail("conv2d", "stride must be positive");
  if (s.h + 2 * opt.padding < kh) {
    shape_fail("conv2d", "padded height " + std::to_string(s.h + 2 * opt.padding) + " < kernel height " + std::to_string(kh));
  }
  if (s.w + 2 * opt.padding < kw) {
    shape_fail("conv2d", "padded width " + std::to_string(s.w + 2 * opt.padding) + " < kernel width " + std::to_string(kw));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
    shape_fail("conv2d", "bias must be [" + std::to_string(cout) + "], got " + to_string(bias.shape()));
  }
  const std::size_t oh = (s.h + 2 * opt.padding - kh) / opt.stride + 1;
  const std::size_t ow = (s.w + 2 * opt.padding - kw) / opt.stride + 1;
  const std::size_t k = cin * kh * kw, p = oh * ow;
  const bool pointwise = kh == 1 && kw == 1 && opt.stride == 1 && opt.padding == 0;

  std::vector<T> out(s.n * cout * p);
  std::vector<T> col(pointwise ? 0 : k * p);
  for (std::size_t b = 0; b < s.n; ++b) {
    const T* img = input.data().data() + b * s.c * s.h * s.w;
    const T* src = img;
    if (!pointwise) {
      detail::im2col(img, s.c, s.h, s.w, kh, kw, opt.stride, opt.padding, oh, ow, col.data());
      src = col.data();
    }
    T* dst = out.data() + b * cout * p;
    if (bias.defined()) {
      for (std::size_t o = 0; o < cout; ++o) std::fill(dst + o * p, dst + (o + 1) * p, bias[o]);
    } else {
      std::fill(dst, dst + cout * p, T{0});
    }
    blas::gemm(false, false, int(cout), int(p), int(k), T{1}, weight.data().data(), int(k), src, int(p), T{1}, dst, int(p));
  }

  const bool has_bias = bias.defined();
  std::vector<Tensor<T>> inputs{input, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result<T>(
      "conv2d", detail::nchw_shape(s, cout, oh, ow), std::move(out), inputs,
      [s, cout, kh, kw, oh, ow, k, p, opt, pointwise, has_bias](Node<T>& self) {
        auto& in = self.input(0);
        auto& w = self.input(1);
        std::vector<T> col(pointwise ? 0 : k * p);
        std::vector<T> dcol(in.requires_grad && !pointwise ? k * p : 0);
        for (std::size_t b = 0; b < s.n; ++b) {
          const T* gout = self.grad.data() + b * cout * p;
          const T* img = in.value.data() + b * s.c * s.h * s.w;
          if (w.requires_grad) {
            const T* src = img;
            if (!pointwise) {
              detail::im2col(img, s.c, s.h, s.w, kh, kw, opt.stride, opt.padding, oh, ow, col.data());
              src = col.data();
            }
            blas::gemm(false, true, int(cout), int(k), int(p), T{1}, gout, int(p), src, int(p), T{1},
                       w.grad_buffer().data(), int(k));
          }
          if (in.requires_grad) {
            T* gin = in.grad_buffer().data() + b * s.c * s.h * s.w;
            if (pointwise) {
              blas::gemm(true, false, int(k), int(p), int(cout), T{1}, w.value.data(), int(k), gout, int(p), T{1}, gin,
                         int(p));
            } else {
              blas::gemm(true, false, int(k), int(p), int(cout), T{1}, w.value.data(), int(k), gout, int(p), T{0},
                         dcol.data(), int(p));
              detail::col2im_add(dcol.data(), s.c, s.h, s.w, kh, kw, opt.stride, opt.padding, oh, ow, gin);
            }
          }
          if (has_bias && self.input(2).requires_grad) {
            auto& gb = self.input(2).grad_buffer();
            for (std::size_t o = 0; o < cout; ++o) {
              T acc{0};
              for (std::size_t i = 0; i < p; ++i) acc += gout[o * p + i];
              gb[o] += acc;
            }
          }
        }
      });
}

// ---------------------------------------------------------------- normalization

/// Running statistics of one batch-norm layer. Owned by the model, updated in
/// train mode only.
template <class T>
struct BatchNormStats {
  std::vector<T> mean;
  std::vector<T> var;
  bool initialized = false;

  explicit BatchNormStats(std::size_t channels = 0) : mean(channels, T{0}), var(channels, T{1}) {}
};

struct BatchNormOptions {
  double eps = 1e-5;
  double momentum = 0.1;
};

template <class T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, BatchNormStats<T>& stats,
                      Mode mode, BatchNormOptions opt = {}) {
  const auto s = detail::nchw("batchnorm2d", x);
  if (gamma.rank() != 1 || gamma.dim(0) != s.c) {
    shape_fail("batchnorm2d", "gamma length must equal channels C = " + std::to_string(s.c) + ", got " + to_string(gamma.shape()));
  }
  if (beta.rank() != 1 || beta.dim(0) != s.c) {
    shape_fail("batchnorm2d", "beta length must equal channels C = " + std::to_string(s.c) + ", got " + to_string(beta.shape()));
  }
  if (stats.mean.size() != s.c) stats = BatchNormStats<T>(s.c);
  const std::size_t hw = s.h * s.w, m = s.n * hw;
  const T eps = static_cast<T>(opt.eps);
  std::vector<T> mu(s.c), inv_std(s.c);
  if (mode == Mode::train) {
    if (m < 2) shape_fail("batchnorm2d", "train mode needs N*H*W >= 2, got " + std::to_string(m));
    for (std::size_t c = 0; c < s.c; ++c) {
      double acc = 0;
      for (std::size_t b = 0; b < s.n; ++b)
        for (std::size_t i = 0; i < hw; ++i) acc += x[(b * s.c + c) * hw + i];
      const double mean_c = acc / double(m);
      double sq = 0;
      for (std::size_t b = 0; b < s.n; ++b)
        for (std::size_t i = 0; i < hw; ++i) {
          const double d = x[(b * s.c + c) * hw + i] - mean_c;
          sq += d * d;
        }
      const double var_c = sq / double(m);
      mu[c] = T(mean_c);
      inv_std[c] = T(1.0 / std::sqrt(var_c + opt.eps));
      const T mom = T(opt.momentum);
      const T unbiased = T(sq / double(m - 1));
      if (!stats.initialized) {
        stats.mean[c] = mom * mu[c];
        stats.var[c] = (T{1} - mom) + mom * unbiased;
      } else {
        stats.mean[c] = (T{1} - mom) * stats.mean[c] + mom * mu[c];
        stats.var[c] = (T{1} - mom) * stats.var[c] + mom * unbiased;
      }
    }
    stats.initialized = true;
  } else {
    if (!stats.initialized) warn("batchnorm2d: eval mode without running statistics; using mean 0, variance 1");
    for (std::size_t c = 0; c < s.c; ++c) {
      mu[c] = stats.mean[c];
      inv_std[c] = T{1} / std::sqrt(stats.var[c] + eps);
    }
  }
  std::vector<T> out(x.size());
  for (std::size_t b = 0; b < s.n; ++b)
    for (std::size_t c = 0; c < s.c; ++c) {
      const std::size_t base = (b * s.c + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) out[base + i] = gamma[c] * (x[base + i] - mu[c]) * inv_std[c] + beta[c];
    }
  return make_result<T>("batchnorm2d", x.shape(), std::move(out), {&x, &gamma, &beta},
                        [s, hw, m, mu = std::move(mu), inv_std = std::move(inv_std), mode](Node<T>& self) {
                          auto& in = self.input(0);
                          auto& g = self.input(1);
                          auto& bt = self.input(2);
                          for (std::size_t c = 0; c < s.c; ++c) {
                            T sum_dy{0}, sum_dy_xhat{0};
                            for (std::size_t b = 0; b < s.n; ++b)
                              for (std::size_t i = 0; i < hw; ++i) {
                                const std::size_t idx = (b * s.c + c) * hw + i;
                                const T xhat = (in.value[idx] - mu[c]) * inv_std[c];
                                sum_dy += self.grad[idx];
                                sum_dy_xhat += self.grad[idx] * xhat;
                              }
                            if (g.requires_grad) g.grad_buffer()[c] += sum_dy_xhat;
                            if (bt.requires_grad) bt.grad_buffer()[c] += sum_dy;
                            if (!in.requires_grad) continue;
                            auto& gi = in.grad_buffer();
                            const T gc = g.value[c];
                            const T inv_m = T{1} / T(m);
                            for (std::size_t b = 0; b < s.n; ++b)
                              for (std::size_t i = 0; i < hw; ++i) {
                                const std::size_t idx = (b * s.c + c) * hw + i;
                                if (mode == Mode::eval) {
                                  gi[idx] += self.grad[idx] * gc * inv_std[c];
                                } else {
                                  const T xhat = (in.value[idx] - mu[c]) * inv_std[c];
                                  gi[idx] += gc * inv_std[c] * (self.grad[idx] - inv_m * sum_dy - xhat * inv_m * sum_dy_xhat);
                                }
                              }
                          }
                        });
}

// ---------------------------------------------------------------- softmax

template <class T>
Tensor<T> softmax(const Tensor<T>& x, long axis = -1) {
  const std::size_t ax = detail::check_index("softmax", axis, x.rank());
  const std::size_t n = x.dim(ax);
  std::size_t inner = 1;
  for (std::size_t i = ax + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t outer = x.size() / (n * inner);
  std::vector<T> out(x.size());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, x[base + i * inner]);
      T total{0};
      for (std::size_t i = 0; i < n; ++i) {
        const T e = std::exp(x[base + i * inner] - mx);
        out[base + i * inner] = e;
        total += e;
      }
      for (std::size_t i = 0; i < n; ++i) out[base + i * inner] /= total;
    }
  return make_result<T>("softmax", x.shape(), std::move(out), {&x}, [outer, inner, n](Node<T>& self) {
    auto& g = self.input(0).grad_buffer();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * n * inner + in;
        T dot{0};
        for (std::size_t i = 0; i < n; ++i) dot += self.grad[base + i * inner] * self.value[base + i * inner];
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t idx = base + i * inner;
          g[idx] += self.value[idx] * (self.grad[idx] - dot);
        }
      }
  });
}

// ---------------------------------------------------------------- pooling

enum class PoolKind { max, avg };

/// Windowed pooling without padding. Max-pool ties route to the first element
/// of the window in row-major order.
template <class T>
Tensor<T> pool2d(PoolKind kind, const Tensor<T>& x, std::size_t window, std::size_t stride) {
  const auto s = detail::nchw("pool2d", x);
  if (window == 0 || stride == 0) shape_fail("pool2d", "window and stride must be positive");
  if (window > s.h || window > s.w) {
    shape_fail("pool2d", "window " + std::to_string(window) + " larger than input " + std::to_string(s.h) + "x" + std::to_string(s.w));
  }
  const std::size_t oh = (s.h - window) / stride + 1, ow = (s.w - window) / stride + 1;
  std::vector<T> out(s.n * s.c * oh * ow);
  std::vector<std::uint32_t> argmax(kind == PoolKind::max ? out.size() : 0);
  const T inv_area = T{1} / T(window * window);
  for (std::size_t plane = 0; plane < s.n * s.c; ++plane) {
    const T* src = x.data().data() + plane * s.h * s.w;
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const std::size_t o = (plane * oh + oy) * ow + ox;
        if (kind == PoolKind::max) {
          std::size_t best = (oy * stride) * s.w + ox * stride;
          for (std::size_t ky = 0; ky < window; ++ky)
            for (std::size_t kx = 0; kx < window; ++kx) {
              const std::size_t idx = (oy * stride + ky) * s.w + ox * stride + kx;
              if (src[idx] > src[best]) best = idx;
            }
          out[o] = src[best];
          argmax[o] = static_cast<std::uint32_t>(best);
        } else {
          T acc{0};
          for (std::size_t ky = 0; ky < window; ++ky)
            for (std::size_t kx = 0; kx < window; ++kx) acc += src[(oy * stride + ky) * s.w + ox * stride + kx];
          out[o] = acc * inv_area;
        }
      }
  }
  return make_result<T>(kind == PoolKind::max ? "max_pool2d" : "avg_pool2d", detail::nchw_shape(s, s.c, oh, ow),
                        std::move(out), {&x},
                        [s, oh, ow, window, stride, kind, inv_area, argmax = std::move(argmax)](Node<T>& self) {
                          auto& g = self.input(0).grad_buffer();
                          for (std::size_t plane = 0; plane < s.n * s.c; ++plane) {
                            T* dst = g.data() + plane * s.h * s.w;
                            for (std::size_t oy = 0; oy < oh; ++oy)
                              for (std::size_t ox = 0; ox < ow; ++ox) {
                                const std::size_t o = (plane * oh + oy) * ow + ox;
                                if (kind == PoolKind::max) {
                                  dst[argmax[o]] += self.grad[o];
                                } else {
                                  for (std::size_t ky = 0; ky < window; ++ky)
                                    for (std::size_t kx = 0; kx < window; ++kx)
                                      dst[(oy * stride + ky) * s.w + ox * stride + kx] += self.grad[o] * inv_area;
                                }
                              }
                          }
                        });
}

template <class T>
Tensor<T> max_pool2d(const Tensor<T>& x, std::size_t window = 2, std::size_t stride = 2) {
  return pool2d(PoolKind::max, x, window, stride);
}

/// Reduction over the channel axis: [N,C,H,W] -> [N,1,H,W] (or [C,H,W] -> [1,H,W]).
template <class T>
Tensor<T> channel_pool(PoolKind kind, const Tensor<T>& x) {
  const auto s = detail::nchw("channel_pool", x);
  const std::size_t hw = s.h * s.w;
  std::vector<T> out(s.n * hw);
  std::vector<std::uint32_t> argmax(kind == PoolKind::max ? out.size() : 0);
  for (std::size_t b = 0; b < s.n; ++b)
    for (std::size_t i = 0; i < hw; ++i) {
      const T* base = x.data().data() + b * s.c * hw + i;
      if (kind == PoolKind::max) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < s.c; ++c) {
          if (base[c * hw] > base[best * hw]) best = c;
        }
        out[b * hw + i] = base[best * hw];
        argmax[b * hw + i] = static_cast<std::uint32_t>(best);
      } else {
        T acc{0};
        for (std::size_t c = 0; c < s.c; ++c) acc += base[c * hw];
        out[b * hw + i] = acc / T(s.c);
      }
    }
  return make_result<T>(kind == PoolKind::max ? "channel_max" : "channel_avg", detail::nchw_shape(s, 1, s.h, s.w),
                        std::move(out), {&x}, [s, hw, kind, argmax = std::move(argmax)](Node<T>& self) {
                          auto& g = self.input(0).grad_buffer();
                          for (std::size_t b = 0; b < s.n; ++b)
                            for (std::size_t i = 0; i < hw; ++i) {
                              const T go = self.grad[b * hw + i];
                              T* base = g.data() + b * s.c * hw + i;
                              if (kind == PoolKind::max) {
                                base[argmax[b * hw + i] * hw] += go;
                              } else {
                                for (std::size_t c = 0; c < s.c; ++c) base[c * hw] += go / T(s.c);
                              }
                            }
                        });
}

/// [N,C,H,W] -> [N,C] spatial mean.
template <class T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  const auto s = detail::nchw("global_avg_pool", x);
  const std::size_t hw = s.h * s.w;
  std::vector<T> out(s.n * s.c);
  for (std::size_t plane = 0; plane < s.n * s.c; ++plane) {
    T acc{0};
    for (std::size_t i = 0; i < hw; ++i) acc += x[plane * hw + i];
    out[plane] = acc / T(hw);
  }
  Shape shape = s.batched ? Shape{s.n, s.c} : Shape{s.c};
  return make_result<T>("global_avg_pool", std::move(shape), std::move(out), {&x}, [hw](Node<T>& self) {
    auto& g = self.input(0).grad_buffer();
    for (std::size_t plane = 0; plane < self.value.size(); ++plane)
      for (std::size_t i = 0; i < hw; ++i) g[plane * hw + i] += self.grad[plane] / T(hw);
  });
}

// ---------------------------------------------------------------- broadcasts

/// out[n,c,h,w] = x[n,c,h,w] * scale[n,c] + shift[n,c]
template <class T>
Tensor<T> channel_affine(const Tensor<T>& x, const Tensor<T>& scale_nc, const Tensor<T>& shift_nc) {
  const auto s = detail::nchw("channel_affine", x);
  const Shape want = s.batched ? Shape{s.n, s.c} : Shape{s.c};
  if (scale_nc.shape() != want) shape_fail("channel_affine", "scale must be " + to_string(want) + ", got " + to_string(scale_nc.shape()));
  if (shift_nc.shape() != want) shape_fail("channel_affine", "shift must be " + to_string(want) + ", got " + to_string(shift_nc.shape()));
  const std::size_t hw = s.h * s.w;
  std::vector<T> out(x.size());
  for (std::size_t plane = 0; plane < s.n * s.c; ++plane)
    for (std::size_t i = 0; i < hw; ++i) out[plane * hw + i] = x[plane * hw + i] * scale_nc[plane] + shift_nc[plane];
  return make_result<T>("channel_affine", x.shape(), std::move(out), {&x, &scale_nc, &shift_nc}, [hw](Node<T>& self) {
    auto& in = self.input(0);
    auto& sc = self.input(1);
    auto& sh = self.input(2);
    const std::size_t planes = sc.value.size();
    for (std::size_t plane = 0; plane < planes; ++plane) {
      T gs{0}, gb{0};
      for (std::size_t i = 0; i < hw; ++i) {
        const T go = self.grad[plane * hw + i];
        gs += go * in.value[plane * hw + i];
        gb += go;
        if (in.requires_grad) in.grad_buffer()[plane * hw + i] += go * sc.value[plane];
      }
      if (sc.requires_grad) sc.grad_buffer()[plane] += gs;
      if (sh.requires_grad) sh.grad_buffer()[plane] += gb;
    }
  });
}

/// Multiplies every channel of x by a single-channel map: [N,C,H,W] x [N,1,H,W].
template <class T>
Tensor<T> spatial_mul(const Tensor<T>& x, const Tensor<T>& map) {
  const auto s = detail::nchw("spatial_mul", x);
  const auto m = detail::nchw("spatial_mul", map);
  if (m.c != 1 || m.n != s.n || m.h != s.h || m.w != s.w) {
    shape_fail("spatial_mul", "map " + to_string(map.shape()) + " does not match spatial dims of " + to_string(x.shape()));
  }
  const std::size_t hw = s.h * s.w;
  std::vector<T> out(x.size());
  for (std::size_t b = 0; b < s.n; ++b)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t i = 0; i < hw; ++i) out[(b * s.c + c) * hw + i] = x[(b * s.c + c) * hw + i] * map[b * hw + i];
  return make_result<T>("spatial_mul", x.shape(), std::move(out), {&x, &map}, [s, hw](Node<T>& self) {
    auto& in = self.input(0);
    auto& mp = self.input(1);
    for (std::size_t b = 0; b < s.n; ++b)
      for (std::size_t c = 0; c < s.c; ++c)
        for (std::size_t i = 0; i < hw; ++i) {
          const std::size_t idx = (b * s.c + c) * hw + i;
          if (in.requires_grad) in.grad_buffer()[idx] += self.grad[idx] * mp.value[b * hw + i];
          if (mp.requires_grad) mp.grad_buffer()[b * hw + i] += self.grad[idx] * in.value[idx];
        }
  });
}

// ---------------------------------------------------------------- structure

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, long axis) {
  if (parts.empty()) shape_fail("concat", "no tensors given");
  const std::size_t ax = detail::check_index("concat", axis, parts[0].rank());
  Shape shape = parts[0].shape();
  std::size_t total = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& t = parts[p];
    if (t.rank() != shape.size()) shape_fail("concat", "rank mismatch at part " + std::to_string(p));
    for (std::size_t d = 0; d < shape.size(); ++d) {
      if (d != ax && t.dim(d) != shape[d]) {
        shape_fail("concat", "part " + std::to_string(p) + " dim " + std::to_string(d) + " is " + std::to_string(t.dim(d)) +
                                 ", expected " + std::to_string(shape[d]));
      }
    }
    total += t.dim(ax);
  }
  if (parts.size() == 1) return parts[0];
  shape[ax] = total;
  std::size_t inner = 1;
  for (std::size_t d = ax + 1; d < shape.size(); ++d) inner *= shape[d];
  std::size_t outer = 1;
  for (std::size_t d = 0; d < ax; ++d) outer *= shape[d];
  std::vector<T> out(numel(shape));
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const auto& t : parts) {
    const std::size_t chunk = t.dim(ax) * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(t.data().begin() + o * chunk, chunk, out.begin() + o * total * inner + offset);
    offset += chunk;
    widths.push_back(chunk);
  }
  return make_result<T>("concat", std::move(shape), std::move(out), parts, [outer, total, inner, widths](Node<T>& self) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < widths.size(); ++p) {
      auto& in = self.input(p);
      if (in.requires_grad) {
        auto& g = in.grad_buffer();
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < widths[p]; ++i) g[o * widths[p] + i] += self.grad[o * total * inner + off + i];
      }
      off += widths[p];
    }
  });
}

/// Contiguous sub-range [start, start+length) along `axis`.
template <class T>
Tensor<T> slice(const Tensor<T>& x, long axis, std::size_t start, std::size_t length) {
  const std::size_t ax = detail::check_index("slice", axis, x.rank());
  if (length == 0 || start + length > x.dim(ax)) {
    shape_fail("slice", "range [" + std::to_string(start) + "," + std::to_string(start + length) + ") exceeds dim " +
                            std::to_string(ax) + " of size " + std::to_string(x.dim(ax)));
  }
  std::size_t inner = 1;
  for (std::size_t d = ax + 1; d < x.rank(); ++d) inner *= x.dim(d);
  const std::size_t outer = x.size() / (x.dim(ax) * inner);
  const std::size_t full = x.dim(ax) * inner, chunk = length * inner, off = start * inner;
  std::vector<T> out(outer * chunk);
  for (std::size_t o = 0; o < outer; ++o) std::copy_n(x.data().begin() + o * full + off, chunk, out.begin() + o * chunk);
  Shape shape = x.shape();
  shape[ax] = length;
  return make_result<T>("slice", std::move(shape), std::move(out), {&x}, [outer, full, chunk, off](Node<T>& self) {
    auto& g = self.input(0).grad_buffer();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < chunk; ++i) g[o * full + off + i] += self.grad[o * chunk + i];
  });
}

template <class T>
std::vector<Tensor<T>> split(const Tensor<T>& x, long axis, const std::vector<std::size_t>& sizes) {
  std::vector<Tensor<T>> out;
  std::size_t start = 0;
  for (auto n : sizes) {
    out.push_back(slice(x, axis, start, n));
    start += n;
  }
  const std::size_t ax = detail::check_index("split", axis, x.rank());
  if (start != x.dim(ax)) shape_fail("split", "sizes sum to " + std::to_string(start) + ", dim is " + std::to_string(x.dim(ax)));
  return out;
}

// ---------------------------------------------------------------- resampling

/// Bilinear resize with corner-aligned sampling, so a same-size resize is an
/// exact copy.
template <class T>
Tensor<T> resize_bilinear(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
  const auto s = detail::nchw("resize_bilinear", x);
  if (out_h == 0 || out_w == 0) shape_fail("resize_bilinear", "output size must be at least 1x1");
  struct Tap {
    std::size_t i0, i1;
    T f;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    const T step = out > 1 ? T(in - 1) / T(out - 1) : T{0};
    for (std::size_t o = 0; o < out; ++o) {
      const T pos = T(o) * step;
      std::size_t i0 = std::min(static_cast<std::size_t>(pos), in - 1);
      const std::size_t i1 = std::min(i0 + 1, in - 1);
      t[o] = {i0, i1, pos - T(i0)};
    }
    return t;
  };
  const auto ty = taps(s.h, out_h), tx = taps(s.w, out_w);
  std::vector<T> out(s.n * s.c * out_h * out_w);
  for (std::size_t plane = 0; plane < s.n * s.c; ++plane) {
    const T* src = x.data().data() + plane * s.h * s.w;
    T* dst = out.data() + plane * out_h * out_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const auto& a = ty[oy];
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const auto& b = tx[ox];
        const T top = src[a.i0 * s.w + b.i0] * (T{1} - b.f) + src[a.i0 * s.w + b.i1] * b.f;
        const T bot = src[a.i1 * s.w + b.i0] * (T{1} - b.f) + src[a.i1 * s.w + b.i1] * b.f;
        dst[oy * out_w + ox] = top * (T{1} - a.f) + bot * a.f;
      }
    }
  }
  return make_result<T>("resize_bilinear", detail::nchw_shape(s, s.c, out_h, out_w), std::move(out), {&x},
                        [s, out_h, out_w, ty, tx](Node<T>& self) {
                          auto& g = self.input(0).grad_buffer();
                          for (std::size_t plane = 0; plane < s.n * s.c; ++plane) {
                            T* dst = g.data() + plane * s.h * s.w;
                            const T* go = self.grad.data() + plane * out_h * out_w;
                            for (std::size_t oy = 0; oy < out_h; ++oy) {
                              const auto& a = ty[oy];
                              for (std::size_t ox = 0; ox < out_w; ++ox) {
                                const auto& b = tx[ox];
                                const T v = go[oy * out_w + ox];
                                dst[a.i0 * s.w + b.i0] += v * (T{1} - a.f) * (T{1} - b.f);
                                dst[a.i0 * s.w + b.i1] += v * (T{1} - a.f) * b.f;
                                dst[a.i1 * s.w + b.i0] += v * a.f * (T{1} - b.f);
                                dst[a.i1 * s.w + b.i1] += v * a.f * b.f;
                              }
                            }
                          }
                        });
}

// ---------------------------------------------------------------- regularization

/// Inverted dropout. The mask is drawn from `rng`, so a fixed seed gives a
/// fixed mask.
template <class T>
Tensor<T> dropout(const Tensor<T>& x, double p, Mode mode, std::mt19937_64& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout: p must satisfy 0 <= p < 1, got " + std::to_string(p));
  if (mode == Mode::eval || p == 0.0) return x;
  std::vector<T> mask(x.size());
  const T keep_scale = T(1.0 / (1.0 - p));
  // Raw 53-bit draws instead of std::uniform_real_distribution keep masks
  // identical across standard library implementations.
  for (auto& m : mask) m = (double(rng() >> 11) * 0x1.0p-53) < p ? T{0} : keep_scale;
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * mask[i];
  return make_result<T>("dropout", x.shape(), std::move(out), {&x}, [mask = std::move(mask)](Node<T>& self) {
    auto& g = self.input(0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
  });
}

// ---------------------------------------------------------------- losses

/// Mean binary cross-entropy on logits, in softplus form:
/// y*softplus(-z) + (1-y)*softplus(z).
template <class T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const std::vector<T>& labels) {
  if (logits.size() != labels.size()) {
    shape_fail("bce_with_logits", std::to_string(logits.size()) + " logits but " + std::to_string(labels.size()) + " labels");
  }
  auto softplus = [](T z) { return z > T{0} ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); };
  T total{0};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const T y = labels[i];
    if (y != T{0} && y != T{1}) throw std::invalid_argument("bce_with_logits: label at index " + std::to_string(i) + " is not 0 or 1");
    const T z = logits[i];
    total += y * softplus(-z) + (T{1} - y) * softplus(z);
  }
  const T n = T(labels.size());
  return make_result<T>("bce_with_logits", {}, {total / n}, {&logits}, [labels, n](Node<T>& self) {
    auto& in = self.input(0);
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * (sigmoid_scalar(in.value[i]) - labels[i]) / n;
  });
}

}  // namespace ftfd
