#pragma once

// Two-frame dense optical flow by polynomial expansion (Farneback).
//
// Each frame is locally approximated by a quadratic polynomial fitted with
// Gaussian-weighted least squares, computed as separable correlations. The
// displacement that best maps the expansion of one frame onto the other is
// solved per pixel from box-averaged normal equations, refined iteratively and
// coarse-to-fine over an image pyramid.

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace ftfd::signal {

/// Single-channel image, row-major, intensities nominally in [0,1].
struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  double at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
};

/// Per-pixel displacement, planar: dx plane followed by dy plane (2 x H x W).
struct FlowField {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  double dx(std::size_t y, std::size_t x) const { return values[y * width + x]; }
  double dy(std::size_t y, std::size_t x) const { return values[height * width + y * width + x]; }
};

struct FarnebackParams {
  int levels = 3;            // pyramid levels above the base image
  double pyr_scale = 0.5;    // scale between successive levels
  int iterations = 3;        // refinement passes per level
  int poly_n = 5;            // expansion neighbourhood half-size in pixels
  double poly_sigma = 1.1;   // Gaussian applicability width
  int window = 15;           // averaging window for the normal equations
  std::size_t min_level_size = 32;  // coarser levels below this size are skipped
};

namespace flow_detail {

// Working-scale plane with per-pixel channel interleave.
struct Plane {
  std::size_t h = 0, w = 0, ch = 1;
  std::vector<double> v;
  Plane() = default;
  Plane(std::size_t h_, std::size_t w_, std::size_t ch_ = 1) : h(h_), w(w_), ch(ch_), v(h_ * w_ * ch_, 0.0) {}
  double& at(std::size_t y, std::size_t x, std::size_t c = 0) { return v[(y * w + x) * ch + c]; }
  double at(std::size_t y, std::size_t x, std::size_t c = 0) const { return v[(y * w + x) * ch + c]; }
};

inline long reflect101(long i, long n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * n - 2 - i;
  return i;
}

inline Plane gaussian_blur(const Plane& src, int ksize, double sigma) {
  if (sigma <= 0) sigma = 0.3 * ((ksize - 1) * 0.5 - 1) + 0.8;
  const int r = ksize / 2;
  std::vector<double> k(ksize);
  double s = 0;
  for (int i = -r; i <= r; ++i) s += k[i + r] = std::exp(-double(i * i) / (2 * sigma * sigma));
  for (auto& v : k) v /= s;
  Plane tmp(src.h, src.w), out(src.h, src.w);
  for (std::size_t y = 0; y < src.h; ++y)
    for (std::size_t x = 0; x < src.w; ++x) {
      double acc = 0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * src.at(y, std::size_t(reflect101(long(x) + i, long(src.w))));
      tmp.at(y, x) = acc;
    }
  for (std::size_t y = 0; y < src.h; ++y)
    for (std::size_t x = 0; x < src.w; ++x) {
      double acc = 0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp.at(std::size_t(reflect101(long(y) + i, long(src.h))), x);
      out.at(y, x) = acc;
    }
  return out;
}

// Bilinear resize with pixel-centre alignment; works on any channel count.
inline Plane resize_linear(const Plane& src, std::size_t oh, std::size_t ow) {
  Plane out(oh, ow, src.ch);
  const double sy = double(src.h) / double(oh), sx = double(src.w) / double(ow);
  for (std::size_t y = 0; y < oh; ++y) {
    double fy = (double(y) + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, double(src.h - 1));
    const std::size_t y0 = std::size_t(fy), y1 = std::min(y0 + 1, src.h - 1);
    const double ay = fy - double(y0);
    for (std::size_t x = 0; x < ow; ++x) {
      double fx = (double(x) + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, double(src.w - 1));
      const std::size_t x0 = std::size_t(fx), x1 = std::min(x0 + 1, src.w - 1);
      const double ax = fx - double(x0);
      for (std::size_t c = 0; c < src.ch; ++c) {
        out.at(y, x, c) = (1 - ay) * ((1 - ax) * src.at(y0, x0, c) + ax * src.at(y0, x1, c)) +
                          ay * ((1 - ax) * src.at(y1, x0, c) + ax * src.at(y1, x1, c));
      }
    }
  }
  return out;
}

// Gauss-Jordan inverse of a small symmetric positive definite matrix.
template <std::size_t N>
std::array<std::array<double, N>, N> invert(std::array<std::array<double, N>, N> a) {
  std::array<std::array<double, N>, N> inv{};
  for (std::size_t i = 0; i < N; ++i) inv[i][i] = 1.0;
  for (std::size_t col = 0; col < N; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < N; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    std::swap(a[col], a[pivot]);
    std::swap(inv[col], inv[pivot]);
    const double d = a[col][col];
    for (std::size_t c = 0; c < N; ++c) {
      a[col][c] /= d;
      inv[col][c] /= d;
    }
    for (std::size_t r = 0; r < N; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      for (std::size_t c = 0; c < N; ++c) {
        a[r][c] -= f * a[col][c];
        inv[r][c] -= f * inv[col][c];
      }
    }
  }
  return inv;
}

struct ExpansionKernels {
  std::vector<double> g, xg, xxg;  // indexed by offset + n
  double ig11, ig03, ig33, ig55;
};

// Separable 1-D kernels of the Gaussian applicability and the entries of the
// inverse normal-equation matrix for the basis {1, x, y, x^2, y^2, xy}.
inline ExpansionKernels expansion_kernels(int n, double sigma) {
  ExpansionKernels k;
  k.g.resize(2 * n + 1);
  k.xg.resize(2 * n + 1);
  k.xxg.resize(2 * n + 1);
  double s = 0;
  for (int x = -n; x <= n; ++x) s += k.g[x + n] = std::exp(-double(x * x) / (2 * sigma * sigma));
  for (int x = -n; x <= n; ++x) {
    k.g[x + n] /= s;
    k.xg[x + n] = x * k.g[x + n];
    k.xxg[x + n] = double(x) * x * k.g[x + n];
  }
  std::array<std::array<double, 6>, 6> gm{};
  for (int y = -n; y <= n; ++y)
    for (int x = -n; x <= n; ++x) {
      const double w = k.g[y + n] * k.g[x + n];
      gm[0][0] += w;
      gm[1][1] += w * x * x;
      gm[3][3] += w * x * x * x * x;
      gm[5][5] += w * x * x * y * y;
    }
  gm[2][2] = gm[0][3] = gm[0][4] = gm[3][0] = gm[4][0] = gm[1][1];
  gm[4][4] = gm[3][3];
  gm[3][4] = gm[4][3] = gm[5][5];
  const auto inv = invert(gm);
  k.ig11 = inv[1][1];
  k.ig03 = inv[0][3];
  k.ig33 = inv[3][3];
  k.ig55 = inv[5][5];
  return k;
}

// Per-pixel expansion coefficients, 5 channels:
// [0] linear-y, [1] linear-x, [2] yy, [3] xx, [4] xy.
inline Plane poly_expansion(const Plane& img, int n, double sigma) {
  const auto k = expansion_kernels(n, sigma);
  const std::size_t h = img.h, w = img.w;
  Plane out(h, w, 5);
  // Vertical pass: three rows (g, xg, xxg filtered), border-replicated.
  std::vector<double> row(w * 3);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      row[x * 3] = img.at(y, x) * k.g[n];
      row[x * 3 + 1] = row[x * 3 + 2] = 0;
    }
    for (int d = 1; d <= n; ++d) {
      const std::size_t up = std::size_t(std::max(long(y) - d, 0L));
      const std::size_t dn = std::size_t(std::min(long(y) + d, long(h) - 1));
      for (std::size_t x = 0; x < w; ++x) {
        const double p = img.at(up, x) + img.at(dn, x);
        row[x * 3] += k.g[n + d] * p;
        row[x * 3 + 1] += k.xg[n + d] * (img.at(dn, x) - img.at(up, x));
        row[x * 3 + 2] += k.xxg[n + d] * p;
      }
    }
    auto r = [&](long x, int c) { return row[std::size_t(std::clamp(x, 0L, long(w) - 1)) * 3 + c]; };
    for (std::size_t x = 0; x < w; ++x) {
      const long xi = long(x);
      double b1 = r(xi, 0) * k.g[n], b2 = 0, b3 = r(xi, 1) * k.g[n], b4 = 0, b5 = r(xi, 2) * k.g[n], b6 = 0;
      for (int d = 1; d <= n; ++d) {
        const double tg = r(xi + d, 0) + r(xi - d, 0);
        b1 += tg * k.g[n + d];
        b4 += tg * k.xxg[n + d];
        b2 += (r(xi + d, 0) - r(xi - d, 0)) * k.xg[n + d];
        b3 += (r(xi + d, 1) + r(xi - d, 1)) * k.g[n + d];
        b6 += (r(xi + d, 1) - r(xi - d, 1)) * k.xg[n + d];
        b5 += (r(xi + d, 2) + r(xi - d, 2)) * k.g[n + d];
      }
      out.at(y, x, 0) = b3 * k.ig11;
      out.at(y, x, 1) = b2 * k.ig11;
      out.at(y, x, 2) = b1 * k.ig03 + b5 * k.ig33;
      out.at(y, x, 3) = b1 * k.ig03 + b4 * k.ig33;
      out.at(y, x, 4) = b6 * k.ig55;
    }
  }
  return out;
}

// Normal-equation terms per pixel for the current flow estimate:
// [0] G11, [1] G12, [2] G22, [3] h1, [4] h2 (component 1 = y, 2 = x).
inline Plane update_matrices(const Plane& r0, const Plane& r1, const Plane& flow) {
  constexpr std::size_t kBorder = 5;
  static constexpr double border_weight[kBorder] = {0.14, 0.14, 0.4472, 0.4472, 0.4472};
  const std::size_t h = flow.h, w = flow.w;
  Plane m(h, w, 5);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double dx = flow.at(y, x, 0), dy = flow.at(y, x, 1);
      double fx = double(x) + dx, fy = double(y) + dy;
      const long x1 = long(std::floor(fx)), y1 = long(std::floor(fy));
      fx -= double(x1);
      fy -= double(y1);
      double ry, rx, a11, a22, a12;
      // Samples landing on the last row or column reuse it as their neighbour,
      // so a zero flow on identical frames stays zero right up to the edge.
      if (x1 >= 0 && y1 >= 0 && x1 < long(w) && y1 < long(h)) {
        const std::size_t x2 = std::min(std::size_t(x1) + 1, w - 1), y2 = std::min(std::size_t(y1) + 1, h - 1);
        const double w00 = (1 - fx) * (1 - fy), w01 = fx * (1 - fy), w10 = (1 - fx) * fy, w11 = fx * fy;
        auto sample = [&](std::size_t c) {
          return w00 * r1.at(y1, x1, c) + w01 * r1.at(y1, x2, c) + w10 * r1.at(y2, x1, c) + w11 * r1.at(y2, x2, c);
        };
        ry = sample(0);
        rx = sample(1);
        a11 = (r0.at(y, x, 2) + sample(2)) * 0.5;
        a22 = (r0.at(y, x, 3) + sample(3)) * 0.5;
        a12 = (r0.at(y, x, 4) + sample(4)) * 0.25;
      } else {
        ry = rx = 0;
        a11 = r0.at(y, x, 2);
        a22 = r0.at(y, x, 3);
        a12 = r0.at(y, x, 4) * 0.5;
      }
      double by = (r0.at(y, x, 0) - ry) * 0.5 + a11 * dy + a12 * dx;
      double bx = (r0.at(y, x, 1) - rx) * 0.5 + a12 * dy + a22 * dx;
      if (x < kBorder || y < kBorder || x >= w - kBorder || y >= h - kBorder) {
        const double s = (x < kBorder ? border_weight[x] : 1.0) * (x >= w - kBorder ? border_weight[w - x - 1] : 1.0) *
                         (y < kBorder ? border_weight[y] : 1.0) * (y >= h - kBorder ? border_weight[h - y - 1] : 1.0);
        by *= s;
        bx *= s;
        a11 *= s;
        a22 *= s;
        a12 *= s;
      }
      m.at(y, x, 0) = a11 * a11 + a12 * a12;
      m.at(y, x, 1) = (a11 + a22) * a12;
      m.at(y, x, 2) = a22 * a22 + a12 * a12;
      m.at(y, x, 3) = a11 * by + a12 * bx;
      m.at(y, x, 4) = a12 * by + a22 * bx;
    }
  return m;
}

// Box average with replicated borders, separable.
inline Plane box_filter(const Plane& src, int window) {
  const int r = window / 2;
  Plane tmp(src.h, src.w, src.ch), out(src.h, src.w, src.ch);
  for (std::size_t y = 0; y < src.h; ++y)
    for (std::size_t x = 0; x < src.w; ++x)
      for (std::size_t c = 0; c < src.ch; ++c) {
        double acc = 0;
        for (int d = -r; d <= r; ++d) acc += src.at(y, std::size_t(std::clamp(long(x) + d, 0L, long(src.w) - 1)), c);
        tmp.at(y, x, c) = acc;
      }
  const double norm = 1.0 / double((2 * r + 1) * (2 * r + 1));
  for (std::size_t y = 0; y < src.h; ++y)
    for (std::size_t x = 0; x < src.w; ++x)
      for (std::size_t c = 0; c < src.ch; ++c) {
        double acc = 0;
        for (int d = -r; d <= r; ++d) acc += tmp.at(std::size_t(std::clamp(long(y) + d, 0L, long(src.h) - 1)), x, c);
        out.at(y, x, c) = acc * norm;
      }
  return out;
}

inline void solve_flow(const Plane& m_avg, Plane& flow) {
  for (std::size_t y = 0; y < flow.h; ++y)
    for (std::size_t x = 0; x < flow.w; ++x) {
      const double g11 = m_avg.at(y, x, 0), g12 = m_avg.at(y, x, 1), g22 = m_avg.at(y, x, 2);
      const double h1 = m_avg.at(y, x, 3), h2 = m_avg.at(y, x, 4);
      const double idet = 1.0 / (g11 * g22 - g12 * g12 + 1e-3);
      flow.at(y, x, 0) = (g11 * h2 - g12 * h1) * idet;
      flow.at(y, x, 1) = (g22 * h1 - g12 * h2) * idet;
    }
}

}  // namespace flow_detail

/// Dense flow from `prev` to `next`: next(y + dy, x + dx) ~ prev(y, x).
inline FlowField farneback_flow(const GrayImage& prev, const GrayImage& next, const FarnebackParams& p = {}) {
  using namespace flow_detail;
  if (prev.height != next.height || prev.width != next.width) {
    throw std::invalid_argument("farneback_flow: frame sizes differ (" + std::to_string(prev.height) + "x" +
                                std::to_string(prev.width) + " vs " + std::to_string(next.height) + "x" +
                                std::to_string(next.width) + ")");
  }
  const std::size_t neighbourhood = std::size_t(2 * p.poly_n + 1);
  if (prev.height < neighbourhood || prev.width < neighbourhood) {
    throw std::invalid_argument("farneback_flow: frame " + std::to_string(prev.height) + "x" + std::to_string(prev.width) +
                                " is smaller than the " + std::to_string(neighbourhood) + "-pixel expansion neighbourhood");
  }
  const std::size_t H = prev.height, W = prev.width;
  // The normal-equation regularizer assumes 8-bit intensity scale.
  Plane base[2] = {Plane(H, W), Plane(H, W)};
  for (std::size_t i = 0; i < H * W; ++i) {
    base[0].v[i] = prev.pixels[i] * 255.0;
    base[1].v[i] = next.pixels[i] * 255.0;
  }

  int levels = 0;
  {
    double scale = 1.0;
    for (; levels < p.levels; ++levels) {
      scale *= p.pyr_scale;
      if (double(std::min(H, W)) * scale < double(p.min_level_size)) break;
    }
  }

  Plane flow;
  for (int k = levels; k >= 0; --k) {
    const double scale = std::pow(p.pyr_scale, k);
    const double sigma = (1.0 / scale - 1.0) * 0.5;
    const int ksize = std::max(3, int(std::lround(sigma * 5)) | 1);
    const std::size_t h = std::size_t(std::lround(double(H) * scale));
    const std::size_t w = std::size_t(std::lround(double(W) * scale));

    Plane level_flow(h, w, 2);
    if (!flow.v.empty()) {
      level_flow = resize_linear(flow, h, w);
      for (auto& v : level_flow.v) v /= p.pyr_scale;
    }
    Plane r[2];
    for (int i = 0; i < 2; ++i) {
      const Plane blurred = gaussian_blur(base[i], ksize, sigma);
      r[i] = poly_expansion(resize_linear(blurred, h, w), p.poly_n, p.poly_sigma);
    }
    Plane m = update_matrices(r[0], r[1], level_flow);
    for (int it = 0; it < p.iterations; ++it) {
      solve_flow(box_filter(m, p.window), level_flow);
      if (it + 1 < p.iterations) m = update_matrices(r[0], r[1], level_flow);
    }
    flow = std::move(level_flow);
  }

  FlowField out{H, W, std::vector<double>(2 * H * W)};
  const double bound = std::hypot(double(H), double(W));
  for (std::size_t i = 0; i < H * W; ++i) {
    auto clean = [bound](double v) { return std::isfinite(v) ? std::clamp(v, -bound, bound) : 0.0; };
    out.values[i] = clean(flow.v[i * 2]);
    out.values[H * W + i] = clean(flow.v[i * 2 + 1]);
  }
  return out;
}

}  // namespace ftfd::signal
