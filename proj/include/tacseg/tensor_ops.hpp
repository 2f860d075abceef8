#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "tacseg/tensor.hpp"

// Forward definitions and explicit vector-Jacobian products for every op on
// the tape. VJP functions accumulate into caller-owned gradient tensors that
// are already shaped like the corresponding input.

namespace tacseg::ops {

inline void require_rank(const Tensor& t, std::size_t r, const char* op) {
  if (t.rank() != r)
    throw DimensionError(std::string(op) + ": expected rank " +
                         std::to_string(r) + " tensor, got " +
                         shape_str(t.shape()));
}

// ---------------------------------------------------------------------------
// elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw DimensionError("add: shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  Tensor y(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
  return y;
}

inline void add_vjp(const Tensor& dy, Tensor& da, Tensor& db) {
  for (std::size_t i = 0; i < dy.size(); ++i) {
    da[i] += dy[i];
    db[i] += dy[i];
  }
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw DimensionError("mul: shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  Tensor y(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] * b[i];
  return y;
}

inline void mul_vjp(const Tensor& a, const Tensor& b, const Tensor& dy,
                    Tensor& da, Tensor& db) {
  for (std::size_t i = 0; i < dy.size(); ++i) {
    da[i] += dy[i] * b[i];
    db[i] += dy[i] * a[i];
  }
}

inline Tensor mul_scalar(const Tensor& a, double s) {
  Tensor y(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] * s;
  return y;
}

inline void mul_scalar_vjp(double s, const Tensor& dy, Tensor& da) {
  for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * s;
}

inline Tensor relu(const Tensor& a) {
  Tensor y(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] > 0.0 ? a[i] : 0.0;
  return y;
}

inline void relu_vjp(const Tensor& a, const Tensor& dy, Tensor& da) {
  for (std::size_t i = 0; i < dy.size(); ++i)
    if (a[i] > 0.0) da[i] += dy[i];
}

// ---------------------------------------------------------------------------
// rank-2 linear algebra

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.extent(1) != b.extent(0))
    throw DimensionError("matmul: inner extents differ, " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  Tensor y({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* yrow = y.data() + i * n;
    const double* arow = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) yrow[j] += av * brow[j];
    }
  }
  return y;
}

inline void matmul_vjp(const Tensor& a, const Tensor& b, const Tensor& dy,
                       Tensor& da, Tensor& db) {
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  // da = dy * b^T
  for (std::size_t i = 0; i < m; ++i) {
    const double* dyrow = dy.data() + i * n;
    double* darow = da.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b.data() + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += dyrow[j] * brow[j];
      darow[p] += acc;
    }
  }
  // db = a^T * dy
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.data() + i * k;
    const double* dyrow = dy.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      double* dbrow = db.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) dbrow[j] += av * dyrow[j];
    }
  }
}

inline Tensor transpose2d(const Tensor& a) {
  require_rank(a, 2, "transpose2d");
  const std::size_t m = a.extent(0), n = a.extent(1);
  Tensor y({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y.at(j, i) = a.at(i, j);
  return y;
}

inline void transpose2d_vjp(const Tensor& dy, Tensor& da) {
  const std::size_t n = dy.extent(0), m = dy.extent(1);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < m; ++i) da.at(i, j) += dy.at(j, i);
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.size())
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) +
                         " as " + shape_str(shape));
  Tensor y(std::move(shape));
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i];
  return y;
}

inline void reshape_vjp(const Tensor& dy, Tensor& da) {
  for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
}

// Row-wise softmax with max subtraction; overflow-safe for any finite input.
inline Tensor softmax_rows(const Tensor& a) {
  require_rank(a, 2, "softmax_rows");
  const std::size_t m = a.extent(0), n = a.extent(1);
  Tensor y({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* xr = a.data() + i * n;
    double* yr = y.data() + i * n;
    double mx = xr[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < n; ++j) yr[j] *= inv;
  }
  return y;
}

inline void softmax_rows_vjp(const Tensor& y, const Tensor& dy, Tensor& da) {
  const std::size_t m = y.extent(0), n = y.extent(1);
  for (std::size_t i = 0; i < m; ++i) {
    const double* yr = y.data() + i * n;
    const double* dyr = dy.data() + i * n;
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) dot += dyr[j] * yr[j];
    double* dar = da.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) dar[j] += yr[j] * (dyr[j] - dot);
  }
}

// Normalizes the last axis; gamma/beta have that axis's extent.
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma,
                         const Tensor& beta, double eps) {
  if (x.rank() < 1)
    throw DimensionError("layer_norm: input must have rank >= 1");
  const std::size_t n = x.shape().back();
  if (gamma.rank() != 1 || gamma.extent(0) != n)
    throw DimensionError("layer_norm: gamma " + shape_str(gamma.shape()) +
                         " does not match last axis of " +
                         shape_str(x.shape()));
  if (beta.rank() != 1 || beta.extent(0) != n)
    throw DimensionError("layer_norm: beta " + shape_str(beta.shape()) +
                         " does not match last axis of " +
                         shape_str(x.shape()));
  const std::size_t rows = x.size() / n;
  Tensor y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * n;
    double* yr = y.data() + r * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += xr[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = xr[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j)
      yr[j] = gamma[j] * ((xr[j] - mean) * inv) + beta[j];
  }
  return y;
}

inline void layer_norm_vjp(const Tensor& x, const Tensor& gamma, double eps,
                           const Tensor& dy, Tensor& dx, Tensor& dgamma,
                           Tensor& dbeta) {
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * n;
    const double* dyr = dy.data() + r * n;
    double* dxr = dx.data() + r * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += xr[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = xr[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    // dxhat, then the two mean corrections
    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double xhat = (xr[j] - mean) * inv;
      const double dxhat = dyr[j] * gamma[j];
      mean_dxhat += dxhat;
      mean_dxhat_xhat += dxhat * xhat;
      dgamma[j] += dyr[j] * xhat;
      dbeta[j] += dyr[j];
    }
    mean_dxhat /= static_cast<double>(n);
    mean_dxhat_xhat /= static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double xhat = (xr[j] - mean) * inv;
      const double dxhat = dyr[j] * gamma[j];
      dxr[j] += inv * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
    }
  }
}

// ---------------------------------------------------------------------------
// spatial ops on [C x H x W]

// Cross-correlation (no kernel flip), zero padding.
// x: [Cin x H x W], k: [Cout x Cin x kh x kw] -> [Cout x H' x W']
inline Tensor conv2d(const Tensor& x, const Tensor& k, int stride, int pad) {
  require_rank(x, 3, "conv2d");
  require_rank(k, 4, "conv2d");
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  if (pad < 0) throw ConfigError("conv2d: pad must be >= 0");
  if (k.extent(1) != x.extent(0))
    throw DimensionError("conv2d: kernel expects " +
                         std::to_string(k.extent(1)) + " input channels, " +
                         "input is " + shape_str(x.shape()));
  const std::size_t cin = x.extent(0), h = x.extent(1), w = x.extent(2);
  const std::size_t cout = k.extent(0), kh = k.extent(2), kw = k.extent(3);
  if (kh > h + 2 * static_cast<std::size_t>(pad) ||
      kw > w + 2 * static_cast<std::size_t>(pad))
    throw DimensionError("conv2d: kernel " + shape_str(k.shape()) +
                         " larger than padded input " + shape_str(x.shape()) +
                         " with pad " + std::to_string(pad));
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1;
  const std::size_t ow = (w + 2 * pad - kw) / stride + 1;
  Tensor y({cout, oh, ow});
  const auto s = static_cast<std::ptrdiff_t>(stride);
  for (std::size_t co = 0; co < cout; ++co) {
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* xch = x.data() + ci * h * w;
      for (std::size_t u = 0; u < kh; ++u) {
        for (std::size_t v = 0; v < kw; ++v) {
          const double kv = k.at(co, ci, u, v);
          if (kv == 0.0) continue;
          for (std::size_t r = 0; r < oh; ++r) {
            const std::ptrdiff_t ih =
                static_cast<std::ptrdiff_t>(r) * s - pad + u;
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
            const double* xrow = xch + ih * w;
            double* yrow = y.data() + (co * oh + r) * ow;
            if (stride == 1) {
              const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(v) - pad;
              const std::size_t c0 =
                  off < 0 ? static_cast<std::size_t>(-off) : 0;
              const std::size_t c1 = std::min(
                  ow, static_cast<std::size_t>(
                          static_cast<std::ptrdiff_t>(w) - off));
              for (std::size_t c = c0; c < c1; ++c)
                yrow[c] += kv * xrow[c + off];
            } else {
              for (std::size_t c = 0; c < ow; ++c) {
                const std::ptrdiff_t iw =
                    static_cast<std::ptrdiff_t>(c) * s - pad + v;
                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
                yrow[c] += kv * xrow[iw];
              }
            }
          }
        }
      }
    }
  }
  return y;
}

inline void conv2d_vjp(const Tensor& x, const Tensor& k, int stride, int pad,
                       const Tensor& dy, Tensor& dx, Tensor& dk) {
  const std::size_t cin = x.extent(0), h = x.extent(1), w = x.extent(2);
  const std::size_t cout = k.extent(0), kh = k.extent(2), kw = k.extent(3);
  const std::size_t oh = dy.extent(1), ow = dy.extent(2);
  const auto s = static_cast<std::ptrdiff_t>(stride);
  for (std::size_t co = 0; co < cout; ++co) {
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* xch = x.data() + ci * h * w;
      double* dxch = dx.data() + ci * h * w;
      for (std::size_t u = 0; u < kh; ++u) {
        for (std::size_t v = 0; v < kw; ++v) {
          const double kv = k.at(co, ci, u, v);
          double dkacc = 0.0;
          for (std::size_t r = 0; r < oh; ++r) {
            const std::ptrdiff_t ih =
                static_cast<std::ptrdiff_t>(r) * s - pad + u;
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
            const double* xrow = xch + ih * w;
            double* dxrow = dxch + ih * w;
            const double* dyrow = dy.data() + (co * oh + r) * ow;
            if (stride == 1) {
              const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(v) - pad;
              const std::size_t c0 =
                  off < 0 ? static_cast<std::size_t>(-off) : 0;
              const std::size_t c1 = std::min(
                  ow, static_cast<std::size_t>(
                          static_cast<std::ptrdiff_t>(w) - off));
              for (std::size_t c = c0; c < c1; ++c) {
                dkacc += dyrow[c] * xrow[c + off];
                dxrow[c + off] += kv * dyrow[c];
              }
            } else {
              for (std::size_t c = 0; c < ow; ++c) {
                const std::ptrdiff_t iw =
                    static_cast<std::ptrdiff_t>(c) * s - pad + v;
                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
                dkacc += dyrow[c] * xrow[iw];
                dxrow[iw] += kv * dyrow[c];
              }
            }
          }
          dk.at(co, ci, u, v) += dkacc;
        }
      }
    }
  }
}

inline Tensor mean_pool2x2(const Tensor& x) {
  require_rank(x, 3, "mean_pool2x2");
  const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
  if (h % 2 != 0 || w % 2 != 0)
    throw DimensionError("mean_pool2x2: spatial extents must be even, got " +
                         shape_str(x.shape()));
  Tensor y({c, h / 2, w / 2});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < h / 2; ++i)
      for (std::size_t j = 0; j < w / 2; ++j)
        y.at(ch, i, j) = 0.25 * (x.at(ch, 2 * i, 2 * j) +
                                 x.at(ch, 2 * i, 2 * j + 1) +
                                 x.at(ch, 2 * i + 1, 2 * j) +
                                 x.at(ch, 2 * i + 1, 2 * j + 1));
  return y;
}

inline void mean_pool2x2_vjp(const Tensor& dy, Tensor& dx) {
  const std::size_t c = dy.extent(0), oh = dy.extent(1), ow = dy.extent(2);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        const double g = 0.25 * dy.at(ch, i, j);
        dx.at(ch, 2 * i, 2 * j) += g;
        dx.at(ch, 2 * i, 2 * j + 1) += g;
        dx.at(ch, 2 * i + 1, 2 * j) += g;
        dx.at(ch, 2 * i + 1, 2 * j + 1) += g;
      }
}

inline Tensor upsample_nearest2x(const Tensor& x) {
  require_rank(x, 3, "upsample_nearest2x");
  const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
  Tensor y({c, 2 * h, 2 * w});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const double v = x.at(ch, i, j);
        y.at(ch, 2 * i, 2 * j) = v;
        y.at(ch, 2 * i, 2 * j + 1) = v;
        y.at(ch, 2 * i + 1, 2 * j) = v;
        y.at(ch, 2 * i + 1, 2 * j + 1) = v;
      }
  return y;
}

inline void upsample_nearest2x_vjp(const Tensor& dy, Tensor& dx) {
  const std::size_t c = dx.extent(0), h = dx.extent(1), w = dx.extent(2);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        dx.at(ch, i, j) += dy.at(ch, 2 * i, 2 * j) +
                           dy.at(ch, 2 * i, 2 * j + 1) +
                           dy.at(ch, 2 * i + 1, 2 * j) +
                           dy.at(ch, 2 * i + 1, 2 * j + 1);
}

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank(a, 3, "concat_channels");
  require_rank(b, 3, "concat_channels");
  if (a.extent(1) != b.extent(1) || a.extent(2) != b.extent(2))
    throw DimensionError("concat_channels: spatial extents differ, " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor y({a.extent(0) + b.extent(0), a.extent(1), a.extent(2)});
  std::copy(a.data(), a.data() + a.size(), y.data());
  std::copy(b.data(), b.data() + b.size(), y.data() + a.size());
  return y;
}

inline void concat_channels_vjp(const Tensor& dy, Tensor& da, Tensor& db) {
  for (std::size_t i = 0; i < da.size(); ++i) da[i] += dy[i];
  for (std::size_t i = 0; i < db.size(); ++i) db[i] += dy[da.size() + i];
}

inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "concat_cols");
  require_rank(b, 2, "concat_cols");
  if (a.extent(0) != b.extent(0))
    throw DimensionError("concat_cols: row counts differ, " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::size_t m = a.extent(0), na = a.extent(1), nb = b.extent(1);
  Tensor y({m, na + nb});
  for (std::size_t i = 0; i < m; ++i) {
    std::copy(a.data() + i * na, a.data() + (i + 1) * na,
              y.data() + i * (na + nb));
    std::copy(b.data() + i * nb, b.data() + (i + 1) * nb,
              y.data() + i * (na + nb) + na);
  }
  return y;
}

inline void concat_cols_vjp(const Tensor& dy, Tensor& da, Tensor& db) {
  const std::size_t m = da.extent(0), na = da.extent(1), nb = db.extent(1);
  for (std::size_t i = 0; i < m; ++i) {
    const double* dyr = dy.data() + i * (na + nb);
    for (std::size_t j = 0; j < na; ++j) da.at(i, j) += dyr[j];
    for (std::size_t j = 0; j < nb; ++j) db.at(i, j) += dyr[na + j];
  }
}

inline Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1) {
  require_rank(a, 2, "slice_cols");
  if (c0 >= c1 || c1 > a.extent(1))
    throw DimensionError("slice_cols: bad column range [" +
                         std::to_string(c0) + ", " + std::to_string(c1) +
                         ") for " + shape_str(a.shape()));
  const std::size_t m = a.extent(0), n = a.extent(1);
  Tensor y({m, c1 - c0});
  for (std::size_t i = 0; i < m; ++i)
    std::copy(a.data() + i * n + c0, a.data() + i * n + c1,
              y.data() + i * (c1 - c0));
  return y;
}

inline void slice_cols_vjp(std::size_t c0, const Tensor& dy, Tensor& da) {
  const std::size_t m = da.extent(0), n = da.extent(1), k = dy.extent(1);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) da.at(i, c0 + j) += dy.at(i, j);
  (void)n;
}

inline Tensor add_row_bias(const Tensor& x, const Tensor& b) {
  require_rank(x, 2, "add_row_bias");
  if (b.rank() != 1 || b.extent(0) != x.extent(1))
    throw DimensionError("add_row_bias: bias " + shape_str(b.shape()) +
                         " does not match columns of " +
                         shape_str(x.shape()));
  Tensor y(x.shape());
  const std::size_t m = x.extent(0), n = x.extent(1);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y.at(i, j) = x.at(i, j) + b[j];
  return y;
}

inline void add_row_bias_vjp(const Tensor& dy, Tensor& dx, Tensor& db) {
  const std::size_t m = dy.extent(0), n = dy.extent(1);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      dx.at(i, j) += dy.at(i, j);
      db[j] += dy.at(i, j);
    }
}

inline Tensor add_channel_bias(const Tensor& x, const Tensor& b) {
  require_rank(x, 3, "add_channel_bias");
  if (b.rank() != 1 || b.extent(0) != x.extent(0))
    throw DimensionError("add_channel_bias: bias " + shape_str(b.shape()) +
                         " does not match channels of " +
                         shape_str(x.shape()));
  Tensor y(x.shape());
  const std::size_t c = x.extent(0), hw = x.extent(1) * x.extent(2);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < hw; ++i)
      y[ch * hw + i] = x[ch * hw + i] + b[ch];
  return y;
}

inline void add_channel_bias_vjp(const Tensor& dy, Tensor& dx, Tensor& db) {
  const std::size_t c = dx.extent(0), hw = dx.extent(1) * dx.extent(2);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (std::size_t i = 0; i < hw; ++i) {
      dx[ch * hw + i] += dy[ch * hw + i];
      acc += dy[ch * hw + i];
    }
    db[ch] += acc;
  }
}

// Non-overlapping PxP patches, each flattened channel-then-spatial:
// x [C x H x W] -> [(H/P)(W/P) x C*P*P], patch rows in row-major grid order.
inline Tensor im2patches(const Tensor& x, int patch) {
  require_rank(x, 3, "im2patches");
  const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
  const auto p = static_cast<std::size_t>(patch);
  if (patch < 1 || h % p != 0 || w % p != 0)
    throw ConfigError("im2patches: patch size " + std::to_string(patch) +
                      " must divide spatial extents of " +
                      shape_str(x.shape()));
  const std::size_t gh = h / p, gw = w / p;
  Tensor y({gh * gw, c * p * p});
  for (std::size_t pr = 0; pr < gh; ++pr)
    for (std::size_t pc = 0; pc < gw; ++pc) {
      double* row = y.data() + (pr * gw + pc) * c * p * p;
      std::size_t o = 0;
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t u = 0; u < p; ++u)
          for (std::size_t v = 0; v < p; ++v)
            row[o++] = x.at(ch, pr * p + u, pc * p + v);
    }
  return y;
}

inline void im2patches_vjp(int patch, const Tensor& dy, Tensor& dx) {
  const std::size_t c = dx.extent(0), h = dx.extent(1), w = dx.extent(2);
  const auto p = static_cast<std::size_t>(patch);
  const std::size_t gh = h / p, gw = w / p;
  for (std::size_t pr = 0; pr < gh; ++pr)
    for (std::size_t pc = 0; pc < gw; ++pc) {
      const double* row = dy.data() + (pr * gw + pc) * c * p * p;
      std::size_t o = 0;
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t u = 0; u < p; ++u)
          for (std::size_t v = 0; v < p; ++v)
            dx.at(ch, pr * p + u, pc * p + v) += row[o++];
    }
}

// ---------------------------------------------------------------------------
// reductions and losses

inline Tensor sum_all(const Tensor& x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i];
  return Tensor::scalar(acc);
}

inline void sum_all_vjp(const Tensor& dy, Tensor& dx) {
  const double g = dy[0];
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g;
}

// Mean binary cross-entropy on logits, stable max(z,0) decomposition:
// mean_i [ max(z,0) - z*y + log(1 + exp(-|z|)) ].
inline double bce_with_logits_value(const Tensor& z, const Tensor& y) {
  if (!z.same_shape(y))
    throw DimensionError("bce_with_logits: logits " + shape_str(z.shape()) +
                         " vs target " + shape_str(y.shape()));
  double acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double zi = z[i];
    acc += std::max(zi, 0.0) - zi * y[i] + std::log1p(std::exp(-std::abs(zi)));
  }
  return acc / static_cast<double>(z.size());
}

inline void bce_with_logits_vjp(const Tensor& z, const Tensor& y,
                                const Tensor& dy, Tensor& dz) {
  const double g = dy[0] / static_cast<double>(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double sig = 1.0 / (1.0 + std::exp(-z[i]));
    dz[i] += g * (sig - y[i]);
  }
}

inline Tensor sigmoid(const Tensor& z) {
  Tensor y(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i)
    y[i] = 1.0 / (1.0 + std::exp(-z[i]));
  return y;
}

}  // namespace tacseg::ops
