#pragma once

// Forward kernels and their vector-Jacobian products. Everything here is a
// pure function of its arguments; the computation record in record.hpp
// strings these together and drives the backward pass.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vesselgen/numerics/tensor.hpp"

namespace vesselgen {

enum class Elementwise { add, sub, mul, exp, silu };

inline const char* to_string(Elementwise op) {
  switch (op) {
    case Elementwise::add: return "add";
    case Elementwise::sub: return "sub";
    case Elementwise::mul: return "mul";
    case Elementwise::exp: return "exp";
    case Elementwise::silu: return "silu";
  }
  return "?";
}

inline bool is_binary(Elementwise op) {
  return op == Elementwise::add || op == Elementwise::sub || op == Elementwise::mul;
}

struct Conv2dGeometry {
  std::size_t batch, in_channels, height, width;
  std::size_t out_channels, kernel_h, kernel_w;
  std::size_t stride, padding;
  std::size_t out_h, out_w;

  std::size_t patch() const { return in_channels * kernel_h * kernel_w; }
  std::size_t out_pixels() const { return out_h * out_w; }
};

namespace detail {

/// C = alpha * op(A) * op(B) + beta * C on row-major buffers, where op(A) is
/// m x k and op(B) is k x n.
template <typename Real>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, Real alpha,
          const Real* a, const Real* b, Real beta, Real* c) {
  using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CMap = Eigen::Map<const Mat>;
  Eigen::Map<Mat> out(c, Eigen::Index(m), Eigen::Index(n));
  if (beta == Real(0)) {
    out.setZero();
  } else if (beta != Real(1)) {
    out *= beta;
  }
  const CMap am(a, Eigen::Index(trans_a ? k : m), Eigen::Index(trans_a ? m : k));
  const CMap bm(b, Eigen::Index(trans_b ? n : k), Eigen::Index(trans_b ? k : n));
  if (trans_a && trans_b) {
    out.noalias() += alpha * am.transpose() * bm.transpose();
  } else if (trans_a) {
    out.noalias() += alpha * am.transpose() * bm;
  } else if (trans_b) {
    out.noalias() += alpha * am * bm.transpose();
  } else {
    out.noalias() += alpha * am * bm;
  }
}

template <typename Real>
Real sigmoid(Real x) {
  return Real(1) / (Real(1) + std::exp(-x));
}

/// Output columns [lo, hi) whose input column for kernel offset kw lies
/// inside the image.
inline std::pair<std::size_t, std::size_t> valid_columns(const Conv2dGeometry& g, std::size_t kw) {
  std::size_t lo = 0;
  if (g.padding > kw) lo = (g.padding - kw + g.stride - 1) / g.stride;
  const std::size_t limit = g.width + g.padding - kw;  // need ow * stride < limit
  std::size_t hi = std::min(g.out_w, (limit + g.stride - 1) / g.stride);
  return {std::min(lo, hi), hi};
}

template <typename Real>
void im2col(const Real* image, const Conv2dGeometry& g, Real* cols) {
  const std::size_t pixels = g.out_pixels();
  for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
    const Real* plane = image + ci * g.height * g.width;
    for (std::size_t kh = 0; kh < g.kernel_h; ++kh) {
      for (std::size_t kw = 0; kw < g.kernel_w; ++kw) {
        Real* row = cols + ((ci * g.kernel_h + kh) * g.kernel_w + kw) * pixels;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = long(oh * g.stride + kh) - long(g.padding);
          Real* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= long(g.height)) {
            std::fill(dst, dst + g.out_w, Real(0));
            continue;
          }
          const Real* src = plane + std::size_t(ih) * g.width;
          const auto [lo, hi] = valid_columns(g, kw);
          std::fill(dst, dst + lo, Real(0));
          const long off = long(kw) - long(g.padding);
          if (g.stride == 1) {
            std::copy(src + (long(lo) + off), src + (long(hi) + off), dst + lo);
          } else {
            for (std::size_t ow = lo; ow < hi; ++ow) dst[ow] = src[long(ow * g.stride) + off];
          }
          std::fill(dst + hi, dst + g.out_w, Real(0));
        }
      }
    }
  }
}

template <typename Real>
void col2im_add(const Real* cols, const Conv2dGeometry& g, Real* image) {
  const std::size_t pixels = g.out_pixels();
  for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
    Real* plane = image + ci * g.height * g.width;
    for (std::size_t kh = 0; kh < g.kernel_h; ++kh) {
      for (std::size_t kw = 0; kw < g.kernel_w; ++kw) {
        const Real* row = cols + ((ci * g.kernel_h + kh) * g.kernel_w + kw) * pixels;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = long(oh * g.stride + kh) - long(g.padding);
          if (ih < 0 || ih >= long(g.height)) continue;
          Real* dst = plane + std::size_t(ih) * g.width;
          const Real* src = row + oh * g.out_w;
          const auto [lo, hi] = valid_columns(g, kw);
          const long off = long(kw) - long(g.padding);
          for (std::size_t ow = lo; ow < hi; ++ow) dst[long(ow * g.stride) + off] += src[ow];
        }
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

template <typename Real>
BasicTensor<Real> elementwise(Elementwise op, const BasicTensor<Real>& a,
                              const BasicTensor<Real>* b = nullptr) {
  std::vector<Real> out(a.size());
  auto av = a.values();
  if (is_binary(op)) {
    if (!b) throw ShapeError(std::string("elementwise ") + to_string(op) + " needs two operands");
    const bool scalar_b = b->is_scalar() && !a.is_scalar();
    if (!scalar_b && b->shape() != a.shape()) {
      throw ShapeError(std::string("elementwise ") + to_string(op) + ": shape " +
                       shape_string(a.shape()) + " vs " + shape_string(b->shape()));
    }
    auto bv = b->values();
    for (std::size_t i = 0; i < out.size(); ++i) {
      const Real y = scalar_b ? bv[0] : bv[i];
      switch (op) {
        case Elementwise::add: out[i] = av[i] + y; break;
        case Elementwise::sub: out[i] = av[i] - y; break;
        default: out[i] = av[i] * y; break;
      }
    }
  } else if (op == Elementwise::exp) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(av[i]);
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * detail::sigmoid(av[i]);
  }
  return BasicTensor<Real>(a.shape(), std::move(out));
}

template <typename Real>
BasicTensor<Real> elementwise(Elementwise op, const BasicTensor<Real>& a,
                              const BasicTensor<Real>& b) {
  return elementwise(op, a, &b);
}

// ---------------------------------------------------------------------------
// conv2d: cross-correlation, NCHW input, OIHW kernel.

inline Conv2dGeometry conv2d_geometry(const Shape& input, const Shape& kernel,
                                      std::size_t stride, std::size_t padding) {
  if (input.size() != 4) throw ShapeError("conv2d input must be NCHW, got " + shape_string(input));
  if (kernel.size() != 4) throw ShapeError("conv2d kernel must be OIHW, got " + shape_string(kernel));
  if (stride < 1) throw ParameterError("conv2d stride must be >= 1");
  if (input[1] != kernel[1]) {
    throw ShapeError("conv2d channel mismatch: input has " + std::to_string(input[1]) +
                     " channels, kernel expects " + std::to_string(kernel[1]));
  }
  Conv2dGeometry g{input[0], input[1], input[2], input[3], kernel[0], kernel[2], kernel[3],
                   stride, padding, 0, 0};
  if (g.height + 2 * padding < g.kernel_h || g.width + 2 * padding < g.kernel_w) {
    throw ShapeError("conv2d kernel " + shape_string(kernel) + " larger than padded input " +
                     shape_string(input));
  }
  g.out_h = (g.height + 2 * padding - g.kernel_h) / stride + 1;
  g.out_w = (g.width + 2 * padding - g.kernel_w) / stride + 1;
  return g;
}

template <typename Real>
BasicTensor<Real> conv2d(const BasicTensor<Real>& input, const BasicTensor<Real>& kernel,
                         const BasicTensor<Real>* bias, std::size_t stride, std::size_t padding) {
  const auto g = conv2d_geometry(input.shape(), kernel.shape(), stride, padding);
  if (bias && bias->size() != g.out_channels) {
    throw ShapeError("conv2d bias has " + std::to_string(bias->size()) + " entries for " +
                     std::to_string(g.out_channels) + " output channels");
  }
  const std::size_t in_plane = g.in_channels * g.height * g.width;
  const std::size_t out_plane = g.out_channels * g.out_pixels();
  std::vector<Real> out(g.batch * out_plane);
  std::vector<Real> cols(g.patch() * g.out_pixels());
  for (std::size_t n = 0; n < g.batch; ++n) {
    detail::im2col(input.data() + n * in_plane, g, cols.data());
    Real* dst = out.data() + n * out_plane;
    detail::gemm(false, false, g.out_channels, g.out_pixels(), g.patch(), Real(1), kernel.data(),
                 cols.data(), Real(0), dst);
    if (bias) {
      for (std::size_t co = 0; co < g.out_channels; ++co) {
        const Real b = (*bias)[co];
        for (std::size_t p = 0; p < g.out_pixels(); ++p) dst[co * g.out_pixels() + p] += b;
      }
    }
  }
  return BasicTensor<Real>({g.batch, g.out_channels, g.out_h, g.out_w}, std::move(out));
}

template <typename Real>
BasicTensor<Real> conv2d(const BasicTensor<Real>& input, const BasicTensor<Real>& kernel,
                         std::size_t stride, std::size_t padding) {
  return conv2d<Real>(input, kernel, nullptr, stride, padding);
}

/// Gradients of a conv2d w.r.t. input, kernel and bias. Only the requested
/// outputs are filled.
template <typename Real>
void conv2d_backward(const BasicTensor<Real>& input, const BasicTensor<Real>& kernel,
                     std::size_t stride, std::size_t padding, std::span<const Real> grad_out,
                     std::vector<Real>* grad_input, std::vector<Real>* grad_kernel,
                     std::vector<Real>* grad_bias) {
  const auto g = conv2d_geometry(input.shape(), kernel.shape(), stride, padding);
  const std::size_t in_plane = g.in_channels * g.height * g.width;
  const std::size_t out_plane = g.out_channels * g.out_pixels();
  std::vector<Real> cols(g.patch() * g.out_pixels());
  for (std::size_t n = 0; n < g.batch; ++n) {
    const Real* dout = grad_out.data() + n * out_plane;
    if (grad_kernel) {
      detail::im2col(input.data() + n * in_plane, g, cols.data());
      detail::gemm(false, true, g.out_channels, g.patch(), g.out_pixels(), Real(1), dout,
                   cols.data(), Real(1), grad_kernel->data());
    }
    if (grad_input) {
      detail::gemm(true, false, g.patch(), g.out_pixels(), g.out_channels, Real(1),
                   kernel.data(), dout, Real(0), cols.data());
      detail::col2im_add(cols.data(), g, grad_input->data() + n * in_plane);
    }
    if (grad_bias) {
      for (std::size_t co = 0; co < g.out_channels; ++co) {
        double acc = 0.0;
        for (std::size_t p = 0; p < g.out_pixels(); ++p) acc += dout[co * g.out_pixels() + p];
        (*grad_bias)[co] += Real(acc);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// dense: y[n, o] = sum_i x[n, i] * w[o, i] + b[o]

template <typename Real>
BasicTensor<Real> dense(const BasicTensor<Real>& x, const BasicTensor<Real>& weight,
                        const BasicTensor<Real>* bias) {
  if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(1)) {
    throw ShapeError("dense: input " + shape_string(x.shape()) + " incompatible with weight " +
                     shape_string(weight.shape()));
  }
  const std::size_t rows = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
  if (bias && bias->size() != out_dim) throw ShapeError("dense: bias size mismatch");
  std::vector<Real> out(rows * out_dim, Real(0));
  if (bias) {
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(bias->data(), bias->data() + out_dim, out.data() + r * out_dim);
  }
  detail::gemm(false, true, rows, out_dim, in, Real(1), x.data(), weight.data(),
               bias ? Real(1) : Real(0), out.data());
  return BasicTensor<Real>({rows, out_dim}, std::move(out));
}

// ---------------------------------------------------------------------------
// Group normalization over (C/G, H, W) per sample and group, with per-channel
// affine gain and offset. Statistics accumulate in double.

struct GroupStats {
  std::vector<double> mean;
  std::vector<double> rstd;
};

template <typename Real>
GroupStats group_stats(const BasicTensor<Real>& x, std::size_t groups, double eps) {
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const std::size_t per = c / groups * hw;
  GroupStats s{std::vector<double>(n * groups), std::vector<double>(n * groups)};
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t gi = 0; gi < groups; ++gi) {
      const Real* p = x.data() + (b * c * hw) + gi * per;
      double sum = 0.0;
      for (std::size_t i = 0; i < per; ++i) sum += p[i];
      const double mean = sum / double(per);
      double sq = 0.0;
      for (std::size_t i = 0; i < per; ++i) sq += (p[i] - mean) * (p[i] - mean);
      s.mean[b * groups + gi] = mean;
      s.rstd[b * groups + gi] = 1.0 / std::sqrt(sq / double(per) + eps);
    }
  }
  return s;
}

inline void check_group_norm(const Shape& x, std::size_t groups, std::size_t gain, std::size_t offset) {
  if (x.size() != 4) throw ShapeError("group_norm expects NCHW, got " + shape_string(x));
  if (groups == 0 || x[1] % groups != 0) {
    throw ShapeError("group_norm: " + std::to_string(x[1]) + " channels not divisible into " +
                     std::to_string(groups) + " groups");
  }
  if (gain != x[1] || offset != x[1]) throw ShapeError("group_norm: affine parameter size mismatch");
}

template <typename Real>
BasicTensor<Real> group_norm(const BasicTensor<Real>& x, const BasicTensor<Real>& gain,
                             const BasicTensor<Real>& offset, std::size_t groups, double eps) {
  check_group_norm(x.shape(), groups, gain.size(), offset.size());
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3), cpg = c / groups;
  const auto s = group_stats(x, groups, eps);
  std::vector<Real> out(x.size());
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t gi = b * groups + ch / cpg;
      const double mean = s.mean[gi], rstd = s.rstd[gi];
      const std::size_t base = (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        out[base + i] = Real((x[base + i] - mean) * rstd * gain[ch] + offset[ch]);
      }
    }
  }
  return BasicTensor<Real>(x.shape(), std::move(out));
}

template <typename Real>
void group_norm_backward(const BasicTensor<Real>& x, const BasicTensor<Real>& gain,
                         std::size_t groups, double eps, std::span<const Real> grad_out,
                         std::vector<Real>* grad_x, std::vector<Real>* grad_gain,
                         std::vector<Real>* grad_offset) {
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3), cpg = c / groups;
  const auto s = group_stats(x, groups, eps);
  const double per = double(cpg * hw);
  std::vector<double> dgain(c, 0.0), doffset(c, 0.0);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t gi = 0; gi < groups; ++gi) {
      const double mean = s.mean[b * groups + gi], rstd = s.rstd[b * groups + gi];
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      for (std::size_t ch = gi * cpg; ch < (gi + 1) * cpg; ++ch) {
        const std::size_t base = (b * c + ch) * hw;
        double cg = 0.0, co = 0.0;
        for (std::size_t i = 0; i < hw; ++i) {
          const double xhat = (x[base + i] - mean) * rstd;
          const double dy = grad_out[base + i];
          const double dxhat = dy * gain[ch];
          sum_dxhat += dxhat;
          sum_dxhat_xhat += dxhat * xhat;
          cg += dy * xhat;
          co += dy;
        }
        dgain[ch] += cg;
        doffset[ch] += co;
      }
      if (!grad_x) continue;
      const double m1 = sum_dxhat / per, m2 = sum_dxhat_xhat / per;
      for (std::size_t ch = gi * cpg; ch < (gi + 1) * cpg; ++ch) {
        const std::size_t base = (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const double xhat = (x[base + i] - mean) * rstd;
          const double dxhat = grad_out[base + i] * double(gain[ch]);
          (*grad_x)[base + i] += Real(rstd * (dxhat - m1 - xhat * m2));
        }
      }
    }
  }
  if (grad_gain)
    for (std::size_t ch = 0; ch < c; ++ch) (*grad_gain)[ch] += Real(dgain[ch]);
  if (grad_offset)
    for (std::size_t ch = 0; ch < c; ++ch) (*grad_offset)[ch] += Real(doffset[ch]);
}

// ---------------------------------------------------------------------------
// Layout helpers used by the denoiser.

/// x[N,C,H,W] + v[N,C] broadcast over the spatial dims.
template <typename Real>
BasicTensor<Real> add_channelwise(const BasicTensor<Real>& x, const BasicTensor<Real>& v) {
  if (x.rank() != 4 || v.rank() != 2 || v.dim(0) != x.dim(0) || v.dim(1) != x.dim(1)) {
    throw ShapeError("add_channelwise: " + shape_string(x.shape()) + " vs " +
                     shape_string(v.shape()));
  }
  const std::size_t planes = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<Real> out(x.values().begin(), x.values().end());
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < hw; ++i) out[p * hw + i] += v[p];
  return BasicTensor<Real>(x.shape(), std::move(out));
}

template <typename Real>
BasicTensor<Real> upsample_nearest2x(const BasicTensor<Real>& x) {
  if (x.rank() != 4) throw ShapeError("upsample expects NCHW, got " + shape_string(x.shape()));
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  std::vector<Real> out(planes * 4 * h * w);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < 2 * h; ++i)
      for (std::size_t j = 0; j < 2 * w; ++j)
        out[(p * 2 * h + i) * 2 * w + j] = x[(p * h + i / 2) * w + j / 2];
  return BasicTensor<Real>({x.dim(0), x.dim(1), 2 * h, 2 * w}, std::move(out));
}

template <typename Real>
Real sum_all(const BasicTensor<Real>& x) {
  double acc = 0.0;
  for (auto v : x.values()) acc += v;
  return Real(acc);
}

template <typename Real>
Real mean_all(const BasicTensor<Real>& x) {
  double acc = 0.0;
  for (auto v : x.values()) acc += v;
  return Real(acc / double(x.size()));
}

}  // namespace vesselgen
