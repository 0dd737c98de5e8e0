#include "weaknet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <malloc.h>
#include <stdexcept>

#include "weaknet/gemm.hpp"

namespace weaknet::ops {
namespace {

// Training allocates and frees tens of MB of activations per layer. Served
// by mmap, each of those pays page faults on first touch; keep them in the
// heap so freed blocks are reused.
[[maybe_unused]] const bool kHeapTuned = [] {
  mallopt(M_MMAP_MAX, 0);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  return true;
}();

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

struct ConvDims {
  std::size_t n, cin, h, w, cout, kh, kw, ho, wo;
  std::size_t patch() const { return cin * kh * kw; }
  std::size_t plane() const { return ho * wo; }
};

template <class T>
ConvDims conv_dims(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                   ConvGeometry g) {
  require(input.rank() == 4, "conv2d: input must be [N,C,H,W], got " +
                                 shape_string(input.shape()));
  require(weight.rank() == 4, "conv2d: weight must be [Cout,Cin,kh,kw]");
  require(g.stride >= 1, "conv2d: stride must be >= 1");
  ConvDims d{};
  d.n = input.dim(0);
  d.cin = input.dim(1);
  d.h = input.dim(2);
  d.w = input.dim(3);
  d.cout = weight.dim(0);
  d.kh = weight.dim(2);
  d.kw = weight.dim(3);
  require(weight.dim(1) == d.cin,
          "conv2d: input has " + std::to_string(d.cin) +
              " channels but weight expects " + std::to_string(weight.dim(1)));
  require(d.kh <= d.h + 2 * g.pad && d.kw <= d.w + 2 * g.pad,
          "conv2d: kernel larger than padded input");
  d.ho = conv_output_size(d.h, d.kh, g);
  d.wo = conv_output_size(d.w, d.kw, g);
  return d;
}

bool is_pointwise(const ConvDims& d, ConvGeometry g) {
  return d.kh == 1 && d.kw == 1 && g.stride == 1 && g.pad == 0;
}

// Column buffer for output rows [oy0, oy1):
// cols[(c*kh + ky)*kw + kx][(oy - oy0)*wo + ox]
template <class T>
void im2col(const T* x, const ConvDims& d, ConvGeometry g, std::size_t oy0,
            std::size_t oy1, T* cols) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  const auto stride = static_cast<std::ptrdiff_t>(g.stride);
  const std::size_t width = (oy1 - oy0) * d.wo;
  std::size_t row = 0;
  for (std::size_t c = 0; c < d.cin; ++c) {
    const T* plane = x + c * d.h * d.w;
    for (std::size_t ky = 0; ky < d.kh; ++ky) {
      for (std::size_t kx = 0; kx < d.kw; ++kx, ++row) {
        T* dst = cols + row * width;
        for (std::size_t oy = oy0; oy < oy1; ++oy) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(oy) * stride - pad + static_cast<std::ptrdiff_t>(ky);
          T* out = dst + (oy - oy0) * d.wo;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) {
            std::fill_n(out, d.wo, T{});
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * d.w;
          for (std::size_t ox = 0; ox < d.wo; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox) * stride - pad + static_cast<std::ptrdiff_t>(kx);
            out[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.w))
                          ? T{}
                          : src[ix];
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* cols, const ConvDims& d, ConvGeometry g, std::size_t oy0,
                std::size_t oy1, T* dx) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  const auto stride = static_cast<std::ptrdiff_t>(g.stride);
  const std::size_t width = (oy1 - oy0) * d.wo;
  std::size_t row = 0;
  for (std::size_t c = 0; c < d.cin; ++c) {
    T* plane = dx + c * d.h * d.w;
    for (std::size_t ky = 0; ky < d.kh; ++ky) {
      for (std::size_t kx = 0; kx < d.kw; ++kx, ++row) {
        const T* src = cols + row * width;
        for (std::size_t oy = oy0; oy < oy1; ++oy) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(oy) * stride - pad + static_cast<std::ptrdiff_t>(ky);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) continue;
          T* out = plane + static_cast<std::size_t>(iy) * d.w;
          const T* in = src + (oy - oy0) * d.wo;
          for (std::size_t ox = 0; ox < d.wo; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox) * stride - pad + static_cast<std::ptrdiff_t>(kx);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(d.w)) out[ix] += in[ox];
          }
        }
      }
    }
  }
}

// Output rows per im2col chunk. A full-plane column buffer for the early
// layers is tens of MB and the conv becomes memory bound; chunks keep it in L2.
std::size_t chunk_rows(const ConvDims& d) {
  constexpr std::size_t kTargetBytes = 512 * 1024;
  constexpr std::size_t kMinCols = 512;
  const std::size_t cols = std::max(kMinCols, kTargetBytes / (4 * d.patch()));
  return std::clamp<std::size_t>((cols + d.wo - 1) / d.wo, 1, d.ho);
}

// Reductions with eight interleaved double accumulators combined in a fixed
// order: deterministic, and the lanes vectorise.
constexpr std::size_t kLanes = 8;

double lane_total(const double (&acc)[kLanes]) {
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

template <class T>
void add_sum(const T* p, std::size_t n, double (&acc)[kLanes]) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t j = 0; j < kLanes; ++j) acc[j] += static_cast<double>(p[i + j]);
  }
  for (; i < n; ++i) acc[i % kLanes] += static_cast<double>(p[i]);
}

template <class T>
void add_sq_dev(const T* p, std::size_t n, double m, double (&acc)[kLanes]) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t j = 0; j < kLanes; ++j) {
      const double d = static_cast<double>(p[i + j]) - m;
      acc[j] += d * d;
    }
  }
  for (; i < n; ++i) {
    const double d = static_cast<double>(p[i]) - m;
    acc[i % kLanes] += d * d;
  }
}

template <class T>
void add_dot(const T* a, const T* b, std::size_t n, double (&acc)[kLanes]) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t j = 0; j < kLanes; ++j) {
      acc[j] += static_cast<double>(a[i + j]) * static_cast<double>(b[i + j]);
    }
  }
  for (; i < n; ++i) acc[i % kLanes] += static_cast<double>(a[i]) * static_cast<double>(b[i]);
}

}  // namespace

std::size_t conv_output_size(std::size_t input, std::size_t kernel,
                             ConvGeometry geometry) {
  const std::size_t padded = input + 2 * geometry.pad;
  if (kernel > padded) throw std::invalid_argument("conv: kernel exceeds input");
  return (padded - kernel) / geometry.stride + 1;
}

template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, ConvGeometry geometry) {
  const ConvDims d = conv_dims(input, weight, geometry);
  require(bias.empty() || bias.size() == d.cout, "conv2d: bias size mismatch");
  BasicTensor<T> out({d.n, d.cout, d.ho, d.wo});
  const bool pointwise = is_pointwise(d, geometry);
  const std::size_t rows = pointwise ? d.ho : chunk_rows(d);
  std::vector<T> cols(pointwise ? 0 : d.patch() * rows * d.wo);
  const MatrixView<T> w{weight.data(), static_cast<std::ptrdiff_t>(d.patch()), 1};
  const auto plane = static_cast<std::ptrdiff_t>(d.plane());
  for (std::size_t n = 0; n < d.n; ++n) {
    const T* x = input.data() + n * d.cin * d.h * d.w;
    T* y = out.data() + n * d.cout * d.plane();
    if (pointwise) {
      gemm<T>(d.cout, d.plane(), d.patch(), w, MatrixView<T>{x, plane, 1}, y, plane);
    } else {
      for (std::size_t oy0 = 0; oy0 < d.ho; oy0 += rows) {
        const std::size_t oy1 = std::min(d.ho, oy0 + rows);
        const std::size_t width = (oy1 - oy0) * d.wo;
        im2col(x, d, geometry, oy0, oy1, cols.data());
        gemm<T>(d.cout, width, d.patch(), w,
                MatrixView<T>{cols.data(), static_cast<std::ptrdiff_t>(width), 1},
                y + oy0 * d.wo, plane);
      }
    }
    if (!bias.empty()) {
      for (std::size_t co = 0; co < d.cout; ++co) {
        const T bv = bias[co];
        T* row = y + co * d.plane();
        for (std::size_t i = 0; i < d.plane(); ++i) row[i] += bv;
      }
    }
  }
  return out;
}

template <class T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input,
                             const BasicTensor<T>& weight,
                             const BasicTensor<T>& grad_output,
                             ConvGeometry geometry, bool want_input_grad,
                             bool want_param_grads) {
  const ConvDims d = conv_dims(input, weight, geometry);
  require(grad_output.shape() == Shape{d.n, d.cout, d.ho, d.wo},
          "conv2d_backward: grad_output " + shape_string(grad_output.shape()) +
              " does not match forward output");
  ConvGrads<T> grads;
  if (want_input_grad) grads.input = BasicTensor<T>(input.shape());
  if (want_param_grads) {
    grads.weight = BasicTensor<T>(weight.shape());
    grads.bias = BasicTensor<T>({d.cout});
  }
  if (!want_input_grad && !want_param_grads) return grads;

  const bool pointwise = is_pointwise(d, geometry);
  const std::size_t rows = pointwise ? d.ho : chunk_rows(d);
  std::vector<T> cols(pointwise ? 0 : d.patch() * rows * d.wo);
  const auto plane = static_cast<std::ptrdiff_t>(d.plane());
  const auto patch = static_cast<std::ptrdiff_t>(d.patch());
  const MatrixView<T> wt{weight.data(), 1, patch};
  bool first = true;

  for (std::size_t n = 0; n < d.n; ++n) {
    const T* x = input.data() + n * d.cin * d.h * d.w;
    const T* dy = grad_output.data() + n * d.cout * d.plane();
    T* dx = want_input_grad ? grads.input.data() + n * d.cin * d.h * d.w : nullptr;
    if (pointwise) {
      if (want_param_grads) {
        gemm<T>(d.cout, d.patch(), d.plane(), MatrixView<T>{dy, plane, 1},
                MatrixView<T>{x, 1, plane}, grads.weight.data(), patch, !first);
        first = false;
      }
      if (want_input_grad) {
        gemm<T>(d.patch(), d.plane(), d.cout, wt, MatrixView<T>{dy, plane, 1}, dx, plane);
      }
    } else {
      for (std::size_t oy0 = 0; oy0 < d.ho; oy0 += rows) {
        const std::size_t oy1 = std::min(d.ho, oy0 + rows);
        const std::size_t width = (oy1 - oy0) * d.wo;
        const auto ld = static_cast<std::ptrdiff_t>(width);
        const T* dy_chunk = dy + oy0 * d.wo;
        if (want_param_grads) {
          // dW[co, p] += sum_hw dy[co, hw] * cols[p, hw]
          im2col(x, d, geometry, oy0, oy1, cols.data());
          gemm<T>(d.cout, d.patch(), width, MatrixView<T>{dy_chunk, plane, 1},
                  MatrixView<T>{cols.data(), 1, ld}, grads.weight.data(), patch, !first);
          first = false;
        }
        if (want_input_grad) {
          // dcols[p, hw] = sum_co W[co, p] * dy[co, hw]
          gemm<T>(d.patch(), width, d.cout, wt, MatrixView<T>{dy_chunk, plane, 1},
                  cols.data(), ld);
          col2im_add(cols.data(), d, geometry, oy0, oy1, dx);
        }
      }
    }
    if (want_param_grads) {
      for (std::size_t co = 0; co < d.cout; ++co) {
        T sum{};
        const T* row = dy + co * d.plane();
        for (std::size_t i = 0; i < d.plane(); ++i) sum += row[i];
        grads.bias[co] += sum;
      }
    }
  }
  return grads;
}

template <class T>
BasicTensor<T> batchnorm2d(const BasicTensor<T>& input,
                           const BasicTensor<T>& gamma,
                           const BasicTensor<T>& beta,
                           const RunningStats<T>& running, Mode mode,
                           BatchNormOptions options, BatchNormCache<T>* cache) {
  require(input.rank() == 4, "batchnorm2d: input must be [N,C,H,W]");
  const std::size_t n = input.dim(0), ch = input.dim(1);
  const std::size_t hw = input.dim(2) * input.dim(3);
  require(gamma.size() == ch && beta.size() == ch,
          "batchnorm2d: gamma/beta size " + std::to_string(gamma.size()) +
              " does not match " + std::to_string(ch) + " channels");
  const std::size_t count = n * hw;

  std::vector<T> mean(ch), var(ch), inv_std(ch);
  if (mode == Mode::train) {
    require(count > 0, "batchnorm2d: empty batch");
    for (std::size_t c = 0; c < ch; ++c) {
      double acc[kLanes] = {};
      for (std::size_t b = 0; b < n; ++b) add_sum(input.data() + (b * ch + c) * hw, hw, acc);
      const double m = lane_total(acc) / static_cast<double>(count);
      double sq[kLanes] = {};
      for (std::size_t b = 0; b < n; ++b) {
        add_sq_dev(input.data() + (b * ch + c) * hw, hw, m, sq);
      }
      mean[c] = static_cast<T>(m);
      var[c] = static_cast<T>(lane_total(sq) / static_cast<double>(count));
    }
  } else {
    if (!running.tracked) {
      throw std::logic_error(
          "batchnorm2d: eval mode requested before running statistics exist");
    }
    require(running.mean.size() == ch && running.var.size() == ch,
            "batchnorm2d: running statistics size mismatch");
    for (std::size_t c = 0; c < ch; ++c) {
      mean[c] = running.mean[c];
      var[c] = running.var[c];
    }
  }
  for (std::size_t c = 0; c < ch; ++c) {
    inv_std[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(var[c]) + options.eps));
  }

  BasicTensor<T> out(input.shape());
  BasicTensor<T> normalized;
  if (cache) normalized = BasicTensor<T>(input.shape());
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t off = (b * ch + c) * hw;
      const T* x = input.data() + off;
      T* y = out.data() + off;
      const T m = mean[c], s = inv_std[c], g = gamma[c], bt = beta[c];
      if (cache) {
        T* xn = normalized.data() + off;
        for (std::size_t i = 0; i < hw; ++i) {
          xn[i] = (x[i] - m) * s;
          y[i] = g * xn[i] + bt;
        }
      } else {
        for (std::size_t i = 0; i < hw; ++i) y[i] = g * ((x[i] - m) * s) + bt;
      }
    }
  }
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
    cache->batch_mean = std::move(mean);
    cache->batch_var = std::move(var);
    cache->count = count;
    cache->mode = mode;
  }
  return out;
}

template <class T>
void update_running_stats(RunningStats<T>& running,
                          const BatchNormCache<T>& cache,
                          BatchNormOptions options) {
  if (cache.mode != Mode::train) return;
  const std::size_t ch = cache.batch_mean.size();
  if (!running.tracked) {
    running.mean = BasicTensor<T>({ch}, T{0});
    running.var = BasicTensor<T>({ch}, T{1});
    running.tracked = true;
  }
  const double m = options.momentum;
  const double correction =
      cache.count > 1 ? static_cast<double>(cache.count) / static_cast<double>(cache.count - 1)
                      : 1.0;
  for (std::size_t c = 0; c < ch; ++c) {
    running.mean[c] = static_cast<T>((1.0 - m) * running.mean[c] + m * cache.batch_mean[c]);
    running.var[c] = static_cast<T>((1.0 - m) * running.var[c] +
                                    m * cache.batch_var[c] * correction);
  }
}

template <class T>
BatchNormGrads<T> batchnorm2d_backward(const BasicTensor<T>& grad_output,
                                       const BasicTensor<T>& gamma,
                                       const BatchNormCache<T>& cache,
                                       bool want_input_grad,
                                       bool want_param_grads) {
  require(grad_output.shape() == cache.normalized.shape(),
          "batchnorm2d_backward: missing or mismatched forward cache");
  const std::size_t n = grad_output.dim(0), ch = grad_output.dim(1);
  const std::size_t hw = grad_output.dim(2) * grad_output.dim(3);
  BatchNormGrads<T> grads;
  if (want_param_grads) {
    grads.gamma = BasicTensor<T>({ch});
    grads.beta = BasicTensor<T>({ch});
  }
  if (want_input_grad) grads.input = BasicTensor<T>(grad_output.shape());

  for (std::size_t c = 0; c < ch; ++c) {
    double acc_dy[kLanes] = {}, acc_dy_xn[kLanes] = {};
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * ch + c) * hw;
      add_sum(grad_output.data() + off, hw, acc_dy);
      add_dot(grad_output.data() + off, cache.normalized.data() + off, hw, acc_dy_xn);
    }
    const double sum_dy = lane_total(acc_dy);
    const double sum_dy_xn = lane_total(acc_dy_xn);
    if (want_param_grads) {
      grads.gamma[c] = static_cast<T>(sum_dy_xn);
      grads.beta[c] = static_cast<T>(sum_dy);
    }
    if (!want_input_grad) continue;
    const T scale = gamma[c] * cache.inv_std[c];
    if (cache.mode == Mode::eval) {
      for (std::size_t b = 0; b < n; ++b) {
        const std::size_t off = (b * ch + c) * hw;
        const T* dy = grad_output.data() + off;
        T* dx = grads.input.data() + off;
        for (std::size_t i = 0; i < hw; ++i) dx[i] = dy[i] * scale;
      }
      continue;
    }
    const auto count = static_cast<double>(cache.count);
    const T mean_dy = static_cast<T>(sum_dy / count);
    const T mean_dy_xn = static_cast<T>(sum_dy_xn / count);
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * ch + c) * hw;
      const T* dy = grad_output.data() + off;
      const T* xn = cache.normalized.data() + off;
      T* dx = grads.input.data() + off;
      for (std::size_t i = 0; i < hw; ++i) {
        dx[i] = scale * (dy[i] - mean_dy - xn[i] * mean_dy_xn);
      }
    }
  }
  return grads;
}

template <class T>
MaxPoolResult<T> maxpool2d(const BasicTensor<T>& input, std::size_t window,
                           std::size_t stride) {
  require(input.rank() == 4, "maxpool2d: input must be [N,C,H,W]");
  const std::size_t n = input.dim(0), ch = input.dim(1), h = input.dim(2),
                    w = input.dim(3);
  require(h >= window && w >= window, "maxpool2d: spatial dims smaller than window");
  const std::size_t ho = (h - window) / stride + 1, wo = (w - window) / stride + 1;
  MaxPoolResult<T> r;
  r.input_shape = input.shape();
  r.output = BasicTensor<T>({n, ch, ho, wo});
  r.argmax.resize(r.output.size());
  std::size_t o = 0;
  if (window == 2 && stride == 2) {
    for (std::size_t p = 0; p < n * ch; ++p) {
      const std::size_t base = p * h * w;
      const T* x = input.data() + base;
      for (std::size_t oy = 0; oy < ho; ++oy) {
        const T* r0 = x + 2 * oy * w;
        const T* r1 = r0 + w;
        for (std::size_t ox = 0; ox < wo; ++ox, ++o) {
          // Same visiting order and strict comparison as the general path.
          std::size_t best = 2 * ox;
          T best_v = r0[best];
          if (r0[2 * ox + 1] > best_v) best_v = r0[best = 2 * ox + 1];
          if (r1[2 * ox] > best_v) best_v = r1[2 * ox], best = w + 2 * ox;
          if (r1[2 * ox + 1] > best_v) best_v = r1[2 * ox + 1], best = w + 2 * ox + 1;
          r.output[o] = best_v;
          r.argmax[o] = static_cast<std::uint32_t>(base + 2 * oy * w + best);
        }
      }
    }
    return r;
  }
  for (std::size_t p = 0; p < n * ch; ++p) {
    const std::size_t base = p * h * w;
    const T* x = input.data() + base;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox, ++o) {
        std::size_t best = (oy * stride) * w + ox * stride;
        T best_v = x[best];
        for (std::size_t ky = 0; ky < window; ++ky) {
          for (std::size_t kx = 0; kx < window; ++kx) {
            const std::size_t idx = (oy * stride + ky) * w + ox * stride + kx;
            if (x[idx] > best_v) {
              best_v = x[idx];
              best = idx;
            }
          }
        }
        r.output[o] = best_v;
        r.argmax[o] = static_cast<std::uint32_t>(base + best);
      }
    }
  }
  return r;
}

template <class T>
BasicTensor<T> maxpool2d_backward(const BasicTensor<T>& grad_output,
                                  const MaxPoolResult<T>& forward) {
  require(grad_output.size() == forward.argmax.size(),
          "maxpool2d_backward: grad_output does not match forward");
  BasicTensor<T> dx(forward.input_shape);
  for (std::size_t i = 0; i < grad_output.size(); ++i) {
    dx[forward.argmax[i]] += grad_output[i];
  }
  return dx;
}

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  BasicTensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  return y;
}

template <class T>
BasicTensor<T> relu_backward(const BasicTensor<T>& output,
                             const BasicTensor<T>& grad_output) {
  require(output.shape() == grad_output.shape(), "relu_backward: shape mismatch");
  BasicTensor<T> dx(output.shape());
  for (std::size_t i = 0; i < output.size(); ++i) {
    dx[i] = output[i] > T{0} ? grad_output[i] : T{0};
  }
  return dx;
}

template <class T>
T sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <class T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
  BasicTensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
  return y;
}

template <class T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& output,
                                const BasicTensor<T>& grad_output) {
  require(output.shape() == grad_output.shape(), "sigmoid_backward: shape mismatch");
  BasicTensor<T> dx(output.shape());
  for (std::size_t i = 0; i < output.size(); ++i) {
    dx[i] = grad_output[i] * output[i] * (T{1} - output[i]);
  }
  return dx;
}

namespace {
struct AxisLayout {
  std::size_t outer, classes, inner;
};
template <class T>
AxisLayout class_axis(const BasicTensor<T>& x) {
  require(x.rank() >= 2, "softmax: need at least [N, C]");
  std::size_t inner = 1;
  for (std::size_t a = 2; a < x.rank(); ++a) inner *= x.dim(a);
  return {x.dim(0), x.dim(1), inner};
}
}  // namespace

template <class T>
BasicTensor<T> softmax(const BasicTensor<T>& x) {
  const AxisLayout l = class_axis(x);
  BasicTensor<T> y(x.shape());
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t i = 0; i < l.inner; ++i) {
      auto at = [&](std::size_t c) { return (o * l.classes + c) * l.inner + i; };
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t c = 0; c < l.classes; ++c) mx = std::max(mx, x[at(c)]);
      T sum{};
      for (std::size_t c = 0; c < l.classes; ++c) {
        y[at(c)] = std::exp(x[at(c)] - mx);
        sum += y[at(c)];
      }
      for (std::size_t c = 0; c < l.classes; ++c) y[at(c)] /= sum;
    }
  }
  return y;
}

template <class T>
BasicTensor<T> softmax_backward(const BasicTensor<T>& output,
                                const BasicTensor<T>& grad_output) {
  require(output.shape() == grad_output.shape(), "softmax_backward: shape mismatch");
  const AxisLayout l = class_axis(output);
  BasicTensor<T> dx(output.shape());
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t i = 0; i < l.inner; ++i) {
      auto at = [&](std::size_t c) { return (o * l.classes + c) * l.inner + i; };
      T dot{};
      for (std::size_t c = 0; c < l.classes; ++c) dot += output[at(c)] * grad_output[at(c)];
      for (std::size_t c = 0; c < l.classes; ++c) {
        dx[at(c)] = output[at(c)] * (grad_output[at(c)] - dot);
      }
    }
  }
  return dx;
}

template <class T>
GlobalPoolResult<T> global_pool(const BasicTensor<T>& input, PoolMode mode) {
  require(input.rank() == 3 || (input.rank() == 4 && input.dim(3) == 1),
          "global_pool: input must be [N,C,K] or [N,C,K,1], got " +
              shape_string(input.shape()));
  const std::size_t n = input.dim(0), ch = input.dim(1), k = input.dim(2);
  require(k >= 1, "global_pool: need at least one segment");
  GlobalPoolResult<T> r;
  r.segments = k;
  r.mode = mode;
  r.output = BasicTensor<T>({n, ch});
  if (mode == PoolMode::max) r.argmax.resize(n * ch);
  for (std::size_t p = 0; p < n * ch; ++p) {
    const T* row = input.data() + p * k;
    if (mode == PoolMode::max) {
      std::size_t best = 0;
      for (std::size_t s = 1; s < k; ++s) {
        if (row[s] > row[best]) best = s;
      }
      r.output[p] = row[best];
      r.argmax[p] = static_cast<std::uint32_t>(best);
    } else {
      T sum{};
      for (std::size_t s = 0; s < k; ++s) sum += row[s];
      r.output[p] = sum / static_cast<T>(k);
    }
  }
  return r;
}

template <class T>
BasicTensor<T> global_pool_backward(const BasicTensor<T>& grad_output,
                                    const GlobalPoolResult<T>& forward) {
  require(grad_output.shape() == forward.output.shape(),
          "global_pool_backward: shape mismatch");
  const std::size_t n = grad_output.dim(0), ch = grad_output.dim(1),
                    k = forward.segments;
  BasicTensor<T> dx({n, ch, k, 1});
  for (std::size_t p = 0; p < n * ch; ++p) {
    if (forward.mode == PoolMode::max) {
      dx[p * k + forward.argmax[p]] = grad_output[p];
    } else {
      const T share = grad_output[p] / static_cast<T>(k);
      for (std::size_t s = 0; s < k; ++s) dx[p * k + s] = share;
    }
  }
  return dx;
}

template <class T>
BasicTensor<T> dense(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                     const BasicTensor<T>& bias) {
  require(input.rank() == 2 && weight.rank() == 2, "dense: expects [N,in] and [out,in]");
  const std::size_t n = input.dim(0), in = input.dim(1), out = weight.dim(0);
  require(weight.dim(1) == in, "dense: input width " + std::to_string(in) +
                                   " does not match weight " +
                                   shape_string(weight.shape()));
  require(bias.size() == out, "dense: bias size mismatch");
  BasicTensor<T> y({n, out});
  gemm<T>(n, out, in, MatrixView<T>{input.data(), static_cast<std::ptrdiff_t>(in), 1},
          MatrixView<T>{weight.data(), 1, static_cast<std::ptrdiff_t>(in)}, y.data(),
          static_cast<std::ptrdiff_t>(out));
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t o = 0; o < out; ++o) y[b * out + o] += bias[o];
  }
  return y;
}

template <class T>
DenseGrads<T> dense_backward(const BasicTensor<T>& input,
                             const BasicTensor<T>& weight,
                             const BasicTensor<T>& grad_output,
                             bool want_input_grad, bool want_param_grads) {
  const std::size_t n = input.dim(0), in = input.dim(1), out = weight.dim(0);
  require(grad_output.shape() == Shape{n, out}, "dense_backward: shape mismatch");
  DenseGrads<T> g;
  const auto s_in = static_cast<std::ptrdiff_t>(in);
  const auto s_out = static_cast<std::ptrdiff_t>(out);
  if (want_param_grads) {
    g.weight = BasicTensor<T>({out, in});
    g.bias = BasicTensor<T>({out});
    gemm<T>(out, in, n, MatrixView<T>{grad_output.data(), 1, s_out},
            MatrixView<T>{input.data(), s_in, 1}, g.weight.data(), s_in);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t o = 0; o < out; ++o) g.bias[o] += grad_output[b * out + o];
    }
  }
  if (want_input_grad) {
    g.input = BasicTensor<T>({n, in});
    gemm<T>(n, in, out, MatrixView<T>{grad_output.data(), s_out, 1},
            MatrixView<T>{weight.data(), s_in, 1}, g.input.data(), s_in);
  }
  return g;
}

#define WEAKNET_INSTANTIATE_OPS(T)                                                   \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&,       \
                                 const BasicTensor<T>&, ConvGeometry);               \
  template ConvGrads<T> conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&, \
                                        const BasicTensor<T>&, ConvGeometry, bool,   \
                                        bool);                                       \
  template BasicTensor<T> batchnorm2d(const BasicTensor<T>&, const BasicTensor<T>&,  \
                                      const BasicTensor<T>&, const RunningStats<T>&, \
                                      Mode, BatchNormOptions, BatchNormCache<T>*);   \
  template void update_running_stats(RunningStats<T>&, const BatchNormCache<T>&,     \
                                     BatchNormOptions);                              \
  template BatchNormGrads<T> batchnorm2d_backward(                                   \
      const BasicTensor<T>&, const BasicTensor<T>&, const BatchNormCache<T>&, bool,  \
      bool);                                                                         \
  template MaxPoolResult<T> maxpool2d(const BasicTensor<T>&, std::size_t,            \
                                      std::size_t);                                  \
  template BasicTensor<T> maxpool2d_backward(const BasicTensor<T>&,                  \
                                             const MaxPoolResult<T>&);               \
  template BasicTensor<T> relu(const BasicTensor<T>&);                               \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&); \
  template T sigmoid(T);                                                             \
  template BasicTensor<T> sigmoid(const BasicTensor<T>&);                            \
  template BasicTensor<T> sigmoid_backward(const BasicTensor<T>&,                    \
                                           const BasicTensor<T>&);                   \
  template BasicTensor<T> softmax(const BasicTensor<T>&);                            \
  template BasicTensor<T> softmax_backward(const BasicTensor<T>&,                    \
                                           const BasicTensor<T>&);                   \
  template GlobalPoolResult<T> global_pool(const BasicTensor<T>&, PoolMode);         \
  template BasicTensor<T> global_pool_backward(const BasicTensor<T>&,                \
                                               const GlobalPoolResult<T>&);          \
  template BasicTensor<T> dense(const BasicTensor<T>&, const BasicTensor<T>&,        \
                                const BasicTensor<T>&);                              \
  template DenseGrads<T> dense_backward(const BasicTensor<T>&, const BasicTensor<T>&, \
                                        const BasicTensor<T>&, bool, bool);

WEAKNET_INSTANTIATE_OPS(float)
WEAKNET_INSTANTIATE_OPS(double)

#undef WEAKNET_INSTANTIATE_OPS

}  // namespace weaknet::ops
