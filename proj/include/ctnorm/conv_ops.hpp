#pragma once

#include "ctnorm/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

// Direct NCHW convolutions. Each output element is accumulated by exactly
// one thread in a fixed order, so results are bit-identical for any thread
// count.

namespace ctnorm::nn {

inline std::int64_t conv_out_dim(std::int64_t in, std::int64_t k, std::int64_t stride, std::int64_t pad) {
    return (in + 2 * pad - k) / stride + 1;
}

inline std::int64_t conv_transpose_out_dim(std::int64_t in, std::int64_t k, std::int64_t stride,
                                           std::int64_t pad) {
    return (in - 1) * stride - 2 * pad + k;
}

namespace detail {

template <typename T>
void conv2d_forward(const std::vector<T>& in, std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w,
                    const std::vector<T>& ker, std::int64_t f, std::int64_t kh, std::int64_t kw,
                    std::int64_t stride, std::int64_t pad, std::vector<T>& out, std::int64_t oh,
                    std::int64_t ow) {
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static) if (n * f > 1)
#endif
    for (std::int64_t ni = 0; ni < n; ++ni) {
        for (std::int64_t fi = 0; fi < f; ++fi) {
            for (std::int64_t y = 0; y < oh; ++y) {
                for (std::int64_t x = 0; x < ow; ++x) {
                    T acc = T(0);
                    for (std::int64_t ci = 0; ci < c; ++ci) {
                        for (std::int64_t i = 0; i < kh; ++i) {
                            const std::int64_t iy = y * stride - pad + i;
                            if (iy < 0 || iy >= h) continue;
                            const T* in_row = in.data() + ((ni * c + ci) * h + iy) * w;
                            const T* k_row = ker.data() + ((fi * c + ci) * kh + i) * kw;
                            for (std::int64_t j = 0; j < kw; ++j) {
                                const std::int64_t ix = x * stride - pad + j;
                                if (ix < 0 || ix >= w) continue;
                                acc += k_row[j] * in_row[ix];
                            }
                        }
                    }
                    out[((ni * f + fi) * oh + y) * ow + x] = acc;
                }
            }
        }
    }
}

}  // namespace detail

// input [N,C,H,W] * kernel [F,C,kh,kw] -> [N,F,H',W'] with zero padding.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, int stride, int padding) {
    if (input.shape().size() != 4 || kernel.shape().size() != 4) {
        throw ShapeError("conv2d: expected rank-4 input and kernel");
    }
    if (stride < 1) throw ValueError("conv2d: stride must be >= 1, got " + std::to_string(stride));
    if (padding < 0) throw ValueError("conv2d: padding must be >= 0");
    const auto& is = input.shape();
    const auto& ks = kernel.shape();
    const std::int64_t n = is[0], c = is[1], h = is[2], w = is[3];
    const std::int64_t f = ks[0], kc = ks[1], kh = ks[2], kw = ks[3];
    if (kc != c) {
        throw ShapeError("conv2d: channel mismatch, input has " + std::to_string(c) +
                         " kernel expects " + std::to_string(kc));
    }
    if (kh > h + 2 * padding || kw > w + 2 * padding) {
        throw ShapeError("conv2d: kernel exceeds padded input size");
    }
    const std::int64_t oh = conv_out_dim(h, kh, stride, padding);
    const std::int64_t ow = conv_out_dim(w, kw, stride, padding);
    std::vector<T> out(static_cast<std::size_t>(n * f * oh * ow));
    detail::conv2d_forward(input.data(), n, c, h, w, kernel.data(), f, kh, kw, stride, padding, out, oh, ow);

    auto pin = input.node(), pk = kernel.node();
    const std::int64_t s = stride, p = padding;
    return detail::make_result<T>(
        {n, f, oh, ow}, std::move(out), "conv2d", {pin, pk},
        [pin, pk, n, c, h, w, f, kh, kw, s, p, oh, ow](Node<T>& nd) {
            const auto& g = nd.grad;
            if (pin->requires_grad) {
                pin->ensure_grad();
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static) if (n * c > 1)
#endif
                for (std::int64_t ni = 0; ni < n; ++ni) {
                    for (std::int64_t ci = 0; ci < c; ++ci) {
                        for (std::int64_t iy = 0; iy < h; ++iy) {
                            for (std::int64_t ix = 0; ix < w; ++ix) {
                                T acc = T(0);
                                for (std::int64_t fi = 0; fi < f; ++fi) {
                                    for (std::int64_t i = 0; i < kh; ++i) {
                                        const std::int64_t ty = iy + p - i;
                                        if (ty < 0 || ty % s != 0) continue;
                                        const std::int64_t y = ty / s;
                                        if (y >= oh) continue;
                                        for (std::int64_t j = 0; j < kw; ++j) {
                                            const std::int64_t tx = ix + p - j;
                                            if (tx < 0 || tx % s != 0) continue;
                                            const std::int64_t x = tx / s;
                                            if (x >= ow) continue;
                                            acc += g[((ni * f + fi) * oh + y) * ow + x] *
                                                   pk->data[((fi * c + ci) * kh + i) * kw + j];
                                        }
                                    }
                                }
                                pin->grad[((ni * c + ci) * h + iy) * w + ix] += acc;
                            }
                        }
                    }
                }
            }
            if (pk->requires_grad) {
                pk->ensure_grad();
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static) if (f * c > 1)
#endif
                for (std::int64_t fi = 0; fi < f; ++fi) {
                    for (std::int64_t ci = 0; ci < c; ++ci) {
                        for (std::int64_t i = 0; i < kh; ++i) {
                            for (std::int64_t j = 0; j < kw; ++j) {
                                T acc = T(0);
                                for (std::int64_t ni = 0; ni < n; ++ni) {
                                    for (std::int64_t y = 0; y < oh; ++y) {
                                        const std::int64_t iy = y * s - p + i;
                                        if (iy < 0 || iy >= h) continue;
                                        for (std::int64_t x = 0; x < ow; ++x) {
                                            const std::int64_t ix = x * s - p + j;
                                            if (ix < 0 || ix >= w) continue;
                                            acc += g[((ni * f + fi) * oh + y) * ow + x] *
                                                   pin->data[((ni * c + ci) * h + iy) * w + ix];
                                        }
                                    }
                                }
                                pk->grad[((fi * c + ci) * kh + i) * kw + j] += acc;
                            }
                        }
                    }
                }
            }
        });
}

// input [N,C,H,W] * kernel [C,F,kh,kw] -> [N,F,H'',W'']. This is the adjoint
// of conv2d: for matched geometry, <conv2d(a,k), b> == <a, conv2d_transpose(b,k)>.
template <typename T>
Tensor<T> conv2d_transpose(const Tensor<T>& input, const Tensor<T>& kernel, int stride, int padding) {
    if (input.shape().size() != 4 || kernel.shape().size() != 4) {
        throw ShapeError("conv2d_transpose: expected rank-4 input and kernel");
    }
    if (stride < 1) throw ValueError("conv2d_transpose: stride must be >= 1, got " + std::to_string(stride));
    if (padding < 0) throw ValueError("conv2d_transpose: padding must be >= 0");
    const auto& is = input.shape();
    const auto& ks = kernel.shape();
    const std::int64_t n = is[0], c = is[1], h = is[2], w = is[3];
    const std::int64_t kc = ks[0], f = ks[1], kh = ks[2], kw = ks[3];
    if (kc != c) {
        throw ShapeError("conv2d_transpose: channel mismatch, input has " + std::to_string(c) +
                         " kernel expects " + std::to_string(kc));
    }
    const std::int64_t oh = conv_transpose_out_dim(h, kh, stride, padding);
    const std::int64_t ow = conv_transpose_out_dim(w, kw, stride, padding);
    if (oh < 1 || ow < 1) throw ShapeError("conv2d_transpose: output would be empty");
    std::vector<T> out(static_cast<std::size_t>(n * f * oh * ow));
    const auto& in = input.data();
    const auto& ker = kernel.data();
    const std::int64_t s = stride, p = padding;
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static) if (n * f > 1)
#endif
    for (std::int64_t ni = 0; ni < n; ++ni) {
        for (std::int64_t fi = 0; fi < f; ++fi) {
            for (std::int64_t y = 0; y < oh; ++y) {
                for (std::int64_t x = 0; x < ow; ++x) {
                    T acc = T(0);
                    for (std::int64_t ci = 0; ci < c; ++ci) {
                        for (std::int64_t i = 0; i < kh; ++i) {
                            const std::int64_t ty = y + p - i;
                            if (ty < 0 || ty % s != 0) continue;
                            const std::int64_t iy = ty / s;
                            if (iy >= h) continue;
                            for (std::int64_t j = 0; j < kw; ++j) {
                                const std::int64_t tx = x + p - j;
                                if (tx < 0 || tx % s != 0) continue;
                                const std::int64_t ix = tx / s;
                                if (ix >= w) continue;
                                acc += in[((ni * c + ci) * h + iy) * w + ix] *
                                       ker[((ci * f + fi) * kh + i) * kw + j];
                            }
                        }
                    }
                    out[((ni * f + fi) * oh + y) * ow + x] = acc;
                }
            }
        }
    }

    auto pin = input.node(), pk = kernel.node();
    return detail::make_result<T>(
        {n, f, oh, ow}, std::move(out), "conv2d_transpose", {pin, pk},
        [pin, pk, n, c, h, w, f, kh, kw, s, p, oh, ow](Node<T>& nd) {
            const auto& g = nd.grad;
            if (pin->requires_grad) {
                pin->ensure_grad();
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static) if (n * c > 1)
#endif
                for (std::int64_t ni = 0; ni < n; ++ni) {
                    for (std::int64_t ci = 0; ci < c; ++ci) {
                        for (std::int64_t iy = 0; iy < h; ++iy) {
                            for (std::int64_t ix = 0; ix < w; ++ix) {
                                T acc = T(0);
                                for (std::int64_t fi = 0; fi < f; ++fi) {
                                    for (std::int64_t i = 0; i < kh; ++i) {
                                        const std::int64_t y = iy * s - p + i;
                                        if (y < 0 || y >= oh) continue;
                                        for (std::int64_t j = 0; j < kw; ++j) {
                                            const std::int64_t x = ix * s - p + j;
                                            if (x < 0 || x >= ow) continue;
                                            acc += g[((ni * f + fi) * oh + y) * ow + x] *
                                                   pk->data[((ci * f + fi) * kh + i) * kw + j];
                                        }
                                    }
                                }
                                pin->grad[((ni * c + ci) * h + iy) * w + ix] += acc;
                            }
                        }
                    }
                }
            }
            if (pk->requires_grad) {
                pk->ensure_grad();
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static) if (c * f > 1)
#endif
                for (std::int64_t ci = 0; ci < c; ++ci) {
                    for (std::int64_t fi = 0; fi < f; ++fi) {
                        for (std::int64_t i = 0; i < kh; ++i) {
                            for (std::int64_t j = 0; j < kw; ++j) {
                                T acc = T(0);
                                for (std::int64_t ni = 0; ni < n; ++ni) {
                                    for (std::int64_t iy = 0; iy < h; ++iy) {
                                        const std::int64_t y = iy * s - p + i;
                                        if (y < 0 || y >= oh) continue;
                                        for (std::int64_t ix = 0; ix < w; ++ix) {
                                            const std::int64_t x = ix * s - p + j;
                                            if (x < 0 || x >= ow) continue;
                                            acc += pin->data[((ni * c + ci) * h + iy) * w + ix] *
                                                   g[((ni * f + fi) * oh + y) * ow + x];
                                        }
                                    }
                                }
                                pk->grad[((ci * f + fi) * kh + i) * kw + j] += acc;
                            }
                        }
                    }
                }
            }
        });
}

// Adds a per-channel bias [C] to an NCHW tensor.
template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& bias) {
    if (x.shape().size() != 4 || bias.shape().size() != 1 || bias.shape()[0] != x.shape()[1]) {
        throw ShapeError("add_channel_bias: bias shape " + shape_str(bias.shape()) +
                         " does not match channels of " + shape_str(x.shape()));
    }
    const std::int64_t n = x.shape()[0], c = x.shape()[1], hw = x.shape()[2] * x.shape()[3];
    std::vector<T> out(x.data());
    const auto& bd = bias.data();
    for (std::int64_t ni = 0; ni < n; ++ni) {
        for (std::int64_t ci = 0; ci < c; ++ci) {
            const T b = bd[static_cast<std::size_t>(ci)];
            T* row = out.data() + (ni * c + ci) * hw;
            for (std::int64_t i = 0; i < hw; ++i) row[i] += b;
        }
    }
    auto px = x.node(), pb = bias.node();
    return detail::make_result<T>(x.shape(), std::move(out), "add_channel_bias", {px, pb},
                                  [px, pb, n, c, hw](Node<T>& nd) {
                                      if (px->requires_grad) {
                                          px->ensure_grad();
                                          for (std::size_t i = 0; i < nd.grad.size(); ++i) px->grad[i] += nd.grad[i];
                                      }
                                      if (pb->requires_grad) {
                                          pb->ensure_grad();
                                          for (std::int64_t ci = 0; ci < c; ++ci) {
                                              T acc = T(0);
                                              for (std::int64_t ni = 0; ni < n; ++ni) {
                                                  const T* row = nd.grad.data() + (ni * c + ci) * hw;
                                                  for (std::int64_t i = 0; i < hw; ++i) acc += row[i];
                                              }
                                              pb->grad[static_cast<std::size_t>(ci)] += acc;
                                          }
                                      }
                                  });
}

}  // namespace ctnorm::nn
