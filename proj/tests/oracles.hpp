#pragma once

// Independent reference computations used as test oracles. These deliberately
// avoid the library's own kernels: plain summation straight from the
// definitions, kept separate from the implementation under test.

#include <cstdint>
#include <vector>

namespace oracles {

// Direct-summation convolution oracle: out[n,f,y,x] = sum in*k over the window.
inline std::vector<double> conv2d_ref(const std::vector<double>& in, int n, int c, int h, int w,
                                      const std::vector<double>& k, int f, int kh, int kw, int stride,
                                      int pad, int& oh, int& ow) {
    oh = (h + 2 * pad - kh) / stride + 1;
    ow = (w + 2 * pad - kw) / stride + 1;
    std::vector<double> out(static_cast<std::size_t>(n) * f * oh * ow, 0.0);
    for (int ni = 0; ni < n; ++ni)
        for (int fi = 0; fi < f; ++fi)
            for (int y = 0; y < oh; ++y)
                for (int x = 0; x < ow; ++x) {
                    double acc = 0.0;
                    for (int ci = 0; ci < c; ++ci)
                        for (int i = 0; i < kh; ++i)
                            for (int j = 0; j < kw; ++j) {
                                const int iy = y * stride - pad + i;
                                const int ix = x * stride - pad + j;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                                acc += in[((static_cast<std::size_t>(ni) * c + ci) * h + iy) * w + ix] *
                                       k[((static_cast<std::size_t>(fi) * c + ci) * kh + i) * kw + j];
                            }
                    out[((static_cast<std::size_t>(ni) * f + fi) * oh + y) * ow + x] = acc;
                }
    return out;
}

// Scatter-add transposed-convolution oracle: each input element distributes
// its value times the kernel into the output at stride offsets.
inline std::vector<double> conv2d_transpose_ref(const std::vector<double>& in, int n, int c, int h, int w,
                                                const std::vector<double>& k, int f, int kh, int kw,
                                                int stride, int pad, int& oh, int& ow) {
    oh = (h - 1) * stride - 2 * pad + kh;
    ow = (w - 1) * stride - 2 * pad + kw;
    std::vector<double> out(static_cast<std::size_t>(n) * f * oh * ow, 0.0);
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci)
            for (int iy = 0; iy < h; ++iy)
                for (int ix = 0; ix < w; ++ix) {
                    const double v = in[((static_cast<std::size_t>(ni) * c + ci) * h + iy) * w + ix];
                    for (int fi = 0; fi < f; ++fi)
                        for (int i = 0; i < kh; ++i)
                            for (int j = 0; j < kw; ++j) {
                                const int y = iy * stride - pad + i;
                                const int x = ix * stride - pad + j;
                                if (y < 0 || y >= oh || x < 0 || x >= ow) continue;
                                out[((static_cast<std::size_t>(ni) * f + fi) * oh + y) * ow + x] +=
                                    v * k[((static_cast<std::size_t>(ci) * f + fi) * kh + i) * kw + j];
                            }
                }
    return out;
}

inline double inner(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

}  // namespace oracles
