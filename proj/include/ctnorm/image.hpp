#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "ctnorm/errors.hpp"

namespace ctnorm {

// Dense 2-D grid of doubles, row-major. Used for HU slices and filters.
struct Image {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Image() = default;
    Image(int r, int c, double fill = 0.0) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, fill) {}

    double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
    std::size_t size() const { return v.size(); }
};

// 2-D convolution with replicate borders; kernel must be odd-sized.
inline Image conv_same(const Image& img, const Image& kernel) {
    if (kernel.rows % 2 == 0 || kernel.cols % 2 == 0) {
        throw ValueError("conv_same: kernel dimensions must be odd");
    }
    const int hr = kernel.rows / 2;
    const int hc = kernel.cols / 2;
    Image out(img.rows, img.cols);
    for (int r = 0; r < img.rows; ++r) {
        for (int c = 0; c < img.cols; ++c) {
            double acc = 0.0;
            for (int i = 0; i < kernel.rows; ++i) {
                int sr = std::clamp(r + i - hr, 0, img.rows - 1);
                for (int j = 0; j < kernel.cols; ++j) {
                    int sc = std::clamp(c + j - hc, 0, img.cols - 1);
                    acc += kernel.at(i, j) * img.at(sr, sc);
                }
            }
            out.at(r, c) = acc;
        }
    }
    return out;
}

inline double total_variation(const Image& img) {
    double tv = 0.0;
    for (int r = 0; r < img.rows; ++r) {
        for (int c = 0; c < img.cols; ++c) {
            if (c + 1 < img.cols) tv += std::abs(img.at(r, c + 1) - img.at(r, c));
            if (r + 1 < img.rows) tv += std::abs(img.at(r + 1, c) - img.at(r, c));
        }
    }
    return tv;
}

inline std::pair<double, double> min_max(const Image& img) {
    if (img.v.empty()) throw ValueError("min_max: empty image");
    auto [lo, hi] = std::minmax_element(img.v.begin(), img.v.end());
    return {*lo, *hi};
}

// Bilinear resize with corner alignment: the four corner samples map exactly.
template <typename T>
std::vector<T> resize_bilinear(const std::vector<T>& src, int src_rows, int src_cols,
                               int dst_rows, int dst_cols) {
    std::vector<T> dst(static_cast<std::size_t>(dst_rows) * dst_cols);
    const double sr = dst_rows > 1 ? static_cast<double>(src_rows - 1) / (dst_rows - 1) : 0.0;
    const double sc = dst_cols > 1 ? static_cast<double>(src_cols - 1) / (dst_cols - 1) : 0.0;
    for (int r = 0; r < dst_rows; ++r) {
        const double fr = r * sr;
        const int r0 = static_cast<int>(fr);
        const int r1 = std::min(r0 + 1, src_rows - 1);
        const double wr = fr - r0;
        for (int c = 0; c < dst_cols; ++c) {
            const double fc = c * sc;
            const int c0 = static_cast<int>(fc);
            const int c1 = std::min(c0 + 1, src_cols - 1);
            const double wc = fc - c0;
            const double a = static_cast<double>(src[static_cast<std::size_t>(r0) * src_cols + c0]);
            const double b = static_cast<double>(src[static_cast<std::size_t>(r0) * src_cols + c1]);
            const double d = static_cast<double>(src[static_cast<std::size_t>(r1) * src_cols + c0]);
            const double e = static_cast<double>(src[static_cast<std::size_t>(r1) * src_cols + c1]);
            const double top = a + (b - a) * wc;
            const double bot = d + (e - d) * wc;
            dst[static_cast<std::size_t>(r) * dst_cols + c] = static_cast<T>(top + (bot - top) * wr);
        }
    }
    return dst;
}

}  // namespace ctnorm
