#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "lumen/image.hpp"

namespace lumen {

namespace metrics_detail {
inline void require_same_shape(int wa, int ha, int wb, int hb) {
    if (wa != wb || ha != hb) throw std::invalid_argument("metrics: image shapes differ");
}
} // namespace metrics_detail

inline double mse(const ImageRgb& a, const ImageRgb& b) {
    metrics_detail::require_same_shape(a.width, a.height, b.width, b.height);
    double sum = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        double d = static_cast<double>(a.data[i]) - b.data[i];
        sum += d * d;
    }
    return sum / static_cast<double>(a.data.size());
}

inline double rmse(const ImageRgb& a, const ImageRgb& b) { return std::sqrt(mse(a, b)); }

inline double rmse(const ImageGray& a, const ImageGray& b) {
    metrics_detail::require_same_shape(a.width, a.height, b.width, b.height);
    double sum = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        double d = static_cast<double>(a.data[i]) - b.data[i];
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(a.data.size()));
}

// 10 log10(peak^2 / MSE); identical images report +infinity.
inline double psnr(const ImageRgb& a, const ImageRgb& b, double peak) {
    if (!(peak > 0.0)) throw std::invalid_argument("psnr: peak must be > 0");
    double m = mse(a, b);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / m);
}

// Standard SSIM: 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
// computed per channel over the valid interior and averaged. Images smaller
// than the window fall back to global statistics.
inline double ssim(const ImageRgb& a, const ImageRgb& b, double peak = 1.0) {
    metrics_detail::require_same_shape(a.width, a.height, b.width, b.height);
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);

    if (a.width < 11 || a.height < 11) {
        double score = 0.0;
        for (int c = 0; c < 3; ++c) {
            double ma = 0, mb = 0, va = 0, vb = 0, cov = 0;
            std::size_t n = a.pixel_count();
            for (int y = 0; y < a.height; ++y)
                for (int x = 0; x < a.width; ++x) {
                    ma += a.at(x, y, c);
                    mb += b.at(x, y, c);
                }
            ma /= n;
            mb /= n;
            for (int y = 0; y < a.height; ++y)
                for (int x = 0; x < a.width; ++x) {
                    double da = a.at(x, y, c) - ma, db = b.at(x, y, c) - mb;
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            va /= n;
            vb /= n;
            cov /= n;
            score += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                     ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        return score / 3.0;
    }

    // 11-tap Gaussian, sigma 1.5, normalized.
    double kernel[11];
    double ksum = 0.0;
    for (int i = 0; i < 11; ++i) {
        double x = i - 5;
        kernel[i] = std::exp(-x * x / (2.0 * 1.5 * 1.5));
        ksum += kernel[i];
    }
    for (double& k : kernel) k /= ksum;

    const int w = a.width, h = a.height;
    double score = 0.0;
    std::vector<double> rowbuf[5]; // per-channel separable passes
    for (auto& rb : rowbuf) rb.resize(static_cast<std::size_t>(w) * h);
    for (int c = 0; c < 3; ++c) {
        // Horizontal pass of the five filtered fields: a, b, a^2, b^2, ab.
        for (int y = 0; y < h; ++y)
            for (int x = 5; x < w - 5; ++x) {
                double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
                for (int k = -5; k <= 5; ++k) {
                    double pa = a.at(x + k, y, c), pb = b.at(x + k, y, c);
                    double kw = kernel[k + 5];
                    sa += kw * pa;
                    sb += kw * pb;
                    saa += kw * pa * pa;
                    sbb += kw * pb * pb;
                    sab += kw * pa * pb;
                }
                std::size_t idx = static_cast<std::size_t>(y) * w + x;
                rowbuf[0][idx] = sa;
                rowbuf[1][idx] = sb;
                rowbuf[2][idx] = saa;
                rowbuf[3][idx] = sbb;
                rowbuf[4][idx] = sab;
            }
        double sum = 0.0;
        std::size_t count = 0;
        for (int y = 5; y < h - 5; ++y)
            for (int x = 5; x < w - 5; ++x) {
                double f[5] = {0, 0, 0, 0, 0};
                for (int k = -5; k <= 5; ++k) {
                    std::size_t idx = static_cast<std::size_t>(y + k) * w + x;
                    double kw = kernel[k + 5];
                    for (int j = 0; j < 5; ++j) f[j] += kw * rowbuf[j][idx];
                }
                double ma = f[0], mb = f[1];
                double va = f[2] - ma * ma, vb = f[3] - mb * mb;
                double cov = f[4] - ma * mb;
                sum += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                       ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++count;
            }
        score += sum / static_cast<double>(count);
    }
    return score / 3.0;
}

} // namespace lumen
