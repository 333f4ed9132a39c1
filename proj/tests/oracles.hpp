#pragma once

// Reference implementations used as independent oracles. These deliberately
// avoid the library's tape kernels: plain scalar loops, extended precision
// where it matters, and the textbook four-point interpolation formula.

#include <cmath>
#include <vector>

#include "dla/tensor.hpp"

namespace oracles {

using dla::numeric::Tensor;

// c[i][j] = sum_k a[i][k] b[k][j], dot-product loop order
inline Tensor matmul_ref(const Tensor& a, const Tensor& b) {
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor c({m, n});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
            c.at(i, j) = acc;
        }
    }
    return c;
}

inline std::vector<double> softmax_ref_ld(const std::vector<double>& x) {
    long double mx = x[0];
    for (double v : x) mx = std::max<long double>(mx, v);
    long double sum = 0.0L;
    std::vector<long double> e(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        e[i] = std::exp(static_cast<long double>(x[i]) - mx);
        sum += e[i];
    }
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<double>(e[i] / sum);
    return out;
}

inline std::vector<double> layer_norm_ref(const std::vector<double>& x,
                                          const std::vector<double>& gain,
                                          const std::vector<double>& bias, double eps) {
    const std::size_t n = x.size();
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = (x[i] - mean) / std::sqrt(var + eps) * gain[i] + bias[i];
    return out;
}

// four surrounding grid points, clamped coordinates
inline std::vector<double> bilinear_ref(const Tensor& map, double r, double c) {
    const int h = map.dim(0), w = map.dim(1), ch = map.dim(2);
    r = std::min(std::max(r, 0.0), static_cast<double>(h - 1));
    c = std::min(std::max(c, 0.0), static_cast<double>(w - 1));
    const int r0 = std::min(static_cast<int>(std::floor(r)), std::max(h - 2, 0));
    const int c0 = std::min(static_cast<int>(std::floor(c)), std::max(w - 2, 0));
    const int r1 = std::min(r0 + 1, h - 1), c1 = std::min(c0 + 1, w - 1);
    const double fr = r - r0, fc = c - c0;
    std::vector<double> out(ch);
    for (int k = 0; k < ch; ++k) {
        out[k] = (1 - fr) * (1 - fc) * map.at(r0, c0, k) + (1 - fr) * fc * map.at(r0, c1, k) +
                 fr * (1 - fc) * map.at(r1, c0, k) + fr * fc * map.at(r1, c1, k);
    }
    return out;
}

inline double rel_err(const std::vector<double>& got, const std::vector<double>& want) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        num += (got[i] - want[i]) * (got[i] - want[i]);
        den += want[i] * want[i];
    }
    num = std::sqrt(num);
    den = std::sqrt(den);
    if (den < 1e-12 && num < 1e-12) return 0.0;
    return num / std::max(den, 1e-12);
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

}  // namespace oracles
