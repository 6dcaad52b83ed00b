// Test-only oracles, independent of the library's analytic paths.
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "normstab/tensor.hpp"

namespace oracle {

// Central finite differences of a scalar function over a flat parameter
// vector accessed through get/set callbacks.
inline std::vector<double> central_diff(
    const std::function<double()>& f,
    const std::function<double(std::size_t)>& get,
    const std::function<void(std::size_t, double)>& set, std::size_t count,
    double eps = 1e-5) {
    std::vector<double> g(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double v = get(i);
        set(i, v + eps);
        const double fp = f();
        set(i, v - eps);
        const double fm = f();
        set(i, v);
        g[i] = (fp - fm) / (2.0 * eps);
    }
    return g;
}

// max relative error with an absolute floor, the usual gradient-check metric
inline double max_rel_err(const std::vector<double>& a,
                          const std::vector<double>& b, double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom =
            std::max({std::fabs(a[i]), std::fabs(b[i]), floor});
        worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
    }
    return worst;
}

// naive triple-loop product, kept deliberately dumb
inline normstab::Tensor matmul_naive(const normstab::Tensor& a,
                                     const normstab::Tensor& b) {
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    normstab::Tensor c({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
            c.at(i, j) = acc;
        }
    return c;
}

} // namespace oracle
