#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "constrdyn/rng.hpp"

namespace testutil {

// central finite differences, the independent oracle for gradient checks
inline std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double h = 1e-5) {
    std::vector<double> g(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        const double xi = x[i];
        x[i] = xi + h;
        const double fp = f(x);
        x[i] = xi - h;
        const double fm = f(x);
        x[i] = xi;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

inline double rel_err(double got, double want) {
    const double scale = std::max({std::abs(got), std::abs(want), 1e-12});
    return std::abs(got - want) / scale;
}

inline std::vector<double> random_vector(constrdyn::Rng& rng, size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

inline std::vector<double> random_matrix(constrdyn::Rng& rng, size_t n, double lo = -1.0, double hi = 1.0) {
    return random_vector(rng, n * n, lo, hi);
}

// M^T M + eps I, symmetric positive definite by construction
inline std::vector<double> random_spd(constrdyn::Rng& rng, size_t n, double eps = 0.1) {
    std::vector<double> m = random_matrix(rng, n);
    std::vector<double> spd(n * n, 0.0);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (size_t k = 0; k < n; ++k) acc += m[k * n + i] * m[k * n + j];
            spd[i * n + j] = acc + (i == j ? eps : 0.0);
        }
    return spd;
}

}  // namespace testutil
