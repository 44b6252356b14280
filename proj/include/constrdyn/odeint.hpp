#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace constrdyn {

enum class IntMethod { rk4, rk45 };

struct IntegratorConfig {
    IntMethod method = IntMethod::rk4;
    double dt = 0.1;       // rk4 step
    double rtol = 1e-9;    // rk45
    double atol = 1e-9;    // rk45
    long max_steps = 20'000'000;

    void validate() const {
        if (dt <= 0.0 || rtol <= 0.0 || atol <= 0.0) throw std::invalid_argument("integrator: dt/tolerances must be positive");
        if (max_steps <= 0) throw std::invalid_argument("integrator: max_steps must be positive");
    }
};

enum class IntStatus { ok, nonfinite, max_steps };

struct IntegrateResult {
    std::vector<std::vector<double>> states;  // one per completed grid time
    IntStatus status = IntStatus::ok;
    double failure_time = 0.0;

    bool ok() const { return status == IntStatus::ok; }
};

using RhsFn = std::function<std::vector<double>(const std::vector<double>&)>;

namespace detail {

inline bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline std::vector<double> rk4_step(const RhsFn& f, const std::vector<double>& y, double h) {
    const size_t n = y.size();
    std::vector<double> k1 = f(y);
    std::vector<double> tmp(n);
    for (size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
    std::vector<double> k2 = f(tmp);
    for (size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
    std::vector<double> k3 = f(tmp);
    for (size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * k3[i];
    std::vector<double> k4 = f(tmp);
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    return out;
}

inline IntegrateResult integrate_rk4(const RhsFn& f, std::vector<double> y, std::span<const double> grid,
                                     const IntegratorConfig& cfg) {
    IntegrateResult res;
    const double t0 = grid[0];
    res.states.push_back(y);

    size_t g = 1;
    long k = 0;
    double t_prev = t0;
    std::vector<double> y_prev = y;
    while (g < grid.size()) {
        if (k >= cfg.max_steps) {
            res.status = IntStatus::max_steps;
            res.failure_time = t_prev;
            return res;
        }
        y_prev = y;
        t_prev = t0 + double(k) * cfg.dt;
        y = rk4_step(f, y, cfg.dt);
        ++k;
        const double t_cur = t0 + double(k) * cfg.dt;
        if (!all_finite(y)) {
            res.status = IntStatus::nonfinite;
            res.failure_time = t_cur;
            return res;
        }
        // emit grid points inside (t_prev, t_cur] by linear interpolation
        while (g < grid.size() && grid[g] <= t_cur + 1e-12 * std::max(1.0, std::abs(t_cur))) {
            const double w = (grid[g] - t_prev) / cfg.dt;
            std::vector<double> s(y.size());
            for (size_t i = 0; i < s.size(); ++i) s[i] = y_prev[i] + w * (y[i] - y_prev[i]);
            res.states.push_back(std::move(s));
            ++g;
        }
    }
    return res;
}

// Dormand-Prince 5(4) with steps clamped to land exactly on grid times.
inline IntegrateResult integrate_rk45(const RhsFn& f, std::vector<double> y, std::span<const double> grid,
                                      const IntegratorConfig& cfg) {
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                            a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                            b6 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                            e6 = 22.0 / 525, e7 = -1.0 / 40;

    IntegrateResult res;
    res.states.push_back(y);
    const size_t n = y.size();
    double t = grid[0];
    double h = std::min(1e-2, grid.back() > t ? (grid.back() - t) / 100.0 : 1e-2);
    long steps = 0;
    std::vector<double> k1 = f(y), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), ynew(n);

    for (size_t g = 1; g < grid.size();) {
        const double t_target = grid[g];
        while (t < t_target - 1e-13 * std::max(1.0, std::abs(t_target))) {
            if (steps++ >= cfg.max_steps) {
                res.status = IntStatus::max_steps;
                res.failure_time = t;
                return res;
            }
            double hs = std::min(h, t_target - t);
            for (size_t i = 0; i < n; ++i) tmp[i] = y[i] + hs * a21 * k1[i];
            k2 = f(tmp);
            for (size_t i = 0; i < n; ++i) tmp[i] = y[i] + hs * (a31 * k1[i] + a32 * k2[i]);
            k3 = f(tmp);
            for (size_t i = 0; i < n; ++i) tmp[i] = y[i] + hs * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
            k4 = f(tmp);
            for (size_t i = 0; i < n; ++i)
                tmp[i] = y[i] + hs * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
            k5 = f(tmp);
            for (size_t i = 0; i < n; ++i)
                tmp[i] = y[i] + hs * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
            k6 = f(tmp);
            for (size_t i = 0; i < n; ++i)
                ynew[i] = y[i] + hs * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
            k7 = f(ynew);

            if (!all_finite(ynew)) {
                res.status = IntStatus::nonfinite;
                res.failure_time = t + hs;
                return res;
            }

            double err = 0.0;
            for (size_t i = 0; i < n; ++i) {
                const double ei = hs * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] +
                                        e7 * k7[i]);
                const double sc = cfg.atol + cfg.rtol * std::max(std::abs(y[i]), std::abs(ynew[i]));
                err += (ei / sc) * (ei / sc);
            }
            err = std::sqrt(err / double(n));

            if (err <= 1.0) {
                t += hs;
                y = ynew;
                k1 = k7;  // first-same-as-last
            }
            const double fac = err > 0.0 ? 0.9 * std::pow(err, -0.2) : 5.0;
            h = hs * std::min(5.0, std::max(0.2, fac));
            if (!(h > 0.0) || !std::isfinite(h)) {
                res.status = IntStatus::nonfinite;
                res.failure_time = t;
                return res;
            }
        }
        res.states.push_back(y);
        ++g;
    }
    return res;
}

}  // namespace detail

// States at each grid time, starting from s0 at grid[0]. RK4 marches with a
// fixed step and interpolates linearly onto off-step grid times; RK45 adapts
// and samples the grid densely by shortening steps to land on grid points.
inline IntegrateResult integrate(const RhsFn& f, const std::vector<double>& s0, std::span<const double> grid,
                                 const IntegratorConfig& cfg) {
    cfg.validate();
    if (grid.empty()) throw std::invalid_argument("integrate: empty time grid");
    for (size_t i = 1; i < grid.size(); ++i)
        if (grid[i] <= grid[i - 1]) throw std::invalid_argument("integrate: time grid must be increasing");
    if (!detail::all_finite(s0)) throw std::invalid_argument("integrate: non-finite initial state");
    return cfg.method == IntMethod::rk4 ? detail::integrate_rk4(f, s0, grid, cfg)
                                        : detail::integrate_rk45(f, s0, grid, cfg);
}

inline std::vector<double> linspace(double a, double b, size_t count) {
    std::vector<double> t(count);
    for (size_t i = 0; i < count; ++i) t[i] = count == 1 ? a : a + (b - a) * double(i) / double(count - 1);
    return t;
}

}  // namespace constrdyn
