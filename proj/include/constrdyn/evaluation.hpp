#pragma once

// Rollout evaluation: per-trajectory RMSE of the energy deviation against
// ground truth over a long horizon, aggregated as median and tail percentiles
// over fresh test initial conditions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "constrdyn/odeint.hpp"
#include "constrdyn/physics.hpp"
#include "constrdyn/rng.hpp"

namespace constrdyn {

constexpr double kOverflowRmse = std::numeric_limits<double>::infinity();

struct EvalReport {
    std::string task;
    std::string model_label;
    uint32_t n_test = 0;
    std::vector<double> per_trajectory_rmse;  // infinity marks numerical overflow
    double median = 0.0, p2_5 = 0.0, p97_5 = 0.0;
    uint32_t overflow_count = 0;
};

// Linear interpolation between order statistics; infinities sort last.
inline double percentile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw std::invalid_argument("percentile: empty array");
    if (sorted.size() == 1) return sorted[0];
    const double rank = p / 100.0 * double(sorted.size() - 1);
    const size_t lo = size_t(std::floor(rank));
    const double frac = rank - double(lo);
    if (frac == 0.0) return sorted[lo];
    if (sorted[lo] == sorted[lo + 1]) return sorted[lo];
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

struct EnergySeries {
    std::vector<double> t, model_energy, true_energy;
};

// Rolls the model and the reference from the same initial state; ground-truth
// energy is the conserved E(s0) for the conservative tasks and the reference
// trajectory's energy for the damped task. Returns infinity on overflow.
inline double energy_deviation_rmse(const RhsFn& model_rhs, Task task, const std::vector<double>& s0,
                                    double t_end = 100.0, double dt = 0.1, EnergySeries* series = nullptr) {
    const std::vector<double> grid = linspace(0.0, t_end, size_t(std::llround(t_end / dt)) + 1);
    IntegratorConfig cfg;
    cfg.method = IntMethod::rk4;
    cfg.dt = dt;
    IntegrateResult rollout = integrate(model_rhs, s0, grid, cfg);

    std::vector<double> true_energy(grid.size());
    if (task == Task::damped_pendulum_xy) {
        const auto ref = reference_trajectory(task, s0, grid);
        for (size_t i = 0; i < grid.size(); ++i) true_energy[i] = energy(task, ref[i]);
    } else {
        const double e0 = energy(task, s0);
        std::fill(true_energy.begin(), true_energy.end(), e0);
    }

    if (series) {
        series->t.assign(grid.begin(), grid.begin() + rollout.states.size());
        series->true_energy.assign(true_energy.begin(), true_energy.begin() + rollout.states.size());
        series->model_energy.resize(rollout.states.size());
        for (size_t i = 0; i < rollout.states.size(); ++i)
            series->model_energy[i] = energy(task, rollout.states[i]);
    }

    if (!rollout.ok()) return kOverflowRmse;

    double acc = 0.0;
    for (size_t i = 0; i < grid.size(); ++i) {
        const double d = energy(task, rollout.states[i]) - true_energy[i];
        if (!std::isfinite(d)) return kOverflowRmse;
        acc += d * d;
    }
    return std::sqrt(acc / double(grid.size()));
}

struct EvalOptions {
    uint32_t n_test = 100;
    double t_end = 100.0;
    double dt = 0.1;
    uint64_t seed = 0;
    Sampler sampler = Sampler::normal;
    uint32_t jobs = 1;
};

// Fresh initial conditions are drawn from the task's training distribution;
// trajectory i uses the stream split_seed(seed, i), so results are identical
// for any worker count.
inline EvalReport aggregate(const std::function<RhsFn()>& make_rhs, Task task, const EvalOptions& opt,
                            std::vector<EnergySeries>* series = nullptr) {
    if (opt.n_test < 1) throw std::invalid_argument("aggregate: n_test must be at least 1");
    EvalReport report;
    report.task = to_string(task);
    report.n_test = opt.n_test;
    report.per_trajectory_rmse.assign(opt.n_test, 0.0);
    if (series) series->assign(opt.n_test, {});

    auto work = [&](uint32_t lo, uint32_t hi) {
        RhsFn rhs = make_rhs();
        for (uint32_t i = lo; i < hi; ++i) {
            Rng rng(split_seed(opt.seed, i));
            const std::vector<double> s0 = sample_initial_state(task, opt.sampler, rng);
            report.per_trajectory_rmse[i] = energy_deviation_rmse(rhs, task, s0, opt.t_end, opt.dt,
                                                                  series ? &(*series)[i] : nullptr);
        }
    };
    if (opt.jobs <= 1) {
        work(0, opt.n_test);
    } else {
        const uint32_t workers = std::min(opt.jobs, opt.n_test);
        std::vector<std::thread> pool;
        for (uint32_t w = 0; w < workers; ++w)
            pool.emplace_back(work, opt.n_test * w / workers, opt.n_test * (w + 1) / workers);
        for (auto& t : pool) t.join();
    }

    std::vector<double> sorted = report.per_trajectory_rmse;
    std::sort(sorted.begin(), sorted.end());
    report.median = percentile_sorted(sorted, 50.0);
    report.p2_5 = percentile_sorted(sorted, 2.5);
    report.p97_5 = percentile_sorted(sorted, 97.5);
    report.overflow_count = uint32_t(std::count(sorted.begin(), sorted.end(), kOverflowRmse));
    return report;
}

}  // namespace constrdyn
