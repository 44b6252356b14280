#pragma once

// Ground-truth benchmark systems: right-hand sides, energies, initial-state
// samplers, and dataset generation.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "constrdyn/odeint.hpp"
#include "constrdyn/rng.hpp"

namespace constrdyn {

enum class Task { mass_spring, single_pendulum, double_pendulum, damped_pendulum_xy };

inline std::string to_string(Task t) {
    switch (t) {
        case Task::mass_spring: return "mass_spring";
        case Task::single_pendulum: return "single_pendulum";
        case Task::double_pendulum: return "double_pendulum";
        case Task::damped_pendulum_xy: return "damped_pendulum_xy";
    }
    return "?";
}

inline Task task_from_string(const std::string& s) {
    if (s == "mass_spring") return Task::mass_spring;
    if (s == "single_pendulum") return Task::single_pendulum;
    if (s == "double_pendulum") return Task::double_pendulum;
    if (s == "damped_pendulum_xy") return Task::damped_pendulum_xy;
    throw std::invalid_argument("unknown task: " + s);
}

// unit mass and spring constant
inline std::vector<double> rhs_mass_spring(std::span<const double> s) {
    return {s[1], -s[0]};
}

// g = 3, l = 1
inline std::vector<double> rhs_single_pendulum(std::span<const double> s) {
    return {s[1], -3.0 * std::sin(s[0])};
}

// equal unit masses and rod lengths, g = 1; accelerations from the
// Euler-Lagrange equations (denominator 3 - cos(2(t1 - t2)) never vanishes)
inline std::vector<double> rhs_double_pendulum(std::span<const double> s) {
    const double t1 = s[0], t2 = s[1], w1 = s[2], w2 = s[3];
    const double d = t1 - t2;
    const double den = 3.0 - std::cos(2.0 * d);
    const double acc1 =
        (-3.0 * std::sin(t1) - std::sin(t1 - 2.0 * t2) - 2.0 * std::sin(d) * (w2 * w2 + w1 * w1 * std::cos(d))) /
        den;
    const double acc2 = (2.0 * std::sin(d) * (2.0 * w1 * w1 + 2.0 * std::cos(t1) + w2 * w2 * std::cos(d))) / den;
    return {w1, w2, acc1, acc2};
}

// damped pendulum observed through redundant coordinates x = sin t, y = -cos t
// (m = l = g = 1, alpha = 0.05)
inline constexpr double kPendulumDamping = 0.05;

inline std::vector<double> rhs_damped_pendulum_xy(std::span<const double> s) {
    const double x = s[0], y = s[1], vx = s[2], vy = s[3];
    const double r = std::sqrt(x * x + y * y);
    if (r < 1e-12) throw std::domain_error("damped pendulum: state at the pivot");
    const double sin_t = x / r, cos_t = -y / r;
    const double omega = (cos_t * vx + sin_t * vy) / r;
    const double acc = -sin_t - kPendulumDamping * omega;
    return {cos_t * omega, sin_t * omega, -sin_t * omega * omega + cos_t * acc,
            cos_t * omega * omega + sin_t * acc};
}

// angular-space form used for exact-on-manifold trajectory generation
inline std::vector<double> rhs_damped_pendulum_angular(std::span<const double> s) {
    return {s[1], -std::sin(s[0]) - kPendulumDamping * s[1]};
}

inline std::vector<double> damped_pendulum_angular_to_xy(std::span<const double> tw) {
    const double t = tw[0], w = tw[1];
    return {std::sin(t), -std::cos(t), std::cos(t) * w, std::sin(t) * w};
}

inline std::vector<double> damped_pendulum_xy_to_angular(std::span<const double> s) {
    const double x = s[0], y = s[1], vx = s[2], vy = s[3];
    const double r = std::sqrt(x * x + y * y);
    const double sin_t = x / r, cos_t = -y / r;
    return {std::atan2(x, -y), (cos_t * vx + sin_t * vy) / r};
}

struct SystemDef {
    Task name;
    uint32_t state_dim;
    std::vector<double> (*rhs)(std::span<const double>);
    double (*energy)(std::span<const double>);
};

inline double energy_mass_spring(std::span<const double> s) { return 0.5 * s[0] * s[0] + 0.5 * s[1] * s[1]; }

inline double energy_single_pendulum(std::span<const double> s) {
    return 0.5 * s[1] * s[1] + 3.0 * (1.0 - std::cos(s[0]));
}

// shifted so the rest state has zero energy
inline double energy_double_pendulum(std::span<const double> s) {
    const double t1 = s[0], t2 = s[1], w1 = s[2], w2 = s[3];
    return w1 * w1 + 0.5 * w2 * w2 + w1 * w2 * std::cos(t1 - t2) - 2.0 * std::cos(t1) - std::cos(t2) + 3.0;
}

inline double energy_damped_pendulum_xy(std::span<const double> s) {
    const std::vector<double> tw = damped_pendulum_xy_to_angular(s);
    return 0.5 * tw[1] * tw[1] + (1.0 - std::cos(tw[0]));
}

inline const SystemDef& system(Task t) {
    static const SystemDef defs[] = {
        {Task::mass_spring, 2, &rhs_mass_spring, &energy_mass_spring},
        {Task::single_pendulum, 2, &rhs_single_pendulum, &energy_single_pendulum},
        {Task::double_pendulum, 4, &rhs_double_pendulum, &energy_double_pendulum},
        {Task::damped_pendulum_xy, 4, &rhs_damped_pendulum_xy, &energy_damped_pendulum_xy},
    };
    return defs[size_t(t)];
}

inline double energy(Task t, std::span<const double> s) { return system(t).energy(s); }

// --- dataset generation -------------------------------------------------------

enum class Sampler { normal, uniform };

inline Sampler sampler_from_string(const std::string& s) {
    if (s == "normal") return Sampler::normal;
    if (s == "uniform") return Sampler::uniform;
    throw std::invalid_argument("unknown sampler: " + s);
}

inline std::string to_string(Sampler s) { return s == Sampler::normal ? "normal" : "uniform"; }

struct DataProtocol {
    uint32_t n_traj = 250;
    uint32_t n_samples = 30;
    double t_begin = 0.0;
    double t_end = 2.0 * 3.141592653589793238462643383279502884;
};

struct Trajectory {
    uint64_t seed = 0;
    std::vector<double> times;
    std::vector<std::vector<double>> states;  // stored (possibly noisy) states
    std::vector<std::vector<double>> derivs;  // true field at the clean states
};

struct Dataset {
    Task task = Task::mass_spring;
    double noise_sigma = 0.0;
    DataProtocol protocol;
    std::vector<Trajectory> trajectories;
};

inline DataProtocol default_protocol(Task t) {
    DataProtocol p;
    if (t == Task::double_pendulum) {
        p.n_traj = 2000;
        p.n_samples = 300;
    }
    return p;
}

inline double default_noise_sigma(Task t) { return t == Task::double_pendulum ? 0.0 : 0.1; }

// initial state in the coordinates the system is observed in; the damped
// pendulum draws angle and angular velocity and maps onto the circle
inline std::vector<double> sample_initial_state(Task task, Sampler sampler, Rng& rng) {
    const uint32_t dim = task == Task::damped_pendulum_xy ? 2 : system(task).state_dim;
    std::vector<double> s(dim);
    for (double& x : s) x = sampler == Sampler::normal ? rng.normal() : rng.uniform(-0.5, 0.5);
    if (task == Task::damped_pendulum_xy) return damped_pendulum_angular_to_xy(s);
    return s;
}

// High-accuracy reference trajectory on the given grid. The damped pendulum is
// integrated in angular coordinates and mapped, so the generated states sit on
// the unit-circle manifold to machine precision.
inline std::vector<std::vector<double>> reference_trajectory(Task task, const std::vector<double>& s0,
                                                             std::span<const double> grid) {
    IntegratorConfig cfg;
    cfg.method = IntMethod::rk45;
    if (task == Task::damped_pendulum_xy) {
        IntegrateResult r = integrate([](const std::vector<double>& s) { return rhs_damped_pendulum_angular(s); },
                                      damped_pendulum_xy_to_angular(s0), grid, cfg);
        if (!r.ok()) throw std::runtime_error("reference trajectory: integrator failure");
        std::vector<std::vector<double>> out(r.states.size());
        for (size_t i = 0; i < r.states.size(); ++i) out[i] = damped_pendulum_angular_to_xy(r.states[i]);
        return out;
    }
    const SystemDef& def = system(task);
    IntegrateResult r = integrate([&def](const std::vector<double>& s) { return def.rhs(s); }, s0, grid, cfg);
    if (!r.ok()) throw std::runtime_error("reference trajectory: integrator failure");
    return r.states;
}

inline Trajectory generate_trajectory(Task task, const DataProtocol& protocol, double noise_sigma,
                                      uint64_t traj_seed, Sampler sampler) {
    Trajectory traj;
    traj.seed = traj_seed;
    traj.times = linspace(protocol.t_begin, protocol.t_end, protocol.n_samples);

    Rng rng(traj_seed);
    const std::vector<double> s0 = sample_initial_state(task, sampler, rng);
    std::vector<std::vector<double>> clean = reference_trajectory(task, s0, traj.times);

    const SystemDef& def = system(task);
    traj.states.resize(clean.size());
    traj.derivs.resize(clean.size());
    for (size_t i = 0; i < clean.size(); ++i) {
        traj.derivs[i] = def.rhs(clean[i]);
        traj.states[i] = std::move(clean[i]);
        if (noise_sigma > 0.0)
            for (double& x : traj.states[i]) x += noise_sigma * rng.normal();
    }
    return traj;
}

inline Dataset generate_dataset(Task task, const DataProtocol& protocol, double noise_sigma, uint64_t seed,
                                Sampler sampler = Sampler::normal, uint32_t jobs = 1) {
    if (protocol.n_traj == 0 || protocol.n_samples < 2) throw std::invalid_argument("generate: bad protocol");
    Dataset ds;
    ds.task = task;
    ds.noise_sigma = noise_sigma;
    ds.protocol = protocol;
    ds.trajectories.resize(protocol.n_traj);

    auto work = [&](uint32_t lo, uint32_t hi) {
        for (uint32_t i = lo; i < hi; ++i)
            ds.trajectories[i] = generate_trajectory(task, protocol, noise_sigma, split_seed(seed, i), sampler);
    };
    if (jobs <= 1) {
        work(0, protocol.n_traj);
    } else {
        const uint32_t workers = std::min(jobs, protocol.n_traj);
        std::vector<std::thread> pool;
        for (uint32_t w = 0; w < workers; ++w) {
            const uint32_t lo = protocol.n_traj * w / workers;
            const uint32_t hi = protocol.n_traj * (w + 1) / workers;
            pool.emplace_back(work, lo, hi);
        }
        for (auto& t : pool) t.join();
    }
    return ds;
}

}  // namespace constrdyn
