#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "constrdyn/autodiff.hpp"
#include "constrdyn/constraints.hpp"
#include "constrdyn/models.hpp"
#include "constrdyn/physics.hpp"

namespace constrdyn {

struct NonFiniteLossError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    Task task = Task::mass_spring;
    ModelKind model_kind = ModelKind::node;
    ConstraintSpec constraint;
    double lr = 1e-4;
    int64_t epochs = 1000;
    uint32_t batch_size = 32;
    uint64_t seed = 0;
    int64_t checkpoint_every = 0;  // 0 disables periodic checkpoints
    uint32_t jobs = 1;
    std::optional<MlpConfig> mlp;
    std::optional<CouplingConfig> coupling;

    void validate() const {
        if (lr <= 0.0) throw std::invalid_argument("train: lr must be positive");
        if (epochs < 0) throw std::invalid_argument("train: epochs must be nonnegative");
        if (batch_size == 0) throw std::invalid_argument("train: batch_size must be positive");
        constraint.validate(system(task).state_dim);
    }
};

struct AdamState {
    std::vector<double> m, v;
    int64_t step = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    explicit AdamState(size_t n) : m(n, 0.0), v(n, 0.0) {}
};

// bias-corrected Adam update, in place
inline void adam_step(std::span<double> params, std::span<const double> grad, AdamState& st, double lr) {
    if (params.size() != grad.size() || params.size() != st.m.size())
        throw std::invalid_argument("adam: array length mismatch");
    st.step += 1;
    const double b1c = 1.0 - std::pow(st.beta1, double(st.step));
    const double b2c = 1.0 - std::pow(st.beta2, double(st.step));
    for (size_t i = 0; i < params.size(); ++i) {
        st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grad[i];
        st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grad[i] * grad[i];
        params[i] -= lr * (st.m[i] / b1c) / (std::sqrt(st.v[i] / b2c) + st.eps);
    }
}

struct SampleView {
    const double* s;
    const double* sdot;
};

inline std::vector<SampleView> flatten_samples(const Dataset& data) {
    std::vector<SampleView> out;
    for (const Trajectory& t : data.trajectories)
        for (size_t i = 0; i < t.states.size(); ++i) out.push_back({t.states[i].data(), t.derivs[i].data()});
    return out;
}

struct LossBreakdown {
    double total = 0.0, mse = 0.0, penalty = 0.0;
};

// Mean over the batch of per-sample squared-error sums plus the weighted
// constraint. Each sample is recorded after the parameter-binding mark and
// reverse-accumulated straight into the gradient buffer in batch order, so a
// sample's tape segment is rewound before the next one is recorded.
inline LossBreakdown batch_loss(ad::Tape& tape, const ModelOnTape& bound, size_t n_params, uint32_t dim,
                                std::span<const SampleView> batch, const ConstraintSpec& spec,
                                std::vector<double>* grad_accum) {
    using namespace ad;
    if (batch.empty()) throw std::invalid_argument("loss: empty batch");
    LossBreakdown sums;
    if (grad_accum) grad_accum->assign(n_params, 0.0);
    const auto mark = tape.mark();
    for (const SampleView& sample : batch) {
        Var in = tape.constant(std::span<const double>(sample.s, dim));
        PenaltyAndPrediction pp = constraint_penalty(tape, bound, spec, in);
        Var target = tape.constant(std::span<const double>(sample.sdot, dim));
        Var mse_i = sum(square(sub(pp.prediction, target)));
        Var loss_i = add(mse_i, scale(pp.penalty, spec.weight));

        const double li = tape.value_scalar(loss_i);
        if (!std::isfinite(li)) {
            tape.rewind(mark);
            throw NonFiniteLossError("loss: non-finite value while evaluating a batch");
        }
        sums.total += li;
        sums.mse += tape.value_scalar(mse_i);
        sums.penalty += tape.value_scalar(pp.penalty);

        if (grad_accum) tape.backward_into(loss_i, mark.vals, *grad_accum);
        tape.rewind(mark);
    }
    const double inv = 1.0 / double(batch.size());
    sums.total *= inv;
    sums.mse *= inv;
    sums.penalty *= inv;
    if (grad_accum) {
        ad::Tape::throw_on_nan(*grad_accum);
        for (double& g : *grad_accum) g *= inv;
    }
    return sums;
}

namespace detail {

// Worker pool over batch slices, each with a private tape; per-sample loss
// values land in index-order slots and per-worker gradient buffers are reduced
// in worker order, so a given jobs setting is fully deterministic.
inline LossBreakdown batch_loss_parallel(const DynamicsModel& model, uint32_t dim,
                                         std::span<const SampleView> batch, const ConstraintSpec& spec,
                                         std::vector<double>* grad_accum, uint32_t jobs) {
    const size_t n_params = model.parameters.size();
    const size_t b = batch.size();
    const uint32_t workers = uint32_t(std::min<size_t>(jobs, b));
    std::vector<LossBreakdown> values(b);
    std::vector<std::vector<double>> worker_grads(grad_accum ? workers : 0);
    std::exception_ptr error;
    std::mutex error_mu;

    auto work = [&](uint32_t w, size_t lo, size_t hi) {
        try {
            ad::Tape tape;
            ModelOnTape bound = bind_model(tape, model, grad_accum != nullptr);
            const auto mark = tape.mark();
            if (grad_accum) worker_grads[w].assign(n_params, 0.0);
            for (size_t i = lo; i < hi; ++i) {
                using namespace ad;
                Var in = tape.constant(std::span<const double>(batch[i].s, dim));
                PenaltyAndPrediction pp = constraint_penalty(tape, bound, spec, in);
                Var target = tape.constant(std::span<const double>(batch[i].sdot, dim));
                Var mse_i = sum(square(sub(pp.prediction, target)));
                Var loss_i = add(mse_i, scale(pp.penalty, spec.weight));
                values[i] = {tape.value_scalar(loss_i), tape.value_scalar(mse_i), tape.value_scalar(pp.penalty)};
                if (!std::isfinite(values[i].total))
                    throw NonFiniteLossError("loss: non-finite value while evaluating a batch");
                if (grad_accum) tape.backward_into(loss_i, mark.vals, worker_grads[w]);
                tape.rewind(mark);
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mu);
            if (!error) error = std::current_exception();
        }
    };

    std::vector<std::thread> pool;
    for (uint32_t w = 0; w < workers; ++w)
        pool.emplace_back(work, w, b * w / workers, b * (w + 1) / workers);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);

    LossBreakdown sums;
    for (size_t i = 0; i < b; ++i) {
        sums.total += values[i].total;
        sums.mse += values[i].mse;
        sums.penalty += values[i].penalty;
    }
    if (grad_accum) {
        grad_accum->assign(n_params, 0.0);
        for (uint32_t w = 0; w < workers; ++w)
            for (size_t k = 0; k < n_params; ++k) (*grad_accum)[k] += worker_grads[w][k];
        ad::Tape::throw_on_nan(*grad_accum);
    }
    const double inv = 1.0 / double(b);
    sums.total *= inv;
    sums.mse *= inv;
    sums.penalty *= inv;
    if (grad_accum)
        for (double& g : *grad_accum) g *= inv;
    return sums;
}

}  // namespace detail

struct MetricsRow {
    int64_t epoch;
    double mse, penalty, total;
    double wall_ms;
};

struct TrainResult {
    DynamicsModel model;
    std::vector<MetricsRow> metrics;
    bool aborted = false;
    std::string abort_reason;
};

using CheckpointSink = std::function<void(const DynamicsModel&, int64_t epoch)>;

// Minimizes mean squared derivative error plus the weighted constraint with
// Adam. Samples are shuffled each epoch with a seeded generator; identical
// (seed, config, dataset) triples reproduce parameters bitwise.
inline TrainResult train(const TrainConfig& cfg, const Dataset& data, const CheckpointSink& sink = {}) {
    cfg.validate();
    if (data.task != cfg.task) throw std::invalid_argument("train: dataset task does not match config");

    const uint32_t dim = system(cfg.task).state_dim;
    TrainResult result;
    result.model = make_model(cfg.model_kind, dim, split_seed(cfg.seed, 1), cfg.mlp, cfg.coupling);
    DynamicsModel& model = result.model;

    std::vector<SampleView> samples = flatten_samples(data);
    if (samples.empty()) throw std::invalid_argument("train: dataset has no samples");

    std::vector<size_t> order(samples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(split_seed(cfg.seed, 2));

    AdamState adam(model.parameters.size());
    std::vector<double> grad(model.parameters.size(), 0.0);
    std::vector<SampleView> batch;
    batch.reserve(cfg.batch_size);

    ad::Tape tape;
    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t_start = std::chrono::steady_clock::now();
        shuffle_rng.shuffle(order);

        double ep_total = 0.0, ep_mse = 0.0, ep_penalty = 0.0;
        size_t cursor = 0;
        while (cursor < samples.size()) {
            batch.clear();
            const size_t take = std::min<size_t>(cfg.batch_size, samples.size() - cursor);
            for (size_t i = 0; i < take; ++i) batch.push_back(samples[order[cursor + i]]);
            cursor += take;

            LossBreakdown loss;
            try {
                if (cfg.jobs > 1) {
                    loss = detail::batch_loss_parallel(model, dim, batch, cfg.constraint, &grad, cfg.jobs);
                } else {
                    tape.clear();
                    ModelOnTape bound = bind_model(tape, model, true);
                    loss = batch_loss(tape, bound, model.parameters.size(), dim, batch, cfg.constraint, &grad);
                }
            } catch (const NonFiniteLossError& e) {
                model.epoch = epoch;
                if (sink) sink(model, epoch);
                result.aborted = true;
                result.abort_reason = e.what();
                return result;
            }
            adam_step(model.parameters, grad, adam, cfg.lr);
            ep_total += loss.total * double(take);
            ep_mse += loss.mse * double(take);
            ep_penalty += loss.penalty * double(take);
        }

        const double wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count();
        const double inv = 1.0 / double(samples.size());
        result.metrics.push_back({epoch, ep_mse * inv, ep_penalty * inv, ep_total * inv, wall_ms});
        model.epoch = epoch + 1;
        if (sink && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) sink(model, epoch + 1);
    }
    return result;
}

}  // namespace constrdyn
