#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "constrdyn/autodiff.hpp"
#include "constrdyn/rng.hpp"

namespace constrdyn {

enum class Activation { softplus, tanh, relu };
enum class ModelKind { node, hnn, transformed_node };

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::softplus: return "softplus";
        case Activation::tanh: return "tanh";
        case Activation::relu: return "relu";
    }
    return "?";
}

inline std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::node: return "node";
        case ModelKind::hnn: return "hnn";
        case ModelKind::transformed_node: return "transformed_node";
    }
    return "?";
}

struct MlpConfig {
    uint32_t input_dim = 2;
    uint32_t hidden_layers = 3;  // 0 means a single linear map
    uint32_t hidden_units = 200;
    Activation activation = Activation::softplus;
    uint32_t output_dim = 2;
};

struct CouplingConfig {
    uint32_t blocks = 8;
    uint32_t subnet_layers = 2;
    uint32_t subnet_units = 100;
};

// Skew block matrix [[0, I], [-I, 0]] for an even state dimension.
struct SymplecticJ {
    uint32_t n;

    explicit SymplecticJ(uint32_t dim) : n(dim) {
        if (n == 0 || n % 2 != 0) throw std::invalid_argument("SymplecticJ: dimension must be even");
    }

    // row-major dense form
    std::vector<double> matrix() const {
        std::vector<double> m(size_t(n) * n, 0.0);
        const uint32_t h = n / 2;
        for (uint32_t i = 0; i < h; ++i) {
            m[size_t(i) * n + h + i] = 1.0;
            m[size_t(h + i) * n + i] = -1.0;
        }
        return m;
    }

    std::vector<double> transpose_matrix() const {
        std::vector<double> m = matrix();
        for (double& x : m) x = -x;
        return m;
    }

    // J x on raw values
    std::vector<double> apply(std::span<const double> x) const {
        const uint32_t h = n / 2;
        std::vector<double> y(n);
        for (uint32_t i = 0; i < h; ++i) {
            y[i] = x[h + i];
            y[h + i] = -x[i];
        }
        return y;
    }
};

// --- parameter layout -------------------------------------------------------

struct LayerShape {
    uint32_t rows, cols;
};

inline std::vector<LayerShape> mlp_layer_shapes(const MlpConfig& c) {
    std::vector<LayerShape> s;
    if (c.hidden_layers == 0) {
        s.push_back({c.output_dim, c.input_dim});
        return s;
    }
    s.push_back({c.hidden_units, c.input_dim});
    for (uint32_t l = 1; l < c.hidden_layers; ++l) s.push_back({c.hidden_units, c.hidden_units});
    s.push_back({c.output_dim, c.hidden_units});
    return s;
}

inline size_t mlp_param_count(const MlpConfig& c) {
    size_t n = 0;
    for (const LayerShape& s : mlp_layer_shapes(c)) n += size_t(s.rows) * s.cols + s.rows;
    return n;
}

inline MlpConfig coupling_subnet_config(const CouplingConfig& c, uint32_t state_dim) {
    return {state_dim / 2, c.subnet_layers, c.subnet_units, Activation::softplus, state_dim / 2};
}

inline size_t coupling_param_count(const CouplingConfig& c, uint32_t state_dim) {
    return size_t(c.blocks) * 2 * mlp_param_count(coupling_subnet_config(c, state_dim));
}

// Glorot-uniform weights, zero biases, written at params[offset...].
inline void init_mlp_params(const MlpConfig& c, std::span<double> params, size_t offset, Rng& rng,
                            bool zero_final_layer = false) {
    const auto shapes = mlp_layer_shapes(c);
    size_t p = offset;
    for (size_t l = 0; l < shapes.size(); ++l) {
        const LayerShape& s = shapes[l];
        const bool zero = zero_final_layer && l + 1 == shapes.size();
        const double limit = std::sqrt(6.0 / (double(s.rows) + double(s.cols)));
        for (size_t k = 0; k < size_t(s.rows) * s.cols; ++k) params[p++] = zero ? 0.0 : rng.uniform(-limit, limit);
        for (size_t k = 0; k < s.rows; ++k) params[p++] = 0.0;
    }
}

// --- dynamics model ---------------------------------------------------------

struct DynamicsModel {
    ModelKind kind = ModelKind::node;
    uint32_t state_dim = 2;
    MlpConfig mlp;                           // f (node), H (hnn), f_z (transformed)
    std::optional<CouplingConfig> coupling;  // transformed only
    uint64_t seed = 0;
    int64_t epoch = 0;
    std::vector<double> parameters;

    size_t param_count() const {
        size_t n = mlp_param_count(mlp);
        if (coupling) n += coupling_param_count(*coupling, state_dim);
        return n;
    }

    // Fixed per-block shuffles, derived from the model seed.
    std::vector<std::vector<uint32_t>> coupling_permutations() const {
        std::vector<std::vector<uint32_t>> perms;
        if (!coupling) return perms;
        for (uint32_t b = 0; b < coupling->blocks; ++b) {
            std::vector<uint32_t> idx(state_dim);
            for (uint32_t i = 0; i < state_dim; ++i) idx[i] = i;
            Rng rng(split_seed(seed, 0xC0DE + b));
            rng.shuffle(idx);
            perms.push_back(std::move(idx));
        }
        return perms;
    }
};

inline MlpConfig default_mlp_config(ModelKind kind, uint32_t state_dim) {
    MlpConfig c;
    c.input_dim = state_dim;
    c.output_dim = kind == ModelKind::hnn ? 1 : state_dim;
    return c;
}

inline DynamicsModel make_model(ModelKind kind, uint32_t state_dim, uint64_t seed,
                                std::optional<MlpConfig> mlp = std::nullopt,
                                std::optional<CouplingConfig> coupling = std::nullopt) {
    if (kind == ModelKind::hnn && state_dim % 2 != 0)
        throw std::invalid_argument("hnn model requires an even state dimension");
    DynamicsModel m;
    m.kind = kind;
    m.state_dim = state_dim;
    m.mlp = mlp.value_or(default_mlp_config(kind, state_dim));
    if (kind == ModelKind::transformed_node) {
        if (state_dim % 2 != 0) throw std::invalid_argument("transformed model requires an even state dimension");
        m.coupling = coupling.value_or(CouplingConfig{});
    }
    m.seed = seed;
    m.parameters.assign(m.param_count(), 0.0);

    Rng rng(split_seed(seed, 0));
    size_t offset = 0;
    if (m.coupling) {
        const MlpConfig sub = coupling_subnet_config(*m.coupling, state_dim);
        const size_t per_subnet = mlp_param_count(sub);
        for (uint32_t b = 0; b < m.coupling->blocks; ++b) {
            init_mlp_params(sub, m.parameters, offset, rng, /*zero_final_layer=*/true);
            offset += per_subnet;
            init_mlp_params(sub, m.parameters, offset, rng, /*zero_final_layer=*/true);
            offset += per_subnet;
        }
    }
    init_mlp_params(m.mlp, m.parameters, offset, rng);
    return m;
}

// --- tape bindings ----------------------------------------------------------

struct MlpOnTape {
    MlpConfig cfg;
    std::vector<ad::Var> leaves;  // W0, b0, W1, b1, ...

    template <class V>
    V operator()(V x) const {
        using namespace ad;
        const size_t n_layers = leaves.size() / 2;
        for (size_t l = 0; l < n_layers; ++l) {
            V w = lift<V>(leaves[2 * l]);
            V b = lift<V>(leaves[2 * l + 1]);
            x = add(matvec(w, x), b);
            if (l + 1 < n_layers) {
                switch (cfg.activation) {
                    case Activation::softplus: x = softplus(x); break;
                    case Activation::tanh: x = tanh(x); break;
                    case Activation::relu: x = relu(x); break;
                }
            }
        }
        return x;
    }
};

// grad_base == SIZE_MAX binds untracked (constant) leaves.
inline MlpOnTape bind_mlp(ad::Tape& tape, const MlpConfig& cfg, std::span<const double> params, size_t offset,
                          size_t grad_base) {
    MlpOnTape m;
    m.cfg = cfg;
    size_t p = offset;
    for (const LayerShape& s : mlp_layer_shapes(cfg)) {
        const size_t wn = size_t(s.rows) * s.cols;
        if (grad_base == SIZE_MAX) {
            m.leaves.push_back(tape.constant(params.subspan(p, wn)));
            m.leaves.push_back(tape.constant(params.subspan(p + wn, s.rows)));
        } else {
            m.leaves.push_back(tape.parameter(params.subspan(p, wn), grad_base + p));
            m.leaves.push_back(tape.parameter(params.subspan(p + wn, s.rows), grad_base + p + wn));
        }
        p += wn + s.rows;
    }
    return m;
}

struct CouplingOnTape {
    uint32_t dim = 0;
    double scale_clamp = 5.0;  // scale-subnet output clamped to [-c, c] before exp
    std::vector<std::vector<uint32_t>> perms, inv_perms;
    std::vector<MlpOnTape> scale_nets, shift_nets;

    // z2 = s2 * exp(a(s1)) + t(s1) after each block's permutation
    template <class V>
    V forward(V s) const {
        using namespace ad;
        const uint32_t h = dim / 2;
        for (size_t b = 0; b < scale_nets.size(); ++b) {
            s = permute(s, std::span<const uint32_t>(perms[b]));
            V s1 = slice(s, 0, h);
            V s2 = slice(s, h, h);
            V a = clamp(scale_nets[b](s1), -scale_clamp, scale_clamp);
            V z2 = add(mul(s2, exp(a)), shift_nets[b](s1));
            std::vector<V> parts{s1, z2};
            s = concat(std::span<const V>(parts));
        }
        return s;
    }

    template <class V>
    V inverse(V z) const {
        using namespace ad;
        const uint32_t h = dim / 2;
        for (size_t b = scale_nets.size(); b-- > 0;) {
            V z1 = slice(z, 0, h);
            V z2 = slice(z, h, h);
            V a = clamp(scale_nets[b](z1), -scale_clamp, scale_clamp);
            V s2 = mul(sub(z2, shift_nets[b](z1)), exp(neg(a)));
            std::vector<V> parts{z1, s2};
            z = concat(std::span<const V>(parts));
            z = permute(z, std::span<const uint32_t>(inv_perms[b]));
        }
        return z;
    }
};

// Dynamics function bound to a tape; callable at any dual nesting level.
struct ModelOnTape {
    ModelKind kind = ModelKind::node;
    uint32_t state_dim = 2;
    std::vector<double> jmat;  // dense symplectic J for the hnn field
    MlpOnTape net;             // f, H, or f_z
    CouplingOnTape coupling;

    template <class V>
    V operator()(V s) const {
        using namespace ad;
        if (dim_of(s) != state_dim) throw std::invalid_argument("model forward: state dimension mismatch");
        switch (kind) {
            case ModelKind::node:
                return net(s);
            case ModelKind::hnn: {
                // s' = J grad H(s); each gradient component from one
                // forward-mode pass over the scalar H network
                const uint32_t n = state_dim;
                std::vector<double> e(n, 0.0);
                std::vector<V> g(n);
                for (uint32_t i = 0; i < n; ++i) {
                    e[i] = 1.0;
                    g[i] = eval_jvp([this](auto x) { return net(x); }, s, std::span<const double>(e)).tan;
                    e[i] = 0.0;
                }
                V grad_h = concat(std::span<const V>(g));
                return matvec_const(jmat, grad_h);
            }
            case ModelKind::transformed_node: {
                // s' = (d g^{-1} / d z) f_z(g(s))
                V z = coupling.forward(s);
                V zdot = net(z);
                return eval_jvp_seeded([this](auto zz) { return coupling.inverse(zz); }, z, zdot).tan;
            }
        }
        throw std::logic_error("model forward: bad kind");
    }
};

inline ModelOnTape bind_model(ad::Tape& tape, const DynamicsModel& model, bool track_grads) {
    ModelOnTape b;
    b.kind = model.kind;
    b.state_dim = model.state_dim;
    const size_t grad_base = track_grads ? 0 : SIZE_MAX;
    size_t offset = 0;
    if (model.coupling) {
        b.coupling.dim = model.state_dim;
        b.coupling.perms = model.coupling_permutations();
        for (const auto& p : b.coupling.perms) {
            std::vector<uint32_t> inv(p.size());
            for (uint32_t i = 0; i < p.size(); ++i) inv[p[i]] = i;
            b.coupling.inv_perms.push_back(std::move(inv));
        }
        const MlpConfig sub = coupling_subnet_config(*model.coupling, model.state_dim);
        const size_t per_subnet = mlp_param_count(sub);
        for (uint32_t blk = 0; blk < model.coupling->blocks; ++blk) {
            b.coupling.scale_nets.push_back(bind_mlp(tape, sub, model.parameters, offset, grad_base));
            offset += per_subnet;
            b.coupling.shift_nets.push_back(bind_mlp(tape, sub, model.parameters, offset, grad_base));
            offset += per_subnet;
        }
    }
    if (model.kind == ModelKind::hnn || model.kind == ModelKind::transformed_node)
        b.jmat = SymplecticJ(model.state_dim).matrix();
    else if (model.state_dim % 2 == 0)
        b.jmat = SymplecticJ(model.state_dim).matrix();
    b.net = bind_mlp(tape, model.mlp, model.parameters, offset, grad_base);
    return b;
}

// Spec-level forward helpers on raw states (records on the given tape).
inline std::vector<double> model_forward_values(ad::Tape& tape, const ModelOnTape& bound,
                                                std::span<const double> s) {
    auto m = tape.mark();
    ad::Var in = tape.constant(s);
    ad::Var out = bound(in);
    std::vector<double> v = ad::read_values(out);
    for (double x : v)
        if (!std::isfinite(x)) {
            tape.rewind(m);
            throw std::runtime_error("model forward: non-finite output");
        }
    tape.rewind(m);
    return v;
}

inline std::vector<double> model_forward(const DynamicsModel& model, std::span<const double> s) {
    ad::Tape tape;
    return model_forward_values(tape, bind_model(tape, model, false), s);
}

// Model as a plain state -> derivative callable for rollouts. Non-finite
// outputs are passed through so the integrator can report the blow-up time.
// Each instance owns a tape; use one instance per thread.
class ModelRhs {
public:
    explicit ModelRhs(const DynamicsModel& model) : tape_(std::make_shared<ad::Tape>()) {
        bound_ = bind_model(*tape_, model, false);
        mark_ = tape_->mark();
    }

    std::vector<double> operator()(const std::vector<double>& s) const {
        ad::Var in = tape_->constant(s);
        std::vector<double> out = ad::read_values(bound_(in));
        tape_->rewind(mark_);
        return out;
    }

private:
    std::shared_ptr<ad::Tape> tape_;
    ModelOnTape bound_;
    ad::Tape::Mark mark_{};
};

}  // namespace constrdyn
