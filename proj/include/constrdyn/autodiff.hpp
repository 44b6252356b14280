#pragma once

// Computation-graph engine with reverse-mode gradients and forward-mode
// directional derivatives that nest. Nodes hold small dense vectors; a scalar
// is a vector of dimension 1. Tangents produced by forward mode are ordinary
// tape values, so reverse mode can differentiate through them (the mixed
// second-order path needed for Jacobian-valued penalties).

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace constrdyn::ad {

constexpr uint32_t kNoNode = 0xffffffffu;

enum class Op : uint8_t {
    kLeaf,         // tracked parameter leaf
    kConst,        // input / constant leaf (no adjoint flows out)
    kAdd,
    kSub,
    kMul,
    kDiv,
    kAxpb,         // c1 * x + c0 elementwise, aux_d = {c1, c0}
    kExp,
    kLog,
    kSin,
    kCos,
    kTanh,
    kSigmoid,
    kSoftplus,
    kRelu,         // max(0, x); derivative at 0 is 0
    kSquare,
    kMatVec,       // a: matrix (m*k row-major), b: vector (k) -> m
    kMatVecConst,  // aux_d: matrix, a: vector
    kDot,
    kSum,
    kConcat,       // aux_i: parent list (count in b)
    kSlice,        // aux_i: {offset}
    kPermute,      // aux_i: index map, out[i] = x[idx[i]]
    kFrozenGrad,   // scalar out; aux_d = {value, d out / d x_0 .. d out / d x_{k-1}}
};

struct Node {
    Op op;
    uint32_t dim;
    uint32_t a = kNoNode;  // first parent (or aux_i offset for kConcat)
    uint32_t b = kNoNode;  // second parent (or parent count for kConcat)
    uint64_t val;          // offset into value arena
    uint32_t aux_d = kNoNode;
    uint32_t aux_i = kNoNode;
    int64_t grad = -1;     // tracked leaves: offset into the gradient vector
};

class Tape;

// Handle to a tape node.
struct Var {
    Tape* tape = nullptr;
    uint32_t id = kNoNode;
    uint32_t dim = 0;

    bool valid() const { return tape != nullptr; }
};

// Flat gradient aligned with a model's parameter vector.
struct Grad {
    std::vector<double> by_parameter;
};

inline double stable_softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

class Tape {
public:
    struct Mark {
        size_t nodes, vals, aux_d, aux_i, aux_p, params;
    };

    Tape() {
        nodes_.reserve(1 << 12);
        vals_.reserve(1 << 16);
    }
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Mark mark() const { return {nodes_.size(), vals_.size(), aux_d_.size(), aux_i_.size(), aux_p_.size(), params_.size()}; }

    void rewind(const Mark& m) {
        nodes_.resize(m.nodes);
        vals_.resize(m.vals);
        aux_d_.resize(m.aux_d);
        aux_i_.resize(m.aux_i);
        aux_p_.resize(m.aux_p);
        params_.resize(m.params);
    }

    void clear() { rewind({0, 0, 0, 0, 0, 0}); }

    size_t size() const { return nodes_.size(); }

    // --- leaves ---

    Var constant(std::span<const double> v) { return push_leaf(Op::kConst, v); }

    Var constant_scalar(double v) { return push_leaf(Op::kConst, std::span<const double>(&v, 1)); }

    // Tracked parameter leaf; adjoints land at [grad_offset, grad_offset + v.size()).
    Var parameter(std::span<const double> v, size_t grad_offset) {
        Var out = push_leaf(Op::kLeaf, v);
        nodes_.back().grad = int64_t(grad_offset);
        params_.push_back({out.id, grad_offset});
        return out;
    }

    // --- access ---

    std::span<const double> values(Var v) const {
        const Node& n = nodes_[v.id];
        return {vals_.data() + n.val, n.dim};
    }

    double value_scalar(Var v) const {
        if (v.dim != 1) throw std::invalid_argument("value_scalar: node is not scalar");
        return vals_[nodes_[v.id].val];
    }

    // --- reverse accumulation ---

    // d(output)/d(theta) for every tracked parameter leaf. The tape is left
    // unchanged; running twice gives bitwise-identical results.
    Grad backward(Var output, size_t n_params) const {
        Grad grad;
        grad.by_parameter.assign(n_params, 0.0);
        backward_into(output, 0, grad.by_parameter);
        throw_on_nan(grad.by_parameter);
        return grad;
    }

    // Accumulates d(output)/d(theta) into grad_accum without zeroing it first.
    // Tracked-leaf adjoints stream straight into grad_accum; arena adjoints
    // are zeroed only from `zero_from_val` up, so per-sample subgraphs recorded
    // after a mark can be differentiated without touching parameter storage.
    void backward_into(Var output, uint64_t zero_from_val, std::span<double> grad_accum) const {
        if (output.dim != 1) throw std::invalid_argument("backward: output must be scalar");
        for (const ParamReg& p : params_)
            if (p.offset + nodes_[p.node].dim > grad_accum.size())
                throw std::invalid_argument("backward: gradient buffer too small for tracked parameters");

        const Node& out = nodes_[output.id];
        if (out.grad >= 0) {  // differentiating a parameter leaf directly
            grad_accum[size_t(out.grad)] += 1.0;
            return;
        }

        if (adj_.size() < vals_.size()) adj_.resize(vals_.size());
        std::fill(adj_.begin() + zero_from_val, adj_.begin() + vals_.size(), 0.0);
        std::vector<double>& adj = adj_;
        adj[out.val] = 1.0;

        auto adj_of = [&](uint32_t id) -> double* {
            const Node& p = nodes_[id];
            return p.grad >= 0 ? grad_accum.data() + p.grad : adj.data() + p.val;
        };

        for (uint32_t i = output.id + 1; i-- > 0;) {
            const Node& n = nodes_[i];
            if (n.op == Op::kLeaf || n.op == Op::kConst) continue;
            const double* av = n.a != kNoNode && n.op != Op::kConcat ? vals_.data() + nodes_[n.a].val : nullptr;
            const double* bv = n.b != kNoNode && n.op != Op::kConcat ? vals_.data() + nodes_[n.b].val : nullptr;
            const double* ov = vals_.data() + n.val;
            const double* g = adj.data() + n.val;
            double* ga = n.a != kNoNode && n.op != Op::kConcat ? adj_of(n.a) : nullptr;
            double* gb = n.b != kNoNode && n.op != Op::kConcat ? adj_of(n.b) : nullptr;
            const uint32_t d = n.dim;

            switch (n.op) {
                case Op::kLeaf:
                case Op::kConst:
                    break;
                case Op::kAdd:
                    for (uint32_t k = 0; k < d; ++k) { ga[k] += g[k]; gb[k] += g[k]; }
                    break;
                case Op::kSub:
                    for (uint32_t k = 0; k < d; ++k) { ga[k] += g[k]; gb[k] -= g[k]; }
                    break;
                case Op::kMul:
                    for (uint32_t k = 0; k < d; ++k) { ga[k] += g[k] * bv[k]; gb[k] += g[k] * av[k]; }
                    break;
                case Op::kDiv:
                    for (uint32_t k = 0; k < d; ++k) { ga[k] += g[k] / bv[k]; gb[k] -= g[k] * ov[k] / bv[k]; }
                    break;
                case Op::kAxpb: {
                    const double c1 = aux_d_[n.aux_d];
                    for (uint32_t k = 0; k < d; ++k) ga[k] += c1 * g[k];
                    break;
                }
                case Op::kExp:
                    for (uint32_t k = 0; k < d; ++k) ga[k] += g[k] * ov[k];
                    break;
                case Op::kLog:
                    for (uint32_t k = 0; k < d; ++k) ga[k] += g[k] / av[k];
                    break;
                case Op::kSin:
                    for (uint32_t k = 0; k < d; ++k) ga[k] += g[k] * std::cos(av[k]);
                    break;
                case Op::kCos:
                    for (uint32_t k = 0; k < d; ++k) ga[k] -= g[k] * std::sin(av[k]);
                    break;
                case Op::kTanh:
                    for (uint32_t k = 0; k < d; ++k) ga[k] += g[k] * (1.0 - ov[k] * ov[k]);
                    break;
                case Op::kSigmoid:
                    for (uint32_t k = 0; k < d; ++k) ga[k] += g[k] * ov[k] * (1.0 - ov[k]);
                    break;
                case Op::kSoftplus:
                    for (uint32_t k = 0; k < d; ++k) ga[k] += g[k] * stable_sigmoid(av[k]);
                    break;
                case Op::kRelu:
                    for (uint32_t k = 0; k < d; ++k) ga[k] += av[k] > 0.0 ? g[k] : 0.0;
                    break;
                case Op::kSquare:
                    for (uint32_t k = 0; k < d; ++k) ga[k] += g[k] * 2.0 * av[k];
                    break;
                case Op::kMatVec: {
                    const uint32_t cols = nodes_[n.b].dim;
                    for (uint32_t r = 0; r < d; ++r) {
                        const double gr = g[r];
                        if (gr == 0.0) continue;
                        const double* wrow = av + size_t(r) * cols;
                        double* garow = ga + size_t(r) * cols;
                        for (uint32_t c = 0; c < cols; ++c) {
                            garow[c] += gr * bv[c];
                            gb[c] += gr * wrow[c];
                        }
                    }
                    break;
                }
                case Op::kMatVecConst: {
                    const uint32_t cols = nodes_[n.a].dim;
                    const double* C = aux_d_.data() + n.aux_d;
                    for (uint32_t r = 0; r < d; ++r) {
                        const double gr = g[r];
                        if (gr == 0.0) continue;
                        for (uint32_t c = 0; c < cols; ++c) ga[c] += gr * C[size_t(r) * cols + c];
                    }
                    break;
                }
                case Op::kDot: {
                    const uint32_t k = nodes_[n.a].dim;
                    for (uint32_t j = 0; j < k; ++j) { ga[j] += g[0] * bv[j]; gb[j] += g[0] * av[j]; }
                    break;
                }
                case Op::kSum: {
                    const uint32_t k = nodes_[n.a].dim;
                    for (uint32_t j = 0; j < k; ++j) ga[j] += g[0];
                    break;
                }
                case Op::kConcat: {
                    uint32_t pos = 0;
                    for (uint32_t p = 0; p < n.b; ++p) {
                        const uint32_t child = aux_p_[n.a + p];
                        double* gc = adj_of(child);
                        for (uint32_t k = 0; k < nodes_[child].dim; ++k) gc[k] += g[pos + k];
                        pos += nodes_[child].dim;
                    }
                    break;
                }
                case Op::kSlice: {
                    const uint32_t off = aux_i_[n.aux_i];
                    for (uint32_t k = 0; k < d; ++k) ga[off + k] += g[k];
                    break;
                }
                case Op::kPermute: {
                    const uint32_t* idx = aux_i_.data() + n.aux_i;
                    for (uint32_t k = 0; k < d; ++k) ga[idx[k]] += g[k];
                    break;
                }
                case Op::kFrozenGrad: {
                    const uint32_t k = nodes_[n.a].dim;
                    const double* G = aux_d_.data() + n.aux_d + 1;
                    for (uint32_t j = 0; j < k; ++j) ga[j] += g[0] * G[j];
                    break;
                }
                default:
                    break;
            }
        }
    }

    // spec'd error check, run once per gradient consumer rather than per call
    static void throw_on_nan(std::span<const double> grad) {
        for (double x : grad)
            if (std::isnan(x)) throw std::runtime_error("backward: NaN encountered during accumulation");
    }

    // --- node builders (used by the free-function op layer) ---

    Var unary(Op op, Var a) {
        const uint32_t d = a.dim;
        uint64_t off = alloc(d);
        const double* x = vals_.data() + nodes_[a.id].val;
        double* o = vals_.data() + off;
        switch (op) {
            case Op::kExp: for (uint32_t k = 0; k < d; ++k) o[k] = std::exp(x[k]); break;
            case Op::kLog: for (uint32_t k = 0; k < d; ++k) o[k] = std::log(x[k]); break;
            case Op::kSin: for (uint32_t k = 0; k < d; ++k) o[k] = std::sin(x[k]); break;
            case Op::kCos: for (uint32_t k = 0; k < d; ++k) o[k] = std::cos(x[k]); break;
            case Op::kTanh: for (uint32_t k = 0; k < d; ++k) o[k] = std::tanh(x[k]); break;
            case Op::kSigmoid: for (uint32_t k = 0; k < d; ++k) o[k] = stable_sigmoid(x[k]); break;
            case Op::kSoftplus: for (uint32_t k = 0; k < d; ++k) o[k] = stable_softplus(x[k]); break;
            case Op::kRelu: for (uint32_t k = 0; k < d; ++k) o[k] = x[k] > 0.0 ? x[k] : 0.0; break;
            case Op::kSquare: for (uint32_t k = 0; k < d; ++k) o[k] = x[k] * x[k]; break;
            default: throw std::logic_error("unary: bad op");
        }
        return push({op, d, a.id, kNoNode, off});
    }

    Var binary(Op op, Var a, Var b) {
        if (a.dim != b.dim) throw std::invalid_argument("binary op: dimension mismatch");
        const uint32_t d = a.dim;
        uint64_t off = alloc(d);
        const double* x = vals_.data() + nodes_[a.id].val;
        const double* y = vals_.data() + nodes_[b.id].val;
        double* o = vals_.data() + off;
        switch (op) {
            case Op::kAdd: for (uint32_t k = 0; k < d; ++k) o[k] = x[k] + y[k]; break;
            case Op::kSub: for (uint32_t k = 0; k < d; ++k) o[k] = x[k] - y[k]; break;
            case Op::kMul: for (uint32_t k = 0; k < d; ++k) o[k] = x[k] * y[k]; break;
            case Op::kDiv: for (uint32_t k = 0; k < d; ++k) o[k] = x[k] / y[k]; break;
            default: throw std::logic_error("binary: bad op");
        }
        return push({op, d, a.id, b.id, off});
    }

    Var axpb(Var a, double c1, double c0) {
        const uint32_t d = a.dim;
        uint64_t off = alloc(d);
        uint32_t aux = push_aux_d({c1, c0});
        const double* x = vals_.data() + nodes_[a.id].val;
        double* o = vals_.data() + off;
        for (uint32_t k = 0; k < d; ++k) o[k] = c1 * x[k] + c0;
        return push({Op::kAxpb, d, a.id, kNoNode, off, aux});
    }

    Var matvec(Var w, Var x) {
        if (w.dim % x.dim != 0) throw std::invalid_argument("matvec: matrix/vector dimension mismatch");
        const uint32_t rows = w.dim / x.dim, cols = x.dim;
        uint64_t off = alloc(rows);
        const double* W = vals_.data() + nodes_[w.id].val;
        const double* v = vals_.data() + nodes_[x.id].val;
        double* o = vals_.data() + off;
        for (uint32_t r = 0; r < rows; ++r) {
            const double* wrow = W + size_t(r) * cols;
            double acc = 0.0;
            for (uint32_t c = 0; c < cols; ++c) acc += wrow[c] * v[c];
            o[r] = acc;
        }
        return push({Op::kMatVec, rows, w.id, x.id, off});
    }

    Var matvec_const(std::span<const double> mat, Var x) {
        if (mat.size() % x.dim != 0) throw std::invalid_argument("matvec_const: dimension mismatch");
        const uint32_t rows = uint32_t(mat.size() / x.dim), cols = x.dim;
        uint32_t aux = push_aux_d(mat);
        uint64_t off = alloc(rows);
        const double* v = vals_.data() + nodes_[x.id].val;
        const double* C = aux_d_.data() + aux;
        double* o = vals_.data() + off;
        for (uint32_t r = 0; r < rows; ++r) {
            double acc = 0.0;
            for (uint32_t c = 0; c < cols; ++c) acc += C[size_t(r) * cols + c] * v[c];
            o[r] = acc;
        }
        return push({Op::kMatVecConst, rows, x.id, kNoNode, off, aux});
    }

    Var dot(Var a, Var b) {
        if (a.dim != b.dim) throw std::invalid_argument("dot: dimension mismatch");
        uint64_t off = alloc(1);
        const double* x = vals_.data() + nodes_[a.id].val;
        const double* y = vals_.data() + nodes_[b.id].val;
        double acc = 0.0;
        for (uint32_t k = 0; k < a.dim; ++k) acc += x[k] * y[k];
        vals_[off] = acc;
        return push({Op::kDot, 1, a.id, b.id, off});
    }

    Var sum(Var a) {
        uint64_t off = alloc(1);
        const double* x = vals_.data() + nodes_[a.id].val;
        double acc = 0.0;
        for (uint32_t k = 0; k < a.dim; ++k) acc += x[k];
        vals_[off] = acc;
        return push({Op::kSum, 1, a.id, kNoNode, off});
    }

    Var concat(std::span<const Var> parts) {
        uint32_t d = 0;
        for (const Var& p : parts) d += p.dim;
        uint32_t plist = uint32_t(aux_p_.size());
        for (const Var& p : parts) aux_p_.push_back(p.id);
        uint64_t off = alloc(d);
        uint32_t pos = 0;
        for (const Var& p : parts) {
            const double* x = vals_.data() + nodes_[p.id].val;
            for (uint32_t k = 0; k < p.dim; ++k) vals_[off + pos + k] = x[k];
            pos += p.dim;
        }
        return push({Op::kConcat, d, plist, uint32_t(parts.size()), off});
    }

    Var slice(Var a, uint32_t offset, uint32_t len) {
        if (offset + len > a.dim) throw std::invalid_argument("slice: out of range");
        uint32_t aux = uint32_t(aux_i_.size());
        aux_i_.push_back(offset);
        uint64_t off = alloc(len);
        const double* x = vals_.data() + nodes_[a.id].val;
        for (uint32_t k = 0; k < len; ++k) vals_[off + k] = x[offset + k];
        return push({Op::kSlice, len, a.id, kNoNode, off, kNoNode, aux});
    }

    Var permute(Var a, std::span<const uint32_t> idx) {
        if (idx.size() != a.dim) throw std::invalid_argument("permute: index map size mismatch");
        uint32_t aux = uint32_t(aux_i_.size());
        for (uint32_t i : idx) aux_i_.push_back(i);
        uint64_t off = alloc(a.dim);
        const double* x = vals_.data() + nodes_[a.id].val;
        for (uint32_t k = 0; k < a.dim; ++k) vals_[off + k] = x[idx[k]];
        return push({Op::kPermute, a.dim, a.id, kNoNode, off, kNoNode, aux});
    }

    // Scalar whose value and gradient w.r.t. the input vector were computed
    // outside the tape (used for spectral penalties).
    Var frozen_grad(Var x, double value, std::span<const double> grad) {
        if (grad.size() != x.dim) throw std::invalid_argument("frozen_grad: gradient size mismatch");
        std::vector<double> aux(grad.size() + 1);
        aux[0] = value;
        std::copy(grad.begin(), grad.end(), aux.begin() + 1);
        uint32_t auxoff = push_aux_d(aux);
        uint64_t off = alloc(1);
        vals_[off] = value;
        return push({Op::kFrozenGrad, 1, x.id, kNoNode, off, auxoff});
    }

private:
    struct ParamReg {
        uint32_t node;
        size_t offset;
    };

    Var push_leaf(Op op, std::span<const double> v) {
        uint64_t off = alloc(uint32_t(v.size()));
        std::copy(v.begin(), v.end(), vals_.begin() + off);
        return push({op, uint32_t(v.size()), kNoNode, kNoNode, off});
    }

    uint64_t alloc(uint32_t dim) {
        uint64_t off = vals_.size();
        vals_.resize(vals_.size() + dim);
        return off;
    }

    uint32_t push_aux_d(std::span<const double> v) {
        uint32_t off = uint32_t(aux_d_.size());
        aux_d_.insert(aux_d_.end(), v.begin(), v.end());
        return off;
    }
    uint32_t push_aux_d(std::initializer_list<double> v) { return push_aux_d(std::span<const double>(v.begin(), v.size())); }

    Var push(Node n) {
        nodes_.push_back(n);
        return {this, uint32_t(nodes_.size() - 1), n.dim};
    }

    std::vector<Node> nodes_;
    std::vector<double> vals_;
    std::vector<double> aux_d_;
    std::vector<uint32_t> aux_i_;
    std::vector<uint32_t> aux_p_;
    std::vector<ParamReg> params_;
    mutable std::vector<double> adj_;  // reverse-pass scratch, reused across calls
};

// ---------------------------------------------------------------------------
// Free-function op layer on Var. Model code is written against these and the
// matching Dual overloads below, so the same source runs at any forward-mode
// nesting depth.
// ---------------------------------------------------------------------------

inline Var add(Var a, Var b) { return a.tape->binary(Op::kAdd, a, b); }
inline Var sub(Var a, Var b) { return a.tape->binary(Op::kSub, a, b); }
inline Var mul(Var a, Var b) { return a.tape->binary(Op::kMul, a, b); }
inline Var div(Var a, Var b) { return a.tape->binary(Op::kDiv, a, b); }
inline Var scale(Var a, double c) { return a.tape->axpb(a, c, 0.0); }
inline Var axpb(Var a, double c1, double c0) { return a.tape->axpb(a, c1, c0); }
inline Var neg(Var a) { return a.tape->axpb(a, -1.0, 0.0); }
inline Var exp(Var a) { return a.tape->unary(Op::kExp, a); }
inline Var log(Var a) { return a.tape->unary(Op::kLog, a); }
inline Var sin(Var a) { return a.tape->unary(Op::kSin, a); }
inline Var cos(Var a) { return a.tape->unary(Op::kCos, a); }
inline Var tanh(Var a) { return a.tape->unary(Op::kTanh, a); }
inline Var sigmoid(Var a) { return a.tape->unary(Op::kSigmoid, a); }
inline Var softplus(Var a) { return a.tape->unary(Op::kSoftplus, a); }
inline Var relu(Var a) { return a.tape->unary(Op::kRelu, a); }
inline Var square(Var a) { return a.tape->unary(Op::kSquare, a); }
inline Var matvec(Var w, Var x) { return w.tape->matvec(w, x); }
inline Var matvec_const(std::span<const double> m, Var x) { return x.tape->matvec_const(m, x); }
inline Var dot(Var a, Var b) { return a.tape->dot(a, b); }
inline Var sum(Var a) { return a.tape->sum(a); }
inline Var concat(std::span<const Var> parts) { return parts[0].tape->concat(parts); }
inline Var slice(Var a, uint32_t off, uint32_t len) { return a.tape->slice(a, off, len); }
inline Var permute(Var a, std::span<const uint32_t> idx) { return a.tape->permute(a, idx); }

inline bool is_null(const Var& v) { return !v.valid(); }
inline Tape& tape_of(const Var& v) { return *v.tape; }
inline uint32_t dim_of(const Var& v) { return v.dim; }

inline Var constant_like(const Var& like, std::span<const double> v) { return like.tape->constant(v); }

inline Var zeros_like(const Var& like) {
    std::vector<double> z(like.dim, 0.0);
    return like.tape->constant(z);
}

// Constant 0/1 mask from the sign of x's current values (derivative of relu).
inline Var step_mask(const Var& x) {
    std::span<const double> v = x.tape->values(x);
    std::vector<double> m(v.size());
    for (size_t i = 0; i < m.size(); ++i) m[i] = v[i] > 0.0 ? 1.0 : 0.0;
    return x.tape->constant(m);
}

inline std::vector<double> read_values(const Var& v) {
    auto s = v.tape->values(v);
    return {s.begin(), s.end()};
}

// clamp to [lo, hi] built from relu pieces; derivative is 0 outside and at
// the kinks, 1 strictly inside
template <class V>
V clamp(V x, double lo, double hi) {
    return add(axpb(relu(axpb(x, 1.0, -lo)), 1.0, lo), neg(relu(axpb(x, 1.0, -hi))));
}

// ---------------------------------------------------------------------------
// Forward-mode dual layer. Dual<Var> carries first-order tangents,
// Dual<Dual<Var>> second-order, and so on. A default-constructed component is
// treated as a structural zero.
// ---------------------------------------------------------------------------

template <class V>
struct Dual {
    V val;
    V tan;
};

template <class V>
bool is_null(const Dual<V>& d) {
    return is_null(d.val);
}

template <class V>
Tape& tape_of(const Dual<V>& d) {
    return tape_of(d.val);
}

template <class V>
uint32_t dim_of(const Dual<V>& d) {
    return dim_of(d.val);
}

template <class V>
Dual<V> constant_like(const Dual<V>& like, std::span<const double> v) {
    return {constant_like(like.val, v), V{}};
}

template <class V>
Dual<V> zeros_like(const Dual<V>& like) {
    return {zeros_like(like.val), V{}};
}

template <class V>
Dual<V> step_mask(const Dual<V>& x) {
    return {step_mask(x.val), V{}};
}

template <class V>
std::vector<double> read_values(const Dual<V>& d) {
    return read_values(d.val);
}

// Lift a base handle to a deeper dual level with zero tangent.
template <class V>
struct Lift {
    static V to(Var v) { return v; }
};
template <class U>
struct Lift<Dual<U>> {
    static Dual<U> to(Var v) { return {Lift<U>::to(v), U{}}; }
};
template <class V>
V lift(Var v) {
    return Lift<V>::to(v);
}

namespace detail {
template <class V>
V tan_add(const V& a, const V& b) {  // null-aware a + b
    if (is_null(a)) return b;
    if (is_null(b)) return a;
    return add(a, b);
}
}  // namespace detail

template <class V>
Dual<V> add(const Dual<V>& a, const Dual<V>& b) {
    return {add(a.val, b.val), detail::tan_add(a.tan, b.tan)};
}

template <class V>
Dual<V> sub(const Dual<V>& a, const Dual<V>& b) {
    V t;
    if (!is_null(a.tan) && !is_null(b.tan)) t = sub(a.tan, b.tan);
    else if (!is_null(a.tan)) t = a.tan;
    else if (!is_null(b.tan)) t = neg(b.tan);
    return {sub(a.val, b.val), t};
}

template <class V>
Dual<V> mul(const Dual<V>& a, const Dual<V>& b) {
    V t;
    if (!is_null(a.tan)) t = mul(a.tan, b.val);
    if (!is_null(b.tan)) t = detail::tan_add(t, mul(a.val, b.tan));
    return {mul(a.val, b.val), t};
}

template <class V>
Dual<V> div(const Dual<V>& a, const Dual<V>& b) {
    V q = div(a.val, b.val);
    V t;
    if (!is_null(a.tan)) t = div(a.tan, b.val);
    if (!is_null(b.tan)) t = detail::tan_add(t, neg(div(mul(q, b.tan), b.val)));
    return {q, t};
}

template <class V>
Dual<V> axpb(const Dual<V>& a, double c1, double c0) {
    V t;
    if (!is_null(a.tan)) t = scale(a.tan, c1);
    return {axpb(a.val, c1, c0), t};
}

template <class V>
Dual<V> scale(const Dual<V>& a, double c) {
    return axpb(a, c, 0.0);
}

template <class V>
Dual<V> neg(const Dual<V>& a) {
    return axpb(a, -1.0, 0.0);
}

template <class V>
Dual<V> exp(const Dual<V>& a) {
    V e = exp(a.val);
    V t;
    if (!is_null(a.tan)) t = mul(e, a.tan);
    return {e, t};
}

template <class V>
Dual<V> log(const Dual<V>& a) {
    V t;
    if (!is_null(a.tan)) t = div(a.tan, a.val);
    return {log(a.val), t};
}

template <class V>
Dual<V> sin(const Dual<V>& a) {
    V t;
    if (!is_null(a.tan)) t = mul(cos(a.val), a.tan);
    return {sin(a.val), t};
}

template <class V>
Dual<V> cos(const Dual<V>& a) {
    V t;
    if (!is_null(a.tan)) t = neg(mul(sin(a.val), a.tan));
    return {cos(a.val), t};
}

template <class V>
Dual<V> tanh(const Dual<V>& a) {
    V th = tanh(a.val);
    V t;
    if (!is_null(a.tan)) t = mul(axpb(square(th), -1.0, 1.0), a.tan);
    return {th, t};
}

template <class V>
Dual<V> sigmoid(const Dual<V>& a) {
    V s = sigmoid(a.val);
    V t;
    if (!is_null(a.tan)) t = mul(mul(s, axpb(s, -1.0, 1.0)), a.tan);
    return {s, t};
}

template <class V>
Dual<V> softplus(const Dual<V>& a) {
    V t;
    if (!is_null(a.tan)) t = mul(sigmoid(a.val), a.tan);
    return {softplus(a.val), t};
}

template <class V>
Dual<V> relu(const Dual<V>& a) {
    V t;
    if (!is_null(a.tan)) t = mul(step_mask(a.val), a.tan);
    return {relu(a.val), t};
}

template <class V>
Dual<V> square(const Dual<V>& a) {
    V t;
    if (!is_null(a.tan)) t = mul(scale(a.val, 2.0), a.tan);
    return {square(a.val), t};
}

template <class V>
Dual<V> matvec(const Dual<V>& w, const Dual<V>& x) {
    V t;
    if (!is_null(w.tan)) t = matvec(w.tan, x.val);
    if (!is_null(x.tan)) t = detail::tan_add(t, matvec(w.val, x.tan));
    return {matvec(w.val, x.val), t};
}

template <class V>
Dual<V> matvec_const(std::span<const double> m, const Dual<V>& x) {
    V t;
    if (!is_null(x.tan)) t = matvec_const(m, x.tan);
    return {matvec_const(m, x.val), t};
}

template <class V>
Dual<V> dot(const Dual<V>& a, const Dual<V>& b) {
    V t;
    if (!is_null(a.tan)) t = dot(a.tan, b.val);
    if (!is_null(b.tan)) t = detail::tan_add(t, dot(a.val, b.tan));
    return {dot(a.val, b.val), t};
}

template <class V>
Dual<V> sum(const Dual<V>& a) {
    V t;
    if (!is_null(a.tan)) t = sum(a.tan);
    return {sum(a.val), t};
}

template <class V>
Dual<V> concat(std::span<const Dual<V>> parts) {
    std::vector<V> vals(parts.size());
    bool any_tan = false;
    for (size_t i = 0; i < parts.size(); ++i) {
        vals[i] = parts[i].val;
        any_tan = any_tan || !is_null(parts[i].tan);
    }
    V cv = concat(std::span<const V>(vals));
    V ct;
    if (any_tan) {
        std::vector<V> tans(parts.size());
        for (size_t i = 0; i < parts.size(); ++i)
            tans[i] = is_null(parts[i].tan) ? zeros_like(parts[i].val) : parts[i].tan;
        ct = concat(std::span<const V>(tans));
    }
    return {cv, ct};
}

template <class V>
Dual<V> slice(const Dual<V>& a, uint32_t off, uint32_t len) {
    V t;
    if (!is_null(a.tan)) t = slice(a.tan, off, len);
    return {slice(a.val, off, len), t};
}

template <class V>
Dual<V> permute(const Dual<V>& a, std::span<const uint32_t> idx) {
    V t;
    if (!is_null(a.tan)) t = permute(a.tan, idx);
    return {permute(a.val, idx), t};
}

// ---------------------------------------------------------------------------
// Directional derivatives and Jacobians.
// ---------------------------------------------------------------------------

// One forward-mode pass: value and (d f / d s) . v, both live on the tape.
// f must be callable on Dual<V>.
template <class V, class F>
Dual<V> eval_jvp(F&& f, const V& s, std::span<const double> v) {
    if (v.size() != dim_of(s)) throw std::invalid_argument("jvp: direction dimension mismatch");
    Dual<V> in{s, constant_like(s, v)};
    Dual<V> out = f(in);
    if (is_null(out.tan)) out.tan = zeros_like(out.val);
    return out;
}

// Seeded variant where the direction is itself a tape value.
template <class V, class F>
Dual<V> eval_jvp_seeded(F&& f, const V& s, const V& seed) {
    Dual<V> out = f(Dual<V>{s, seed});
    if (is_null(out.tan)) out.tan = zeros_like(out.val);
    return out;
}

template <class V, class F>
V jvp(F&& f, const V& s, std::span<const double> v) {
    return eval_jvp(f, s, v).tan;
}

// Square Jacobian as columns of tape values: column i is jvp with basis
// direction e_i (one jvp call per column, identical code path).
template <class V>
struct JacobianOf {
    V value;             // f(s), from the last pass (all passes agree bitwise)
    std::vector<V> cols; // cols[j] = (d f / d s) e_j
    uint32_t n = 0;
};

template <class V, class F>
JacobianOf<V> jacobian(F&& f, const V& s) {
    const uint32_t n = dim_of(s);
    JacobianOf<V> out;
    out.n = n;
    out.cols.resize(n);
    std::vector<double> e(n, 0.0);
    for (uint32_t j = 0; j < n; ++j) {
        e[j] = 1.0;
        Dual<V> r = eval_jvp(f, s, e);
        if (dim_of(r.val) != n) throw std::invalid_argument("jacobian: map is not square");
        out.cols[j] = r.tan;
        out.value = r.val;
        e[j] = 0.0;
    }
    return out;
}

}  // namespace constrdyn::ad
