#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <iostream>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "constrdyn/autodiff.hpp"
#include "constrdyn/eig.hpp"
#include "constrdyn/models.hpp"

namespace constrdyn {

enum class ConstraintKind { none, hamiltonian, transformed_hamiltonian, dissipative };

inline std::string to_string(ConstraintKind k) {
    switch (k) {
        case ConstraintKind::none: return "none";
        case ConstraintKind::hamiltonian: return "hamiltonian";
        case ConstraintKind::transformed_hamiltonian: return "transformed_hamiltonian";
        case ConstraintKind::dissipative: return "dissipative";
    }
    return "?";
}

struct ConstraintSpec {
    ConstraintKind kind = ConstraintKind::none;
    double weight = 0.0;
    std::vector<double> bounds;  // per-eigenvalue real-part upper bounds (dissipative)

    void validate(uint32_t state_dim) const {
        if (weight < 0.0) throw std::invalid_argument("constraint weight must be nonnegative");
        if (kind == ConstraintKind::dissipative && bounds.size() != state_dim)
            throw std::invalid_argument("dissipative bounds must match the state dimension");
    }
};

namespace detail {

// index map that transposes a column-major-packed square matrix
inline std::vector<uint32_t> transpose_index_map(uint32_t n) {
    std::vector<uint32_t> idx(size_t(n) * n);
    for (uint32_t j = 0; j < n; ++j)
        for (uint32_t i = 0; i < n; ++i) idx[size_t(j) * n + i] = i * n + j;
    return idx;
}

}  // namespace detail

// ||J^T A - A^T J||_F^2 on raw values; zero exactly when J^{-1} A is symmetric.
inline double hamiltonian_constraint(std::span<const double> jac, uint32_t n) {
    if (n % 2 != 0) throw std::invalid_argument("hamiltonian constraint: dimension must be even");
    if (jac.size() != size_t(n) * n) throw std::invalid_argument("hamiltonian constraint: matrix must be square");
    const std::vector<double> jt = SymplecticJ(n).transpose_matrix();
    // M = J^T A; residual is M - M^T
    std::vector<double> m(size_t(n) * n, 0.0);
    for (uint32_t i = 0; i < n; ++i)
        for (uint32_t k = 0; k < n; ++k) {
            const double jik = jt[size_t(i) * n + k];
            if (jik == 0.0) continue;
            for (uint32_t j = 0; j < n; ++j) m[size_t(i) * n + j] += jik * jac[size_t(k) * n + j];
        }
    double acc = 0.0;
    for (uint32_t i = 0; i < n; ++i)
        for (uint32_t j = 0; j < n; ++j) {
            const double r = m[size_t(i) * n + j] - m[size_t(j) * n + i];
            acc += r * r;
        }
    return acc;
}

// Tape version over Jacobian columns (differentiable through the entries).
inline ad::Var hamiltonian_constraint(const ad::JacobianOf<ad::Var>& jac) {
    using namespace ad;
    const uint32_t n = jac.n;
    if (n % 2 != 0) throw std::invalid_argument("hamiltonian constraint: dimension must be even");
    const std::vector<double> jt = SymplecticJ(n).transpose_matrix();
    std::vector<Var> mcols(n);
    for (uint32_t j = 0; j < n; ++j) mcols[j] = matvec_const(jt, jac.cols[j]);
    Var m = concat(std::span<const Var>(mcols));  // column-major pack of M = J^T A
    const std::vector<uint32_t> tidx = constrdyn::detail::transpose_index_map(n);
    Var r = sub(m, permute(m, tidx));
    return sum(square(r));
}

// C_H evaluated on the latent-space Jacobian d f_z / d z at z = g(s).
template <class V>
ad::Var transformed_hamiltonian_constraint(const ModelOnTape& model, const V& z) {
    if (model.kind != ModelKind::transformed_node)
        throw std::invalid_argument("transformed constraint requires a transformed model");
    auto jac = ad::jacobian([&model](auto zz) { return model.net(zz); }, z);
    return hamiltonian_constraint(jac);
}

inline ad::Var transformed_hamiltonian_constraint(ad::Tape& tape, const ModelOnTape& model,
                                                  std::span<const double> s) {
    ad::Var in = tape.constant(s);
    ad::Var z = model.coupling.forward(in);
    return transformed_hamiltonian_constraint(model, z);
}

// --- dissipative constraint --------------------------------------------------

struct DissipativeEval {
    double value = 0.0;
    std::vector<double> grad;  // d value / d A_ij, row-major
    bool any_flagged = false;
};

// sum_i max(0, Re[lambda_i] - a_i)^2 with eigenvalues sorted by descending
// real part (ties by descending imaginary part) before pairing with bounds.
// The gradient uses d lambda_k / dA = (conj(u_k) v_k^T) / (u_k^H v_k); flagged
// (ill-conditioned) eigenvalues contribute value but zero gradient.
inline DissipativeEval dissipative_constraint_with_grad(std::span<const double> jac, uint32_t n,
                                                        std::span<const double> bounds) {
    if (bounds.size() != n) throw std::invalid_argument("dissipative constraint: bounds size mismatch");
    EigenResult eg = eig_nonsymmetric(jac, n);

    std::vector<uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
        if (eg.values[a].real() != eg.values[b].real()) return eg.values[a].real() > eg.values[b].real();
        return eg.values[a].imag() > eg.values[b].imag();
    });

    DissipativeEval out;
    out.grad.assign(size_t(n) * n, 0.0);
    for (uint32_t i = 0; i < n; ++i) {
        const uint32_t k = order[i];
        const double excess = eg.values[k].real() - bounds[i];
        if (excess <= 0.0) continue;
        out.value += excess * excess;
        if (eg.ill_conditioned[k]) {
            out.any_flagged = true;
            continue;
        }
        auto u = eg.left_vector(k);
        auto v = eg.right_vector(k);
        std::complex<double> uv{0.0, 0.0};
        for (uint32_t r = 0; r < n; ++r) uv += std::conj(u[r]) * v[r];
        for (uint32_t r = 0; r < n; ++r)
            for (uint32_t c = 0; c < n; ++c) {
                const std::complex<double> dlam = std::conj(u[r]) * v[c] / uv;
                out.grad[size_t(r) * n + c] += 2.0 * excess * dlam.real();
            }
    }
    return out;
}

inline double dissipative_constraint(std::span<const double> jac, uint32_t n, std::span<const double> bounds) {
    return dissipative_constraint_with_grad(jac, n, bounds).value;
}

// Tape version: packs the Jacobian entries and attaches the analytic gradient
// as a frozen linear node.
inline ad::Var dissipative_constraint(const ad::JacobianOf<ad::Var>& jac, std::span<const double> bounds) {
    using namespace ad;
    const uint32_t n = jac.n;
    Tape& tape = tape_of(jac.cols[0]);
    Var packed = concat(std::span<const Var>(jac.cols));  // column-major: packed[j*n+i] = A_ij

    std::vector<double> a(size_t(n) * n);
    for (uint32_t j = 0; j < n; ++j) {
        auto col = tape.values(jac.cols[j]);
        for (uint32_t i = 0; i < n; ++i) a[size_t(i) * n + j] = col[i];
    }
    DissipativeEval ev = dissipative_constraint_with_grad(a, n, bounds);
    std::vector<double> grad_packed(size_t(n) * n);
    for (uint32_t j = 0; j < n; ++j)
        for (uint32_t i = 0; i < n; ++i) grad_packed[size_t(j) * n + i] = ev.grad[size_t(i) * n + j];
    return tape.frozen_grad(packed, ev.value, grad_packed);
}

// max_k |Re lambda_k(J B)| for symmetric positive definite B (test utility).
inline double hamiltonian_spectrum_check(std::span<const double> b, uint32_t n) {
    if (n % 2 != 0) throw std::invalid_argument("spectrum check: dimension must be even");
    if (!is_spd(b, n)) throw std::invalid_argument("spectrum check: matrix is not symmetric positive definite");
    const std::vector<double> j = SymplecticJ(n).matrix();
    std::vector<double> jb(size_t(n) * n, 0.0);
    for (uint32_t i = 0; i < n; ++i)
        for (uint32_t k = 0; k < n; ++k) {
            const double jik = j[size_t(i) * n + k];
            if (jik == 0.0) continue;
            for (uint32_t c = 0; c < n; ++c) jb[size_t(i) * n + c] += jik * b[size_t(k) * n + c];
        }
    EigenResult eg = eig_nonsymmetric(jb, n);
    double worst = 0.0;
    for (const auto& lam : eg.values) worst = std::max(worst, std::abs(lam.real()));
    return worst;
}

// --- per-sample penalty dispatch ---------------------------------------------

// Records the chosen penalty for one sample on the model's tape. Also returns
// the model prediction so callers reuse the Jacobian passes' value output.
struct PenaltyAndPrediction {
    ad::Var penalty;
    ad::Var prediction;
};

inline PenaltyAndPrediction constraint_penalty(ad::Tape& tape, const ModelOnTape& model,
                                               const ConstraintSpec& spec, ad::Var input,
                                               const std::function<void(const std::string&)>& warn = {}) {
    using namespace ad;
    PenaltyAndPrediction out;
    switch (spec.kind) {
        case ConstraintKind::none: {
            out.prediction = model(input);
            out.penalty = tape.constant_scalar(0.0);
            return out;
        }
        case ConstraintKind::hamiltonian: {
            auto jac = jacobian([&model](auto s) { return model(s); }, input);
            out.prediction = jac.value;
            out.penalty = hamiltonian_constraint(jac);
            return out;
        }
        case ConstraintKind::transformed_hamiltonian: {
            if (model.kind != ModelKind::transformed_node)
                throw std::invalid_argument("transformed constraint requires a transformed model");
            Var z = model.coupling.forward(input);
            auto jac_fz = jacobian([&model](auto zz) { return model.net(zz); }, z);
            Var zdot = jac_fz.value;
            out.prediction =
                eval_jvp_seeded([&model](auto zz) { return model.coupling.inverse(zz); }, z, zdot).tan;
            out.penalty = hamiltonian_constraint(jac_fz);
            return out;
        }
        case ConstraintKind::dissipative: {
            auto jac = jacobian([&model](auto s) { return model(s); }, input);
            out.prediction = jac.value;
            try {
                out.penalty = dissipative_constraint(jac, spec.bounds);
            } catch (const EigFailure& e) {
                if (warn)
                    warn(std::string("dissipative constraint skipped for one sample: ") + e.what());
                else
                    std::cerr << "warning: dissipative constraint skipped for one sample: " << e.what() << "\n";
                out.penalty = tape.constant_scalar(0.0);
            }
            return out;
        }
    }
    throw std::logic_error("constraint_penalty: bad kind");
}

}  // namespace constrdyn
