#pragma once

// Dense nonsymmetric eigendecomposition for small matrices (n <= 64):
// Householder reduction to Hessenberg form followed by the implicit
// double-shift QR iteration with accumulated transformations and
// back-substitution for eigenvectors. Left eigenvectors are obtained by
// running the same solver on the transpose.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace constrdyn {

struct EigFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EigenResult {
    uint32_t n = 0;
    std::vector<std::complex<double>> values;  // conjugate pairs adjacent
    std::vector<std::complex<double>> right;   // column-major, vector k at [k*n, k*n+n)
    std::vector<std::complex<double>> left;    // u_k with u_k^H A = lambda_k u_k^H
    std::vector<char> ill_conditioned;         // |u_k^H v_k| < threshold after normalization

    std::span<const std::complex<double>> right_vector(uint32_t k) const { return {right.data() + size_t(k) * n, n}; }
    std::span<const std::complex<double>> left_vector(uint32_t k) const { return {left.data() + size_t(k) * n, n}; }
};

namespace detail {

inline void cdiv(double xr, double xi, double yr, double yi, double& zr, double& zi) {
    if (std::abs(yr) > std::abs(yi)) {
        double r = yi / yr, d = yr + r * yi;
        zr = (xr + r * xi) / d;
        zi = (xi - r * xr) / d;
    } else {
        double r = yr / yi, d = yi + r * yr;
        zr = (r * xr + xi) / d;
        zi = (r * xi - xr) / d;
    }
}

class SchurSolver {
public:
    explicit SchurSolver(std::span<const double> a, uint32_t n) : nn(int(n)), H(a.begin(), a.end()) {
        V.assign(size_t(nn) * nn, 0.0);
        d.assign(nn, 0.0);
        e.assign(nn, 0.0);
        ort.assign(nn, 0.0);
        orthes();
        hqr2();
    }

    // eigenvalues
    std::vector<std::complex<double>> values() const {
        std::vector<std::complex<double>> v(nn);
        for (int i = 0; i < nn; ++i) v[i] = {d[i], e[i]};
        return v;
    }

    // unit-normalized right eigenvectors, column-major
    std::vector<std::complex<double>> vectors() const {
        std::vector<std::complex<double>> out(size_t(nn) * nn);
        for (int k = 0; k < nn; ++k) {
            if (e[k] == 0.0) {
                for (int i = 0; i < nn; ++i) out[size_t(k) * nn + i] = {V[idx(i, k)], 0.0};
            } else if (e[k] > 0.0) {
                for (int i = 0; i < nn; ++i) out[size_t(k) * nn + i] = {V[idx(i, k)], V[idx(i, k + 1)]};
            } else {
                for (int i = 0; i < nn; ++i) out[size_t(k) * nn + i] = {V[idx(i, k - 1)], -V[idx(i, k)]};
            }
        }
        for (int k = 0; k < nn; ++k) {
            double norm = 0.0;
            for (int i = 0; i < nn; ++i) norm += std::norm(out[size_t(k) * nn + i]);
            norm = std::sqrt(norm);
            if (norm > 0.0)
                for (int i = 0; i < nn; ++i) out[size_t(k) * nn + i] /= norm;
        }
        return out;
    }

private:
    int nn;
    std::vector<double> H, V, d, e, ort;

    size_t idx(int i, int j) const { return size_t(i) * nn + j; }

    void orthes() {
        const int low = 0, high = nn - 1;
        for (int m = low + 1; m <= high - 1; ++m) {
            double scale = 0.0;
            for (int i = m; i <= high; ++i) scale += std::abs(H[idx(i, m - 1)]);
            if (scale == 0.0) continue;

            double h = 0.0;
            for (int i = high; i >= m; --i) {
                ort[i] = H[idx(i, m - 1)] / scale;
                h += ort[i] * ort[i];
            }
            double g = std::sqrt(h);
            if (ort[m] > 0) g = -g;
            h -= ort[m] * g;
            ort[m] -= g;

            for (int j = m; j < nn; ++j) {
                double f = 0.0;
                for (int i = high; i >= m; --i) f += ort[i] * H[idx(i, j)];
                f /= h;
                for (int i = m; i <= high; ++i) H[idx(i, j)] -= f * ort[i];
            }
            for (int i = 0; i <= high; ++i) {
                double f = 0.0;
                for (int j = high; j >= m; --j) f += ort[j] * H[idx(i, j)];
                f /= h;
                for (int j = m; j <= high; ++j) H[idx(i, j)] -= f * ort[j];
            }
            ort[m] = scale * ort[m];
            H[idx(m, m - 1)] = scale * g;
        }

        for (int i = 0; i < nn; ++i)
            for (int j = 0; j < nn; ++j) V[idx(i, j)] = i == j ? 1.0 : 0.0;
        for (int m = high - 1; m >= low + 1; --m) {
            if (H[idx(m, m - 1)] == 0.0) continue;
            for (int i = m + 1; i <= high; ++i) ort[i] = H[idx(i, m - 1)];
            for (int j = m; j <= high; ++j) {
                double g = 0.0;
                for (int i = m; i <= high; ++i) g += ort[i] * V[idx(i, j)];
                g = (g / ort[m]) / H[idx(m, m - 1)];
                for (int i = m; i <= high; ++i) V[idx(i, j)] += g * ort[i];
            }
        }
    }

    void hqr2() {
        const double eps = std::pow(2.0, -52.0);
        const int low = 0, high = nn - 1;
        int n = nn - 1;
        double exshift = 0.0;
        double p = 0, q = 0, r = 0, s = 0, z = 0, t, w, x, y;
        long budget = 30L * std::max(nn, 1);

        double norm = 0.0;
        for (int i = 0; i < nn; ++i)
            for (int j = std::max(i - 1, 0); j < nn; ++j) norm += std::abs(H[idx(i, j)]);

        int iter = 0;
        while (n >= low) {
            int l = n;
            while (l > low) {
                s = std::abs(H[idx(l - 1, l - 1)]) + std::abs(H[idx(l, l)]);
                if (s == 0.0) s = norm;
                if (std::abs(H[idx(l, l - 1)]) < eps * s) break;
                --l;
            }

            if (l == n) {
                H[idx(n, n)] += exshift;
                d[n] = H[idx(n, n)];
                e[n] = 0.0;
                --n;
                iter = 0;
            } else if (l == n - 1) {
                w = H[idx(n, n - 1)] * H[idx(n - 1, n)];
                p = (H[idx(n - 1, n - 1)] - H[idx(n, n)]) / 2.0;
                q = p * p + w;
                z = std::sqrt(std::abs(q));
                H[idx(n, n)] += exshift;
                H[idx(n - 1, n - 1)] += exshift;
                x = H[idx(n, n)];
                if (q >= 0) {
                    z = p >= 0 ? p + z : p - z;
                    d[n - 1] = x + z;
                    d[n] = d[n - 1];
                    if (z != 0.0) d[n] = x - w / z;
                    e[n - 1] = 0.0;
                    e[n] = 0.0;
                    x = H[idx(n, n - 1)];
                    s = std::abs(x) + std::abs(z);
                    p = x / s;
                    q = z / s;
                    r = std::sqrt(p * p + q * q);
                    p /= r;
                    q /= r;
                    for (int j = n - 1; j < nn; ++j) {
                        z = H[idx(n - 1, j)];
                        H[idx(n - 1, j)] = q * z + p * H[idx(n, j)];
                        H[idx(n, j)] = q * H[idx(n, j)] - p * z;
                    }
                    for (int i = 0; i <= n; ++i) {
                        z = H[idx(i, n - 1)];
                        H[idx(i, n - 1)] = q * z + p * H[idx(i, n)];
                        H[idx(i, n)] = q * H[idx(i, n)] - p * z;
                    }
                    for (int i = low; i <= high; ++i) {
                        z = V[idx(i, n - 1)];
                        V[idx(i, n - 1)] = q * z + p * V[idx(i, n)];
                        V[idx(i, n)] = q * V[idx(i, n)] - p * z;
                    }
                } else {
                    d[n - 1] = x + p;
                    d[n] = x + p;
                    e[n - 1] = z;
                    e[n] = -z;
                }
                n -= 2;
                iter = 0;
            } else {
                x = H[idx(n, n)];
                y = 0.0;
                w = 0.0;
                if (l < n) {
                    y = H[idx(n - 1, n - 1)];
                    w = H[idx(n, n - 1)] * H[idx(n - 1, n)];
                }

                if (iter == 10 || iter == 20) {
                    exshift += x;
                    for (int i = low; i <= n; ++i) H[idx(i, i)] -= x;
                    s = std::abs(H[idx(n, n - 1)]) + std::abs(H[idx(n - 1, n - 2)]);
                    x = y = 0.75 * s;
                    w = -0.4375 * s * s;
                }
                ++iter;
                if (--budget < 0) throw EigFailure("eig: QR iteration did not converge");

                int m = n - 2;
                while (m >= l) {
                    z = H[idx(m, m)];
                    r = x - z;
                    s = y - z;
                    p = (r * s - w) / H[idx(m + 1, m)] + H[idx(m, m + 1)];
                    q = H[idx(m + 1, m + 1)] - z - r - s;
                    r = H[idx(m + 2, m + 1)];
                    s = std::abs(p) + std::abs(q) + std::abs(r);
                    p /= s;
                    q /= s;
                    r /= s;
                    if (m == l) break;
                    if (std::abs(H[idx(m, m - 1)]) * (std::abs(q) + std::abs(r)) <
                        eps * (std::abs(p) * (std::abs(H[idx(m - 1, m - 1)]) + std::abs(z) + std::abs(H[idx(m + 1, m + 1)]))))
                        break;
                    --m;
                }
                for (int i = m + 2; i <= n; ++i) {
                    H[idx(i, i - 2)] = 0.0;
                    if (i > m + 2) H[idx(i, i - 3)] = 0.0;
                }

                for (int k = m; k <= n - 1; ++k) {
                    const bool notlast = k != n - 1;
                    if (k != m) {
                        p = H[idx(k, k - 1)];
                        q = H[idx(k + 1, k - 1)];
                        r = notlast ? H[idx(k + 2, k - 1)] : 0.0;
                        x = std::abs(p) + std::abs(q) + std::abs(r);
                        if (x == 0.0) continue;
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                    s = std::sqrt(p * p + q * q + r * r);
                    if (p < 0) s = -s;
                    if (s == 0.0) continue;
                    if (k != m)
                        H[idx(k, k - 1)] = -s * x;
                    else if (l != m)
                        H[idx(k, k - 1)] = -H[idx(k, k - 1)];
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;

                    for (int j = k; j < nn; ++j) {
                        p = H[idx(k, j)] + q * H[idx(k + 1, j)];
                        if (notlast) p += r * H[idx(k + 2, j)];
                        H[idx(k, j)] -= p * x;
                        H[idx(k + 1, j)] -= p * y;
                        if (notlast) H[idx(k + 2, j)] -= p * z;
                    }
                    const int up = std::min(n, k + 3);
                    for (int i = 0; i <= up; ++i) {
                        p = x * H[idx(i, k)] + y * H[idx(i, k + 1)];
                        if (notlast) p += z * H[idx(i, k + 2)];
                        H[idx(i, k)] -= p;
                        H[idx(i, k + 1)] -= p * q;
                        if (notlast) H[idx(i, k + 2)] -= p * r;
                    }
                    for (int i = low; i <= high; ++i) {
                        p = x * V[idx(i, k)] + y * V[idx(i, k + 1)];
                        if (notlast) p += z * V[idx(i, k + 2)];
                        V[idx(i, k)] -= p;
                        V[idx(i, k + 1)] -= p * q;
                        if (notlast) V[idx(i, k + 2)] -= p * r;
                    }
                }
            }
        }

        if (norm == 0.0) return;

        // back-substitution: eigenvectors of the quasi-triangular matrix
        for (n = nn - 1; n >= 0; --n) {
            p = d[n];
            q = e[n];
            if (q == 0.0) {
                int l = n;
                H[idx(n, n)] = 1.0;
                for (int i = n - 1; i >= 0; --i) {
                    w = H[idx(i, i)] - p;
                    r = 0.0;
                    for (int j = l; j <= n; ++j) r += H[idx(i, j)] * H[idx(j, n)];
                    if (e[i] < 0.0) {
                        z = w;
                        s = r;
                    } else {
                        l = i;
                        if (e[i] == 0.0) {
                            H[idx(i, n)] = w != 0.0 ? -r / w : -r / (eps * norm);
                        } else {
                            x = H[idx(i, i + 1)];
                            y = H[idx(i + 1, i)];
                            double qq = (d[i] - p) * (d[i] - p) + e[i] * e[i];
                            t = (x * s - z * r) / qq;
                            H[idx(i, n)] = t;
                            H[idx(i + 1, n)] = std::abs(x) > std::abs(z) ? (-r - w * t) / x : (-s - y * t) / z;
                        }
                        t = std::abs(H[idx(i, n)]);
                        if (eps * t * t > 1)
                            for (int j = i; j <= n; ++j) H[idx(j, n)] /= t;
                    }
                }
            } else if (q < 0.0) {
                int l = n - 1;
                if (std::abs(H[idx(n, n - 1)]) > std::abs(H[idx(n - 1, n)])) {
                    H[idx(n - 1, n - 1)] = q / H[idx(n, n - 1)];
                    H[idx(n - 1, n)] = -(H[idx(n, n)] - p) / H[idx(n, n - 1)];
                } else {
                    cdiv(0.0, -H[idx(n - 1, n)], H[idx(n - 1, n - 1)] - p, q, H[idx(n - 1, n - 1)], H[idx(n - 1, n)]);
                }
                H[idx(n, n - 1)] = 0.0;
                H[idx(n, n)] = 1.0;
                for (int i = n - 2; i >= 0; --i) {
                    double ra = 0.0, sa = 0.0;
                    for (int j = l; j <= n; ++j) {
                        ra += H[idx(i, j)] * H[idx(j, n - 1)];
                        sa += H[idx(i, j)] * H[idx(j, n)];
                    }
                    w = H[idx(i, i)] - p;
                    if (e[i] < 0.0) {
                        z = w;
                        r = ra;
                        s = sa;
                    } else {
                        l = i;
                        if (e[i] == 0.0) {
                            cdiv(-ra, -sa, w, q, H[idx(i, n - 1)], H[idx(i, n)]);
                        } else {
                            x = H[idx(i, i + 1)];
                            y = H[idx(i + 1, i)];
                            double vr = (d[i] - p) * (d[i] - p) + e[i] * e[i] - q * q;
                            double vi = (d[i] - p) * 2.0 * q;
                            if (vr == 0.0 && vi == 0.0)
                                vr = eps * norm * (std::abs(w) + std::abs(q) + std::abs(x) + std::abs(y) + std::abs(z));
                            cdiv(x * r - z * ra + q * sa, x * s - z * sa - q * ra, vr, vi, H[idx(i, n - 1)],
                                 H[idx(i, n)]);
                            if (std::abs(x) > std::abs(z) + std::abs(q)) {
                                H[idx(i + 1, n - 1)] = (-ra - w * H[idx(i, n - 1)] + q * H[idx(i, n)]) / x;
                                H[idx(i + 1, n)] = (-sa - w * H[idx(i, n)] - q * H[idx(i, n - 1)]) / x;
                            } else {
                                cdiv(-r - y * H[idx(i, n - 1)], -s - y * H[idx(i, n)], z, q, H[idx(i + 1, n - 1)],
                                     H[idx(i + 1, n)]);
                            }
                        }
                        t = std::max(std::abs(H[idx(i, n - 1)]), std::abs(H[idx(i, n)]));
                        if (eps * t * t > 1)
                            for (int j = i; j <= n; ++j) {
                                H[idx(j, n - 1)] /= t;
                                H[idx(j, n)] /= t;
                            }
                    }
                }
            }
        }

        // transform back to the original basis
        for (int j = nn - 1; j >= low; --j) {
            for (int i = low; i <= high; ++i) {
                z = 0.0;
                for (int k = low; k <= std::min(j, high); ++k) z += V[idx(i, k)] * H[idx(k, j)];
                V[idx(i, j)] = z;
            }
        }
    }
};

}  // namespace detail

// Full decomposition with left and right eigenvectors. Left vectors come from
// the transpose problem, matched to the right problem's eigenvalues; an
// eigenvalue is flagged ill-conditioned when |u^H v| < flag_threshold.
inline EigenResult eig_nonsymmetric(std::span<const double> a, uint32_t n, double flag_threshold = 1e-8) {
    if (n == 0 || a.size() != size_t(n) * n) throw std::invalid_argument("eig: matrix must be square");
    if (n > 64) throw std::invalid_argument("eig: dimension limit is 64");
    for (double x : a)
        if (!std::isfinite(x)) throw std::invalid_argument("eig: non-finite entries");

    detail::SchurSolver rs(a, n);

    std::vector<double> at(size_t(n) * n);
    for (uint32_t i = 0; i < n; ++i)
        for (uint32_t j = 0; j < n; ++j) at[size_t(j) * n + i] = a[size_t(i) * n + j];
    detail::SchurSolver ls(at, n);

    EigenResult out;
    out.n = n;
    out.values = rs.values();
    out.right = rs.vectors();
    out.left.assign(size_t(n) * n, {0.0, 0.0});
    out.ill_conditioned.assign(n, 0);

    const std::vector<std::complex<double>> lvals = ls.values();
    const std::vector<std::complex<double>> lvecs = ls.vectors();

    // A^T u = conj(lambda) u makes u the left vector for lambda, so u_k is the
    // transpose-problem vector matched to conj(lambda_k)
    std::vector<char> used(n, 0);
    for (uint32_t k = 0; k < n; ++k) {
        const std::complex<double> target = std::conj(out.values[k]);
        uint32_t best = n;
        double best_dist = std::numeric_limits<double>::infinity();
        for (uint32_t j = 0; j < n; ++j) {
            if (used[j]) continue;
            double dist = std::abs(lvals[j] - target);
            if (dist < best_dist) {
                best_dist = dist;
                best = j;
            }
        }
        used[best] = 1;
        for (uint32_t i = 0; i < n; ++i) out.left[size_t(k) * n + i] = lvecs[size_t(best) * n + i];
    }

    for (uint32_t k = 0; k < n; ++k) {
        std::complex<double> uv{0.0, 0.0};
        for (uint32_t i = 0; i < n; ++i)
            uv += std::conj(out.left[size_t(k) * n + i]) * out.right[size_t(k) * n + i];
        if (std::abs(uv) < flag_threshold) out.ill_conditioned[k] = 1;
    }
    return out;
}

// Cholesky-based SPD validation; returns false when a pivot fails.
inline bool is_spd(std::span<const double> a, uint32_t n) {
    std::vector<double> L(size_t(n) * n, 0.0);
    for (uint32_t i = 0; i < n; ++i) {
        for (uint32_t j = 0; j <= i; ++j) {
            if (std::abs(a[size_t(i) * n + j] - a[size_t(j) * n + i]) >
                1e-12 * (1.0 + std::abs(a[size_t(i) * n + j])))
                return false;
            double acc = a[size_t(i) * n + j];
            for (uint32_t k = 0; k < j; ++k) acc -= L[size_t(i) * n + k] * L[size_t(j) * n + k];
            if (i == j) {
                if (acc <= 0.0) return false;
                L[size_t(i) * n + i] = std::sqrt(acc);
            } else {
                L[size_t(i) * n + j] = acc / L[size_t(j) * n + j];
            }
        }
    }
    return true;
}

}  // namespace constrdyn
