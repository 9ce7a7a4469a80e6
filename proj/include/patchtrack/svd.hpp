#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "patchtrack/core.hpp"
#include "patchtrack/sparse.hpp"

namespace patchtrack {

/// Leading singular triples, descending. `short_count` flags that fewer
/// triples than requested were attainable (rank or dimension limited).
struct SvdModes {
    std::vector<double> sigma;
    std::vector<std::vector<double>> U;  // over row_bins
    std::vector<std::vector<double>> V;  // over col_bins
    bool short_count = false;

    std::size_t count() const { return sigma.size(); }
};

namespace detail {

// Deterministic pseudorandom unit vector; mt19937 output is fixed by the standard.
inline std::vector<double> seeded_unit_vector(std::size_t dim, std::uint32_t seed) {
    std::mt19937 rng(seed);
    std::vector<double> v(dim);
    double norm2 = 0.0;
    for (auto& x : v) {
        x = static_cast<double>(rng()) * (1.0 / 4294967296.0) - 0.5;
        norm2 += x * x;
    }
    if (norm2 == 0.0) {
        v[0] = 1.0;
        norm2 = 1.0;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& x : v) x *= inv;
    return v;
}

// Two rounds of classical Gram-Schmidt against the leading `count` columns.
inline void reorthogonalize(std::vector<double>& w, const std::vector<std::vector<double>>& basis,
                            std::size_t count) {
    for (int round = 0; round < 2; ++round) {
        for (std::size_t i = 0; i < count; ++i) {
            const auto& b = basis[i];
            double d = 0.0;
            for (std::size_t k = 0; k < w.size(); ++k) d += w[k] * b[k];
            for (std::size_t k = 0; k < w.size(); ++k) w[k] -= d * b[k];
        }
    }
}

inline double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

inline void canonicalize_signs(const TransitionMatrix& a, SvdModes& modes) {
    for (std::size_t i = 0; i < modes.count(); ++i) {
        auto& v = modes.V[i];
        auto& u = modes.U[i];
        std::size_t arg = 0;
        for (std::size_t k = 1; k < v.size(); ++k)
            if (std::fabs(v[k]) > std::fabs(v[arg])) arg = k;
        if (v[arg] < 0.0)
            for (auto& x : v) x = -x;
        // Pick the u sign that keeps A v ~ sigma u.
        const auto av = a.matvec(v);
        double d = 0.0;
        for (std::size_t k = 0; k < u.size(); ++k) d += u[k] * av[k];
        if (d < 0.0)
            for (auto& x : u) x = -x;
    }
}

inline SvdModes dense_truncated_svd(const TransitionMatrix& a, std::size_t want) {
    const auto m = static_cast<Eigen::Index>(a.rows());
    const auto n = static_cast<Eigen::Index>(a.cols());
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(m, n);
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k)
            d(static_cast<Eigen::Index>(r), a.col_idx[k]) = a.values[k];

    Eigen::BDCSVD<Eigen::MatrixXd> svd(d, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& s = svd.singularValues();
    const double rank_tol =
        s.size() == 0 ? 0.0
                      : std::max(a.rows(), a.cols()) * std::numeric_limits<double>::epsilon() * s(0);

    SvdModes out;
    for (Eigen::Index i = 0; i < s.size() && out.sigma.size() < want; ++i) {
        if (!(s(i) > rank_tol)) break;
        out.sigma.push_back(s(i));
        out.U.emplace_back(svd.matrixU().col(i).data(), svd.matrixU().col(i).data() + m);
        out.V.emplace_back(svd.matrixV().col(i).data(), svd.matrixV().col(i).data() + n);
    }
    return out;
}

// Golub-Kahan-Lanczos bidiagonalization with full reorthogonalization.
// Extends the factorization until the leading `want` Ritz residuals drop
// below tol or the space is exhausted.
inline SvdModes lanczos_truncated_svd(const TransitionMatrix& a, std::size_t want) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    const std::size_t min_dim = std::min(m, n);

    std::vector<std::vector<double>> vbasis, ubasis;
    std::vector<double> alpha, beta;
    std::uint32_t seed = 0x9e3779b9u;

    auto fresh_v = [&](std::size_t count) -> bool {
        // New unit vector orthogonal to the current V basis (restart after breakdown).
        for (int attempt = 0; attempt < 8; ++attempt) {
            auto cand = seeded_unit_vector(n, seed++);
            reorthogonalize(cand, vbasis, count);
            const double nv = norm2(cand);
            if (nv > 1e-8) {
                for (auto& x : cand) x /= nv;
                vbasis.push_back(std::move(cand));
                return true;
            }
        }
        return false;
    };

    std::size_t k_target = std::min(min_dim, std::max<std::size_t>(4 * want + 8, 48));
    vbasis.push_back(seeded_unit_vector(n, seed++));

    SvdModes out;
    while (true) {
        while (alpha.size() < k_target) {
            const std::size_t j = alpha.size();
            if (j >= vbasis.size() && !fresh_v(j)) break;
            // u_j from A v_j
            auto p = a.matvec(vbasis[j]);
            if (j > 0 && !beta.empty() && beta.back() != 0.0 && j - 1 < ubasis.size()) {
                const auto& uprev = ubasis[j - 1];
                const double b = beta[j - 1];
                for (std::size_t i = 0; i < m; ++i) p[i] -= b * uprev[i];
            }
            reorthogonalize(p, ubasis, j);
            double av = norm2(p);
            if (av > 1e-14) {
                for (auto& x : p) x /= av;
            } else {
                av = 0.0;
                auto cand = seeded_unit_vector(m, seed++);
                reorthogonalize(cand, ubasis, j);
                const double nc = norm2(cand);
                if (nc <= 1e-8) break;  // row space exhausted
                for (auto& x : cand) x /= nc;
                p = std::move(cand);
            }
            alpha.push_back(av);
            ubasis.push_back(std::move(p));

            if (alpha.size() >= k_target) break;
            // v_{j+1} from A^T u_j
            auto r = a.transpose_matvec(ubasis[j]);
            if (av != 0.0) {
                const auto& vc = vbasis[j];
                for (std::size_t i = 0; i < n; ++i) r[i] -= av * vc[i];
            }
            reorthogonalize(r, vbasis, j + 1);
            double bv = norm2(r);
            if (bv > 1e-14) {
                for (auto& x : r) x /= bv;
                vbasis.push_back(std::move(r));
            } else {
                bv = 0.0;
                if (!fresh_v(j + 1)) {
                    beta.push_back(bv);
                    break;
                }
            }
            beta.push_back(bv);
        }

        const std::size_t k = alpha.size();
        if (k == 0) return out;  // zero matrix
        Eigen::MatrixXd b = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k),
                                                  static_cast<Eigen::Index>(k));
        for (std::size_t i = 0; i < k; ++i) {
            b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = alpha[i];
            if (i + 1 < k && i < beta.size())
                b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i + 1)) = beta[i];
        }
        Eigen::JacobiSVD<Eigen::MatrixXd> bsvd(b, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const auto& s = bsvd.singularValues();
        const std::size_t avail = std::min<std::size_t>(want, k);
        const double sigma1 = s.size() ? s(0) : 0.0;
        const double tol = std::max(1e-11 * sigma1, 1e-300);
        const double btail = beta.size() >= k && k > 0 ? beta[k - 1] : 0.0;

        bool converged = true;
        for (std::size_t i = 0; i < avail; ++i) {
            const double resid =
                std::fabs(btail) *
                std::fabs(bsvd.matrixU()(static_cast<Eigen::Index>(k - 1), static_cast<Eigen::Index>(i)));
            if (resid > tol) converged = false;
        }
        if (!converged && k_target < min_dim && k >= k_target) {
            k_target = std::min(min_dim, 2 * k_target);
            continue;
        }

        const double rank_tol =
            std::max(m, n) * std::numeric_limits<double>::epsilon() * (sigma1 > 0 ? sigma1 : 1.0);
        for (std::size_t i = 0; i < avail; ++i) {
            if (!(s(static_cast<Eigen::Index>(i)) > rank_tol)) break;
            std::vector<double> u(m, 0.0), v(n, 0.0);
            for (std::size_t j = 0; j < k; ++j) {
                const double cu = bsvd.matrixU()(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
                const double cv = bsvd.matrixV()(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
                const auto& uj = ubasis[j];
                const auto& vj = vbasis[j];
                for (std::size_t x = 0; x < m; ++x) u[x] += cu * uj[x];
                for (std::size_t x = 0; x < n; ++x) v[x] += cv * vj[x];
            }
            // Renormalize against accumulated rounding.
            const double nu = norm2(u), nv = norm2(v);
            if (nu > 0)
                for (auto& x : u) x /= nu;
            if (nv > 0)
                for (auto& x : v) x /= nv;
            out.sigma.push_back(s(static_cast<Eigen::Index>(i)));
            out.U.push_back(std::move(u));
            out.V.push_back(std::move(v));
        }
        return out;
    }
}

}  // namespace detail

/// Leading-N truncated SVD of a sparse transition matrix. Small problems
/// (min dimension <= 256) go through a dense decomposition; larger ones use
/// Lanczos bidiagonalization with full reorthogonalization. Right singular
/// vectors are sign-fixed so their largest-magnitude entry is positive.
inline SvdModes truncated_svd(const TransitionMatrix& a, int n_modes) {
    if (n_modes < 1) throw ConfigError("number of singular modes must be positive");
    if (a.rows() == 0 || a.cols() == 0) throw ConfigError("cannot decompose an empty matrix");
    const std::size_t want = static_cast<std::size_t>(n_modes);

    SvdModes out = std::min(a.rows(), a.cols()) <= 256 ? detail::dense_truncated_svd(a, want)
                                                       : detail::lanczos_truncated_svd(a, want);
    out.short_count = out.count() < want;
    detail::canonicalize_signs(a, out);
    return out;
}

}  // namespace patchtrack
