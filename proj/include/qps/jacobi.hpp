#pragma once

#include <memory>
#include <numeric>
#include <random>

#include "qps/torus.hpp"

#ifndef QPS_LAPACK_COMPLEX_DEFINED
#define QPS_LAPACK_COMPLEX_DEFINED
#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#endif
#include <complex>
#include <lapacke.h>

namespace qps {

// Dirichlet truncation of (Hu)_n = u_{n+1} + u_{n-1} + lambda V(theta+n alpha) u_n
// onto sites -L..L.  Off-diagonals are all 1.
struct TruncatedOperator {
    long L{};
    std::vector<double> diag; // size 2L+1, index i <-> site i-L
    mutable std::shared_ptr<std::vector<double>> eig_cache;

    long n() const { return 2 * L + 1; }
    long site_index(long site) const { return site + L; }
};

inline TruncatedOperator build_operator(const TorusSeries& V, double lambda,
                                        const FrequencyVector& alpha,
                                        const std::vector<double>& theta, long L) {
    TruncatedOperator op;
    op.L = L;
    op.diag.resize(2 * L + 1);
    int d = alpha.dim();
    std::vector<double> th(d);
    for (long i = 0; i <= 2 * L; ++i) {
        long site = i - L;
        for (int k = 0; k < d; ++k) th[k] = theta[k] + site * alpha.alpha[k];
        op.diag[i] = lambda * V.eval_scalar(th);
    }
    return op;
}

// Number of eigenvalues strictly below x (Sturm / LDL^T sign count).
inline long sturm_count(const TruncatedOperator& op, double x) {
    long cnt = 0;
    double d = op.diag[0] - x;
    if (d < 0) ++cnt;
    for (long i = 1; i < op.n(); ++i) {
        if (d == 0.0) d = -1e-300;
        d = (op.diag[i] - x) - 1.0 / d;
        if (d < 0) ++cnt;
    }
    return cnt;
}

inline bool eigenvalue_within(const TruncatedOperator& op, double E, double delta) {
    return sturm_count(op, E + delta) > sturm_count(op, E - delta);
}

inline const std::vector<double>& all_eigenvalues(const TruncatedOperator& op) {
    if (!op.eig_cache) {
        auto eig = std::make_shared<std::vector<double>>(op.diag);
        std::vector<double> e(op.n() - 1, 1.0);
        lapack_int info = LAPACKE_dsterf(lapack_int(op.n()), eig->data(), e.data());
        if (info != 0) throw std::runtime_error("dsterf failed, info=" + std::to_string(info));
        op.eig_cache = eig;
    }
    return *op.eig_cache;
}

namespace detail {

inline std::vector<double> eigenvalues_by_bisection(const TruncatedOperator& op, double a, double b) {
    lapack_int n = lapack_int(op.n());
    std::vector<double> e(op.n() - 1, 1.0);
    std::vector<double> w(op.n());
    std::vector<lapack_int> iblock(op.n()), isplit(op.n());
    lapack_int m = 0, nsplit = 0;
    lapack_int info = LAPACKE_dstebz('V', 'B', n, a, b, 0, 0, 0.0, op.diag.data(), e.data(), &m,
                                     &nsplit, w.data(), iblock.data(), isplit.data());
    if (info != 0) throw std::runtime_error("dstebz failed, info=" + std::to_string(info));
    w.resize(m);
    return w;
}

// Center-site weights |v(0)|^2 + |v(1)|^2 for the given (sorted) eigenvalues.
// Inverse iteration with one LU per eigenvalue; vectors are orthogonalized
// only inside near-degenerate clusters, which keeps dense spectra from
// triggering quadratic reorthogonalization.
inline std::vector<double> center_weights(const TruncatedOperator& op,
                                          const std::vector<double>& eigs) {
    lapack_int n = lapack_int(op.n());
    std::vector<double> weights(eigs.size());
    long i0 = op.site_index(0), i1 = op.site_index(1);
    const double cluster_gap = 1e-8;
    std::vector<std::vector<double>> cluster;
    std::vector<double> dl(op.n() - 1), dd(op.n()), du(op.n() - 1), du2(op.n() - 2);
    std::vector<lapack_int> ipiv(op.n());
    std::vector<double> v(op.n());
    std::mt19937_64 rng(12345);
    std::normal_distribution<double> gauss;
    for (size_t j = 0; j < eigs.size(); ++j) {
        if (j > 0 && eigs[j] - eigs[j - 1] >= cluster_gap) cluster.clear();
        // a factorization at the exact eigenvalue can be singular; nudge the
        // shift until the LU succeeds and the iterates stay finite
        double shift = eigs[j];
        bool solved = false;
        for (int attempt = 0; attempt < 4 && !solved; ++attempt) {
            std::fill(dl.begin(), dl.end(), 1.0);
            std::fill(du.begin(), du.end(), 1.0);
            for (long i = 0; i < op.n(); ++i) dd[i] = op.diag[i] - shift;
            lapack_int info =
                LAPACKE_dgttrf(n, dl.data(), dd.data(), du.data(), du2.data(), ipiv.data());
            if (info < 0) throw std::runtime_error("dgttrf failed, info=" + std::to_string(info));
            if (info > 0) {
                shift = eigs[j] + (attempt + 1) * 1e-12 * std::max(1.0, std::abs(eigs[j]));
                continue;
            }
            rng.seed(0x9e3779b97f4a7c15ull ^ ((j + attempt) * 0x100000001b3ull));
            for (auto& x : v) x = gauss(rng);
            solved = true;
            for (int sweep = 0; sweep < 2 && solved; ++sweep) {
                double nn = 0;
                for (auto x : v) nn += x * x;
                nn = std::sqrt(nn);
                for (auto& x : v) x /= nn;
                info = LAPACKE_dgttrs(LAPACK_COL_MAJOR, 'N', n, 1, dl.data(), dd.data(), du.data(),
                                      du2.data(), ipiv.data(), v.data(), n);
                if (info != 0) solved = false;
                for (auto x : v)
                    if (!std::isfinite(x)) { solved = false; break; }
            }
            if (!solved) shift = eigs[j] + (attempt + 1) * 1e-12 * std::max(1.0, std::abs(eigs[j]));
        }
        if (!solved) throw std::runtime_error("center_weights: inverse iteration failed");
        for (auto& prev : cluster) {
            double dot = 0;
            for (long i = 0; i < op.n(); ++i) dot += prev[i] * v[i];
            for (long i = 0; i < op.n(); ++i) v[i] -= dot * prev[i];
        }
        double nn = 0;
        for (auto x : v) nn += x * x;
        nn = std::sqrt(nn);
        for (auto& x : v) x /= nn;
        double v0 = v[i0], v1 = v[i1];
        weights[j] = v0 * v0 + v1 * v1;
        bool next_clustered = j + 1 < eigs.size() && eigs[j + 1] - eigs[j] < cluster_gap;
        if (next_clustered && cluster.size() < 8)
            cluster.push_back(v);
        else if (!next_clustered)
            cluster.clear();
    }
    return weights;
}

} // namespace detail

struct EigenSlice {
    std::vector<double> eigs;
    std::vector<double> weights; // |v(0)|^2 + |v(1)|^2 per eigenvalue
};

// Eigenpair data for eigenvalues in (a,b]; uses the cached full spectrum when
// available or cheap, bisection otherwise.
inline EigenSlice eigenpairs_in(const TruncatedOperator& op, double a, double b) {
    EigenSlice s;
    long count = sturm_count(op, b) - sturm_count(op, a);
    if (count <= 0) return s;
    if (op.eig_cache || (op.n() <= 45000 && count > 512)) {
        const auto& all = all_eigenvalues(op);
        auto lo = std::lower_bound(all.begin(), all.end(), a);
        auto hi = std::upper_bound(all.begin(), all.end(), b);
        s.eigs.assign(lo, hi);
    } else {
        s.eigs = detail::eigenvalues_by_bisection(op, a, b);
    }
    s.weights = detail::center_weights(op, s.eigs);
    return s;
}

struct SpectralMeasureEstimate {
    double a{}, b{};
    double mass{};
    long L{};
    long richness{};    // eigenvalues in the interval
    bool edge_flagged{}; // an endpoint sits within 10/L of an eigenvalue
};

// mu(a,b) estimate: sum of center weights over eigenvalues in (a,b),
// eigenvalues within 10/L of an endpoint contributing half weight.
inline SpectralMeasureEstimate spectral_measure(const TruncatedOperator& op, double a, double b) {
    double edge = 10.0 / double(op.L);
    EigenSlice s = eigenpairs_in(op, a, b);
    SpectralMeasureEstimate est;
    est.a = a;
    est.b = b;
    est.L = op.L;
    est.richness = long(s.eigs.size());
    double mass = 0;
    for (size_t i = 0; i < s.eigs.size(); ++i) {
        double w = s.weights[i];
        if (s.eigs[i] - a < edge || b - s.eigs[i] < edge) w *= 0.5;
        mass += w;
    }
    est.mass = mass;
    est.edge_flagged = eigenvalue_within(op, a, edge) || eigenvalue_within(op, b, edge);
    return est;
}

// Borel transform M(z) = <d0,(H-z)^{-1}d0> + <d1,(H-z)^{-1}d1>, Im z > 0.
inline cd borel_transform(const TruncatedOperator& op, cd z) {
    if (z.imag() <= 0) throw std::invalid_argument("borel_transform: need Im z > 0");
    lapack_int n = lapack_int(op.n());
    std::vector<cd> dl(op.n() - 1, cd(1.0)), du(op.n() - 1, cd(1.0)), dg(op.n());
    for (long i = 0; i < op.n(); ++i) dg[i] = cd(op.diag[i]) - z;
    std::vector<cd> rhs(size_t(n) * 2, cd(0.0));
    rhs[op.site_index(0)] = 1.0;           // column 0: delta_0
    rhs[size_t(n) + op.site_index(1)] = 1.0; // column 1: delta_1
    lapack_int info = LAPACKE_zgtsv(LAPACK_COL_MAJOR, n, 2, dl.data(), dg.data(), du.data(),
                                    rhs.data(), n);
    if (info != 0) throw std::runtime_error("zgtsv failed, info=" + std::to_string(info));
    return rhs[op.site_index(0)] + rhs[size_t(n) + op.site_index(1)];
}

// Weyl m-functions from the l^2-decaying half-line solutions, built by
// backward Riccati recursion from the Dirichlet boundaries.
inline std::pair<cd, cd> m_functions(const TruncatedOperator& op, cd z) {
    if (z.imag() <= 0) throw std::invalid_argument("m_functions: need Im z > 0");
    // m+: rho(n) = u(n+1)/u(n), seed rho(L) = 0, rho(n-1) = 1/(z - V(n) - rho(n))
    cd rho = 0.0;
    for (long site = op.L; site >= 1; --site)
        rho = 1.0 / (z - op.diag[op.site_index(site)] - rho);
    cd mplus = -rho;
    // m-: sigma(n) = u(n-1)/u(n), seed sigma(-L) = 0, sigma(n+1) = 1/(z - V(n) - sigma(n))
    cd sigma = 0.0;
    for (long site = -op.L; site <= 0; ++site)
        sigma = 1.0 / (z - op.diag[op.site_index(site)] - sigma);
    cd mminus = 1.0 / sigma;
    return {mplus, mminus};
}

// Phase-averaged-free IDS of the truncation: counting function at E.
inline double ids_counting(const TruncatedOperator& op, double E) {
    return double(sturm_count(op, E)) / double(op.n());
}

// E flagged in-spectrum iff the truncated operator has an eigenvalue within
// 5/L of E at two truncation sizes.
inline bool in_spectrum(const TorusSeries& V, double lambda, const FrequencyVector& alpha,
                        const std::vector<double>& theta, double E, long L) {
    TruncatedOperator op1 = build_operator(V, lambda, alpha, theta, L);
    TruncatedOperator op2 = build_operator(V, lambda, alpha, theta, L / 2);
    return eigenvalue_within(op1, E, 5.0 / double(L)) &&
           eigenvalue_within(op2, E, 5.0 / double(L / 2));
}

} // namespace qps
