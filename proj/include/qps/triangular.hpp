#pragma once

#include "qps/torus.hpp"

namespace qps {

// T = (e^{2 pi i gamma}, c; 0, e^{-2 pi i gamma}), det T = 1 exactly.
struct TriangularUnimodular {
    double gamma{};
    cd c{};
    Mat2c matrix() const {
        cd u = std::polar(1.0, TWO_PI * gamma);
        return {u, c, cd(0.0), std::conj(u)};
    }
};

namespace detail {

struct Reduced {
    double w;   // x - round(x)
    long m;     // round(x)
};
inline Reduced reduce_int(double x) {
    double r = std::round(x);
    return {x - r, long(r)};
}

// sin(k pi w)/sin(pi w) for |w| <= 1/2, stable for all k (|result| <= k).
inline double sin_ratio(long k, double w) {
    double den = std::sin(M_PI * w);
    if (den == 0.0) return double(k);
    double y = double(k) * w;
    if (std::abs(y) > 0.5) y -= 2.0 * std::round(0.5 * y);
    return std::sin(M_PI * y) / den;
}

// 1 - sin(k h)/(k sin h) via series, valid for |k h| small.
inline double one_minus_dirichlet_series(double k, double h) {
    double h2 = h * h;
    double k2 = k * k;
    double num = (k2 - 1.0) * h2 / 6.0 - (k2 * k2 - 1.0) * h2 * h2 / 120.0 +
                 (k2 * k2 * k2 - 1.0) * h2 * h2 * h2 / 5040.0;
    double s = (h == 0.0) ? 1.0 : std::sin(h) / h;
    return num / s;
}

} // namespace detail

// Closed-form X_k = sum_{j=1..k} (T^{2j-1})^* T^{2j-1} in O(1) (geometric
// sums), with removable singularities at the rotation resonances handled by
// direct bounded-length summation / series limits.
inline Mat2c closed_form_Xk(const TriangularUnimodular& T, long k) {
    if (k < 1) throw std::invalid_argument("closed_form_Xk: k >= 1");
    double g = T.gamma - std::floor(T.gamma);
    cd c = T.c;
    double cc = sqr_abs(c);

    double w2 = detail::reduce_int(2.0 * g).w;
    auto [w4, m4] = detail::reduce_int(4.0 * g);
    double phi = M_PI * w2; // sin(2 pi gamma) = +- sin(phi)
    cd e_mg = std::polar(1.0, -TWO_PI * g); // e^{-2 pi i gamma}

    // x_{k,1}
    cd x1;
    if (double(k) * std::abs(phi) < 0.01) {
        // near gamma in (1/2)Z: sum the per-term ratios directly
        cd step = std::polar(1.0, -TWO_PI * w2);
        cd ph(1.0, 0.0);
        cd acc(0.0, 0.0);
        double sphi = std::sin(phi);
        for (long j = 1; j <= k; ++j) {
            double m = double(2 * j - 1);
            double ratio = (sphi == 0.0) ? m : std::sin(m * phi) / sphi;
            acc += ph * ratio;
            ph *= step;
        }
        x1 = c * e_mg * acc;
    } else {
        cd q = std::polar(1.0, -TWO_PI * w2); // e^{-4 pi i gamma}
        double sr_k = (m4 % 2 != 0 && (k - 1) % 2 != 0) ? -detail::sin_ratio(k, w4)
                                                        : detail::sin_ratio(k, w4);
        double y = 2.0 * double(k - 1) * g;
        cd phase = std::polar(1.0, -TWO_PI * (y - std::round(y)));
        cd G = phase * sr_k; // sum_{j=0}^{k-1} e^{-8 pi i j gamma}
        x1 = c * e_mg * (q * G - double(k)) / (q - 1.0);
    }

    // x_{k,2} = k + |c|^2 S,  S = (k/2)(1 - R8)/sin^2(phi)
    double S;
    double sphi = std::sin(phi);
    if (sphi == 0.0) {
        S = double(k) * (4.0 * double(k) * double(k) - 1.0) / 3.0;
    } else if (double(k) * std::abs(phi) < 0.005 && m4 % 2 == 0) {
        double psi = 2.0 * phi; // here w4 = 2 w2 exactly
        double one_minus_R8 = detail::one_minus_dirichlet_series(2.0 * double(k), psi);
        S = 0.5 * double(k) * one_minus_R8 / (sphi * sphi);
    } else {
        double r8 = detail::sin_ratio(2 * k, w4) / (2.0 * double(k));
        double R8 = (m4 % 2 != 0) ? -r8 : r8;
        S = 0.5 * double(k) * (1.0 - R8) / (sphi * sphi);
    }
    double x2 = double(k) + cc * S;

    return {cd(double(k)), x1, std::conj(x1), cd(x2)};
}

// det X_k closed form: k^2 (1 + |c|^2/|e^{-4pi i gamma}-1|^2 (1 - (sin 4pi k gamma / (k sin 4pi gamma))^2)).
inline double closed_form_det_Xk(const TriangularUnimodular& T, long k) {
    double g = T.gamma - std::floor(T.gamma);
    double cc = sqr_abs(T.c);
    double w2 = detail::reduce_int(2.0 * g).w;
    double w4 = detail::reduce_int(4.0 * g).w;
    double phi = M_PI * w2;
    double eta = M_PI * w4;
    double sphi = std::sin(phi);
    double kk = double(k);
    if (sphi == 0.0) return kk * kk * (1.0 + cc * (kk * kk - 1.0) / 3.0);
    double one_minus_u2;
    if (kk * std::abs(eta) < 0.01) {
        double omu = detail::one_minus_dirichlet_series(kk, eta);
        one_minus_u2 = omu * (2.0 - omu);
    } else {
        double u = detail::sin_ratio(k, w4) / kk;
        one_minus_u2 = 1.0 - u * u;
    }
    return kk * kk * (1.0 + cc * one_minus_u2 / (4.0 * sphi * sphi));
}

struct XkBounds {
    double lower{};  // k/1600 certified smallest-singular-value bound
    double upper{};  // 800 k (1 + k^2 |c|^2) norm bound
    double smin_measured{};
    double norm_measured{};
    bool ok{};
};

// Two-case certified bounds carried through with explicit constants; the
// weaker Case-2 constant 1/1600 is asserted (Case 1 alone would give k/32).
inline XkBounds xk_two_case_bounds(const TriangularUnimodular& T, long k) {
    Mat2c X = closed_form_Xk(T, k);
    XkBounds b;
    b.lower = double(k) / 1600.0;
    double cc = sqr_abs(T.c);
    b.upper = 800.0 * double(k) * (1.0 + double(k) * double(k) * cc);
    // Hermitian PSD: singular values are the eigenvalues
    double tr = X.tr().real();
    double det = X.det().real();
    double disc = std::max(0.0, tr * tr - 4.0 * det);
    double lmax = 0.5 * (tr + std::sqrt(disc));
    double lmin = (lmax > 0) ? det / lmax : 0.0;
    b.smin_measured = lmin;
    b.norm_measured = lmax;
    b.ok = lmin >= b.lower * (1.0 - 1e-10) && lmax <= b.upper * (1.0 + 1e-10);
    return b;
}

// max over a theta grid of || sum_j (Ttilde_{2j-1})^* Ttilde_{2j-1} - X_k ||
// for a perturbed cocycle Ttilde over (alpha); hypothesis
// ||Ttilde - T||_0 <= (1/100) k^{-2} (1+2|c|k)^{-2} is checked.
inline double perturbed_sum_bound(const TriangularUnimodular& T, const FrequencyVector& alpha,
                                  const std::function<Mat2c(const std::vector<double>&)>& Ttilde,
                                  long k, int grid) {
    int d = alpha.dim();
    Mat2c Tm = T.matrix();
    size_t total = 1;
    for (int i = 0; i < d; ++i) total *= grid;
    double ck = std::abs(T.c) * double(k);
    double bound = 0.01 / (double(k) * double(k)) / ((1.0 + 2.0 * ck) * (1.0 + 2.0 * ck));
    double delta = 0;
    for (size_t t = 0; t < total; ++t) {
        size_t rem = t;
        std::vector<double> th(d);
        for (int i = 0; i < d; ++i) {
            th[i] = double(rem % grid) / grid;
            rem /= grid;
        }
        delta = std::max(delta, op_norm(Ttilde(th) - Tm));
    }
    if (delta > bound * (1.0 + 1e-9))
        throw std::invalid_argument("perturbed_sum_bound: hypothesis ||Ttilde-T|| <= k^-2(1+2ck)^-2/100 violated");
    Mat2c Xk = closed_form_Xk(T, k);
    double worst = 0;
    for (size_t t = 0; t < total; ++t) {
        size_t rem = t;
        std::vector<double> th(d);
        for (int i = 0; i < d; ++i) {
            th[i] = double(rem % grid) / grid;
            rem /= grid;
        }
        Mat2c M = Ttilde(th); // odd iterate T~_1
        Mat2c X = adjoint(M) * M;
        for (long j = 1; j < k; ++j) {
            M = Ttilde(shifted(th, alpha, 2 * j - 1)) * M;
            M = Ttilde(shifted(th, alpha, 2 * j)) * M;
            X += adjoint(M) * M;
        }
        worst = std::max(worst, op_norm(X - Xk));
    }
    return worst;
}

struct SchurForm {
    Mat2c U;  // unitary, det 1
    cd xi;    // eigenvalue exponent: e^{i xi} with |e^{i xi}| >= 1 (elliptic: arg in (0,pi])
    cd c;     // upper-right entry of U A U^{-1}
    double recon_err{};
};

// Unitary Schur triangularization of a real det-1 matrix with a deterministic
// eigenvalue-branch convention.
inline SchurForm triangularize(const Mat2d& A) {
    double t = A.tr();
    cd lambda;
    cd xi;
    if (std::abs(t) < 2.0) {
        double s = std::sqrt(4.0 - t * t);
        lambda = cd(0.5 * t, 0.5 * s); // argument in (0, pi)
        xi = cd(std::atan2(0.5 * s, 0.5 * t), 0.0);
    } else {
        double root = std::sqrt(std::max(0.0, t * t - 4.0));
        double l = (t >= 0) ? 0.5 * (t + root) : 0.5 * (t - root);
        lambda = cd(l, 0.0);
        xi = (l >= 0) ? cd(0.0, -std::log(std::max(l, 1.0)))
                      : cd(M_PI, -std::log(std::max(-l, 1.0)));
    }
    // eigenvector of lambda
    cd v1, v2;
    {
        cd cand1x = cd(A.b), cand1y = lambda - A.a;
        cd cand2x = lambda - A.d, cand2y = cd(A.c);
        double n1 = sqr_abs(cand1x) + sqr_abs(cand1y);
        double n2 = sqr_abs(cand2x) + sqr_abs(cand2y);
        if (n1 >= n2) {
            double n = std::sqrt(n1);
            if (n == 0) { v1 = 1; v2 = 0; }
            else { v1 = cand1x / n; v2 = cand1y / n; }
        } else {
            double n = std::sqrt(n2);
            v1 = cand2x / n;
            v2 = cand2y / n;
        }
    }
    // V = [v, v_perp] in SU(2); U = V^*
    Mat2c V{v1, -std::conj(v2), v2, std::conj(v1)};
    Mat2c U = adjoint(V);
    Mat2c T = U * to_complex(A) * V;
    SchurForm s;
    s.U = U;
    s.xi = xi;
    s.c = T.b;
    Mat2c Texact{std::exp(cd(0, 1) * xi), T.b, cd(0.0), std::exp(cd(0, -1) * xi)};
    s.recon_err = op_norm(V * Texact * U - to_complex(A));
    return s;
}

} // namespace qps
