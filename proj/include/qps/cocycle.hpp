#pragma once

#include <functional>
#include <random>

#include "qps/torus.hpp"

namespace qps {

// A quasi-periodic cocycle (alpha, A) with A a matrix map on T^d. The
// evaluator form keeps the engines usable for conjugated cocycles that are
// only PSL-periodic (half-angle rotations) and thus not plain Fourier series.
struct MatrixCocycle {
    FrequencyVector alpha;
    std::function<Mat2d(const std::vector<double>&)> A;
};

inline MatrixCocycle cocycle_from_series(const FrequencyVector& alpha, const TorusSeries& s) {
    return {alpha, [s](const std::vector<double>& th) { return s.eval_real(th); }};
}

struct SchrodingerCocycle {
    MatrixCocycle base;
    double E{};
    double lambda{};
    TorusSeries V; // real-scalar potential series
};

// S_E^{lambda V}(theta) = (E - lambda V(theta), -1; 1, 0)
inline SchrodingerCocycle schrodinger_cocycle(double E, double lambda, const TorusSeries& V,
                                              const FrequencyVector& alpha) {
    SchrodingerCocycle sc;
    sc.E = E;
    sc.lambda = lambda;
    sc.V = V;
    sc.base.alpha = alpha;
    TorusSeries Vc = V;
    sc.base.A = [E, lambda, Vc](const std::vector<double>& th) {
        return Mat2d{E - lambda * Vc.eval_scalar(th), -1.0, 1.0, 0.0};
    };
    return sc;
}

inline std::vector<double> shifted(const std::vector<double>& th, const FrequencyVector& a, long k) {
    std::vector<double> r(th.size());
    for (size_t i = 0; i < th.size(); ++i) r[i] = th[i] + k * a.alpha[i];
    return r;
}

// n-step iterate A(theta+(n-1)a)...A(theta); inverse-product formula for n<0.
inline Mat2d iterate(const MatrixCocycle& c, long n, const std::vector<double>& theta) {
    Mat2d M = Mat2d::identity();
    if (n >= 0) {
        for (long k = 0; k < n; ++k) M = c.A(shifted(theta, c.alpha, k)) * M;
    } else {
        for (long k = n; k <= -1; ++k) M = M * c.A(shifted(theta, c.alpha, k)).inv_sl();
    }
    return M;
}

// Iterate with scalar renormalization: returns M/scale and log(scale), so
// log ||A_n|| = logscale + log ||M||.
struct ScaledIterate {
    Mat2d M;
    double logscale{};
};
inline ScaledIterate iterate_scaled(const MatrixCocycle& c, long n, const std::vector<double>& theta,
                                    int renorm_every = 32) {
    ScaledIterate r{Mat2d::identity(), 0.0};
    for (long k = 0; k < n; ++k) {
        r.M = c.A(shifted(theta, c.alpha, k)) * r.M;
        if ((k & (renorm_every - 1)) == renorm_every - 1) {
            double s = frob_norm(r.M);
            if (s > 0) {
                r.logscale += std::log(s);
                r.M *= 1.0 / s;
            }
        }
    }
    return r;
}

// L(alpha, A): average over sampled phases of (1/n) log||A_n(theta)||,
// accumulated with periodic renormalization.
inline double lyapunov_exponent(const MatrixCocycle& c, long n, int theta_samples, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    int d = c.alpha.dim();
    double acc = 0;
    for (int s = 0; s < theta_samples; ++s) {
        std::vector<double> th(d);
        for (auto& x : th) x = unif(rng);
        ScaledIterate it = iterate_scaled(c, n, th);
        acc += (it.logscale + std::log(op_norm(it.M))) / double(n);
    }
    return acc / theta_samples;
}

struct RotationNumberEstimate {
    double rho{};         // folded to [0, 1/2]
    double raw{};         // lift average before folding, mod 1
    long iterations{};
    double uncertainty{};
};

// Fibered rotation number: propagate a projective vector, accumulate lifted
// angle increments in (-1/2, 1/2] (units of full turns), fold by rho <-> 1-rho.
inline RotationNumberEstimate rotation_number(const MatrixCocycle& c, long n,
                                              const std::vector<double>& theta) {
    Vec2d v{1.0, 0.0};
    double total = 0;
    for (long k = 0; k < n; ++k) {
        Vec2d w = apply(c.A(shifted(theta, c.alpha, k)), v);
        double cross = v.x * w.y - v.y * w.x;
        double dot = v.x * w.x + v.y * w.y;
        double inc = std::atan2(cross, dot) / TWO_PI; // in (-1/2, 1/2]
        total += inc;
        double nn = std::hypot(w.x, w.y);
        v = {w.x / nn, w.y / nn};
    }
    RotationNumberEstimate est;
    est.iterations = n;
    double raw = total / n;
    raw -= std::floor(raw);
    est.raw = raw;
    est.rho = std::min(raw, 1.0 - raw);
    est.uncertainty = std::max(1.0 / n, 1e-12);
    return est;
}

// N(E) = 1 - 2 rho(E)
inline double ids(const SchrodingerCocycle& sc, long n, const std::vector<double>& theta) {
    return 1.0 - 2.0 * rotation_number(sc.base, n, theta).rho;
}

struct HyperbolicityProbe {
    bool uniformly_hyperbolic{};
    double margin{}; // fitted exponential rate
    double m1{}, m2{};
};

// Exponential-dichotomy heuristic: min over a theta grid of log||A_n|| at two
// horizon lengths; uniform hyperbolicity when the fitted rate is positive and
// stable across the two horizons.
inline HyperbolicityProbe uniform_hyperbolicity_probe(const MatrixCocycle& c, long n, int grid) {
    int d = c.alpha.dim();
    long n2 = 2 * n;
    double m1 = std::numeric_limits<double>::infinity();
    double m2 = std::numeric_limits<double>::infinity();
    std::vector<int> idx(d, 0);
    size_t total = 1;
    for (int i = 0; i < d; ++i) total *= grid;
    for (size_t t = 0; t < total; ++t) {
        size_t rem = t;
        std::vector<double> th(d);
        for (int i = 0; i < d; ++i) {
            th[i] = double(rem % grid) / grid;
            rem /= grid;
        }
        ScaledIterate i1 = iterate_scaled(c, n, th);
        m1 = std::min(m1, i1.logscale + std::log(op_norm(i1.M)));
        ScaledIterate i2 = iterate_scaled(c, n2, th);
        m2 = std::min(m2, i2.logscale + std::log(op_norm(i2.M)));
    }
    HyperbolicityProbe p;
    p.m1 = m1;
    p.m2 = m2;
    double slope = (m2 - m1) / double(n2 - n);
    p.margin = slope;
    p.uniformly_hyperbolic = slope > std::max(0.02, 3.0 / n) && m2 > 0.5 * slope * n2;
    return p;
}

} // namespace qps
