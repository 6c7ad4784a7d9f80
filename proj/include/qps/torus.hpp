#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qps/mat2.hpp"

namespace qps {

using Lat = std::vector<int>; // lattice point in Z^d

inline double dist_to_Z(double x) { return std::abs(x - std::round(x)); }

inline int sup_norm(const Lat& n) {
    int m = 0;
    for (int v : n) m = std::max(m, std::abs(v));
    return m;
}
inline int l1_norm(const Lat& n) {
    int m = 0;
    for (int v : n) m += std::abs(v);
    return m;
}
inline Lat negate(const Lat& n) {
    Lat m(n.size());
    for (size_t i = 0; i < n.size(); ++i) m[i] = -n[i];
    return m;
}

struct FrequencyVector {
    std::vector<double> alpha;
    int dim() const { return static_cast<int>(alpha.size()); }
    double dot(const Lat& n) const {
        double s = 0;
        for (size_t i = 0; i < alpha.size(); ++i) s += n[i] * alpha[i];
        return s;
    }
};

// Iterate the cube [-N,N]^d in lexicographic order, calling fn(n) for n != 0.
inline void for_each_in_ball(int d, int N, const std::function<bool(const Lat&)>& fn) {
    Lat n(d, -N);
    bool done = false;
    while (!done) {
        bool zero = true;
        for (int v : n)
            if (v != 0) { zero = false; break; }
        if (!zero && !fn(n)) return;
        int k = d - 1;
        while (k >= 0) {
            if (++n[k] <= N) break;
            n[k] = -N;
            --k;
        }
        if (k < 0) done = true;
    }
}

// Shell |n|_inf == s, lexicographic order within the shell.
inline void for_each_on_shell(int d, int s, const std::function<bool(const Lat&)>& fn) {
    if (d == 1) {
        if (!fn(Lat{-s})) return;
        fn(Lat{s});
        return;
    }
    Lat n(d, -s);
    bool done = false;
    while (!done) {
        if (sup_norm(n) == s && !fn(n)) return;
        int k = d - 1;
        while (k >= 0) {
            if (++n[k] <= s) break;
            n[k] = -s;
            --k;
        }
        if (k < 0) done = true;
    }
}

struct DiophantineCertificate {
    std::vector<double> alpha;
    double kappa{};
    double tau{};
    int checked_radius{};
    double worst_ratio{}; // min over checked n of |<n,a>|_{R/Z} |n|^tau / kappa
};

struct DiophantineResult {
    bool certified{};
    DiophantineCertificate cert;
    Lat witness;             // violating lattice point when not certified
    double witness_divisor{}; // its small divisor |<n,alpha>|_{R/Z}
};

// Exhaustive scan of 0 < |n|_inf <= N_check against |<n,alpha>|_{R/Z} > kappa/|n|^tau.
// Shells are scanned smallest-first so a failure witness has minimal |n|; the
// witness is reported with its leading component positive (divisors are even).
inline DiophantineResult check_diophantine(const FrequencyVector& alpha, double kappa, double tau,
                                           int N_check) {
    if (kappa <= 0) throw std::invalid_argument("check_diophantine: kappa must be positive");
    if (tau <= alpha.dim() - 1) throw std::invalid_argument("check_diophantine: need tau > d-1");
    DiophantineResult res;
    res.cert = {alpha.alpha, kappa, tau, N_check, std::numeric_limits<double>::infinity()};
    res.certified = true;
    for (int s = 1; s <= N_check && res.certified; ++s) {
        for_each_on_shell(alpha.dim(), s, [&](const Lat& n) {
            double div = dist_to_Z(alpha.dot(n));
            double ratio = div * std::pow(double(s), tau) / kappa;
            if (ratio < res.cert.worst_ratio) res.cert.worst_ratio = ratio;
            if (ratio <= 1.0) {
                res.certified = false;
                res.witness = n;
                for (int v : res.witness) {
                    if (v > 0) break;
                    if (v < 0) {
                        res.witness = negate(res.witness);
                        break;
                    }
                }
                res.witness_divisor = div;
                return false;
            }
            return true;
        });
    }
    return res;
}

// Heuristic rational-independence check of (1, alpha) up to a lattice bound.
inline double rational_independence_margin(const FrequencyVector& alpha, int N = 50) {
    double worst = std::numeric_limits<double>::infinity();
    for_each_in_ball(alpha.dim(), N, [&](const Lat& n) {
        worst = std::min(worst, dist_to_Z(alpha.dot(n)));
        return true;
    });
    return worst;
}

enum class ValueClass { RealScalar, Sl2R, SL2R, Sl2C, SL2C };

inline std::string to_string(ValueClass c) {
    switch (c) {
        case ValueClass::RealScalar: return "real-scalar";
        case ValueClass::Sl2R: return "sl2R";
        case ValueClass::SL2R: return "SL2R";
        case ValueClass::Sl2C: return "sl2C";
        case ValueClass::SL2C: return "SL2C";
    }
    return "?";
}
inline ValueClass value_class_from_string(const std::string& s) {
    if (s == "real-scalar") return ValueClass::RealScalar;
    if (s == "sl2R") return ValueClass::Sl2R;
    if (s == "SL2R") return ValueClass::SL2R;
    if (s == "sl2C") return ValueClass::Sl2C;
    if (s == "SL2C") return ValueClass::SL2C;
    throw std::invalid_argument("unknown value_class: " + s);
}

inline bool is_real_class(ValueClass c) {
    return c == ValueClass::RealScalar || c == ValueClass::Sl2R || c == ValueClass::SL2R;
}

// Finite Fourier series on T^d with 2x2 complex coefficients.
// Scalar series put the value in the (0,0) slot.
struct TorusSeries {
    int d{1};
    ValueClass cls{ValueClass::RealScalar};
    std::map<Lat, Mat2c> coeffs;

    TorusSeries() = default;
    TorusSeries(int d_, ValueClass c_) : d(d_), cls(c_) {}

    int degree() const {
        int m = 0;
        for (auto& [n, c] : coeffs) m = std::max(m, sup_norm(n));
        return m;
    }
    Mat2c coeff(const Lat& n) const {
        auto it = coeffs.find(n);
        return it == coeffs.end() ? Mat2c::zero() : it->second;
    }
    void set(const Lat& n, const Mat2c& m) {
        if (frob_norm2(m) == 0.0)
            coeffs.erase(n);
        else
            coeffs[n] = m;
    }
    void add_to(const Lat& n, const Mat2c& m) { set(n, coeff(n) + m); }

    TorusSeries scaled(cd s) const {
        TorusSeries r(d, cls);
        for (auto& [n, c] : coeffs) r.coeffs[n] = s * c;
        return r;
    }
    TorusSeries plus(const TorusSeries& o) const {
        TorusSeries r = *this;
        for (auto& [n, c] : o.coeffs) r.add_to(n, c);
        return r;
    }

    // Evaluate at theta + i*imag_offset: sum of coeff(n) e^{2 pi i <n, theta + i off>}.
    Mat2c eval(const std::vector<double>& theta, const std::vector<double>& imag_offset = {}) const {
        Mat2c acc = Mat2c::zero();
        for (auto& [n, c] : coeffs) {
            double ph = 0, decay = 0;
            for (int i = 0; i < d; ++i) {
                ph += n[i] * theta[i];
                if (!imag_offset.empty()) decay += n[i] * imag_offset[i];
            }
            cd w = std::polar(std::exp(-TWO_PI * decay), TWO_PI * ph);
            acc += w * c;
        }
        return acc;
    }
    double eval_scalar(const std::vector<double>& theta) const { return eval(theta).a.real(); }
    Mat2d eval_real(const std::vector<double>& theta) const { return real_part(eval(theta)); }
};

inline TorusSeries truncate(const TorusSeries& f, int N) {
    TorusSeries r(f.d, f.cls);
    for (auto& [n, c] : f.coeffs)
        if (sup_norm(n) <= N) r.coeffs[n] = c;
    return r;
}

inline TorusSeries multiply(const TorusSeries& f, const TorusSeries& g, ValueClass cls) {
    TorusSeries r(f.d, cls);
    for (auto& [n, cf] : f.coeffs)
        for (auto& [m, cg] : g.coeffs) {
            Lat s(f.d);
            for (int i = 0; i < f.d; ++i) s[i] = n[i] + m[i];
            r.add_to(s, cf * cg);
        }
    return r;
}

// Enforce coeff(-n) == conj(coeff(n)); a no-op for exactly symmetric data.
inline void conj_symmetrize(TorusSeries& f) {
    std::map<Lat, Mat2c> out;
    for (auto& [n, c] : f.coeffs) {
        Lat m = negate(n);
        Mat2c sym = 0.5 * (c + conjugate(f.coeff(m)));
        out[n] = sym;
        out[m] = conjugate(sym);
    }
    f.coeffs = std::move(out);
}

inline double real_symmetry_defect(const TorusSeries& f) {
    double worst = 0;
    for (auto& [n, c] : f.coeffs)
        worst = std::max(worst, std::sqrt(frob_norm2(c - conjugate(f.coeff(negate(n))))));
    return worst;
}

// ---------------------------------------------------------------------------
// Dense grid machinery: separable transforms between sparse mode boxes and
// uniform grids, used by norms, the exp/log re-expansions and the KAM steps.
// ---------------------------------------------------------------------------

struct GridVals {
    int d{1};
    int G{0};                 // points per dimension
    std::vector<Mat2c> v;     // size G^d, row-major over dimensions
    size_t size() const { return v.size(); }
};

namespace detail {

struct Box {
    std::vector<int> lo, hi; // inclusive per-dim mode ranges
    std::vector<int> len() const {
        std::vector<int> s(lo.size());
        for (size_t i = 0; i < lo.size(); ++i) s[i] = hi[i] - lo[i] + 1;
        return s;
    }
};

inline Box support_box(const TorusSeries& f) {
    Box b;
    b.lo.assign(f.d, 0);
    b.hi.assign(f.d, 0);
    bool first = true;
    for (auto& [n, c] : f.coeffs) {
        for (int i = 0; i < f.d; ++i) {
            if (first || n[i] < b.lo[i]) b.lo[i] = n[i];
            if (first || n[i] > b.hi[i]) b.hi[i] = n[i];
        }
        first = false;
    }
    return b;
}

// One separable pass: contract tensor axis `ax` (length `len`) against table
// tab[t*len + n] producing axis length `tn`.
inline void transform_axis(std::vector<Mat2c>& data, std::vector<int>& shape, int ax, int tn,
                           const std::vector<cd>& tab) {
    int len = shape[ax];
    size_t inner = 1, outer = 1;
    for (size_t i = ax + 1; i < shape.size(); ++i) inner *= shape[i];
    for (int i = 0; i < ax; ++i) outer *= shape[i];
    std::vector<Mat2c> out(outer * tn * inner);
    for (size_t o = 0; o < outer; ++o) {
        const Mat2c* src = data.data() + o * len * inner;
        Mat2c* dst = out.data() + o * tn * inner;
        for (int t = 0; t < tn; ++t) {
            const cd* tr = tab.data() + size_t(t) * len;
            for (int n = 0; n < len; ++n) {
                cd w = tr[n];
                if (w == cd(0)) continue;
                const Mat2c* s = src + size_t(n) * inner;
                Mat2c* dd = dst + size_t(t) * inner;
                for (size_t i = 0; i < inner; ++i) {
                    dd[i].a += w * s[i].a;
                    dd[i].b += w * s[i].b;
                    dd[i].c += w * s[i].c;
                    dd[i].d += w * s[i].d;
                }
            }
        }
    }
    data.swap(out);
    shape[ax] = tn;
}

} // namespace detail

// Evaluate f on the uniform grid theta_g = g/G + rho per dimension (rho a
// per-axis real shift, possibly empty), at imaginary offset `off`.
inline GridVals eval_on_grid(const TorusSeries& f, int G, const std::vector<double>& off = {},
                             const std::vector<double>& rho = {}) {
    detail::Box box = detail::support_box(f);
    auto len = box.len();
    std::vector<int> shape = len;
    size_t total = 1;
    for (int s : shape) total *= s;
    std::vector<Mat2c> data(total);
    std::vector<size_t> stride(f.d, 1);
    for (int i = f.d - 2; i >= 0; --i) stride[i] = stride[i + 1] * shape[i + 1];
    for (auto& [n, c] : f.coeffs) {
        size_t idx = 0;
        for (int i = 0; i < f.d; ++i) idx += size_t(n[i] - box.lo[i]) * stride[i];
        data[idx] = c;
    }
    for (int ax = 0; ax < f.d; ++ax) {
        std::vector<cd> tab(size_t(G) * len[ax]);
        double sh = rho.empty() ? 0.0 : rho[ax];
        for (int g = 0; g < G; ++g)
            for (int n = 0; n < len[ax]; ++n) {
                int mode = box.lo[ax] + n;
                double mag = off.empty() ? 1.0 : std::exp(-TWO_PI * mode * off[ax]);
                tab[size_t(g) * len[ax] + n] =
                    std::polar(mag, TWO_PI * mode * (double(g) / G + sh));
            }
        detail::transform_axis(data, shape, ax, G, tab);
    }
    GridVals gv;
    gv.d = f.d;
    gv.G = G;
    gv.v = std::move(data);
    return gv;
}

// Project grid values onto modes |n|_inf <= M (exact for band-limited data
// when G > 2M).
inline TorusSeries project_to_series(const GridVals& gv, int M, ValueClass cls) {
    std::vector<int> shape(gv.d, gv.G);
    std::vector<Mat2c> data = gv.v;
    int tn = 2 * M + 1;
    for (int ax = 0; ax < gv.d; ++ax) {
        std::vector<cd> tab(size_t(tn) * gv.G);
        for (int t = 0; t < tn; ++t) {
            int mode = t - M;
            for (int g = 0; g < gv.G; ++g)
                tab[size_t(t) * gv.G + g] = std::polar(1.0 / gv.G, -TWO_PI * mode * double(g) / gv.G);
        }
        detail::transform_axis(data, shape, ax, tn, tab);
    }
    TorusSeries out(gv.d, cls);
    std::vector<size_t> stride(gv.d, 1);
    for (int i = gv.d - 2; i >= 0; --i) stride[i] = stride[i + 1] * size_t(tn);
    std::vector<int> n(gv.d, -M);
    size_t total = data.size();
    for (size_t idx = 0; idx < total; ++idx) {
        size_t rem = idx;
        for (int i = 0; i < gv.d; ++i) {
            n[i] = int(rem / stride[i]) - M;
            rem %= stride[i];
        }
        if (frob_norm2(data[idx]) > 0) out.coeffs[n] = data[idx];
    }
    if (is_real_class(cls)) conj_symmetrize(out);
    return out;
}

// Sup of the operator norm over the grid at a fixed imaginary offset corner.
inline double grid_sup_norm(const TorusSeries& f, int G, const std::vector<double>& off = {}) {
    GridVals gv = eval_on_grid(f, G, off);
    double m = 0;
    for (auto& x : gv.v) m = std::max(m, op_norm(x));
    return m;
}

// ||f||_r approximated on the strip boundary: grid per dimension plus the 2^d
// extreme imaginary offsets (+-r per coordinate).
inline double norm_r(const TorusSeries& f, double r, int grid = 512) {
    if (f.coeffs.empty()) return 0.0;
    if (r == 0.0) return grid_sup_norm(f, grid);
    double m = 0;
    int corners = 1 << f.d;
    for (int c = 0; c < corners; ++c) {
        std::vector<double> off(f.d);
        for (int i = 0; i < f.d; ++i) off[i] = (c >> i & 1) ? r : -r;
        m = std::max(m, grid_sup_norm(f, grid, off));
    }
    return m;
}

// l1-weighted coefficient bound: sum ||c(n)|| e^{2 pi |n|_1 r}; dominates
// ||f||_r for corner offsets.
inline double coeff_norm_r(const TorusSeries& f, double r) {
    double s = 0;
    for (auto& [n, c] : f.coeffs) s += op_norm(c) * std::exp(TWO_PI * l1_norm(n) * r);
    return s;
}

struct ExpSeriesResult {
    TorusSeries series;
    double residual{}; // max pointwise defect of the re-expansion on an offset grid
};

// Pointwise matrix exponential of an sl(2)-valued series, re-expanded as a
// Fourier series up to order*degree modes.
inline ExpSeriesResult exp_sl2(const TorusSeries& f, int order = 4) {
    int M = std::max(1, f.degree());
    int Mout = std::max(1, order * M);
    int G = 2 * Mout + 8;
    GridVals gv = eval_on_grid(f, G);
    for (auto& x : gv.v) x = exp_sl2_mat(x);
    ValueClass out_cls = is_real_class(f.cls) ? ValueClass::SL2R : ValueClass::SL2C;
    ExpSeriesResult res;
    res.series = project_to_series(gv, Mout, out_cls);
    // residual on a half-shifted grid
    std::vector<double> half(f.d, 0.5 / G);
    GridVals shifted = eval_on_grid(f, G, {}, half);
    GridVals recons = eval_on_grid(res.series, G, {}, half);
    double worst = 0;
    for (size_t i = 0; i < shifted.v.size(); ++i)
        worst = std::max(worst, op_norm(exp_sl2_mat(shifted.v[i]) - recons.v[i]));
    res.residual = worst;
    return res;
}

// Convenience builders ------------------------------------------------------

// V(theta) = sum_i cos(2 pi theta_i) as a real-scalar series.
inline TorusSeries cosine_potential(int d) {
    TorusSeries V(d, ValueClass::RealScalar);
    for (int i = 0; i < d; ++i) {
        Lat n(d, 0);
        Mat2c half = Mat2c::zero();
        half.a = 0.5;
        n[i] = 1;
        V.set(n, half);
        n[i] = -1;
        V.set(n, half);
    }
    return V;
}

inline TorusSeries constant_series(int d, const Mat2c& m, ValueClass cls) {
    TorusSeries s(d, cls);
    s.set(Lat(d, 0), m);
    return s;
}

} // namespace qps
