#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>

namespace qps {

using cd = std::complex<double>;

constexpr double TWO_PI = 6.283185307179586476925286766559;

// 2x2 matrix over T (double or complex<double>), row-major entries a b / c d.
template <class T>
struct Mat2 {
    T a{}, b{}, c{}, d{};

    static Mat2 identity() { return {T(1), T(0), T(0), T(1)}; }
    static Mat2 zero() { return {}; }

    Mat2 operator+(const Mat2& o) const { return {a + o.a, b + o.b, c + o.c, d + o.d}; }
    Mat2 operator-(const Mat2& o) const { return {a - o.a, b - o.b, c - o.c, d - o.d}; }
    Mat2 operator*(const Mat2& o) const {
        return {a * o.a + b * o.c, a * o.b + b * o.d,
                c * o.a + d * o.c, c * o.b + d * o.d};
    }
    template <class S>
    friend Mat2 operator*(const S& s, const Mat2& m) { return {T(s) * m.a, T(s) * m.b, T(s) * m.c, T(s) * m.d}; }
    Mat2& operator+=(const Mat2& o) { a += o.a; b += o.b; c += o.c; d += o.d; return *this; }
    Mat2& operator-=(const Mat2& o) { a -= o.a; b -= o.b; c -= o.c; d -= o.d; return *this; }
    Mat2& operator*=(const T& s) { a *= s; b *= s; c *= s; d *= s; return *this; }

    T det() const { return a * d - b * c; }
    T tr() const { return a + d; }
    // inverse assuming det == 1 (SL(2))
    Mat2 inv_sl() const { return {d, -b, -c, a}; }
    Mat2 inv() const {
        T dt = det();
        return {d / dt, -b / dt, -c / dt, a / dt};
    }
};

using Mat2d = Mat2<double>;
using Mat2c = Mat2<cd>;

inline Mat2c to_complex(const Mat2d& m) { return {cd(m.a), cd(m.b), cd(m.c), cd(m.d)}; }
inline Mat2d real_part(const Mat2c& m) { return {m.a.real(), m.b.real(), m.c.real(), m.d.real()}; }
inline double imag_norm(const Mat2c& m) {
    return std::max(std::max(std::abs(m.a.imag()), std::abs(m.b.imag())),
                    std::max(std::abs(m.c.imag()), std::abs(m.d.imag())));
}

inline Mat2c adjoint(const Mat2c& m) {
    return {std::conj(m.a), std::conj(m.c), std::conj(m.b), std::conj(m.d)};
}
inline Mat2d transpose(const Mat2d& m) { return {m.a, m.c, m.b, m.d}; }
inline Mat2c conjugate(const Mat2c& m) {
    return {std::conj(m.a), std::conj(m.b), std::conj(m.c), std::conj(m.d)};
}

inline double sqr_abs(const cd& z) { return z.real() * z.real() + z.imag() * z.imag(); }

inline double frob_norm2(const Mat2c& m) { return sqr_abs(m.a) + sqr_abs(m.b) + sqr_abs(m.c) + sqr_abs(m.d); }
inline double frob_norm2(const Mat2d& m) { return m.a * m.a + m.b * m.b + m.c * m.c + m.d * m.d; }
template <class T>
inline double frob_norm(const Mat2<T>& m) { return std::sqrt(frob_norm2(m)); }

// Operator (spectral) norm via the closed-form singular values of a 2x2 matrix.
template <class T>
inline double op_norm(const Mat2<T>& m) {
    double p = frob_norm2(m);
    double q = sqr_abs(cd(m.det()));
    double disc = p * p - 4.0 * q;
    if (disc < 0) disc = 0;
    return std::sqrt(0.5 * (p + std::sqrt(disc)));
}

// Smallest singular value; for det=1 matrices this is 1/op_norm.
template <class T>
inline double smin(const Mat2<T>& m) {
    double q = std::sqrt(sqr_abs(cd(m.det())));
    double s1 = op_norm(m);
    if (s1 == 0) return 0;
    return q / s1;
}

// R_phi: rotation by angle 2*pi*phi (paper-style parameterization).
inline Mat2d rotation(double phi) {
    double cph = std::cos(TWO_PI * phi), sph = std::sin(TWO_PI * phi);
    return {cph, -sph, sph, cph};
}

namespace detail {
// sinh(w)/w with series fallback near 0
inline cd sinch(const cd& w) {
    if (std::abs(w) < 1e-4) {
        cd w2 = w * w;
        return 1.0 + w2 / 6.0 + w2 * w2 / 120.0;
    }
    return std::sinh(w) / w;
}
inline double sinch(double w) {
    if (std::abs(w) < 1e-4) {
        double w2 = w * w;
        return 1.0 + w2 / 6.0 + w2 * w2 / 120.0;
    }
    return std::sinh(w) / w;
}
// zeta/sinh(zeta) where cosh(zeta) = s, for the sl2 logarithm; m = s^2 - 1
inline cd log_gain(const cd& s) {
    cd m = s * s - 1.0;
    if (std::abs(m) < 1e-4) {
        // zeta/sinh(zeta) = 1 - m/6 + 7 m^2/360 - 31 m^3/15120, m = sinh^2(zeta)
        return 1.0 - m / 6.0 + 7.0 * m * m / 360.0 - 31.0 * m * m * m / 15120.0;
    }
    cd w = std::sqrt(m);
    cd zeta = std::log(s + w);
    return zeta / w;
}
} // namespace detail

// exp of a trace-free 2x2 matrix: X^2 = -det(X) I, so
// exp(X) = cosh(w) I + sinh(w)/w X with w^2 = -det X.
inline Mat2c exp_sl2_mat(const Mat2c& x) {
    cd w2 = -x.det();
    cd w = std::sqrt(w2);
    cd ch = std::cosh(w), sh = detail::sinch(w);
    return {ch + sh * x.a, sh * x.b, sh * x.c, ch + sh * x.d};
}
inline Mat2d exp_sl2_mat(const Mat2d& x) {
    double w2 = -x.det();
    double ch, sh;
    if (w2 >= 0) {
        double w = std::sqrt(w2);
        ch = std::cosh(w);
        sh = detail::sinch(w);
    } else {
        double u = std::sqrt(-w2);
        ch = std::cos(u);
        sh = (u < 1e-4) ? 1.0 - u * u / 6.0 + u * u * u * u / 120.0 : std::sin(u) / u;
    }
    return {ch + sh * x.a, sh * x.b, sh * x.c, ch + sh * x.d};
}

// log of M in SL(2) with tr(M)/2 away from -1; returns X trace-free with exp(X)=M.
inline Mat2c log_sl2_mat(const Mat2c& m) {
    cd s = 0.5 * m.tr();
    cd g = detail::log_gain(s);
    return {g * (m.a - s), g * m.b, g * m.c, g * (m.d - s)};
}
inline Mat2d log_sl2_mat(const Mat2d& m) {
    double s = 0.5 * m.tr();
    if (s <= -1.0)
        throw std::domain_error("log_sl2_mat: trace <= -2, no real sl(2) logarithm");
    double g;
    if (std::abs(s - 1.0) < 1e-4) {
        double mm = s * s - 1.0;
        g = 1.0 - mm / 6.0 + 7.0 * mm * mm / 360.0 - 31.0 * mm * mm * mm / 15120.0;
    } else if (s < 1.0) {
        double phi = std::acos(std::min(1.0, std::max(-1.0, s)));
        g = phi / std::sin(phi);
    } else {
        double phi = std::acosh(s);
        g = phi / std::sinh(phi);
    }
    return {g * (m.a - s), g * m.b, g * m.c, g * (m.d - s)};
}

struct Vec2d {
    double x{}, y{};
};
inline Vec2d apply(const Mat2d& m, const Vec2d& v) { return {m.a * v.x + m.b * v.y, m.c * v.x + m.d * v.y}; }

} // namespace qps
