#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "qps/torus.hpp"

using namespace qps;

static TorusSeries cos_series_1d() {
    TorusSeries f(1, ValueClass::RealScalar);
    Mat2c half = Mat2c::zero();
    half.a = 0.5;
    f.set({1}, half);
    f.set({-1}, half);
    return f;
}

TEST_CASE("evaluate constant identity") {
    TorusSeries f = constant_series(2, Mat2c::identity(), ValueClass::SL2R);
    Mat2c v = f.eval({0.3, 0.7});
    REQUIRE(op_norm(v - Mat2c::identity()) < 1e-15);
}

TEST_CASE("evaluate cos at 0 and on the strip") {
    TorusSeries f = cos_series_1d();
    REQUIRE(f.eval_scalar({0.0}) == Catch::Approx(1.0).margin(1e-15));
    double r = 0.13;
    // derived via the e^{+-2 pi i (i r)} expansion: cos(2 pi i r) = cosh(2 pi r)
    double got = f.eval({0.0}, {r}).a.real();
    REQUIRE(got == Catch::Approx(std::cosh(TWO_PI * r)).epsilon(1e-12));
}

TEST_CASE("norm_r basics") {
    TorusSeries zero(1, ValueClass::RealScalar);
    REQUIRE(norm_r(zero, 0.5, 64) == 0.0);

    TorusSeries f = cos_series_1d();
    double r = 0.1;
    REQUIRE(norm_r(f, r, 512) == Catch::Approx(std::cosh(TWO_PI * r)).margin(1e-6));

    Mat2c M{cd(1, 0), cd(2, 0), cd(0.5, 0), cd(-1, 0)};
    TorusSeries c = constant_series(2, M, ValueClass::SL2C);
    REQUIRE(norm_r(c, 0.2, 64) == Catch::Approx(op_norm(M)).epsilon(1e-12));
}

TEST_CASE("norm_r agrees with dense direct-evaluation oracle") {
    auto f = oracle::random_sl2r_series(1, 3, 0.7, 42);
    double r = 0.07;
    double fast = norm_r(f, r, 128);
    double slow = oracle::dense_strip_norm(f, r, 128);
    REQUIRE(fast == Catch::Approx(slow).epsilon(1e-10));
}

TEST_CASE("norm_r monotone in r and submultiplicative") {
    auto f = oracle::random_sl2r_series(1, 2, 0.5, 7);
    auto g = oracle::random_sl2r_series(1, 3, 0.8, 8);
    double r1 = 0.02, r2 = 0.08;
    REQUIRE(norm_r(f, r1, 64) <= norm_r(f, r2, 64) + 1e-12);
    TorusSeries fg = multiply(f, g, ValueClass::Sl2C);
    for (double r : {0.0, 0.03, 0.06})
        REQUIRE(norm_r(fg, r, 64) <= norm_r(f, r, 64) * norm_r(g, r, 64) * (1 + 1e-9));
}

TEST_CASE("truncate") {
    auto f = oracle::random_sl2r_series(1, 3, 1.0, 11);
    SECTION("no-op above the degree") {
        TorusSeries t = truncate(f, 5);
        REQUIRE(t.coeffs.size() == f.coeffs.size());
        REQUIRE(norm_r(t.plus(f.scaled(-1.0)), 0.0, 64) < 1e-15);
    }
    SECTION("constant term only at N=0") {
        TorusSeries t = truncate(f, 0);
        REQUIRE(t.degree() == 0);
        REQUIRE(op_norm(t.coeff(Lat{0}) - f.coeff(Lat{0})) < 1e-15);
    }
    SECTION("tail below the l1-weighted coefficient bound") {
        auto g = oracle::random_sl2r_series(2, 3, 1.0, 12);
        int N = 1;
        TorusSeries tail = g.plus(truncate(g, N).scaled(-1.0));
        double r = 0.05;
        REQUIRE(norm_r(tail, r, 64) <= coeff_norm_r(tail, r) * (1 + 1e-9));
    }
    SECTION("idempotent") {
        TorusSeries t1 = truncate(f, 2), t2 = truncate(truncate(f, 2), 2);
        REQUIRE(norm_r(t1.plus(t2.scaled(-1.0)), 0.0, 64) < 1e-15);
    }
}

TEST_CASE("truncate agrees with f at grid points when degree <= N") {
    auto f = oracle::random_sl2r_series(2, 2, 1.0, 13);
    TorusSeries t = truncate(f, 4);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 20; ++i) {
        std::vector<double> th{u(rng), u(rng)};
        REQUIRE(op_norm(f.eval(th) - t.eval(th)) < 1e-13);
    }
}

TEST_CASE("conjugate-symmetry iff real-valued") {
    auto f = oracle::random_sl2r_series(1, 3, 1.0, 21);
    REQUIRE(real_symmetry_defect(f) < 1e-15);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 30; ++i) {
        std::vector<double> th{u(rng)};
        REQUIRE(imag_norm(f.eval(th)) < 1e-12);
    }
    // break the symmetry: values become genuinely complex somewhere
    TorusSeries g = f;
    Mat2c c = g.coeff(Lat{1});
    c.a += cd(0, 0.3);
    g.set(Lat{1}, c);
    REQUIRE(real_symmetry_defect(g) > 0.1);
    double worst = 0;
    for (int i = 0; i < 30; ++i) {
        std::vector<double> th{u(rng)};
        worst = std::max(worst, imag_norm(g.eval(th)));
    }
    REQUIRE(worst > 1e-3);
}

TEST_CASE("grid projection round-trips band-limited data") {
    auto f = oracle::random_sl2r_series(2, 3, 1.0, 31);
    GridVals gv = eval_on_grid(f, 16);
    TorusSeries back = project_to_series(gv, 3, f.cls);
    REQUIRE(norm_r(back.plus(f.scaled(-1.0)), 0.0, 32) < 1e-12);
}

TEST_CASE("exp_sl2") {
    SECTION("zero maps to identity") {
        TorusSeries z(1, ValueClass::Sl2R);
        auto r = exp_sl2(z);
        REQUIRE(op_norm(r.series.eval({0.37}) - Mat2c::identity()) < 1e-14);
    }
    SECTION("nilpotent exponential is exactly I + f") {
        // f = (0 0; v 0) with scalar series v: f^2 = 0 pointwise
        TorusSeries f(1, ValueClass::Sl2R);
        Mat2c m = Mat2c::zero();
        m.c = cd(0.4, 0);
        f.set({1}, m);
        f.set({-1}, conjugate(m));
        auto r = exp_sl2(f, 4);
        REQUIRE(r.residual < 1e-12);
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> u(0, 1);
        for (int i = 0; i < 20; ++i) {
            std::vector<double> th{u(rng)};
            Mat2c expect = Mat2c::identity() + f.eval(th);
            REQUIRE(op_norm(r.series.eval(th) - expect) < 1e-12);
        }
    }
    SECTION("small series: ||exp(f) - I - f|| = O(||f||^2)") {
        auto f = oracle::random_sl2r_series(1, 2, 1.0, 55);
        double n0 = norm_r(f, 0.0, 128);
        f = f.scaled(1e-3 / n0); // ||f||_0 = 1e-3
        auto r = exp_sl2(f, 4);
        REQUIRE(r.residual < 1e-12);
        // pointwise dense-grid exponential oracle
        double worst = 0;
        for (int i = 0; i < 200; ++i) {
            std::vector<double> th{double(i) / 200.0 + 0.001};
            Mat2c direct = exp_sl2_mat(f.eval(th));
            worst = std::max(worst, op_norm(r.series.eval(th) - direct));
        }
        REQUIRE(worst < 1e-13);
        TorusSeries diff = r.series.plus(f.scaled(-1.0))
                               .plus(constant_series(1, Mat2c::identity(), ValueClass::SL2C).scaled(-1.0));
        REQUIRE(norm_r(diff, 0.0, 128) <= 1e-6);
    }
}

TEST_CASE("diophantine checks") {
    SECTION("alpha = 1/2 fails at n = 2") {
        auto res = check_diophantine({{0.5}}, 0.3, 1.5, 10);
        REQUIRE_FALSE(res.certified);
        REQUIRE(res.witness == Lat{2});
        REQUIRE(res.witness_divisor < 1e-15);
    }
    SECTION("golden mean certificate") {
        double golden = 0.5 * (std::sqrt(5.0) - 1.0);
        auto res = check_diophantine({{golden}}, 0.25, 1.5, 10000);
        REQUIRE(res.certified);
        REQUIRE(res.cert.worst_ratio > 1.0);
    }
    SECTION("two-frequency certificate") {
        // kappa = 0.05 is not certifiable here: <(5,4), alpha> = 4.999271 gives
        // dist*|n|^2.5 = 0.04075.  The scan must find that witness, and
        // kappa = 0.03 certifies.
        FrequencyVector a{{std::sqrt(2.0) - 1.0, std::sqrt(3.0) - 1.0}};
        auto bad = check_diophantine(a, 0.05, 2.5, 200);
        REQUIRE_FALSE(bad.certified);
        REQUIRE(bad.witness == Lat{5, 4});
        auto res = check_diophantine(a, 0.03, 2.5, 200);
        REQUIRE(res.certified);
        REQUIRE(res.cert.worst_ratio > 1.3);
    }
    SECTION("certificate bounds every divisor at scale <= N_check") {
        double golden = 0.5 * (std::sqrt(5.0) - 1.0);
        auto res = check_diophantine({{golden}}, 0.25, 1.5, 2000);
        REQUIRE(res.certified);
        std::mt19937_64 rng(9);
        std::uniform_int_distribution<int> pick(1, 2000);
        FrequencyVector a{{golden}};
        for (int i = 0; i < 200; ++i) {
            int n = pick(rng);
            REQUIRE(dist_to_Z(a.dot(Lat{n})) > res.cert.kappa / std::pow(2000.0, res.cert.tau));
        }
    }
    SECTION("rational independence margin") {
        REQUIRE(rational_independence_margin({{0.5}}, 10) < 1e-15);
        REQUIRE(rational_independence_margin({{0.5 * (std::sqrt(5.0) - 1.0)}}, 10) > 1e-3);
    }
}
