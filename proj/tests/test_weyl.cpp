#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "qps/weyl.hpp"

using namespace qps;

static const double GOLDEN = 0.5 * (std::sqrt(5.0) - 1.0);

static SchrodingerCocycle amo(double E, double lambda) {
    return schrodinger_cocycle(E, lambda, cosine_potential(1), FrequencyVector{{GOLDEN}});
}

TEST_CASE("accumulate_Pk") {
    SECTION("free E=0: P_k = k Id, det = k^2, eps_k = 1/(2k)") {
        auto sc = amo(0.0, 0.0);
        for (long k : {1L, 7L, 40L}) {
            auto acc = accumulate_Pk(sc, {0.21}, k);
            REQUIRE(op_norm(acc.P - double(k) * Mat2d::identity()) < 1e-10);
            REQUIRE(acc.det_P == Catch::Approx(double(k) * double(k)).epsilon(1e-12));
            REQUIRE(acc.eps_k == Catch::Approx(1.0 / (2.0 * k)).epsilon(1e-12));
        }
    }
    SECTION("k=1 is S(theta)^* S(theta)") {
        auto sc = amo(0.8, 0.07);
        auto acc = accumulate_Pk(sc, {0.35}, 1);
        Mat2d S = sc.base.A({0.35});
        REQUIRE(op_norm(acc.P - transpose(S) * S) < 1e-14);
    }
    SECTION("matches the brute-force re-multiplication oracle at k=40") {
        auto sc = amo(0.37, 0.09);
        auto acc = accumulate_Pk(sc, {0.61}, 40);
        Mat2d brute = oracle::pk_brute(sc, {0.61}, 40);
        REQUIRE(op_norm(acc.P - brute) / op_norm(brute) < 1e-10);
    }
    SECTION("self-adjoint 2x2 identity ||P|| = det(P) ||P^{-1}||") {
        auto sc = amo(0.37, 0.09);
        for (long k : {5L, 50L, 500L}) {
            auto acc = accumulate_Pk(sc, {0.13}, k);
            double n = op_norm(acc.P);
            double ninv = op_norm(acc.P.inv());
            REQUIRE(std::abs(n - acc.det_P * ninv) / n < 1e-9);
        }
    }
    SECTION("det P_k nondecreasing and eps ratio bounded: det P_{k+1} <= C det P_k") {
        auto sc = amo(0.42, 0.1);
        // C = max over the grid of (1 + ||S_E||^2)^2
        double smax = 0;
        for (int g = 0; g < 256; ++g) {
            double n = op_norm(sc.base.A({double(g) / 256}));
            smax = std::max(smax, n);
        }
        double C = (1.0 + smax * smax) * (1.0 + smax * smax);
        WeylBuilder b(sc, {0.3});
        double prev_det = b.snapshot().det_P;
        for (long k = 2; k <= 500; ++k) {
            b.extend();
            double det = b.snapshot().det_P;
            REQUIRE(det >= prev_det * (1 - 1e-12));
            REQUIRE(det <= C * prev_det * (1 + 1e-9));
            prev_det = det;
        }
    }
}

TEST_CASE("det_via_solutions") {
    SECTION("free case det P_10 = 100 and the grid minimum is constant in beta") {
        auto sc = amo(0.0, 0.0);
        double v = det_via_solutions(sc, {0.4}, 10, 720);
        REQUIRE(v == Catch::Approx(100.0).epsilon(0.005));
    }
    SECTION("grid minimum dominates det P_k and refines monotonically") {
        auto sc = amo(0.3, 0.08);
        auto acc = accumulate_Pk(sc, {0.2}, 12);
        double coarse = det_via_solutions(sc, {0.2}, 12, 360);
        double fine = det_via_solutions(sc, {0.2}, 12, 1440);
        double finer = det_via_solutions(sc, {0.2}, 12, 5760);
        REQUIRE(coarse >= acc.det_P * (1 - 1e-9));
        REQUIRE(fine >= acc.det_P * (1 - 1e-9));
        REQUIRE(finer >= acc.det_P * (1 - 1e-9));
        REQUIRE(fine <= coarse * (1 + 1e-12));
        REQUIRE(finer <= fine * (1 + 1e-12));
    }
    SECTION("random instance at k=25 matches the determinant within 1%") {
        std::mt19937_64 rng(17);
        std::uniform_real_distribution<double> ue(-1.5, 1.5), ut(0, 1), ul(0, 0.1);
        for (int i = 0; i < 5; ++i) {
            double E = ue(rng), lambda = ul(rng), th = ut(rng);
            auto sc = amo(E, lambda);
            auto acc = accumulate_Pk(sc, {th}, 25);
            double v = det_via_solutions(sc, {th}, 25, 7200);
            REQUIRE(v == Catch::Approx(acc.det_P).epsilon(0.01));
        }
    }
}

TEST_CASE("prop21 chain report") {
    SECTION("free E=0, k=20: chain holds and the middle term matches the closed form") {
        auto sc = amo(0.0, 0.0);
        auto rep = prop21_chain(sc, {0.0}, 20, 4000);
        REQUIRE(rep.eps_k == Catch::Approx(1.0 / 40.0).epsilon(1e-12));
        REQUIRE(rep.chain_ok());
        // closed form: Im M(i eps) = 2/sqrt(4 + eps^2), so mid = 2 eps Im M
        double eps = rep.eps_k;
        double mid_exact = 2.0 * eps * 2.0 / std::sqrt(4.0 + eps * eps);
        REQUIRE(rep.mid == Catch::Approx(mid_exact).epsilon(1e-3));
        // right term constant: 4(5+sqrt(24)) eps^2 ||P|| with P = 20 Id
        REQUIRE(rep.right ==
                Catch::Approx(PROP21_CONST * eps * eps * 20.0).epsilon(1e-12));
    }
    SECTION("AMO lambda=0.1 at an in-spectrum energy") {
        auto sc = amo(0.0, 0.1);
        auto rep = prop21_chain(sc, {0.3}, 50, 8000);
        REQUIRE_FALSE(rep.flagged);
        REQUIRE(rep.chain_ok());
        REQUIRE(rep.mu > 0);
    }
    SECTION("overflow guard saturates in the hyperbolic regime") {
        auto sc = amo(8.0, 0.0);
        REQUIRE_THROWS_AS(accumulate_Pk(sc, {0.1}, 400), std::overflow_error);
    }
}
