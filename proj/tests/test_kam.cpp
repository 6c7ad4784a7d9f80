#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "qps/jacobi.hpp"
#include "qps/kam.hpp"

using namespace qps;

static const double GOLDEN = 0.5 * (std::sqrt(5.0) - 1.0);
static const FrequencyVector ALPHA2{{std::sqrt(2.0) - 1.0, std::sqrt(3.0) - 1.0}};

TEST_CASE("resonance scan") {
    FrequencyVector a{{GOLDEN}};
    SECTION("xi far from all combinations: none") {
        // 2 xi = 0.5: distances to n*golden mod 1 stay above 1e-3 for |n| <= 20
        auto s = resonance_scan(cd(0.25, 0), a, 20, 1e-3);
        REQUIRE_FALSE(s.n.has_value());
    }
    SECTION("exact resonance returns the smallest |n|") {
        double x = 3.0 * GOLDEN; // 2 xi = <3, alpha>
        auto s = resonance_scan(cd(0.5 * x, 0), a, 10, 1e-6);
        REQUIRE(s.n.has_value());
        REQUIRE(*s.n == Lat{3});
        REQUIRE(s.divisor < 1e-12);
    }
    SECTION("near-resonance at distance below the threshold") {
        double thr = 1e-3;
        double x = 5.0 * GOLDEN + 0.5 * thr;
        auto s = resonance_scan(cd(0.5 * x, 0), a, 10, thr);
        REQUIRE(s.n.has_value());
        REQUIRE(*s.n == Lat{5});
        REQUIRE(s.divisor == Catch::Approx(0.5 * thr).epsilon(1e-9));
    }
    SECTION("ties broken lexicographically (d=2)") {
        // 2 xi = 0: every n with <n,alpha> within thr of Z qualifies; the first
        // hit in shell-lex order must be returned
        auto s = resonance_scan(cd(0, 0), ALPHA2, 10, 0.2);
        REQUIRE(s.n.has_value());
        REQUIRE(*s.n == Lat{-1, -1}); // <(-1,-1),a> = -1.146, first on shell 1 lex
    }
}

TEST_CASE("kam_step") {
    FrequencyVector a{{GOLDEN}};
    SECTION("f = 0 is a fixed point") {
        TorusSeries f(1, ValueClass::Sl2R);
        Mat2d A = rotation(0.13);
        auto res = kam_step(A, f, 0.1, 0.05, a);
        REQUIRE(res.factors.empty());
        REQUIRE(op_norm(res.A_plus - A) == 0.0);
        REQUIRE(res.rec.eps_after == 0.0);
    }
    SECTION("non-resonant contraction at ||f|| = 1e-6 with identity oracle") {
        Mat2d A = rotation(0.13);
        auto f = oracle::random_sl2r_series(1, 2, 1.0, 71);
        f = f.scaled(1e-6 / norm_r(f, 0.1, 64));
        auto res = kam_step(A, f, 0.1, 0.05, a);
        REQUIRE_FALSE(res.rec.resonant);
        REQUIRE(res.rec.eps_after <= 1e-9);
        REQUIRE(res.rec.Bbar_minus_id <= std::sqrt(1e-6));
        REQUIRE(res.rec.A_change <= 2.0 * op_norm(A) * 1e-6 * (1 + 1e-6));
        // independent residual oracle: evaluate the conjugation identity
        ConjugationStack bs;
        bs.d = 1;
        bs.factors = res.factors;
        double worst = 0;
        for (int g = 0; g < 101; ++g) {
            std::vector<double> th{double(g) / 101.0};
            Mat2d B = bs.eval(th);
            Mat2d Bs = bs.eval(shifted(th, a, 1));
            Mat2d lhs = Bs.inv_sl() * A * exp_sl2_mat(f.eval_real(th)) * B;
            Mat2d rhs = res.A_plus * exp_sl2_mat(res.f_plus.eval_real(th));
            worst = std::max(worst, op_norm(lhs - rhs));
        }
        REQUIRE(worst < 1e-13);
    }
    SECTION("engineered resonance: rotation conjugation with degree bookkeeping") {
        double eps = 1e-6;
        Lat nstar{1};
        double delta = 1e-8;
        Mat2d A = rotation(0.5 * GOLDEN + delta); // 2 xi = <n*,alpha> + 2 delta
        auto f = oracle::random_sl2r_series(1, 2, 1.0, 88);
        f = f.scaled(eps / norm_r(f, 0.1, 64));
        auto res = kam_step(A, f, 0.1, 0.05, a);
        REQUIRE(res.rec.resonant);
        REQUIRE(res.rec.resonance.has_value());
        REQUIRE(*res.rec.resonance == nstar);
        REQUIRE(res.rec.eps_after <= eps * eps * (1 + 1e-9));
        // A_+ = +- e^{A''} with a small exponent controlled by the divisor
        REQUIRE(res.rec.A_log_norm <= 4.0 * std::pow(eps, 0.1));
        // residual oracle including the rotation factor
        ConjugationStack bs;
        bs.d = 1;
        bs.factors = res.factors;
        double worst = 0;
        for (int g = 0; g < 101; ++g) {
            std::vector<double> th{double(g) / 101.0};
            Mat2d B = bs.eval(th);
            Mat2d Bs = bs.eval(shifted(th, a, 1));
            Mat2d lhs = Bs.inv_sl() * A * exp_sl2_mat(f.eval_real(th)) * B;
            Mat2d rhs = res.A_plus * exp_sl2_mat(res.f_plus.eval_real(th));
            worst = std::max(worst, op_norm(lhs - rhs));
        }
        REQUIRE(worst < 1e-12);
    }
    SECTION("gate rejects far-from-perturbative input") {
        Mat2d A = rotation(0.13);
        auto f = oracle::random_sl2r_series(1, 1, 1.0, 9);
        f = f.scaled(2.0 / norm_r(f, 0.1, 64));
        REQUIRE_THROWS_AS(kam_step(A, f, 0.1, 0.05, a), KamAbort);
    }
}

static MatrixCocycle state_cocycle(const KamState& st) {
    Mat2d A = st.A_j;
    TorusSeries f = st.f_j;
    return {st.alpha, [A, f](const std::vector<double>& th) {
                return A * exp_sl2_mat(f.eval_real(th));
            }};
}

TEST_CASE("kam_iterate") {
    SECTION("f0 = 0 terminates immediately") {
        TorusSeries f0(2, ValueClass::Sl2R);
        auto st = kam_iterate(rotation(0.2), f0, 0.12, 0.06, ALPHA2);
        REQUIRE(st.j == 0);
        REQUIRE(st.reached_floor);
        REQUIRE(st.B.factors.empty());
    }
    SECTION("two-frequency Schrodinger input contracts superlinearly") {
        TorusSeries V = cosine_potential(2);
        auto [A0, f0] = schrodinger_kam_input(0.3, 0.05, V);
        auto st = kam_iterate(A0, f0, 0.12, 0.06, ALPHA2);
        REQUIRE_FALSE(st.aborted);
        REQUIRE(st.reached_floor);
        REQUIRE(st.j <= 6);
        for (auto& rec : st.ledger) {
            REQUIRE(rec.eps_after <= rec.contraction_target);
            REQUIRE(rec.residual <= std::max(10.0 * rec.eps_after, 5e-13));
            // radius schedule
        }
        // radius schedule r_j - r_{j+1} = (r0 - r)/4^{j+1}
        double r = 0.12;
        for (int j = 0; j < st.j; ++j) r -= (0.12 - 0.06) / std::pow(4.0, j + 1);
        REQUIRE(st.r_j == Catch::Approx(r).margin(1e-15));
        // degree additivity: rho(A0 e^{f0}) = rho(A_j e^{f_j}) + <deg, alpha>/2 mod 1
        SchrodingerCocycle sc = schrodinger_cocycle(0.3, 0.05, V, ALPHA2);
        double raw0 = rotation_number(sc.base, 300000, {0.1, 0.2}).raw;
        double raw1 = rotation_number(state_cocycle(st), 300000, {0.1, 0.2}).raw;
        double shift = raw0 - raw1 - 0.5 * ALPHA2.dot(st.degree);
        shift -= std::round(shift);
        REQUIRE(std::abs(shift) < 2e-4);
    }
    SECTION("non-resonant B-norm doubling ledger") {
        TorusSeries V = cosine_potential(1);
        auto [A0, f0] = schrodinger_kam_input(0.0, 0.05, V);
        auto st = kam_iterate(A0, f0, 0.12, 0.06, {{GOLDEN}});
        REQUIRE_FALSE(st.aborted);
        REQUIRE(st.reached_floor);
        double prev = 1.0;
        for (auto& rec : st.ledger) {
            if (!rec.resonant) REQUIRE(rec.B_norm <= 2.0 * prev * (1 + 1e-9));
            prev = rec.B_norm;
            REQUIRE(rec.B_norm_bound ==
                    Catch::Approx(std::pow(rec.eps_before, -1.0 / 800.0)).epsilon(1e-12));
        }
    }
    SECTION("deep-gap energy: uniformly hyperbolic yet still contracting") {
        TorusSeries V = cosine_potential(2);
        auto [A0, f0] = schrodinger_kam_input(3.0, 0.05, V);
        SchrodingerCocycle sc = schrodinger_cocycle(3.0, 0.05, V, ALPHA2);
        auto probe = uniform_hyperbolicity_probe(sc.base, 200, 16);
        REQUIRE(probe.uniformly_hyperbolic);
        auto st = kam_iterate(A0, f0, 0.12, 0.06, ALPHA2);
        REQUIRE_FALSE(st.aborted);
        REQUIRE(st.reached_floor);
    }
}

TEST_CASE("cn bound and im xi checks") {
    SECTION("all-non-resonant run: ||B|| <= 2 and the bound holds trivially") {
        TorusSeries V = cosine_potential(1);
        auto [A0, f0] = schrodinger_kam_input(0.0, 0.05, V);
        auto st = kam_iterate(A0, f0, 0.12, 0.06, {{GOLDEN}});
        REQUIRE_FALSE(st.aborted);
        for (auto& rec : st.ledger) REQUIRE_FALSE(rec.resonant);
        auto rep = cn_bound_check(st);
        REQUIRE(rep.B_norm <= 2.0);
        REQUIRE(rep.ok);
    }
    SECTION("run with a resonance: |c_n| <= 4 eps_{j0-1}^{1/10}") {
        TorusSeries V = cosine_potential(2);
        auto [A0, f0] = schrodinger_kam_input(0.3, 0.05, V);
        auto st = kam_iterate(A0, f0, 0.12, 0.06, ALPHA2);
        REQUIRE_FALSE(st.aborted);
        int j0 = -1;
        double eps_before_res = 0;
        for (auto& rec : st.ledger)
            if (rec.resonant) {
                j0 = rec.j;
                eps_before_res = rec.eps_before;
            }
        REQUIRE(j0 >= 1); // this configuration exercises the resonant branch
        auto rep = cn_bound_check(st);
        REQUIRE(rep.ok);
        // the constant part stays within the resonant-step exponential bound
        bool all_nonres_after = true;
        for (auto& rec : st.ledger)
            if (rec.j > j0 && rec.resonant) all_nonres_after = false;
        if (all_nonres_after)
            REQUIRE(rep.c_n <= 4.0 * std::pow(eps_before_res, 0.1));
    }
    SECTION("randomized audit over in-spectrum energies") {
        TorusSeries V = cosine_potential(1);
        std::mt19937_64 rng(13);
        std::uniform_real_distribution<double> ue(-1.5, 1.5);
        int checked = 0;
        for (int i = 0; i < 8; ++i) {
            double E = ue(rng);
            auto [A0, f0] = schrodinger_kam_input(E, 0.05, V);
            auto st = kam_iterate(A0, f0, 0.12, 0.06, {{GOLDEN}});
            if (st.aborted) continue;
            auto rep = cn_bound_check(st);
            REQUIRE(rep.ok);
            ++checked;
        }
        REQUIRE(checked >= 6);
    }
    SECTION("im xi at an in-spectrum energy") {
        TorusSeries V = cosine_potential(1);
        REQUIRE(in_spectrum(V, 0.05, {{GOLDEN}}, {0.3}, 0.0, 2000));
        auto [A0, f0] = schrodinger_kam_input(0.0, 0.05, V);
        auto st = kam_iterate(A0, f0, 0.12, 0.06, {{GOLDEN}});
        REQUIRE_FALSE(st.aborted);
        auto rep = im_xi_check(st);
        REQUIRE(rep.ok);
    }
}
