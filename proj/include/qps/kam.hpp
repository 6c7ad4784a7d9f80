#pragma once

#include "qps/cocycle.hpp"
#include "qps/triangular.hpp"

namespace qps {

struct KamOptions {
    double floor = 1e-12;
    int max_steps = 12;
    double gate_coeff = 4.0;      // admission gate: eps <= gate_coeff/(1+||A||)^2
    double resonance_cap = 0.04;  // resonance threshold = min(eps^{1/10}, cap)
    int newton_max = 3;           // linearized solves composed per step
    int norm_grid = 64;           // per-dim grid for strip norms
    int residual_grid = 64;       // per-dim grid for the conjugation-identity residual
    int scan_cap = 128;           // resonance scan radius cap
    int max_modes = 48;           // per-dim mode cutoff of stored series
    double divisor_clamp = 1e-14;
    double noise_floor = 5e-15;   // contraction targets are capped below by this
};

struct KamAbort : std::runtime_error {
    explicit KamAbort(const std::string& what) : std::runtime_error(what) {}
};

struct StepRecord {
    int j{};
    bool resonant{};
    long N{};        // 2|ln eps|/(r - r')
    long N_scanned{};
    std::optional<Lat> resonance;
    double smallest_divisor{std::numeric_limits<double>::infinity()};
    double eps_before{}, eps_after{};
    double contraction_target{};
    double Bbar_norm{};          // ||Bbar||_0 of this step's conjugation
    double Bbar_minus_id{};      // ||Bbar - Id||_{r'} (non-resonant steps)
    double A_change{};           // ||A+ - A|| (non-resonant steps)
    double A_log_norm{};         // ||A''|| with A+ = +-e^{A''} (resonant steps)
    double re_xi{}, im_xi{};     // eigenvalue parameter of A_{j+1} (e^{+-2 pi i xi})
    double c_n{};                // |c| of the triangularized A_{j+1}
    double B_norm{};             // cumulative ||B_{j+1}||_0
    double B_norm_bound{};       // eps_j^{-1/800} ledger value
    double residual{};           // conjugation-identity residual on the grid
};

struct ConjFactor {
    enum Kind { Const, RotPhase, ExpSeries } kind{Const};
    Mat2d M = Mat2d::identity(); // Const
    Lat n;                       // RotPhase: theta -> R_{<n,theta>/2}
    TorusSeries Y;               // ExpSeries: theta -> exp(Y(theta))
};

struct ConjugationStack {
    int d{1};
    std::vector<ConjFactor> factors;

    Mat2d eval(const std::vector<double>& th) const {
        Mat2d B = Mat2d::identity();
        for (auto& f : factors) {
            switch (f.kind) {
                case ConjFactor::Const:
                    B = B * f.M;
                    break;
                case ConjFactor::RotPhase: {
                    double ang = 0;
                    for (int i = 0; i < d; ++i) ang += f.n[i] * th[i];
                    B = B * rotation(0.5 * ang);
                    break;
                }
                case ConjFactor::ExpSeries:
                    B = B * exp_sl2_mat(f.Y.eval_real(th));
                    break;
            }
        }
        return B;
    }

    double sup_norm(int grid) const {
        size_t total = 1;
        for (int i = 0; i < d; ++i) total *= grid;
        double m = 0;
        std::vector<double> th(d);
        for (size_t t = 0; t < total; ++t) {
            size_t rem = t;
            for (int i = 0; i < d; ++i) {
                th[i] = double(rem % grid) / grid;
                rem /= grid;
            }
            m = std::max(m, op_norm(eval(th)));
        }
        return m;
    }
};

struct KamState {
    int j{};
    double r_j{};
    double eps_j{};
    Mat2d A_j = Mat2d::identity();
    cd xi_j;
    TorusSeries f_j;
    ConjugationStack B;
    Lat degree;
    std::vector<StepRecord> ledger;
    bool aborted{};
    std::string abort_reason;
    bool reached_floor{};
    // inputs kept for residual checks
    Mat2d A0 = Mat2d::identity();
    TorusSeries f0;
    FrequencyVector alpha;
    double r0{}, r_target{};
};

// Eigenvalue parameter: A has eigenvalues e^{+-2 pi i xi}, Re xi in [0, 1/2].
inline cd xi_of(const Mat2d& A) {
    double s = 0.5 * A.tr();
    if (std::abs(s) <= 1.0)
        return cd(std::acos(s) / TWO_PI, 0.0);
    if (s > 1.0)
        return cd(0.0, -std::acosh(s) / TWO_PI);
    return cd(0.5, -std::acosh(-s) / TWO_PI);
}

struct ResonanceScan {
    std::optional<Lat> n;
    double divisor{std::numeric_limits<double>::infinity()}; // of the hit, if any
};

// First lattice point (by sup-norm shell, lexicographic within a shell) with
// ||2 Re xi - <n, alpha>||_{R/Z} < threshold, or none.
inline ResonanceScan resonance_scan(cd xi, const FrequencyVector& alpha, long N, double threshold) {
    ResonanceScan out;
    double x2 = 2.0 * xi.real();
    for (long s = 1; s <= N; ++s) {
        bool found = false;
        for_each_on_shell(alpha.dim(), int(s), [&](const Lat& n) {
            double div = dist_to_Z(x2 - alpha.dot(n));
            if (div < threshold) {
                out.n = n;
                out.divisor = div;
                found = true;
                return false;
            }
            return true;
        });
        if (found) break;
    }
    return out;
}

namespace detail {

// Solve the 3x3 complex system M y = b by Gaussian elimination with partial
// pivoting; returns false when a pivot degenerates.
inline bool solve3(cd M[3][3], cd b[3]) {
    int perm[3] = {0, 1, 2};
    for (int col = 0; col < 3; ++col) {
        int piv = col;
        for (int r = col + 1; r < 3; ++r)
            if (std::abs(M[perm[r]][col]) > std::abs(M[perm[piv]][col])) piv = r;
        std::swap(perm[col], perm[piv]);
        cd p = M[perm[col]][col];
        if (std::abs(p) < 1e-300) return false;
        for (int r = col + 1; r < 3; ++r) {
            cd f = M[perm[r]][col] / p;
            for (int cc = col; cc < 3; ++cc) M[perm[r]][cc] -= f * M[perm[col]][cc];
            b[perm[r]] -= f * b[perm[col]];
        }
    }
    cd y[3];
    for (int row = 2; row >= 0; --row) {
        cd s = b[perm[row]];
        for (int cc = row + 1; cc < 3; ++cc) s -= M[perm[row]][cc] * y[cc];
        y[row] = s / M[perm[row]][row];
    }
    b[0] = y[0];
    b[1] = y[1];
    b[2] = y[2];
    return true;
}

// coords of a trace-free matrix in the basis (1,0;0,-1),(0,1;0,0),(0,0;1,0)
inline void sl2_coords(const Mat2c& X, cd out[3]) {
    out[0] = X.a;
    out[1] = X.b;
    out[2] = X.c;
}
inline Mat2c sl2_from_coords(const cd y[3]) { return {y[0], y[1], y[2], -y[0]}; }

struct HomologicalSolution {
    TorusSeries Y;
    double min_divisor{std::numeric_limits<double>::infinity()};
};

// Solve e^{2 pi i <n,alpha>} A^{-1} Y(n) A - Y(n) = f(n) for all support modes
// 0 < |n| <= Ncut.  Divisors are the eigenvalues z-1, z e^{-+ 2 i xi_rad}-1.
inline HomologicalSolution solve_homological(const Mat2d& A, const TorusSeries& f,
                                             const FrequencyVector& alpha, long Ncut,
                                             double clamp) {
    HomologicalSolution sol;
    sol.Y = TorusSeries(f.d, ValueClass::Sl2R);
    Mat2d Ai = A.inv_sl();
    // 3x3 representation of X -> A^{-1} X A
    Mat2d E[3] = {{1, 0, 0, -1}, {0, 1, 0, 0}, {0, 0, 1, 0}};
    double K[3][3];
    for (int jb = 0; jb < 3; ++jb) {
        Mat2d M = Ai * E[jb] * A;
        K[0][jb] = M.a;
        K[1][jb] = M.b;
        K[2][jb] = M.c;
    }
    cd xir = TWO_PI * xi_of(A); // eigenvalues e^{+- i xir}
    cd lam2p = std::exp(cd(0, 2) * xir), lam2m = std::exp(cd(0, -2) * xir);
    for (auto& [n, fc] : f.coeffs) {
        if (sup_norm(n) == 0 || sup_norm(n) > Ncut) continue;
        // process each +-n pair once, mirror the solution
        bool lex_pos = false;
        for (int v : n) {
            if (v > 0) { lex_pos = true; break; }
            if (v < 0) break;
        }
        if (!lex_pos) continue;
        cd z = std::polar(1.0, TWO_PI * alpha.dot(n));
        double div = std::min({std::abs(z - 1.0), std::abs(z * lam2p - 1.0),
                               std::abs(z * lam2m - 1.0)});
        sol.min_divisor = std::min(sol.min_divisor, div);
        if (div < clamp)
            throw KamAbort("homological solve: small divisor " + std::to_string(div) +
                           " below clamp and not flagged resonant");
        cd M[3][3];
        for (int r = 0; r < 3; ++r)
            for (int cc = 0; cc < 3; ++cc) M[r][cc] = z * K[r][cc] - (r == cc ? 1.0 : 0.0);
        cd rhs[3];
        sl2_coords(fc, rhs);
        if (!solve3(M, rhs)) throw KamAbort("homological solve: singular 3x3 system");
        sol.Y.set(n, sl2_from_coords(rhs));
        cd rhsm[3] = {std::conj(rhs[0]), std::conj(rhs[1]), std::conj(rhs[2])};
        sol.Y.set(negate(n), sl2_from_coords(rhsm));
    }
    return sol;
}

// Drop coefficients that cannot carry certifiable content: below the
// arithmetic noise floor of the grid extraction (absolute), below the raw
// dynamic range (relative), or past the l1 radius where the analytic
// envelope from the peak coefficient has already decayed to the floor.  The
// strip norm weights mode n by e^{2 pi |n|_1 r}, so leftover projection junk
// at far modes would otherwise swamp the measurement.
inline void prune_series(TorusSeries& f, double r, double abs_floor, double rel = 1e-13) {
    double cmax = 0;
    for (auto& [n, c] : f.coeffs) cmax = std::max(cmax, op_norm(c));
    if (cmax == 0) return;
    double cut = std::max(abs_floor, rel * cmax);
    double l1cap = std::numeric_limits<double>::infinity();
    if (r > 0 && cmax > cut) l1cap = std::log(cmax / cut) / (TWO_PI * r) + 2.0;
    for (auto it = f.coeffs.begin(); it != f.coeffs.end();)
        if (op_norm(it->second) < cut || l1_norm(it->first) > l1cap)
            it = f.coeffs.erase(it);
        else
            ++it;
}

} // namespace detail

struct KamStepResult {
    std::vector<ConjFactor> factors;
    Mat2d A_plus;
    TorusSeries f_plus;
    StepRecord rec;
};

// absolute coefficient noise floor of a grid extraction against constant part A
inline double noise_abs(const Mat2d& A) {
    double s = 1.0 + op_norm(A);
    return 40.0 * 1e-16 * s * s;
}

// One almost-reducibility step: non-resonant homological solve (with a short
// internal Newton loop) or resonant rotation conjugation followed by a solve.
inline KamStepResult kam_step(const Mat2d& A, const TorusSeries& f, double r, double r_next,
                              const FrequencyVector& alpha, const KamOptions& opts = {}) {
    if (!(r_next > 0 && r_next < r)) throw std::invalid_argument("kam_step: need 0 < r_next < r");
    KamStepResult out;
    StepRecord& rec = out.rec;
    double eps = norm_r(f, r, opts.norm_grid);
    rec.eps_before = eps;
    if (eps == 0.0) {
        out.A_plus = A;
        out.f_plus = f;
        rec.contraction_target = 0;
        return out;
    }
    double anorm = op_norm(A);
    if (eps > opts.gate_coeff / ((1.0 + anorm) * (1.0 + anorm)))
        throw KamAbort("kam_step: gate rejected eps=" + std::to_string(eps) +
                       " with ||A||=" + std::to_string(anorm));
    long N = lround(std::ceil(2.0 * std::abs(std::log(eps)) / (r - r_next)));
    rec.N = N;
    long Nscan = std::min<long>(N, opts.scan_cap);
    rec.N_scanned = Nscan;
    cd xi = xi_of(A);
    // the paper's eps^{1/10} exceeds 1/2 at desk scale; cap it and let the
    // solve-safety scale 4 sqrt(eps) take over once eps is small
    double threshold =
        std::min({std::pow(eps, 0.1), 4.0 * std::sqrt(eps), opts.resonance_cap});
    ResonanceScan scan = resonance_scan(xi, alpha, Nscan, threshold);
    if (scan.n && std::abs(A.tr()) >= 2.0) {
        // strongly hyperbolic constant part: the true off-diagonal divisor is
        // bounded below by e^{4 pi |Im xi|} - 1 regardless of Re-resonances
        double hyp = std::abs(std::exp(2.0 * TWO_PI * std::abs(xi.imag())) - 1.0);
        if (hyp >= 2.0 * std::sin(M_PI * threshold))
            scan.n.reset();
        else
            throw KamAbort("kam_step: resonance detected for near-parabolic constant part");
    }
    if (scan.n) {
        // ignore resonances the solve can absorb: the amplified coefficient at
        // the resonant mode stays well below the sqrt(eps) conjugation budget
        // (far-lattice hits carry no Fourier weight by analytic decay)
        cd xir = TWO_PI * xi;
        cd z = std::polar(1.0, TWO_PI * alpha.dot(*scan.n));
        double dstar = std::min(std::abs(z * std::exp(cd(0, 2) * xir) - 1.0),
                                std::abs(z * std::exp(cd(0, -2) * xir) - 1.0));
        double wstar = std::max(op_norm(f.coeff(*scan.n)), op_norm(f.coeff(negate(*scan.n))));
        if (wstar <= 0.1 * std::sqrt(eps) * std::max(dstar, 1e-300)) scan.n.reset();
    }

    Mat2d A_cur = A;
    TorusSeries f_cur = f;
    rec.resonant = scan.n.has_value();

    if (rec.resonant) {
        rec.resonance = scan.n;
        rec.smallest_divisor = scan.divisor;
        // Normalize A to an exact rotation: W^{-1} A W = R_xi with W = [q p],
        // A(p+iq) = e^{2 pi i xi}(p+iq), det W = 1.
        cd lambda = std::exp(cd(0, TWO_PI) * xi);
        cd vx, vy;
        {
            cd c1x = cd(A.b), c1y = lambda - A.a;
            cd c2x = lambda - A.d, c2y = cd(A.c);
            if (sqr_abs(c1x) + sqr_abs(c1y) >= sqr_abs(c2x) + sqr_abs(c2y)) {
                vx = c1x;
                vy = c1y;
            } else {
                vx = c2x;
                vy = c2y;
            }
        }
        Mat2d W{vx.imag(), vx.real(), vy.imag(), vy.real()}; // columns q, p
        if (W.det() < 0) { W.a = -W.a; W.c = -W.c; }          // conjugate eigenvector
        double sc = 1.0 / std::sqrt(W.det());
        W *= sc;
        out.factors.push_back({ConjFactor::Const, W, {}, {}});
        Mat2d R = W.inv_sl() * A * W;
        double phi = std::atan2(R.c, R.a) / TWO_PI;
        const Lat& nstar = *scan.n;
        double shift = 0.5 * alpha.dot(nstar);
        A_cur = rotation(phi - shift);
        out.factors.push_back({ConjFactor::RotPhase, Mat2d::identity(), nstar, {}});
        // f -> Ad(R_{-<n*,theta>/2}) (W^{-1} f W) on a grid; finite trig polynomial,
        // so the projection is exact once the box covers deg f + |n*|.
        int Mrot = std::max(1, f.degree() + sup_norm(nstar)) + 2;
        int G = 2 * Mrot + 9;
        GridVals gv = eval_on_grid(f_cur, G);
        int d = f.d;
        std::vector<double> th(d);
        Mat2d Wi = W.inv_sl();
        for (size_t t = 0; t < gv.v.size(); ++t) {
            size_t rem = t;
            for (int i = d - 1; i >= 0; --i) {
                th[i] = double(rem % G) / G;
                rem /= G;
            }
            double ang = 0;
            for (int i = 0; i < d; ++i) ang += nstar[i] * th[i];
            Mat2d Rm = rotation(-0.5 * ang);
            Mat2d val = Rm * (Wi * real_part(gv.v[t]) * W) * transpose(Rm);
            gv.v[t] = to_complex(val);
        }
        f_cur = project_to_series(gv, Mrot, ValueClass::Sl2R);
        detail::prune_series(f_cur, r_next, noise_abs(A_cur));
        rec.contraction_target = std::max(eps * eps, opts.noise_floor);
    } else {
        rec.smallest_divisor = scan.divisor;
        rec.contraction_target = std::max(std::pow(eps, 1.5), opts.noise_floor);
    }

    // Internal Newton loop: solve, absorb the average, re-extract.
    const bool trace = std::getenv("QPS_KAM_TRACE") != nullptr;
    double eps_cur = norm_r(f_cur, r_next, opts.norm_grid);
    for (int it = 0; it < opts.newton_max && eps_cur > rec.contraction_target; ++it) {
        long Ncut = std::min<long>(N, opts.max_modes);
        auto sol = detail::solve_homological(A_cur, truncate(f_cur, int(Ncut)), alpha,
                                             Ncut, opts.divisor_clamp);
        if (trace)
            std::fprintf(stderr,
                         "    newton it=%d eps_cur=%.3e |Y|=%.3e mindiv=%.3e degf=%d suppf=%zu "
                         "trA=%.6f\n",
                         it, eps_cur, norm_r(sol.Y, 0.0, 16), sol.min_divisor, f_cur.degree(),
                         f_cur.coeffs.size(), A_cur.tr());
        rec.smallest_divisor = std::min(rec.smallest_divisor, sol.min_divisor);
        Mat2d A_next = A_cur * exp_sl2_mat(real_part(f_cur.coeff(Lat(f.d, 0))));
        // exact pointwise extraction of the new error
        int Mext = std::min(opts.max_modes,
                            std::max(1, f_cur.degree() + std::max(1, sol.Y.degree())) + 8);
        int G = 2 * Mext + 33;
        GridVals fg = eval_on_grid(f_cur, G);
        GridVals yg = eval_on_grid(sol.Y, G);
        GridVals ysh = eval_on_grid(sol.Y, G, {}, alpha.alpha); // Y(theta + alpha)
        Mat2d Ain = A_next.inv_sl();
        for (size_t t = 0; t < fg.v.size(); ++t) {
            Mat2d Yt = real_part(yg.v[t]);
            Mat2d Yn = real_part(ysh.v[t]);
            Mat2d Gm = Ain * exp_sl2_mat(Mat2d{-Yn.a, -Yn.b, -Yn.c, -Yn.d}) * A_cur *
                       exp_sl2_mat(real_part(fg.v[t])) * exp_sl2_mat(Yt);
            if (Gm.tr() <= -2.0 + 1e-9)
                throw KamAbort("kam_step: extracted cocycle left the identity component");
            fg.v[t] = to_complex(log_sl2_mat(Gm));
        }
        TorusSeries f_new = project_to_series(fg, Mext, ValueClass::Sl2R);
        detail::prune_series(f_new, r_next, noise_abs(A_cur));
        double eps_new = norm_r(f_new, r_next, opts.norm_grid);
        if (trace)
            std::fprintf(stderr, "      -> Mext=%d G=%d eps_new=%.3e supp=%zu\n", Mext, G, eps_new,
                         f_new.coeffs.size());
        out.factors.push_back({ConjFactor::ExpSeries, Mat2d::identity(), {}, sol.Y});
        A_cur = A_next;
        f_cur = f_new;
        if (eps_new > 0.9 * eps_cur && eps_new > rec.contraction_target)
            throw KamAbort("kam_step: no contraction (eps " + std::to_string(eps_cur) + " -> " +
                           std::to_string(eps_new) + ")");
        eps_cur = eps_new;
    }
    if (eps_cur > rec.contraction_target)
        throw KamAbort("kam_step: contraction target " + std::to_string(rec.contraction_target) +
                       " missed, measured " + std::to_string(eps_cur));

    out.A_plus = A_cur;
    out.f_plus = f_cur;
    rec.eps_after = eps_cur;
    rec.A_change = op_norm(A_cur - A);
    cd xip = xi_of(A_cur);
    rec.re_xi = xip.real();
    rec.im_xi = xip.imag();
    rec.c_n = std::abs(triangularize(A_cur).c);
    if (rec.resonant) {
        Mat2d Ap = A_cur;
        if (Ap.tr() < 0) Ap = {-Ap.a, -Ap.b, -Ap.c, -Ap.d};
        rec.A_log_norm = op_norm(log_sl2_mat(Ap));
    }
    // step conjugation norms
    {
        ConjugationStack bs;
        bs.d = f.d;
        bs.factors = out.factors;
        rec.Bbar_norm = bs.sup_norm(opts.norm_grid);
        if (!rec.resonant) {
            // ||Bbar - Id||_{r_next} over the 2^d strip corners
            double worst = 0;
            int d = f.d;
            int corners = 1 << d;
            size_t total = 1;
            for (int i = 0; i < d; ++i) total *= opts.norm_grid;
            for (int c = 0; c < corners; ++c) {
                std::vector<double> off(d);
                for (int i = 0; i < d; ++i) off[i] = (c >> i & 1) ? r_next : -r_next;
                for (size_t t = 0; t < total; ++t) {
                    size_t rem = t;
                    std::vector<double> th(d);
                    for (int i = 0; i < d; ++i) {
                        th[i] = double(rem % opts.norm_grid) / opts.norm_grid;
                        rem /= opts.norm_grid;
                    }
                    Mat2c B = Mat2c::identity();
                    for (auto& fac : out.factors) {
                        if (fac.kind == ConjFactor::ExpSeries)
                            B = B * exp_sl2_mat(fac.Y.eval(th, off));
                        else
                            B = B * to_complex(fac.M);
                    }
                    worst = std::max(worst, op_norm(B - Mat2c::identity()));
                }
            }
            rec.Bbar_minus_id = worst;
        }
    }
    return out;
}

// Conjugation-identity residual max over a grid:
// || B(th+a)^{-1} A0 e^{f0(th)} B(th) - A_j e^{f_j(th)} ||
inline double conjugation_residual(const KamState& st, int grid) {
    int d = st.f0.d;
    size_t total = 1;
    for (int i = 0; i < d; ++i) total *= grid;
    double worst = 0;
    std::vector<double> th(d);
    for (size_t t = 0; t < total; ++t) {
        size_t rem = t;
        for (int i = 0; i < d; ++i) {
            th[i] = double(rem % grid) / grid;
            rem /= grid;
        }
        Mat2d B = st.B.eval(th);
        Mat2d Bs = st.B.eval(shifted(th, st.alpha, 1));
        Mat2d lhs = Bs.inv_sl() * st.A0 * exp_sl2_mat(st.f0.eval_real(th)) * B;
        Mat2d rhs = st.A_j * exp_sl2_mat(st.f_j.eval_real(th));
        worst = std::max(worst, op_norm(lhs - rhs));
    }
    return worst;
}

// Full iteration on the fixed radius schedule r_j - r_{j+1} = (r0 - r)/4^{j+1}.
inline KamState kam_iterate(const Mat2d& A0, const TorusSeries& f0, double r0, double r_target,
                            const FrequencyVector& alpha, const KamOptions& opts = {}) {
    KamState st;
    st.A0 = A0;
    st.f0 = f0;
    st.alpha = alpha;
    st.r0 = r0;
    st.r_target = r_target;
    st.r_j = r0;
    st.A_j = A0;
    st.f_j = f0;
    st.B.d = f0.d;
    st.degree.assign(f0.d, 0);
    st.xi_j = xi_of(A0);
    st.eps_j = norm_r(f0, r0, opts.norm_grid);
    while (st.j < opts.max_steps) {
        if (st.eps_j < opts.floor) {
            st.reached_floor = true;
            break;
        }
        double r_next = st.r_j - (r0 - r_target) / std::pow(4.0, st.j + 1);
        try {
            KamStepResult res = kam_step(st.A_j, st.f_j, st.r_j, r_next, alpha, opts);
            for (auto& f : res.factors) st.B.factors.push_back(f);
            if (res.rec.resonance)
                for (int i = 0; i < f0.d; ++i) st.degree[i] += (*res.rec.resonance)[i];
            st.A_j = res.A_plus;
            st.f_j = res.f_plus;
            st.r_j = r_next;
            st.eps_j = res.rec.eps_after;
            st.xi_j = xi_of(st.A_j);
            ++st.j;
            StepRecord rec = res.rec;
            rec.j = st.j;
            rec.B_norm = st.B.sup_norm(opts.norm_grid);
            rec.B_norm_bound = std::pow(rec.eps_before, -1.0 / 800.0);
            rec.residual = conjugation_residual(st, opts.residual_grid);
            st.ledger.push_back(rec);
            if (rec.eps_after == 0.0) {
                st.reached_floor = true;
                break;
            }
        } catch (const KamAbort& e) {
            st.aborted = true;
            st.abort_reason = e.what();
            break;
        }
    }
    if (!st.aborted && st.eps_j < opts.floor) st.reached_floor = true;
    return st;
}

// Schrodinger input: S_E = A0 e^{f0} with A0 = (E,-1;1,0) and the exact
// nilpotent logarithm f0 = (0,0; lambda V, 0).
inline std::pair<Mat2d, TorusSeries> schrodinger_kam_input(double E, double lambda,
                                                           const TorusSeries& V) {
    Mat2d A0{E, -1.0, 1.0, 0.0};
    TorusSeries f0(V.d, ValueClass::Sl2R);
    for (auto& [n, c] : V.coeffs) {
        Mat2c m = Mat2c::zero();
        m.c = lambda * c.a;
        f0.set(n, m);
    }
    return {A0, f0};
}

struct CnBoundReport {
    double c_n{};
    double B_norm{};
    double value{};  // |c_n| ||B_n||_0^8
    double bound{};  // 4 ||A_0||
    bool ok{};
};

inline CnBoundReport cn_bound_check(const KamState& st, int grid = 64) {
    CnBoundReport r;
    SchurForm s = triangularize(st.A_j);
    r.c_n = std::abs(s.c);
    r.B_norm = st.B.sup_norm(grid);
    r.value = r.c_n * std::pow(r.B_norm, 8.0);
    r.bound = 4.0 * op_norm(st.A0);
    r.ok = r.value <= r.bound;
    return r;
}

struct ImXiReport {
    bool ok{true};
    int first_violation{-1};
    double worst_margin{0};
};

// |Im xi_j| (radians) <= eps_j^{1/4} at every recorded step; meaningful for
// in-spectrum energies.
inline ImXiReport im_xi_check(const KamState& st) {
    ImXiReport r;
    for (auto& rec : st.ledger) {
        double lhs = TWO_PI * std::abs(rec.im_xi);
        double rhs = std::pow(std::max(rec.eps_after, 1e-300), 0.25);
        if (lhs > rhs) {
            r.ok = false;
            if (r.first_violation < 0) r.first_violation = rec.j;
        }
        r.worst_margin = std::max(r.worst_margin, lhs - rhs);
    }
    return r;
}

} // namespace qps
