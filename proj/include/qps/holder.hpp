#pragma once

#include <set>

#include "qps/kam.hpp"
#include "qps/parallel.hpp"
#include "qps/weyl.hpp"

namespace qps {

struct ScanConfig {
    TorusSeries V;
    double lambda{};
    FrequencyVector alpha;
    std::vector<double> theta;
    std::vector<double> E_grid;
    std::vector<double> eps_grid; // log-spaced, >= 3 decades
    long L_oracle = 20000;
    double lambda0_gate = 0.1;
    std::string k_policy = "bracket";
    int threads = 0;

    void validate() const {
        if (E_grid.empty() || eps_grid.empty()) throw std::invalid_argument("scan: empty grids");
        double lo = *std::min_element(eps_grid.begin(), eps_grid.end());
        double hi = *std::max_element(eps_grid.begin(), eps_grid.end());
        if (hi / lo < 999.0) throw std::invalid_argument("scan: eps grid must span >= 3 decades");
        if (lambda > lambda0_gate)
            throw std::invalid_argument("scan: lambda exceeds the configured lambda_0 gate");
        if (int(theta.size()) != alpha.dim() || V.d != alpha.dim())
            throw std::invalid_argument("scan: dimension mismatch");
    }
};

struct EpskBracket {
    long k{};          // eps_{k+1} < eps <= eps_k (k clamped at 1)
    WeylAccumulator at_k;
    WeylAccumulator at_k1; // k+1
};

// Bracket eps between consecutive Weyl scales by incremental accumulation;
// det P_k is nondecreasing in k, so eps_k is nonincreasing.
inline EpskBracket epsk_policy(const SchrodingerCocycle& sc, const std::vector<double>& theta,
                               double eps, long k_max = 1000000) {
    WeylBuilder b(sc, theta);
    WeylAccumulator prev = b.snapshot();
    if (prev.eps_k < eps) {
        // eps_1 already below eps: clamp at k = 1
        EpskBracket br;
        br.k = 1;
        br.at_k = prev;
        b.extend();
        br.at_k1 = b.snapshot();
        return br;
    }
    while (b.k() < k_max) {
        b.extend();
        WeylAccumulator cur = b.snapshot();
        if (cur.eps_k < eps) {
            EpskBracket br;
            br.k = prev.k;
            br.at_k = prev;
            br.at_k1 = cur;
            return br;
        }
        prev = cur;
    }
    throw std::runtime_error("epsk_policy: bracket not found below k_max");
}

struct ModulusRow {
    double E{}, eps{};
    double mass{};       // oracle mu(E-eps, E+eps)
    double mid{};        // 2 eps Im M(E + i eps)
    double right{};      // 4(5+sqrt(24)) eps^2 ||P_{k+1}||
    double ratio{};      // mass / sqrt(eps)
    double eps_k{};      // bracketing scale at k
    double P_norm{};     // ||P_{k+1}||
    long k_used{};
    long L{};
    long richness{};
    bool in_spectrum{};
    bool case1{};            // interval misses the oracle spectrum entirely
    bool flagged{};          // resolution/edge trouble; chain not asserted
    bool chain_ok{};
    bool case2_checked{};
    bool case2_ok{};
    double E_prime{};
};

namespace detail {

struct Window {
    double lo{}, hi{};
    EigenSlice slice;
};

inline std::pair<double, long> mass_from_window(const Window& w, double a, double b, double edge) {
    double mass = 0;
    long rich = 0;
    for (size_t i = 0; i < w.slice.eigs.size(); ++i) {
        double x = w.slice.eigs[i];
        if (x <= a || x > b) continue;
        ++rich;
        double wt = w.slice.weights[i];
        if (x - a < edge || b - x < edge) wt *= 0.5;
        mass += wt;
    }
    return {mass, rich};
}

} // namespace detail

// One scan row: oracle interval mass, resolvent bound and the bracketed
// P_k-route bound, ordered as mu <= mid <= right (5% oracle slack).
inline ModulusRow modulus_estimate(const ScanConfig& cfg, double E, double eps) {
    long L = std::max(cfg.L_oracle, lround(std::ceil(10.0 / eps)));
    TruncatedOperator op = build_operator(cfg.V, cfg.lambda, cfg.alpha, cfg.theta, L);
    detail::Window win;
    win.lo = E - 3 * eps - 50.0 / L;
    win.hi = E + 3 * eps + 50.0 / L;
    win.slice = eigenpairs_in(op, win.lo, win.hi);
    ModulusRow row;
    row.E = E;
    row.eps = eps;
    row.L = L;
    double edge = 10.0 / double(L);
    auto [mass, rich] = detail::mass_from_window(win, E - eps, E + eps, edge);
    row.mass = mass;
    row.richness = rich;
    row.case1 = rich == 0;
    row.ratio = mass / std::sqrt(eps);
    row.mid = 2.0 * eps * borel_transform(op, cd(E, eps)).imag();
    SchrodingerCocycle sc = schrodinger_cocycle(E, cfg.lambda, cfg.V, cfg.alpha);
    EpskBracket br = epsk_policy(sc, cfg.theta, eps);
    row.k_used = br.k;
    row.eps_k = br.at_k.eps_k;
    row.P_norm = op_norm(br.at_k1.P);
    row.right = PROP21_CONST * eps * eps * row.P_norm;
    row.in_spectrum = in_spectrum(cfg.V, cfg.lambda, cfg.alpha, cfg.theta, E, cfg.L_oracle);
    row.flagged = rich == 0;
    row.chain_ok = row.mass <= 1.05 * row.mid && row.mid <= 1.05 * row.right;
    return row;
}

struct ScanReport {
    std::vector<ModulusRow> rows;
    double C_emp{};          // sup of mass/sqrt(eps)
    std::map<int, double> decade_max;
    double decade_spread{};  // max/min over per-decade maxima (mass > 0 rows)
    long flagged_rows{};
    bool chain_all_ok{true}; // over unflagged rows
    bool case2_all_ok{true};
};

// Full (E, eps) scan with per-energy workers and shared eigenvalue caches.
inline ScanReport holder_scan(const ScanConfig& cfg) {
    cfg.validate();
    std::vector<double> eps_sorted = cfg.eps_grid;
    std::sort(eps_sorted.begin(), eps_sorted.end(), std::greater<>());
    // shared operators per distinct truncation size
    std::set<long> Ls;
    for (double eps : eps_sorted) Ls.insert(std::max(cfg.L_oracle, lround(std::ceil(10.0 / eps))));
    std::map<long, std::shared_ptr<TruncatedOperator>> ops;
    for (long L : Ls) {
        auto op = std::make_shared<TruncatedOperator>(
            build_operator(cfg.V, cfg.lambda, cfg.alpha, cfg.theta, L));
        if (op->n() <= 45000) all_eigenvalues(*op); // eager cache, then read-only
        ops[L] = op;
    }
    TruncatedOperator op_half = build_operator(cfg.V, cfg.lambda, cfg.alpha, cfg.theta,
                                               cfg.L_oracle / 2);
    const TruncatedOperator& op_base = *ops.at(std::max(
        cfg.L_oracle, lround(std::ceil(10.0 / eps_sorted.front()))));

    size_t nE = cfg.E_grid.size(), ne = eps_sorted.size();
    std::vector<ModulusRow> rows(nE * ne);
    parallel_for(nE, [&](size_t ei) {
        double E = cfg.E_grid[ei];
        bool in_spec = eigenvalue_within(op_base, E, 5.0 / double(cfg.L_oracle)) &&
                       eigenvalue_within(op_half, E, 5.0 / double(cfg.L_oracle / 2));
        SchrodingerCocycle sc = schrodinger_cocycle(E, cfg.lambda, cfg.V, cfg.alpha);
        // bucket eps values by L and build one eigen window per bucket
        std::map<long, detail::Window> windows;
        for (double eps : eps_sorted) {
            long L = std::max(cfg.L_oracle, lround(std::ceil(10.0 / eps)));
            auto& w = windows[L];
            double need = 3 * eps + 50.0 / L;
            if (w.slice.eigs.empty() && w.hi == 0) {
                w.lo = E - need;
                w.hi = E + need;
            }
        }
        for (auto& [L, w] : windows) w.slice = eigenpairs_in(*ops.at(L), w.lo, w.hi);
        for (size_t gi = 0; gi < ne; ++gi) {
            double eps = eps_sorted[gi];
            long L = std::max(cfg.L_oracle, lround(std::ceil(10.0 / eps)));
            const TruncatedOperator& op = *ops.at(L);
            const detail::Window& win = windows.at(L);
            double edge = 10.0 / double(L);
            ModulusRow row;
            row.E = E;
            row.eps = eps;
            row.L = L;
            row.in_spectrum = in_spec;
            auto [mass, rich] = detail::mass_from_window(win, E - eps, E + eps, edge);
            row.mass = mass;
            row.richness = rich;
            row.case1 = rich == 0;
            row.ratio = mass / std::sqrt(eps);
            row.mid = 2.0 * eps * borel_transform(op, cd(E, eps)).imag();
            EpskBracket br = epsk_policy(sc, cfg.theta, eps);
            row.k_used = br.k;
            row.eps_k = br.at_k.eps_k;
            row.P_norm = op_norm(br.at_k1.P);
            row.right = PROP21_CONST * eps * eps * row.P_norm;
            row.flagged = rich == 0;
            row.chain_ok = row.mass <= 1.05 * row.mid && row.mid <= 1.05 * row.right;
            // proof dichotomy for out-of-spectrum energies whose interval meets
            // the spectrum: shift to a nearby spectral point with doubled radius
            if (!in_spec && rich > 0) {
                auto lo = std::lower_bound(win.slice.eigs.begin(), win.slice.eigs.end(), E - eps);
                double best = 0, bestd = std::numeric_limits<double>::infinity();
                for (auto it = lo; it != win.slice.eigs.end() && *it < E + eps; ++it)
                    if (std::abs(*it - E) < bestd) {
                        bestd = std::abs(*it - E);
                        best = *it;
                    }
                row.case2_checked = true;
                row.E_prime = best;
                auto [m2, r2] = detail::mass_from_window(win, best - 2 * eps, best + 2 * eps, edge);
                (void)r2;
                row.case2_ok = mass <= m2 * (1.0 + 1e-9) + 1e-300;
            }
            rows[ei * ne + gi] = row;
        }
    }, cfg.threads);

    ScanReport rep;
    rep.rows = std::move(rows);
    for (auto& r : rep.rows) {
        rep.C_emp = std::max(rep.C_emp, r.ratio);
        if (r.mass > 0) {
            int dec = int(std::floor(std::log10(r.eps) + 1e-12));
            auto it = rep.decade_max.find(dec);
            if (it == rep.decade_max.end())
                rep.decade_max[dec] = r.ratio;
            else
                it->second = std::max(it->second, r.ratio);
        }
        if (r.flagged) ++rep.flagged_rows;
        if (!r.flagged && !r.chain_ok) rep.chain_all_ok = false;
        if (r.case2_checked && !r.case2_ok) rep.case2_all_ok = false;
    }
    if (!rep.decade_max.empty()) {
        double lo = std::numeric_limits<double>::infinity(), hi = 0;
        for (auto& [d, v] : rep.decade_max) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        rep.decade_spread = (lo > 0) ? hi / lo : std::numeric_limits<double>::infinity();
    }
    return rep;
}

struct LemmaPReport {
    std::vector<long> ks;
    std::vector<double> ratios; // ||P_k|| * ||P_k^{-1}||^3
    double slope{};             // least-squares slope of log ratio vs log k
    bool no_growth{};           // slope <= +0.1
    bool skipped_in_gap{};
    // KAM cross-check (when a converged state is supplied)
    bool cross_checked{};
    double Phi_norm{};
    bool cross_upper_ok{true};  // ||P_k|| <= ||Phi||^4 ||Xt_k||
    bool cross_lower_ok{true};  // ||P_k^{-1}||^{-1} >= (k/1600 - 1)/||Phi||^4 for k/1600 > 2
};

// Boundedness probe for ||P_k|| ||P_k^{-1}||^3 along a k ladder, with the
// reducibility-route cross-check on the conjugated triangular sums.
inline LemmaPReport lemma_P_check(const SchrodingerCocycle& sc, const std::vector<double>& theta,
                                  const std::vector<long>& k_list, bool energy_in_spectrum,
                                  const KamState* kam = nullptr, int theta_samples = 8) {
    LemmaPReport rep;
    if (!energy_in_spectrum) {
        rep.skipped_in_gap = true;
        return rep;
    }
    std::vector<long> ks = k_list;
    std::sort(ks.begin(), ks.end());
    WeylBuilder b(sc, theta);
    for (long k : ks) {
        while (b.k() < k) b.extend();
        WeylAccumulator acc = b.snapshot();
        double nrm = op_norm(acc.P);
        double ninv = nrm / acc.det_P; // self-adjoint 2x2: ||P^{-1}|| = ||P||/det
        rep.ks.push_back(k);
        rep.ratios.push_back(nrm * ninv * ninv * ninv);
    }
    // least squares on (log k, log ratio)
    size_t n = rep.ks.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < n; ++i) {
        double x = std::log(double(rep.ks[i])), y = std::log(rep.ratios[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    rep.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    rep.no_growth = rep.slope <= 0.1;

    if (kam && !kam->aborted) {
        rep.cross_checked = true;
        SchurForm sf = triangularize(kam->A_j);
        Mat2c U = sf.U;
        Mat2c Ui = adjoint(U);
        rep.Phi_norm = kam->B.sup_norm(32); // ||Phi||_0 = ||B||_0, U unitary
        double phi4 = std::pow(rep.Phi_norm, 4.0);
        std::mt19937_64 rng(777);
        std::uniform_real_distribution<double> unif(0, 1);
        int d = kam->alpha.dim();
        for (int s = 0; s < theta_samples; ++s) {
            std::vector<double> th(d);
            for (auto& x : th) x = unif(rng);
            // conjugated cocycle Ct(theta) = U (A_n e^{f_n}) U^{-1}
            auto Ct = [&](const std::vector<double>& t) {
                Mat2d An = kam->A_j;
                Mat2d ef = exp_sl2_mat(kam->f_j.eval_real(t));
                return U * to_complex(An * ef) * Ui;
            };
            for (long k : rep.ks) {
                // Xt_k and P_k at this sample
                Mat2c M = Ct(th);
                Mat2c X = adjoint(M) * M;
                for (long j = 1; j < k; ++j) {
                    M = Ct(shifted(th, kam->alpha, 2 * j - 1)) * M;
                    M = Ct(shifted(th, kam->alpha, 2 * j)) * M;
                    X += adjoint(M) * M;
                }
                WeylAccumulator acc = accumulate_Pk(sc, th, k);
                double pn = op_norm(acc.P);
                double pninv = pn / acc.det_P;
                double xt = op_norm(X);
                if (pn > phi4 * xt * (1.0 + 1e-6)) rep.cross_upper_ok = false;
                if (double(k) / 1600.0 > 2.0) {
                    double lower = (double(k) / 1600.0 - 1.0) / phi4;
                    if (1.0 / pninv < lower * (1.0 - 1e-6)) rep.cross_lower_ok = false;
                }
            }
        }
    }
    return rep;
}

} // namespace qps
