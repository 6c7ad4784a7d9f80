#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "qps/holder.hpp"

namespace qps {

using nlohmann::json;

// full-precision decimal (17 significant digits) for reproducible output
inline std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

inline json series_to_json(const TorusSeries& f) {
    json coeffs = json::array();
    for (auto& [n, c] : f.coeffs) {
        json re = {{c.a.real(), c.b.real()}, {c.c.real(), c.d.real()}};
        json im = {{c.a.imag(), c.b.imag()}, {c.c.imag(), c.d.imag()}};
        coeffs.push_back({{"n", n}, {"re", re}, {"im", im}});
    }
    return {{"d", f.d}, {"value_class", to_string(f.cls)}, {"coeffs", coeffs}};
}

inline TorusSeries series_from_json(const json& j) {
    TorusSeries f(j.at("d").get<int>(), value_class_from_string(j.at("value_class").get<std::string>()));
    for (auto& item : j.at("coeffs")) {
        Lat n = item.at("n").get<Lat>();
        if (int(n.size()) != f.d) throw std::invalid_argument("series: lattice point of wrong dim");
        auto& re = item.at("re");
        Mat2c m;
        m.a = cd(re[0][0].get<double>(), 0);
        m.b = cd(re[0][1].get<double>(), 0);
        m.c = cd(re[1][0].get<double>(), 0);
        m.d = cd(re[1][1].get<double>(), 0);
        if (item.contains("im")) {
            auto& im = item.at("im");
            m.a += cd(0, im[0][0].get<double>());
            m.b += cd(0, im[0][1].get<double>());
            m.c += cd(0, im[1][0].get<double>());
            m.d += cd(0, im[1][1].get<double>());
        }
        f.set(n, m);
    }
    return f;
}

inline TorusSeries load_series(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open series file: " + path);
    json j;
    in >> j;
    return series_from_json(j);
}

inline json certificate_to_json(const DiophantineResult& r) {
    json j;
    j["certified"] = r.certified;
    j["alpha"] = r.cert.alpha;
    j["kappa"] = r.cert.kappa;
    j["tau"] = r.cert.tau;
    j["checked_radius"] = r.cert.checked_radius;
    j["worst_ratio"] = r.cert.worst_ratio;
    if (!r.certified) {
        j["witness"] = r.witness;
        j["witness_divisor"] = r.witness_divisor;
    }
    return j;
}

inline json weyl_to_json(const WeylAccumulator& w) {
    return {{"k", w.k},
            {"P", {{w.P.a, w.P.b}, {w.P.c, w.P.d}}},
            {"det_P", w.det_P},
            {"eps_k", w.eps_k},
            {"energy", w.energy},
            {"theta", w.theta}};
}

inline json step_record_to_json(const StepRecord& r) {
    json j;
    j["j"] = r.j;
    j["kind"] = r.resonant ? "resonant" : "non-resonant";
    j["N"] = r.N;
    if (r.resonance)
        j["resonance"] = *r.resonance;
    else
        j["resonance"] = nullptr;
    j["eps"] = r.eps_after;
    j["B_norm"] = r.B_norm;
    j["A_spec"] = {{"re_xi", r.re_xi}, {"im_xi", r.im_xi}, {"c", r.c_n}};
    j["residual"] = r.residual;
    return j;
}

inline ScanConfig scan_config_from_json(const json& j, const std::string& base_dir = "") {
    ScanConfig cfg;
    if (j.at("potential").is_string()) {
        std::string p = j.at("potential").get<std::string>();
        if (!base_dir.empty() && p.front() != '/') p = base_dir + "/" + p;
        cfg.V = load_series(p);
    } else {
        cfg.V = series_from_json(j.at("potential"));
    }
    cfg.lambda = j.at("lambda").get<double>();
    cfg.alpha.alpha = j.at("alpha").get<std::vector<double>>();
    cfg.theta = j.value("theta", std::vector<double>(cfg.alpha.alpha.size(), 0.0));
    if (j.contains("E_grid")) {
        if (j.at("E_grid").is_object()) {
            double a = j.at("E_grid").at("min").get<double>();
            double b = j.at("E_grid").at("max").get<double>();
            int n = j.at("E_grid").at("count").get<int>();
            for (int i = 0; i < n; ++i)
                cfg.E_grid.push_back(n == 1 ? a : a + (b - a) * i / double(n - 1));
        } else {
            cfg.E_grid = j.at("E_grid").get<std::vector<double>>();
        }
    }
    if (j.contains("eps_grid")) {
        if (j.at("eps_grid").is_object()) {
            double a = j.at("eps_grid").at("min").get<double>();
            double b = j.at("eps_grid").at("max").get<double>();
            int per_decade = j.at("eps_grid").value("per_decade", 4);
            double x = a;
            double step = std::pow(10.0, 1.0 / per_decade);
            while (x <= b * (1 + 1e-12)) {
                cfg.eps_grid.push_back(x);
                x *= step;
            }
        } else {
            cfg.eps_grid = j.at("eps_grid").get<std::vector<double>>();
        }
    }
    cfg.L_oracle = j.value("L_oracle", 20000L);
    cfg.lambda0_gate = j.value("lambda0_gate", 0.1);
    cfg.k_policy = j.value("k_policy", std::string("bracket"));
    cfg.threads = j.value("threads", 0);
    return cfg;
}

inline std::string scan_rows_csv(const std::vector<ModulusRow>& rows) {
    std::ostringstream os;
    os << "E,eps,mu_mass,bound_mid,bound_right,sqrt_bound_ratio,k_used,eps_k,P_norm,L,richness,"
          "in_spectrum,flagged,chain_ok\n";
    for (auto& r : rows) {
        os << fmt17(r.E) << ',' << fmt17(r.eps) << ',' << fmt17(r.mass) << ',' << fmt17(r.mid)
           << ',' << fmt17(r.right) << ',' << fmt17(r.ratio) << ',' << r.k_used << ','
           << fmt17(r.eps_k) << ',' << fmt17(r.P_norm) << ',' << r.L << ',' << r.richness << ','
           << (r.in_spectrum ? 1 : 0) << ',' << (r.flagged ? 1 : 0) << ',' << (r.chain_ok ? 1 : 0)
           << '\n';
    }
    return os.str();
}

// oracle-style rows: E, epsilon, mass, L, k, bound_mid, bound_right
inline std::string oracle_rows_csv(const std::vector<ModulusRow>& rows) {
    std::ostringstream os;
    os << "E,epsilon,mass,L,k,bound_mid,bound_right\n";
    for (auto& r : rows)
        os << fmt17(r.E) << ',' << fmt17(r.eps) << ',' << fmt17(r.mass) << ',' << r.L << ','
           << r.k_used << ',' << fmt17(r.mid) << ',' << fmt17(r.right) << '\n';
    return os.str();
}

inline json scan_summary_json(const ScanReport& rep) {
    json decades = json::object();
    for (auto& [d, v] : rep.decade_max) decades[std::to_string(d)] = v;
    return {{"C_emp", rep.C_emp},
            {"decade_max", decades},
            {"decade_spread", rep.decade_spread},
            {"rows", rep.rows.size()},
            {"flagged_rows", rep.flagged_rows},
            {"chain_all_ok", rep.chain_all_ok},
            {"case2_all_ok", rep.case2_all_ok}};
}

} // namespace qps
