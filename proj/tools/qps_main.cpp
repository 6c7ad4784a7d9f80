#include <iostream>

#include <CLI11.hpp>

#include "qps/io.hpp"

namespace {

std::vector<double> parse_energy_spec(const std::string& spec) {
    std::vector<double> out;
    auto p1 = spec.find(':');
    if (p1 == std::string::npos) {
        out.push_back(std::stod(spec));
        return out;
    }
    auto p2 = spec.find(':', p1 + 1);
    if (p2 == std::string::npos) throw CLI::ValidationError("--E expects a single value or a:b:n");
    double a = std::stod(spec.substr(0, p1));
    double b = std::stod(spec.substr(p1 + 1, p2 - p1 - 1));
    int n = std::stoi(spec.substr(p2 + 1));
    if (n < 1) throw CLI::ValidationError("--E count must be >= 1");
    for (int i = 0; i < n; ++i) out.push_back(n == 1 ? a : a + (b - a) * i / double(n - 1));
    return out;
}

struct CommonArgs {
    std::string potential;
    double lambda = 0.0;
    std::vector<double> alpha;
    std::vector<double> theta;

    qps::TorusSeries V() const {
        if (potential.empty()) throw CLI::ValidationError("--potential is required");
        return qps::load_series(potential);
    }
    qps::FrequencyVector freq() const { return {alpha}; }
    std::vector<double> phase(int d) const {
        if (theta.empty()) return std::vector<double>(d, 0.0);
        return theta;
    }
};

void add_common(CLI::App* cmd, CommonArgs& c) {
    cmd->add_option("--potential", c.potential, "Fourier-series JSON file");
    cmd->add_option("--lambda", c.lambda, "coupling constant");
    cmd->add_option("--alpha", c.alpha, "frequency vector components")->delimiter(',');
    cmd->add_option("--theta", c.theta, "phase components")->delimiter(',');
}

void write_or_print(const std::string& path, const std::string& content) {
    if (path.empty()) {
        std::cout << content;
    } else {
        std::ofstream out(path);
        out << content;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"quasi-periodic Schrodinger spectral toolkit"};
    app.require_subcommand(1);

    // lyapunov / rotation / ids share flags
    CommonArgs lyap_args, rot_args, ids_args, weyl_args, kam_args;
    std::string lyap_E, rot_E, ids_E;
    long lyap_iters = 100000, rot_iters = 100000, ids_iters = 100000;
    long lyap_seed = 1;
    int lyap_samples = 8;
    std::string out_path;

    auto* lyap = app.add_subcommand("lyapunov", "Lyapunov exponent over an energy grid");
    add_common(lyap, lyap_args);
    lyap->add_option("--E", lyap_E, "energy: value or a:b:n")->required();
    lyap->add_option("--iters", lyap_iters, "cocycle length");
    lyap->add_option("--seed", lyap_seed, "phase-sampling seed");
    lyap->add_option("--samples", lyap_samples, "number of sampled phases");
    lyap->add_option("--out", out_path, "output file (default stdout)");

    auto* rot = app.add_subcommand("rotation", "fibered rotation number over an energy grid");
    add_common(rot, rot_args);
    rot->add_option("--E", rot_E)->required();
    rot->add_option("--iters", rot_iters);
    rot->add_option("--out", out_path);

    auto* idsc = app.add_subcommand("ids", "integrated density of states N(E) = 1 - 2 rho(E)");
    add_common(idsc, ids_args);
    idsc->add_option("--E", ids_E)->required();
    idsc->add_option("--iters", ids_iters);
    idsc->add_option("--out", out_path);

    double weyl_E = 0;
    long weyl_k = 10;
    auto* weyl = app.add_subcommand("weyl", "Weyl accumulator P_k(E) as JSON");
    add_common(weyl, weyl_args);
    weyl->add_option("--E", weyl_E)->required();
    weyl->add_option("--k", weyl_k)->required();
    weyl->add_option("--out", out_path);

    double kam_E = 0, kam_r0 = 0.12, kam_rt = 0.06, kam_floor = 1e-12;
    int kam_steps = 12;
    auto* kam = app.add_subcommand("kam-trace", "almost-reducibility iteration ledger as JSON lines");
    add_common(kam, kam_args);
    kam->add_option("--E", kam_E)->required();
    kam->add_option("--r0", kam_r0, "initial analytic radius");
    kam->add_option("--r-target", kam_rt, "target analytic radius");
    kam->add_option("--max-steps", kam_steps);
    kam->add_option("--floor", kam_floor);
    kam->add_option("--out", out_path);

    std::string scan_config, scan_csv, scan_json, scan_oracle_csv;
    auto* scan = app.add_subcommand("holder-scan", "modulus-of-continuity scan");
    scan->add_option("--config", scan_config, "scan config JSON")->required();
    scan->add_option("--out-csv", scan_csv, "row CSV output");
    scan->add_option("--out-json", scan_json, "summary JSON output");
    scan->add_option("--oracle-csv", scan_oracle_csv, "oracle-format CSV output");

    std::vector<double> dio_alpha;
    double dio_kappa = 0, dio_tau = 0;
    int dio_N = 0;
    auto* dio = app.add_subcommand("diophantine", "Diophantine certificate scan");
    dio->add_option("--alpha", dio_alpha)->delimiter(',')->required();
    dio->add_option("--kappa", dio_kappa)->required();
    dio->add_option("--tau", dio_tau)->required();
    dio->add_option("--N", dio_N)->required();
    dio->add_option("--out", out_path);

    std::string pot_kind = "amo", pot_out;
    auto* pot = app.add_subcommand("potential", "write a built-in potential series JSON");
    pot->add_option("--kind", pot_kind, "amo | twofreq");
    pot->add_option("--out", pot_out)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*lyap) {
            auto V = lyap_args.V();
            std::ostringstream os;
            os << "E,LE\n";
            for (double E : parse_energy_spec(lyap_E)) {
                auto sc = qps::schrodinger_cocycle(E, lyap_args.lambda, V, lyap_args.freq());
                double le = qps::lyapunov_exponent(sc.base, lyap_iters, lyap_samples,
                                                   uint64_t(lyap_seed));
                os << qps::fmt17(E) << ',' << qps::fmt17(le) << '\n';
            }
            write_or_print(out_path, os.str());
        } else if (*rot) {
            auto V = rot_args.V();
            std::ostringstream os;
            os << "E,rho\n";
            for (double E : parse_energy_spec(rot_E)) {
                auto sc = qps::schrodinger_cocycle(E, rot_args.lambda, V, rot_args.freq());
                auto est = qps::rotation_number(sc.base, rot_iters, rot_args.phase(V.d));
                os << qps::fmt17(E) << ',' << qps::fmt17(est.rho) << '\n';
            }
            write_or_print(out_path, os.str());
        } else if (*idsc) {
            auto V = ids_args.V();
            std::ostringstream os;
            os << "E,N\n";
            for (double E : parse_energy_spec(ids_E)) {
                auto sc = qps::schrodinger_cocycle(E, ids_args.lambda, V, ids_args.freq());
                os << qps::fmt17(E) << ',' << qps::fmt17(qps::ids(sc, ids_iters, ids_args.phase(V.d)))
                   << '\n';
            }
            write_or_print(out_path, os.str());
        } else if (*weyl) {
            auto V = weyl_args.V();
            auto sc = qps::schrodinger_cocycle(weyl_E, weyl_args.lambda, V, weyl_args.freq());
            auto acc = qps::accumulate_Pk(sc, weyl_args.phase(V.d), weyl_k);
            write_or_print(out_path, qps::weyl_to_json(acc).dump(2) + "\n");
        } else if (*kam) {
            auto V = kam_args.V();
            auto [A0, f0] = qps::schrodinger_kam_input(kam_E, kam_args.lambda, V);
            qps::KamOptions opts;
            opts.max_steps = kam_steps;
            opts.floor = kam_floor;
            auto st = qps::kam_iterate(A0, f0, kam_r0, kam_rt, kam_args.freq(), opts);
            std::ostringstream os;
            for (auto& rec : st.ledger) os << qps::step_record_to_json(rec).dump() << '\n';
            if (st.aborted)
                os << qps::json{{"aborted", true}, {"reason", st.abort_reason}}.dump() << '\n';
            write_or_print(out_path, os.str());
        } else if (*scan) {
            std::ifstream in(scan_config);
            if (!in) throw std::runtime_error("cannot open config: " + scan_config);
            qps::json j;
            in >> j;
            std::string base = scan_config.find('/') != std::string::npos
                                   ? scan_config.substr(0, scan_config.rfind('/'))
                                   : ".";
            auto cfg = qps::scan_config_from_json(j, base);
            auto rep = qps::holder_scan(cfg);
            if (!scan_csv.empty()) write_or_print(scan_csv, qps::scan_rows_csv(rep.rows));
            if (!scan_oracle_csv.empty())
                write_or_print(scan_oracle_csv, qps::oracle_rows_csv(rep.rows));
            std::string summary = qps::scan_summary_json(rep).dump(2) + "\n";
            if (!scan_json.empty())
                write_or_print(scan_json, summary);
            else
                std::cout << summary;
            if (scan_csv.empty() && scan_oracle_csv.empty())
                std::cout << qps::scan_rows_csv(rep.rows);
        } else if (*dio) {
            auto res = qps::check_diophantine({dio_alpha}, dio_kappa, dio_tau, dio_N);
            write_or_print(out_path, qps::certificate_to_json(res).dump(2) + "\n");
        } else if (*pot) {
            qps::TorusSeries V;
            if (pot_kind == "amo")
                V = qps::cosine_potential(1);
            else if (pot_kind == "twofreq")
                V = qps::cosine_potential(2);
            else
                throw std::runtime_error("unknown potential kind: " + pot_kind);
            std::ofstream out(pot_out);
            out << qps::series_to_json(V).dump(2) << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
