#include "grouptest/scenario.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "grouptest/bootstrap.hpp"
#include "grouptest/em.hpp"
#include "grouptest/errors.hpp"
#include "grouptest/exact.hpp"
#include "grouptest/io.hpp"
#include "grouptest/metrics.hpp"
#include "grouptest/parallel.hpp"
#include "grouptest/rng.hpp"

namespace gt {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double resolve(double binding, double true_value) {
    return std::isnan(binding) ? true_value : binding;
}

Method parse_method(const std::string& v) {
    if (v == "bp") return Method::bp;
    if (v == "exact") return Method::exact;
    if (v == "bootstrap") return Method::bootstrap;
    if (v == "em") return Method::em;
    if (v == "hbp") return Method::hbp;
    throw IoError("scenario: unknown method '" + v + "'");
}

bool parse_switch(const std::string& v, const std::string& key) {
    if (v == "on") return true;
    if (v == "off") return false;
    throw IoError("scenario: " + key + " must be on or off");
}

// metric columns per method, fixed order so the CSV is reproducible
std::vector<std::string> metric_names(Method m, bool timing) {
    std::vector<std::string> names;
    switch (m) {
    case Method::bp:
    case Method::exact:
        names = {"tp", "fp", "m_plus", "m_minus"};
        break;
    case Method::bootstrap:
        names = {"tp_map", "fp_map", "tp_boot", "fp_boot"};
        break;
    case Method::em:
        names = {"tp",      "fp",       "m_plus",   "m_minus",
                 "rho_hat", "rho_bias", "p_tp_hat", "p_fp_hat"};
        break;
    case Method::hbp:
        names = {"tp", "fp", "m_plus", "m_minus", "rho_hat", "rho_bias"};
        break;
    }
    if (timing) names.push_back("wall_clock_s");
    return names;
}

struct RepValues {
    std::vector<double> values; // aligned with metric_names
    std::vector<bool> defined;
};

void put(RepValues& out, std::size_t slot, const Rate& rate) {
    out.values[slot] = rate.value;
    out.defined[slot] = rate.defined;
}

void put(RepValues& out, std::size_t slot, double value) {
    out.values[slot] = value;
    out.defined[slot] = true;
}

RepValues run_replicate(const Scenario& s, const GridPoint& p, std::uint64_t seed,
                        std::size_t n_metrics) {
    RepValues out;
    out.values.assign(n_metrics, 0.0);
    out.defined.assign(n_metrics, false);

    const PoolingDesign design =
        generate_design(p.n, p.m, p.ng, mix_seed(seed, 1));
    const PatientStates truth = generate_states(p.n, p.rho, mix_seed(seed, 2));
    const TestOutcomes clean = true_pool_states(design, truth);
    const NoiseModel noise{p.p_tp, p.p_fp};
    const TestOutcomes observed = observe(clean, noise, mix_seed(seed, 3));
    const std::uint64_t decode_seed = mix_seed(seed, 4);

    BpConfig bp_cfg;
    bp_cfg.max_iterations = s.max_iter;
    bp_cfg.damping = s.damping;
    bp_cfg.convergence_tol = s.tol;
    bp_cfg.rng_seed = decode_seed;

    const auto started = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                             started)
            .count();
    };

    switch (s.method) {
    case Method::bp:
    case Method::exact: {
        MarginalEstimate est;
        if (s.method == Method::bp) {
            const AssumedParams ap{p.a_rho, {p.a_p_tp, p.a_p_fp}};
            est = run_bp(observed, design, ap, bp_cfg).estimate;
        } else {
            const AssumedParams ap{p.a_rho, {p.a_p_tp, p.a_p_fp}};
            est = exact_marginals(observed, design, ap, s.exact_cap);
        }
        const double seconds = elapsed();
        const auto decisions = map_estimate(est);
        const auto [tp, fp] = tp_fp(truth, decisions);
        const auto [mp, mm] = magnetizations(truth, est.theta_hat);
        put(out, 0, tp);
        put(out, 1, fp);
        put(out, 2, mp);
        put(out, 3, mm);
        if (s.timing) put(out, 4, seconds);
        break;
    }
    case Method::bootstrap: {
        const AssumedParams ap{p.a_rho, {p.a_p_tp, p.a_p_fp}};
        BootstrapConfig bc;
        bc.n_bootstrap = s.n_bootstrap;
        bc.seed = decode_seed;
        bc.z = s.boot_z;
        bc.workers = 1; // parallelism lives at the replicate level
        const BootstrapSummary summary =
            bootstrap_estimate(observed, design, ap, bp_cfg, bc);
        const double seconds = elapsed();
        std::vector<std::uint8_t> map_dec(summary.tau_point.size());
        for (std::size_t i = 0; i < map_dec.size(); ++i)
            map_dec[i] = summary.tau_point[i] > 0.0 ? 1 : 0;
        const auto [tp_map, fp_map] = tp_fp(truth, map_dec);
        const auto [tp_boot, fp_boot] = tp_fp(truth, summary.decisions);
        put(out, 0, tp_map);
        put(out, 1, fp_map);
        put(out, 2, tp_boot);
        put(out, 3, fp_boot);
        if (s.timing) put(out, 4, seconds);
        break;
    }
    case Method::em: {
        EmConfig cfg;
        cfg.rounds = s.em_rounds;
        cfg.update_noise = s.em_update_noise;
        cfg.inner = bp_cfg;
        cfg.inner.max_iterations = s.em_inner_iter;
        const AssumedParams init{p.a_rho, {p.a_p_tp, p.a_p_fp}};
        const EmResult r = run_bp_em(observed, design, init, cfg);
        const double seconds = elapsed();
        const auto decisions = map_estimate(r.marginals);
        const auto [tp, fp] = tp_fp(truth, decisions);
        const auto [mp, mm] = magnetizations(truth, r.marginals.theta_hat);
        put(out, 0, tp);
        put(out, 1, fp);
        put(out, 2, mp);
        put(out, 3, mm);
        put(out, 4, r.params.rho_hat);
        put(out, 5, std::abs(r.params.rho_hat - p.rho));
        put(out, 6, r.params.noise_hat.p_tp);
        put(out, 7, r.params.noise_hat.p_fp);
        if (s.timing) put(out, 8, seconds);
        break;
    }
    case Method::hbp: {
        HbpConfig cfg;
        cfg.bp = bp_cfg;
        cfg.mode = s.hbp_mode;
        cfg.quad_nodes = s.quad_nodes;
        const NoiseModel assumed{p.a_p_tp, p.a_p_fp};
        const BetaHyperprior prior{s.hyper_a, s.hyper_b};
        const HbpResult r = run_hbp(observed, design, assumed, prior, cfg);
        const double seconds = elapsed();
        const auto decisions = map_estimate(r.marginals);
        const auto [tp, fp] = tp_fp(truth, decisions);
        const auto [mp, mm] = magnetizations(truth, r.marginals.theta_hat);
        put(out, 0, tp);
        put(out, 1, fp);
        put(out, 2, mp);
        put(out, 3, mm);
        put(out, 4, r.rho_hat);
        put(out, 5, std::abs(r.rho_hat - p.rho));
        if (s.timing) put(out, 6, seconds);
        break;
    }
    }
    return out;
}

} // namespace

Scenario::Scenario()
    : assumed_rho(kNaN), assumed_p_tp(kNaN), assumed_p_fp(kNaN), init_rho(kNaN),
      init_p_tp(kNaN), init_p_fp(kNaN) {}

std::string method_name(Method m) {
    switch (m) {
    case Method::bp: return "bp";
    case Method::exact: return "exact";
    case Method::bootstrap: return "bootstrap";
    case Method::em: return "em";
    case Method::hbp: return "hbp";
    }
    return "?";
}

Scenario parse_scenario(std::istream& is) {
    Scenario s;
    std::string line;
    bool saw_header = false;
    int line_no = 0;
    auto bad = [&](const std::string& msg) {
        throw IoError("scenario line " + std::to_string(line_no) + ": " + msg);
    };
    while (std::getline(is, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        if (!saw_header) {
            std::string version;
            if (key != "grouptest-scenario" || !(ls >> version) || version != "v1")
                bad("expected header 'grouptest-scenario v1'");
            saw_header = true;
            continue;
        }
        auto value_str = [&]() {
            std::string v;
            if (!(ls >> v)) bad("missing value for '" + key + "'");
            return v;
        };
        auto value_num = [&]() {
            double v = 0;
            if (!(ls >> v)) bad("missing numeric value for '" + key + "'");
            return v;
        };
        auto binding = [&](bool auto_word) {
            std::string v = value_str();
            if ((auto_word && v == "auto") || (!auto_word && v == "true")) return kNaN;
            try {
                return std::stod(v);
            } catch (...) {
                bad("bad binding value '" + v + "'");
                return kNaN;
            }
        };
        if (key == "method") s.method = parse_method(value_str());
        else if (key == "n") s.n = static_cast<int>(value_num());
        else if (key == "m") s.m = static_cast<int>(value_num());
        else if (key == "alpha") s.alpha = value_num();
        else if (key == "ng") s.ng = static_cast<int>(value_num());
        else if (key == "rho") s.rho = value_num();
        else if (key == "p_tp") s.p_tp = value_num();
        else if (key == "p_fp") s.p_fp = value_num();
        else if (key == "replicates") s.replicates = static_cast<int>(value_num());
        else if (key == "base_seed") s.base_seed = static_cast<std::uint64_t>(value_num());
        else if (key == "damping") s.damping = value_num();
        else if (key == "max_iter") s.max_iter = static_cast<int>(value_num());
        else if (key == "tol") s.tol = value_num();
        else if (key == "n_bootstrap") s.n_bootstrap = static_cast<int>(value_num());
        else if (key == "boot_z") s.boot_z = value_num();
        else if (key == "em_rounds") s.em_rounds = static_cast<int>(value_num());
        else if (key == "em_inner_iter") s.em_inner_iter = static_cast<int>(value_num());
        else if (key == "em_update_noise") s.em_update_noise = parse_switch(value_str(), key);
        else if (key == "hyper_a") s.hyper_a = value_num();
        else if (key == "hyper_b") s.hyper_b = value_num();
        else if (key == "hbp_mode") {
            const std::string v = value_str();
            if (v == "quadrature") s.hbp_mode = HbpMode::quadrature;
            else if (v == "saddle") s.hbp_mode = HbpMode::saddle;
            else bad("hbp_mode must be quadrature or saddle");
        } else if (key == "quad_nodes") s.quad_nodes = static_cast<int>(value_num());
        else if (key == "exact_cap") s.exact_cap = static_cast<int>(value_num());
        else if (key == "timing") s.timing = parse_switch(value_str(), key);
        else if (key == "assumed_rho") s.assumed_rho = binding(false);
        else if (key == "assumed_p_tp") s.assumed_p_tp = binding(false);
        else if (key == "assumed_p_fp") s.assumed_p_fp = binding(false);
        else if (key == "init_rho") s.init_rho = binding(true);
        else if (key == "init_p_tp") s.init_p_tp = binding(false);
        else if (key == "init_p_fp") s.init_p_fp = binding(false);
        else if (key == "sweep") {
            SweepAxis axis;
            if (!(ls >> axis.key)) bad("sweep needs a key");
            double v = 0;
            while (ls >> v) axis.values.push_back(v);
            if (axis.values.empty()) bad("sweep '" + axis.key + "' has no values");
            for (const auto& other : s.sweeps)
                if (other.key == axis.key) bad("duplicate sweep key '" + axis.key + "'");
            s.sweeps.push_back(std::move(axis));
        } else {
            bad("unknown key '" + key + "'");
        }
    }
    if (!saw_header) throw IoError("scenario: missing header 'grouptest-scenario v1'");
    return s;
}

Scenario parse_scenario_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open for reading: " + path);
    return parse_scenario(is);
}

std::vector<GridPoint> scenario_grid(const Scenario& s) {
    if (s.replicates < 1) throw RejectedParameters("scenario: replicates below 1");
    std::size_t total = 1;
    for (const auto& axis : s.sweeps) total *= axis.values.size();
    std::vector<GridPoint> grid;
    grid.reserve(total);
    std::vector<std::size_t> pick(s.sweeps.size(), 0);
    for (std::size_t g = 0; g < total; ++g) {
        // decode g with the last axis fastest
        std::size_t rest = g;
        for (std::size_t a = s.sweeps.size(); a-- > 0;) {
            pick[a] = rest % s.sweeps[a].values.size();
            rest /= s.sweeps[a].values.size();
        }
        double n = s.n, m = s.m, alpha = s.alpha, ng = s.ng;
        double rho = s.rho, p_tp = s.p_tp, p_fp = s.p_fp;
        for (std::size_t a = 0; a < s.sweeps.size(); ++a) {
            const double v = s.sweeps[a].values[pick[a]];
            const std::string& k = s.sweeps[a].key;
            if (k == "n") n = v;
            else if (k == "m") m = v;
            else if (k == "alpha") alpha = v;
            else if (k == "ng") ng = v;
            else if (k == "rho") rho = v;
            else if (k == "p_tp") p_tp = v;
            else if (k == "p_fp") p_fp = v;
            else throw IoError("scenario: unsupported sweep key '" + k + "'");
        }
        GridPoint p;
        p.n = static_cast<int>(n);
        p.ng = static_cast<int>(ng);
        p.m = static_cast<int>(m);
        if (p.m <= 0) {
            if (alpha <= 0.0)
                throw RejectedParameters("scenario: need m or alpha at grid point " +
                                         std::to_string(g));
            p.m = static_cast<int>(std::floor(alpha * p.n + 0.5));
        }
        if (p.n <= 0 || p.m <= 0 || p.ng <= 0)
            throw RejectedParameters("scenario: nonpositive size at grid point " +
                                     std::to_string(g));
        const long long edges = static_cast<long long>(p.m) * p.ng;
        if (p.ng > p.n || edges % p.n != 0)
            throw RejectedParameters(
                "scenario: pooling divisibility violated at grid point " +
                std::to_string(g) + " (n=" + std::to_string(p.n) +
                " m=" + std::to_string(p.m) + " ng=" + std::to_string(p.ng) + ")");
        p.no = static_cast<int>(edges / p.n);
        p.rho = rho;
        p.p_tp = p_tp;
        p.p_fp = p_fp;
        if (s.method == Method::em) {
            p.a_rho = std::isnan(s.init_rho) ? 0.5 * p.alpha() : s.init_rho;
            p.a_p_tp = resolve(s.init_p_tp, p_tp);
            p.a_p_fp = resolve(s.init_p_fp, p_fp);
        } else {
            p.a_rho = resolve(s.assumed_rho, rho);
            p.a_p_tp = resolve(s.assumed_p_tp, p_tp);
            p.a_p_fp = resolve(s.assumed_p_fp, p_fp);
        }
        grid.push_back(p);
    }
    return grid;
}

SweepResult run_scenario(const Scenario& s, int workers) {
    const std::vector<GridPoint> grid = scenario_grid(s);
    const std::vector<std::string> names = metric_names(s.method, s.timing);
    const int reps = s.replicates;
    const int tasks = static_cast<int>(grid.size()) * reps;

    std::vector<RepValues> results(static_cast<std::size_t>(tasks));
    std::vector<std::string> errors(static_cast<std::size_t>(tasks));
    parallel_for(tasks, workers, [&](int t) {
        const int g = t / reps;
        const int r = t % reps;
        const std::uint64_t seed =
            mix_seed(s.base_seed, static_cast<std::uint64_t>(g),
                     static_cast<std::uint64_t>(r));
        try {
            results[static_cast<std::size_t>(t)] =
                run_replicate(s, grid[static_cast<std::size_t>(g)], seed, names.size());
        } catch (const Error& e) {
            errors[static_cast<std::size_t>(t)] = e.what();
            results[static_cast<std::size_t>(t)].values.assign(names.size(), 0.0);
            results[static_cast<std::size_t>(t)].defined.assign(names.size(), false);
        }
    });

    SweepResult out;
    for (int g = 0; g < static_cast<int>(grid.size()); ++g) {
        for (int r = 0; r < reps; ++r) {
            const auto& msg = errors[static_cast<std::size_t>(g * reps + r)];
            if (!msg.empty()) out.failures.push_back({g, r, msg});
        }
        for (std::size_t k = 0; k < names.size(); ++k) {
            double sum = 0.0;
            int count = 0;
            for (int r = 0; r < reps; ++r) {
                const auto& rep = results[static_cast<std::size_t>(g * reps + r)];
                if (!rep.defined[k]) continue;
                sum += rep.values[k];
                ++count;
            }
            ResultRow row;
            row.point = grid[static_cast<std::size_t>(g)];
            row.metric = names[k];
            row.n_samples = count;
            row.value = count > 0 ? sum / count : kNaN;
            if (count > 1) {
                double ss = 0.0;
                for (int r = 0; r < reps; ++r) {
                    const auto& rep = results[static_cast<std::size_t>(g * reps + r)];
                    if (!rep.defined[k]) continue;
                    const double d = rep.values[k] - row.value;
                    ss += d * d;
                }
                row.stderr_ = std::sqrt(ss / (count - 1)) / std::sqrt(count);
            }
            out.rows.push_back(std::move(row));
        }
    }
    return out;
}

void write_sweep_csv(std::ostream& os, const Scenario& s, const SweepResult& result) {
    os << "rho,alpha,NG,pTP,pFP,metric,value,stderr,n_samples,"
          "n,m,NO,method,assumed_rho,assumed_pTP,assumed_pFP,base_seed,replicates\n";
    for (const auto& row : result.rows) {
        const GridPoint& p = row.point;
        os << fmt_double(p.rho) << ',' << fmt_double(p.alpha()) << ',' << p.ng << ','
           << fmt_double(p.p_tp) << ',' << fmt_double(p.p_fp) << ',' << row.metric
           << ',' << fmt_double(row.value) << ',' << fmt_double(row.stderr_) << ','
           << row.n_samples << ',' << p.n << ',' << p.m << ',' << p.no << ','
           << method_name(s.method) << ',' << fmt_double(p.a_rho) << ','
           << fmt_double(p.a_p_tp) << ',' << fmt_double(p.a_p_fp) << ',' << s.base_seed
           << ',' << s.replicates << '\n';
    }
}

void write_failure_manifest(std::ostream& os, const SweepResult& result) {
    os << "grid_index,replicate,error\n";
    for (const auto& f : result.failures) {
        std::string msg = f.message;
        for (auto& c : msg)
            if (c == ',' || c == '\n') c = ';';
        os << f.grid_index << ',' << f.replicate << ',' << msg << '\n';
    }
}

} // namespace gt
