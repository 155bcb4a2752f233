#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>

#include "grouptest/bootstrap.hpp"
#include "grouptest/bp.hpp"
#include "grouptest/em.hpp"
#include "grouptest/errors.hpp"
#include "grouptest/exact.hpp"
#include "grouptest/hbp.hpp"
#include "grouptest/io.hpp"
#include "grouptest/parallel.hpp"
#include "grouptest/rng.hpp"
#include "grouptest/scenario.hpp"

namespace {

// write to a file, or stdout when no path was given
template <class Fn>
void emit(const std::string& path, Fn&& write) {
    if (path.empty()) {
        write(std::cout);
        return;
    }
    std::ofstream os(path);
    if (!os) throw gt::IoError("cannot open for writing: " + path);
    write(os);
}

struct BpOptions {
    double damping = 0.1;
    int max_iter = 1000;
    double tol = 1e-8;
    std::uint64_t seed = 0;
    std::string init = "random";

    void attach(CLI::App* cmd) {
        cmd->add_option("--damping", damping, "damping factor in (0,1]");
        cmd->add_option("--max-iter", max_iter, "iteration cap");
        cmd->add_option("--tol", tol, "early-stop message tolerance");
        cmd->add_option("--seed", seed, "message init seed");
        cmd->add_option("--init", init, "message init: random|half")
            ->check(CLI::IsMember({"random", "half"}));
    }
    gt::BpConfig config() const {
        gt::BpConfig cfg;
        cfg.damping = damping;
        cfg.max_iterations = max_iter;
        cfg.convergence_tol = tol;
        cfg.rng_seed = seed;
        cfg.init = init == "half" ? gt::BpInit::constant_half
                                  : gt::BpInit::uniform_random;
        return cfg;
    }
};

std::vector<double> read_priors_csv(const std::string& path, int n) {
    std::ifstream is(path);
    if (!is) throw gt::IoError("cannot open for reading: " + path);
    std::string line;
    if (!std::getline(is, line) || line.rfind("patient,rho", 0) != 0)
        throw gt::IoError("priors: missing 'patient,rho' header");
    std::vector<double> priors(static_cast<std::size_t>(n), -1.0);
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::size_t idx = 0;
        double rho = 0.0;
        if (std::sscanf(line.c_str(), "%zu,%lf", &idx, &rho) != 2 || idx < 1 ||
            idx > static_cast<std::size_t>(n))
            throw gt::IoError("priors: malformed row '" + line + "'");
        priors[idx - 1] = rho;
    }
    for (double p : priors)
        if (p < 0.0) throw gt::IoError("priors: missing patients");
    return priors;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pooled-test decoding: belief propagation, bootstrap intervals, "
                 "EM and hierarchical-Bayes prevalence estimation"};
    app.require_subcommand(1);

    // ---- design ----
    auto* c_design = app.add_subcommand("design", "generate a random regular design");
    int d_n = 0, d_m = 0, d_ng = 0;
    std::uint64_t d_seed = 0;
    std::string d_out;
    c_design->add_option("--n", d_n, "patients")->required();
    c_design->add_option("--m", d_m, "tests")->required();
    c_design->add_option("--ng", d_ng, "pool size")->required();
    c_design->add_option("--seed", d_seed, "construction seed");
    c_design->add_option("--out", d_out, "design file (stdout when omitted)");

    // ---- simulate ----
    auto* c_sim = app.add_subcommand("simulate", "draw states and noisy outcomes");
    std::string s_design, s_states_out, s_out;
    double s_rho = 0.0, s_ptp = 1.0, s_pfp = 0.0;
    std::uint64_t s_seed = 0;
    c_sim->add_option("--design", s_design, "design file")->required();
    c_sim->add_option("--rho", s_rho, "prevalence")->required();
    c_sim->add_option("--p-tp", s_ptp, "test true-positive probability");
    c_sim->add_option("--p-fp", s_pfp, "test false-positive probability");
    c_sim->add_option("--seed", s_seed, "simulation seed");
    c_sim->add_option("--states-out", s_states_out, "truth CSV (optional)");
    c_sim->add_option("--out", s_out, "outcomes CSV (stdout when omitted)");

    // shared decode inputs
    struct DecodeIn {
        std::string design, outcomes, out;
        double rho = 0.0, ptp = 1.0, pfp = 0.0;
    };
    auto add_decode_inputs = [](CLI::App* cmd, DecodeIn& in, const char* rho_name,
                                const char* ptp_name, const char* pfp_name) {
        cmd->add_option("--design", in.design, "design file")->required();
        cmd->add_option("--outcomes", in.outcomes, "outcomes CSV")->required();
        cmd->add_option(rho_name, in.rho, "prevalence parameter")->required();
        cmd->add_option(ptp_name, in.ptp, "true-positive parameter")->required();
        cmd->add_option(pfp_name, in.pfp, "false-positive parameter")->required();
        cmd->add_option("--out", in.out, "output CSV (stdout when omitted)");
    };

    // ---- decode-bp ----
    auto* c_bp = app.add_subcommand("decode-bp", "marginals by belief propagation");
    DecodeIn bp_in;
    BpOptions bp_opts;
    std::string bp_trace;
    std::optional<double> bp_threshold;
    add_decode_inputs(c_bp, bp_in, "--rho-hat", "--p-tp-hat", "--p-fp-hat");
    bp_opts.attach(c_bp);
    c_bp->add_option("--trace", bp_trace, "per-iteration max-delta CSV");
    c_bp->add_option("--threshold", bp_threshold,
                     "log-odds decision threshold (adds a column)");

    // ---- decode-exact ----
    auto* c_exact = app.add_subcommand("decode-exact", "marginals by enumeration");
    DecodeIn ex_in;
    int ex_cap = 22;
    add_decode_inputs(c_exact, ex_in, "--rho-hat", "--p-tp-hat", "--p-fp-hat");
    c_exact->add_option("--cap", ex_cap, "refuse above this patient count");

    // ---- bootstrap ----
    auto* c_boot = app.add_subcommand("bootstrap",
                                      "per-patient intervals over test resamples");
    DecodeIn boot_in;
    BpOptions boot_opts;
    int boot_nb = 1000;
    double boot_z = 1.96;
    std::uint64_t boot_seed = 0;
    int boot_workers = gt::default_workers();
    bool boot_percentile = false;
    add_decode_inputs(c_boot, boot_in, "--rho-hat", "--p-tp-hat", "--p-fp-hat");
    boot_opts.attach(c_boot);
    c_boot->add_option("--nb", boot_nb, "bootstrap sample count");
    c_boot->add_option("--z", boot_z, "normal quantile multiplier");
    c_boot->add_option("--boot-seed", boot_seed, "resampling seed");
    c_boot->add_option("--workers", boot_workers, "parallel replicates");
    c_boot->add_flag("--percentile", boot_percentile,
                     "report percentile intervals instead of normal-theory");

    // ---- em ----
    auto* c_em = app.add_subcommand("em", "estimate rho, p_tp, p_fp by BP+EM");
    DecodeIn em_in;
    BpOptions em_opts;
    int em_rounds = 50, em_inner = 200;
    bool em_fix_noise = false;
    std::string em_trace;
    add_decode_inputs(c_em, em_in, "--init-rho", "--init-p-tp", "--init-p-fp");
    em_opts.attach(c_em);
    c_em->add_option("--rounds", em_rounds, "EM rounds");
    c_em->add_option("--inner-iter", em_inner, "BP iterations per round");
    c_em->add_flag("--fix-noise", em_fix_noise, "update only the prevalence");
    c_em->add_option("--trace", em_trace, "per-round trace CSV");

    // ---- hbp ----
    auto* c_hbp = app.add_subcommand("hbp", "hierarchical-Bayes BP");
    std::string h_design, h_outcomes, h_out, h_priors_file, h_rho_out;
    double h_ptp = 1.0, h_pfp = 0.0, h_a = 1.0, h_b = 1.0;
    std::string h_mode = "quadrature";
    int h_nodes = 64;
    BpOptions h_opts;
    c_hbp->add_option("--design", h_design, "design file")->required();
    c_hbp->add_option("--outcomes", h_outcomes, "outcomes CSV")->required();
    c_hbp->add_option("--p-tp", h_ptp, "true-positive parameter")->required();
    c_hbp->add_option("--p-fp", h_pfp, "false-positive parameter")->required();
    c_hbp->add_option("--hyper-a", h_a, "beta hyperprior a");
    c_hbp->add_option("--hyper-b", h_b, "beta hyperprior b");
    c_hbp->add_option("--hbp-mode", h_mode, "quadrature|saddle")
        ->check(CLI::IsMember({"quadrature", "saddle"}));
    c_hbp->add_option("--quad-nodes", h_nodes, "Gauss-Legendre nodes");
    c_hbp->add_option("--fixed-priors", h_priors_file,
                      "patient,rho CSV: run with these priors held fixed");
    c_hbp->add_option("--rho-tilde-out", h_rho_out, "per-patient prevalence CSV");
    c_hbp->add_option("--out", h_out, "marginals CSV (stdout when omitted)");
    h_opts.attach(c_hbp);

    // ---- sweep ----
    auto* c_sweep = app.add_subcommand("sweep", "run a scenario file");
    std::string sw_file, sw_out, sw_manifest;
    int sw_workers = gt::default_workers(), sw_reps = 0;
    c_sweep->add_option("--scenario", sw_file, "scenario file")->required();
    c_sweep->add_option("--out", sw_out, "results CSV (stdout when omitted)");
    c_sweep->add_option("--workers", sw_workers, "parallel tasks");
    c_sweep->add_option("--replicates", sw_reps, "override scenario replicates");
    c_sweep->add_option("--manifest", sw_manifest,
                        "failure manifest path (default <out>.failures.csv)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*c_design) {
            const gt::PoolingDesign d = gt::generate_design(d_n, d_m, d_ng, d_seed);
            emit(d_out, [&](std::ostream& os) { gt::write_design(os, d); });
        } else if (*c_sim) {
            const gt::PoolingDesign d = gt::read_design_file(s_design);
            const gt::PatientStates x =
                gt::generate_states(d.n_patients, s_rho, gt::mix_seed(s_seed, 1));
            const gt::TestOutcomes y0 = gt::true_pool_states(d, x);
            const gt::TestOutcomes y =
                gt::observe(y0, {s_ptp, s_pfp}, gt::mix_seed(s_seed, 2));
            if (!s_states_out.empty())
                emit(s_states_out, [&](std::ostream& os) { gt::write_states(os, x); });
            emit(s_out, [&](std::ostream& os) { gt::write_outcomes(os, y); });
        } else if (*c_bp) {
            const gt::PoolingDesign d = gt::read_design_file(bp_in.design);
            std::ifstream yf(bp_in.outcomes);
            if (!yf) throw gt::IoError("cannot open for reading: " + bp_in.outcomes);
            const gt::TestOutcomes y = gt::read_outcomes(yf);
            std::vector<gt::TraceRow> trace;
            const gt::AssumedParams params{bp_in.rho, {bp_in.ptp, bp_in.pfp}};
            const gt::BpResult r = gt::run_bp(y, d, params, bp_opts.config(),
                                              bp_trace.empty() ? nullptr : &trace);
            emit(bp_in.out, [&](std::ostream& os) {
                if (!bp_threshold) {
                    gt::write_marginals(os, r.estimate);
                    return;
                }
                os << "patient,theta,tau,map,call\n";
                const auto maps = gt::map_estimate(r.estimate);
                const auto calls = gt::threshold_estimate(r.estimate, *bp_threshold);
                for (std::size_t i = 0; i < r.estimate.theta_hat.size(); ++i)
                    os << i + 1 << ',' << gt::fmt_double(r.estimate.theta_hat[i]) << ','
                       << gt::fmt_double(r.estimate.tau_hat[i]) << ',' << int(maps[i])
                       << ',' << int(calls[i]) << '\n';
            });
            if (!bp_trace.empty())
                emit(bp_trace, [&](std::ostream& os) { gt::write_bp_trace(os, trace); });
        } else if (*c_exact) {
            const gt::PoolingDesign d = gt::read_design_file(ex_in.design);
            std::ifstream yf(ex_in.outcomes);
            if (!yf) throw gt::IoError("cannot open for reading: " + ex_in.outcomes);
            const gt::TestOutcomes y = gt::read_outcomes(yf);
            const gt::AssumedParams params{ex_in.rho, {ex_in.ptp, ex_in.pfp}};
            const gt::MarginalEstimate est = gt::exact_marginals(y, d, params, ex_cap);
            emit(ex_in.out, [&](std::ostream& os) { gt::write_marginals(os, est); });
        } else if (*c_boot) {
            const gt::PoolingDesign d = gt::read_design_file(boot_in.design);
            std::ifstream yf(boot_in.outcomes);
            if (!yf) throw gt::IoError("cannot open for reading: " + boot_in.outcomes);
            const gt::TestOutcomes y = gt::read_outcomes(yf);
            const gt::AssumedParams params{boot_in.rho, {boot_in.ptp, boot_in.pfp}};
            gt::BootstrapConfig bc;
            bc.n_bootstrap = boot_nb;
            bc.seed = boot_seed;
            bc.z = boot_z;
            bc.workers = boot_workers;
            bc.retain_samples = boot_percentile;
            const gt::BootstrapSummary summary =
                gt::bootstrap_estimate(y, d, params, boot_opts.config(), bc);
            std::optional<std::vector<gt::Interval>> intervals;
            if (boot_percentile)
                intervals = gt::percentile_interval(*summary.per_sample_tau,
                                                    summary.n_bootstrap, d.n_patients);
            emit(boot_in.out, [&](std::ostream& os) {
                gt::write_bootstrap(os, summary, boot_z,
                                    intervals ? &*intervals : nullptr);
            });
        } else if (*c_em) {
            const gt::PoolingDesign d = gt::read_design_file(em_in.design);
            std::ifstream yf(em_in.outcomes);
            if (!yf) throw gt::IoError("cannot open for reading: " + em_in.outcomes);
            const gt::TestOutcomes y = gt::read_outcomes(yf);
            gt::EmConfig cfg;
            cfg.rounds = em_rounds;
            cfg.inner = em_opts.config();
            cfg.inner.max_iterations = em_inner;
            cfg.update_noise = !em_fix_noise;
            const gt::AssumedParams init{em_in.rho, {em_in.ptp, em_in.pfp}};
            const gt::EmResult r = gt::run_bp_em(y, d, init, cfg);
            emit(em_in.out, [&](std::ostream& os) { gt::write_marginals(os, r.marginals); });
            if (!em_trace.empty())
                emit(em_trace, [&](std::ostream& os) { gt::write_em_trace(os, r.trace); });
            std::cerr << "estimated rho=" << gt::fmt_double(r.params.rho_hat)
                      << " p_tp=" << gt::fmt_double(r.params.noise_hat.p_tp)
                      << " p_fp=" << gt::fmt_double(r.params.noise_hat.p_fp) << '\n';
        } else if (*c_hbp) {
            const gt::PoolingDesign d = gt::read_design_file(h_design);
            std::ifstream yf(h_outcomes);
            if (!yf) throw gt::IoError("cannot open for reading: " + h_outcomes);
            const gt::TestOutcomes y = gt::read_outcomes(yf);
            const gt::NoiseModel noise{h_ptp, h_pfp};
            if (!h_priors_file.empty()) {
                const std::vector<double> priors =
                    read_priors_csv(h_priors_file, d.n_patients);
                const gt::MarginalEstimate est =
                    gt::run_bp_fixed_priors(y, d, noise, priors, h_opts.config());
                emit(h_out, [&](std::ostream& os) { gt::write_marginals(os, est); });
            } else {
                gt::HbpConfig cfg;
                cfg.bp = h_opts.config();
                cfg.mode = h_mode == "saddle" ? gt::HbpMode::saddle
                                              : gt::HbpMode::quadrature;
                cfg.quad_nodes = h_nodes;
                const gt::HbpResult r = gt::run_hbp(y, d, noise, {h_a, h_b}, cfg);
                emit(h_out, [&](std::ostream& os) { gt::write_marginals(os, r.marginals); });
                if (!h_rho_out.empty())
                    emit(h_rho_out, [&](std::ostream& os) {
                        os << "patient,rho_tilde\n";
                        for (std::size_t i = 0; i < r.rho_tilde.size(); ++i)
                            os << i + 1 << ',' << gt::fmt_double(r.rho_tilde[i]) << '\n';
                    });
                std::cerr << "estimated rho=" << gt::fmt_double(r.rho_hat) << '\n';
            }
        } else if (*c_sweep) {
            gt::Scenario s = gt::parse_scenario_file(sw_file);
            if (sw_reps > 0) s.replicates = sw_reps;
            const gt::SweepResult result = gt::run_scenario(s, sw_workers);
            emit(sw_out, [&](std::ostream& os) { gt::write_sweep_csv(os, s, result); });
            if (!result.failures.empty()) {
                const std::string manifest_path =
                    !sw_manifest.empty()
                        ? sw_manifest
                        : (sw_out.empty() ? std::string("sweep.failures.csv")
                                          : sw_out + ".failures.csv");
                emit(manifest_path, [&](std::ostream& os) {
                    gt::write_failure_manifest(os, result);
                });
                std::cerr << result.failures.size() << " replicate(s) failed; manifest: "
                          << manifest_path << '\n';
                return 2;
            }
        }
    } catch (const gt::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
