#include "grouptest/hbp.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "grouptest/errors.hpp"
#include "grouptest/rng.hpp"

namespace gt {

namespace {

constexpr double kRhoGuard = 1e-12;

double clamp_unit(double v) {
    if (v < kRhoGuard) return kRhoGuard;
    if (v > 1.0 - kRhoGuard) return 1.0 - kRhoGuard;
    return v;
}

// Posterior means of rho for every patient's leave-one-out product in one
// pass: per quadrature node, the full product over patients is accumulated
// with explicit exponent tracking, then each patient divides out its own
// term. term_buf is laid out patient-major, N x G.
void rho_tilde_batch_quadrature(std::span<const double> pi,
                                const BetaHyperprior& prior,
                                const QuadratureRule& rule,
                                std::vector<double>& term_buf,
                                std::span<double> out) {
    const int n = static_cast<int>(pi.size());
    const int g = rule.size();
    term_buf.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(g));

    const double log_beta_norm =
        std::lgamma(prior.a) + std::lgamma(prior.b) - std::lgamma(prior.a + prior.b);
    std::vector<double> log_node(static_cast<std::size_t>(g));
    for (int k = 0; k < g; ++k) {
        const double rho = rule.nodes[static_cast<std::size_t>(k)];
        log_node[static_cast<std::size_t>(k)] =
            std::log(rule.weights[static_cast<std::size_t>(k)]) +
            (prior.a - 1.0) * std::log(rho) + (prior.b - 1.0) * std::log1p(-rho) -
            log_beta_norm;
    }

    std::vector<double> mantissa(static_cast<std::size_t>(g), 1.0);
    std::vector<long> exponent(static_cast<std::size_t>(g), 0);
    auto renormalize = [&] {
        for (int k = 0; k < g; ++k) {
            int e = 0;
            mantissa[static_cast<std::size_t>(k)] =
                std::frexp(mantissa[static_cast<std::size_t>(k)], &e);
            exponent[static_cast<std::size_t>(k)] += e;
        }
    };
    for (int i = 0; i < n; ++i) {
        const double p = pi[static_cast<std::size_t>(i)];
        double* row = &term_buf[static_cast<std::size_t>(i) * static_cast<std::size_t>(g)];
        for (int k = 0; k < g; ++k) {
            // rho*p + (1-rho)*(1-p), positive at interior nodes for p in [0,1]
            row[k] = (1.0 - p) + rule.nodes[static_cast<std::size_t>(k)] * (2.0 * p - 1.0);
            mantissa[static_cast<std::size_t>(k)] *= row[k];
        }
        if ((i & 63) == 63) renormalize();
    }
    renormalize();

    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    constexpr double kLn2 = 0.6931471805599453;
    std::vector<double> log_total(static_cast<std::size_t>(g));
    double max_log = kNegInf;
    for (int k = 0; k < g; ++k) {
        const double mk = mantissa[static_cast<std::size_t>(k)];
        log_total[static_cast<std::size_t>(k)] =
            mk > 0.0 ? log_node[static_cast<std::size_t>(k)] + std::log(mk) +
                           static_cast<double>(exponent[static_cast<std::size_t>(k)]) * kLn2
                     : kNegInf;
        if (log_total[static_cast<std::size_t>(k)] > max_log)
            max_log = log_total[static_cast<std::size_t>(k)];
    }
    if (!(max_log > kNegInf) || !std::isfinite(max_log))
        throw NumericalDegeneracy("rho_tilde quadrature: all grid weights vanished");

    std::vector<double> scaled(static_cast<std::size_t>(g));
    for (int k = 0; k < g; ++k)
        scaled[static_cast<std::size_t>(k)] =
            log_total[static_cast<std::size_t>(k)] == kNegInf
                ? 0.0
                : std::exp(log_total[static_cast<std::size_t>(k)] - max_log);

    for (int i = 0; i < n; ++i) {
        const double* row =
            &term_buf[static_cast<std::size_t>(i) * static_cast<std::size_t>(g)];
        double num = 0.0, den = 0.0;
        for (int k = 0; k < g; ++k) {
            const double v = scaled[static_cast<std::size_t>(k)] / row[k];
            den += v;
            num += rule.nodes[static_cast<std::size_t>(k)] * v;
        }
        if (!(den > 0.0) || !std::isfinite(den))
            throw NumericalDegeneracy(
                "rho_tilde quadrature: degenerate integral for patient " +
                std::to_string(i + 1));
        out[static_cast<std::size_t>(i)] = num / den;
    }
}

} // namespace

double rho_tilde_quadrature(std::span<const double> pi, const BetaHyperprior& prior,
                            int exclude, int quad_nodes) {
    if (!(prior.a > 0.0 && prior.b > 0.0))
        throw RejectedParameters("rho_tilde_quadrature: hyperprior a,b must be positive");
    if (exclude < 0 || exclude >= static_cast<int>(pi.size()))
        throw RejectedParameters("rho_tilde_quadrature: exclude index out of range");
    const QuadratureRule rule = gauss_legendre(quad_nodes);
    std::vector<double> term_buf;
    std::vector<double> all(pi.size());
    rho_tilde_batch_quadrature(pi, prior, rule, term_buf, all);
    return all[static_cast<std::size_t>(exclude)];
}

SaddleResult rho_tilde_saddle(std::span<const double> pi, int exclude, double init,
                              const SaddleOptions& opts) {
    const int n = static_cast<int>(pi.size());
    if (n < 100)
        throw RejectedParameters(
            "rho_tilde_saddle: saddle approximation needs at least 100 patients");
    if (exclude < 0 || exclude >= n)
        throw RejectedParameters("rho_tilde_saddle: exclude index out of range");

    auto mean_marginal = [&](double rho) {
        double sum = 0.0;
        for (int j = 0; j < n; ++j) {
            if (j == exclude) continue;
            const double p = pi[static_cast<std::size_t>(j)];
            const double num = rho * p;
            sum += num / (num + (1.0 - rho) * (1.0 - p));
        }
        return sum / (n - 1);
    };
    auto residual = [&](double rho) { return mean_marginal(rho) - rho; };

    SaddleResult res;
    double x = clamp_unit(init);
    double r = residual(x);
    if (std::abs(r) < opts.tol) {
        res.rho = x;
        res.converged = true;
    } else {
        for (int it = 0; it < opts.max_iterations; ++it) {
            const double xn = clamp_unit(x + opts.damping * r);
            const double rn = residual(xn);
            if ((rn > 0.0) != (r > 0.0) && rn != 0.0 && r != 0.0) {
                // oscillation across the root: bisect the bracket
                double lo = x, hi = xn, rlo = r;
                if (lo > hi) {
                    std::swap(lo, hi);
                    rlo = rn;
                }
                double mid = 0.5 * (lo + hi), rm = residual(mid);
                for (int bit = 0; bit < opts.max_iterations && std::abs(rm) >= opts.tol;
                     ++bit) {
                    if ((rm > 0.0) == (rlo > 0.0)) {
                        lo = mid;
                        rlo = rm;
                    } else {
                        hi = mid;
                    }
                    mid = 0.5 * (lo + hi);
                    rm = residual(mid);
                    if (hi - lo < kRhoGuard) break;
                }
                x = mid;
                r = rm;
                break;
            }
            x = xn;
            r = rn;
            if (std::abs(r) < opts.tol) break;
        }
        res.rho = x;
        res.converged = std::abs(r) < opts.tol;
    }
    if (res.converged) {
        // identity-like map: any point is a fixed point
        const double probe = x < 0.5 ? x + 0.25 : x - 0.25;
        if (std::abs(residual(probe)) < opts.tol) res.degenerate = true;
    }
    return res;
}

MarginalEstimate run_bp_fixed_priors(const TestOutcomes& y, const PoolingDesign& d,
                                     const NoiseModel& noise,
                                     std::span<const double> per_patient_rho,
                                     const BpConfig& cfg) {
    for (double p : per_patient_rho)
        if (!(p > 0.0 && p < 1.0))
            throw RejectedParameters(
                "run_bp_fixed_priors: per-patient priors must lie in (0,1)");
    BpRunner runner(d);
    MessageState msgs;
    return runner.run(y, noise, per_patient_rho, cfg, msgs);
}

HbpResult run_hbp(const TestOutcomes& y, const PoolingDesign& d,
                  const NoiseModel& noise, const BetaHyperprior& prior,
                  const HbpConfig& cfg) {
    if (!(prior.a > 0.0 && prior.b > 0.0))
        throw RejectedParameters("run_hbp: hyperprior a,b must be positive");
    if (cfg.bp.max_iterations < 1)
        throw RejectedParameters("run_hbp: max_iterations must be at least 1");
    if (!(cfg.bp.damping > 0.0 && cfg.bp.damping <= 1.0))
        throw RejectedParameters("run_hbp: damping outside (0,1]");
    if (cfg.mode == HbpMode::quadrature && cfg.quad_nodes < 2)
        throw RejectedParameters("run_hbp: quadrature needs at least 2 nodes");
    if (cfg.mode == HbpMode::saddle && d.n_patients < 100)
        throw RejectedParameters("run_hbp: saddle mode needs at least 100 patients");
    if (y.outcomes.size() != static_cast<std::size_t>(d.n_tests))
        throw DimensionMismatch("run_hbp: outcome length differs from design");

    const int n = d.n_patients;
    BpRunner runner(d);
    const FactorGraph& g = runner.graph();
    auto [lik_pos, lik_neg] = test_weights(y, noise);

    MessageState msgs;
    std::vector<double> pi(static_cast<std::size_t>(n));
    std::vector<double> rho_tilde(static_cast<std::size_t>(n));
    switch (cfg.bp.init) {
    case BpInit::uniform_random: {
        Rng rng(cfg.bp.rng_seed);
        msgs.theta_to_test.resize(static_cast<std::size_t>(g.n_edges));
        msgs.theta_to_patient.resize(static_cast<std::size_t>(g.n_edges));
        for (auto& v : msgs.theta_to_test) v = rng.uniform01();
        for (auto& v : msgs.theta_to_patient) v = rng.uniform01();
        for (auto& v : pi) v = rng.uniform01();
        for (auto& v : rho_tilde) v = clamp_unit(rng.uniform01());
        break;
    }
    case BpInit::constant_half:
        msgs.theta_to_test.assign(static_cast<std::size_t>(g.n_edges), 0.5);
        msgs.theta_to_patient.assign(static_cast<std::size_t>(g.n_edges), 0.5);
        pi.assign(static_cast<std::size_t>(n), 0.5);
        rho_tilde.assign(static_cast<std::size_t>(n), 0.5);
        break;
    case BpInit::provided:
        throw RejectedParameters("run_hbp: provided init is not supported");
    }

    QuadratureRule rule;
    if (cfg.mode == HbpMode::quadrature) rule = gauss_legendre(cfg.quad_nodes);
    std::vector<double> term_buf;
    std::vector<double> fresh_rt(static_cast<std::size_t>(n));
    const double damping = cfg.bp.damping;

    bool converged = false;
    bool saddle_ok = true;
    int used = cfg.bp.max_iterations;
    for (int t = 1; t <= cfg.bp.max_iterations; ++t) {
        double delta = runner.sweep(lik_pos, lik_neg, rho_tilde, damping, msgs);

        // evidence-only infection probability per patient, from the damped
        // test->patient messages of this sweep
        for (int i = 0; i < n; ++i) {
            double on = 1.0, off = 1.0;
            for (int k = g.patient_offset[static_cast<std::size_t>(i)];
                 k < g.patient_offset[static_cast<std::size_t>(i) + 1]; ++k) {
                const double v = msgs.theta_to_patient[static_cast<std::size_t>(
                    g.patient_edge[static_cast<std::size_t>(k)])];
                on *= v;
                off *= 1.0 - v;
            }
            const double z = on + off;
            if (z == 0.0)
                throw NumericalDegeneracy("run_hbp: zero evidence normalizer at patient " +
                                          std::to_string(i + 1));
            const double fresh = on / z;
            const double next =
                damping * fresh + (1.0 - damping) * pi[static_cast<std::size_t>(i)];
            const double change = std::abs(next - pi[static_cast<std::size_t>(i)]);
            if (change > delta) delta = change;
            pi[static_cast<std::size_t>(i)] = next;
        }

        // prevalence messages from the pi snapshot of this sweep
        if (cfg.mode == HbpMode::quadrature) {
            rho_tilde_batch_quadrature(pi, prior, rule, term_buf, fresh_rt);
        } else {
            for (int i = 0; i < n; ++i) {
                const SaddleResult sr = rho_tilde_saddle(
                    pi, i, rho_tilde[static_cast<std::size_t>(i)]);
                if (!sr.converged) saddle_ok = false;
                fresh_rt[static_cast<std::size_t>(i)] = sr.rho;
            }
        }
        for (int i = 0; i < n; ++i) {
            const double old = rho_tilde[static_cast<std::size_t>(i)];
            const double next =
                clamp_unit(damping * fresh_rt[static_cast<std::size_t>(i)] +
                           (1.0 - damping) * old);
            const double change = std::abs(next - old);
            if (change > delta) delta = change;
            rho_tilde[static_cast<std::size_t>(i)] = next;
        }

        if (delta < cfg.bp.convergence_tol) {
            converged = true;
            used = t;
            break;
        }
    }

    HbpResult res;
    res.marginals = runner.marginals(rho_tilde, msgs);
    res.marginals.converged = converged;
    res.marginals.iterations_used = used;
    res.pi = std::move(pi);
    double mean_rt = 0.0;
    for (double v : rho_tilde) mean_rt += v;
    res.rho_hat = n > 0 ? mean_rt / n : 0.0;
    res.rho_tilde = std::move(rho_tilde);
    res.messages = std::move(msgs);
    res.saddle_converged = saddle_ok;
    return res;
}

} // namespace gt
