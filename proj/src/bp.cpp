#include "grouptest/bp.hpp"

#include <cassert>
#include <cmath>
#include <string>

#include "grouptest/errors.hpp"
#include "grouptest/rng.hpp"

namespace gt {

namespace {

constexpr double kThetaClamp = 1e-12;

void check_probability(double v, const char* what) {
    if (!(v >= 0.0 && v <= 1.0))
        throw RejectedParameters(std::string(what) + " outside [0,1]");
}

std::string edge_name(const FactorGraph& g, int e) {
    // 1-based in messages, matching the file formats
    return "test " + std::to_string(g.edge_test[static_cast<std::size_t>(e)] + 1) +
           " <-> patient " +
           std::to_string(g.edge_patient[static_cast<std::size_t>(e)] + 1);
}

} // namespace

FactorGraph FactorGraph::from_design(const PoolingDesign& d) {
    FactorGraph g;
    g.n_patients = d.n_patients;
    g.n_tests = d.n_tests;
    g.test_offset.assign(static_cast<std::size_t>(d.n_tests) + 1, 0);
    for (int mu = 0; mu < d.n_tests; ++mu)
        g.test_offset[static_cast<std::size_t>(mu) + 1] =
            g.test_offset[static_cast<std::size_t>(mu)] +
            static_cast<int>(d.patients_of_test[static_cast<std::size_t>(mu)].size());
    g.n_edges = g.test_offset[static_cast<std::size_t>(d.n_tests)];
    g.edge_patient.resize(static_cast<std::size_t>(g.n_edges));
    g.edge_test.resize(static_cast<std::size_t>(g.n_edges));
    {
        int e = 0;
        for (int mu = 0; mu < d.n_tests; ++mu)
            for (int i : d.patients_of_test[static_cast<std::size_t>(mu)]) {
                g.edge_patient[static_cast<std::size_t>(e)] = i;
                g.edge_test[static_cast<std::size_t>(e)] = mu;
                ++e;
            }
    }
    g.patient_offset.assign(static_cast<std::size_t>(d.n_patients) + 1, 0);
    for (int e = 0; e < g.n_edges; ++e)
        ++g.patient_offset[static_cast<std::size_t>(
                               g.edge_patient[static_cast<std::size_t>(e)]) +
                           1];
    for (int i = 0; i < d.n_patients; ++i)
        g.patient_offset[static_cast<std::size_t>(i) + 1] +=
            g.patient_offset[static_cast<std::size_t>(i)];
    g.patient_edge.resize(static_cast<std::size_t>(g.n_edges));
    {
        std::vector<int> cursor(g.patient_offset.begin(), g.patient_offset.end() - 1);
        for (int e = 0; e < g.n_edges; ++e) {
            const int i = g.edge_patient[static_cast<std::size_t>(e)];
            g.patient_edge[static_cast<std::size_t>(
                cursor[static_cast<std::size_t>(i)]++)] = e;
        }
    }
    return g;
}

std::pair<std::vector<double>, std::vector<double>> test_weights(
    const TestOutcomes& y, const NoiseModel& noise) {
    check_probability(noise.p_tp, "p_tp");
    check_probability(noise.p_fp, "p_fp");
    const std::size_t m = y.outcomes.size();
    std::vector<double> pos(m), neg(m);
    for (std::size_t mu = 0; mu < m; ++mu) {
        pos[mu] = y.outcomes[mu] ? noise.p_tp : 1.0 - noise.p_tp;
        neg[mu] = y.outcomes[mu] ? noise.p_fp : 1.0 - noise.p_fp;
    }
    return {std::move(pos), std::move(neg)};
}

double log_odds(double theta) {
    double t = theta;
    if (t < kThetaClamp) t = kThetaClamp;
    if (t > 1.0 - kThetaClamp) t = 1.0 - kThetaClamp;
    return std::log(t / (1.0 - t));
}

BpRunner::BpRunner(const PoolingDesign& d) : graph_(FactorGraph::from_design(d)) {
    excl_pool_.resize(static_cast<std::size_t>(graph_.n_edges));
    excl_on_.resize(static_cast<std::size_t>(graph_.n_edges));
    excl_off_.resize(static_cast<std::size_t>(graph_.n_edges));
}

void BpRunner::init_messages(const BpConfig& cfg, MessageState& msgs) const {
    const std::size_t e = static_cast<std::size_t>(graph_.n_edges);
    switch (cfg.init) {
    case BpInit::uniform_random: {
        Rng rng(cfg.rng_seed);
        msgs.theta_to_test.resize(e);
        msgs.theta_to_patient.resize(e);
        for (auto& v : msgs.theta_to_test) v = rng.uniform01();
        for (auto& v : msgs.theta_to_patient) v = rng.uniform01();
        break;
    }
    case BpInit::constant_half:
        msgs.theta_to_test.assign(e, 0.5);
        msgs.theta_to_patient.assign(e, 0.5);
        break;
    case BpInit::provided:
        if (msgs.theta_to_test.size() != e || msgs.theta_to_patient.size() != e)
            throw DimensionMismatch("provided messages do not match the edge set");
        break;
    }
}

double BpRunner::sweep(std::span<const double> lik_pos,
                       std::span<const double> lik_neg,
                       std::span<const double> priors, double damping,
                       MessageState& msgs) {
    const FactorGraph& g = graph_;
    auto& to_test = msgs.theta_to_test;
    auto& to_patient = msgs.theta_to_patient;

    // Exclusive products from the previous iteration's values, forward and
    // backward passes per node.
    for (int mu = 0; mu < g.n_tests; ++mu) {
        const int first = g.test_offset[static_cast<std::size_t>(mu)];
        const int last = g.test_offset[static_cast<std::size_t>(mu) + 1];
        double acc = 1.0;
        for (int e = first; e < last; ++e) {
            excl_pool_[static_cast<std::size_t>(e)] = acc;
            acc *= 1.0 - to_test[static_cast<std::size_t>(e)];
        }
        acc = 1.0;
        for (int e = last - 1; e >= first; --e) {
            excl_pool_[static_cast<std::size_t>(e)] *= acc;
            acc *= 1.0 - to_test[static_cast<std::size_t>(e)];
        }
    }
    for (int i = 0; i < g.n_patients; ++i) {
        const int first = g.patient_offset[static_cast<std::size_t>(i)];
        const int last = g.patient_offset[static_cast<std::size_t>(i) + 1];
        double on = 1.0, off = 1.0;
        for (int k = first; k < last; ++k) {
            const double v =
                to_patient[static_cast<std::size_t>(g.patient_edge[static_cast<std::size_t>(k)])];
            excl_on_[static_cast<std::size_t>(k)] = on;
            excl_off_[static_cast<std::size_t>(k)] = off;
            on *= v;
            off *= 1.0 - v;
        }
        on = 1.0;
        off = 1.0;
        for (int k = last - 1; k >= first; --k) {
            const double v =
                to_patient[static_cast<std::size_t>(g.patient_edge[static_cast<std::size_t>(k)])];
            excl_on_[static_cast<std::size_t>(k)] *= on;
            excl_off_[static_cast<std::size_t>(k)] *= off;
            on *= v;
            off *= 1.0 - v;
        }
    }

    double delta = 0.0;

    // test -> patient
    for (int mu = 0; mu < g.n_tests; ++mu) {
        const int first = g.test_offset[static_cast<std::size_t>(mu)];
        const int last = g.test_offset[static_cast<std::size_t>(mu) + 1];
        const double u = lik_pos[static_cast<std::size_t>(mu)];
        const double w = lik_neg[static_cast<std::size_t>(mu)];
        for (int e = first; e < last; ++e) {
            const double clear = excl_pool_[static_cast<std::size_t>(e)];
            const double z = u * (2.0 - clear) + w * clear;
            if (z == 0.0)
                throw NumericalDegeneracy("zero message normalizer at " +
                                          edge_name(g, e));
            const double fresh = u / z;
            const double old = to_patient[static_cast<std::size_t>(e)];
            const double next = damping * fresh + (1.0 - damping) * old;
            const double change = std::abs(next - old);
            if (change > delta) delta = change;
            to_patient[static_cast<std::size_t>(e)] = next;
            assert(next >= 0.0 && next <= 1.0);
        }
    }

    // patient -> test
    for (int i = 0; i < g.n_patients; ++i) {
        const int first = g.patient_offset[static_cast<std::size_t>(i)];
        const int last = g.patient_offset[static_cast<std::size_t>(i) + 1];
        const double prior = priors[static_cast<std::size_t>(i)];
        for (int k = first; k < last; ++k) {
            const int e = g.patient_edge[static_cast<std::size_t>(k)];
            const double a = prior * excl_on_[static_cast<std::size_t>(k)];
            const double b = (1.0 - prior) * excl_off_[static_cast<std::size_t>(k)];
            const double z = a + b;
            if (z == 0.0)
                throw NumericalDegeneracy("zero message normalizer at " +
                                          edge_name(g, e));
            const double fresh = a / z;
            const double old = to_test[static_cast<std::size_t>(e)];
            const double next = damping * fresh + (1.0 - damping) * old;
            const double change = std::abs(next - old);
            if (change > delta) delta = change;
            to_test[static_cast<std::size_t>(e)] = next;
            assert(next >= 0.0 && next <= 1.0);
        }
    }

    return delta;
}

MarginalEstimate BpRunner::marginals(std::span<const double> priors,
                                     const MessageState& msgs) const {
    const FactorGraph& g = graph_;
    MarginalEstimate est;
    est.theta_hat.resize(static_cast<std::size_t>(g.n_patients));
    est.tau_hat.resize(static_cast<std::size_t>(g.n_patients));
    for (int i = 0; i < g.n_patients; ++i) {
        const int first = g.patient_offset[static_cast<std::size_t>(i)];
        const int last = g.patient_offset[static_cast<std::size_t>(i) + 1];
        double on = 1.0, off = 1.0;
        for (int k = first; k < last; ++k) {
            const double v = msgs.theta_to_patient[static_cast<std::size_t>(
                g.patient_edge[static_cast<std::size_t>(k)])];
            on *= v;
            off *= 1.0 - v;
        }
        const double prior = priors[static_cast<std::size_t>(i)];
        const double a = prior * on;
        const double b = (1.0 - prior) * off;
        const double z = a + b;
        if (z == 0.0)
            throw NumericalDegeneracy("zero marginal normalizer at patient " +
                                      std::to_string(i + 1));
        est.theta_hat[static_cast<std::size_t>(i)] = a / z;
        est.tau_hat[static_cast<std::size_t>(i)] = log_odds(a / z);
    }
    return est;
}

MarginalEstimate BpRunner::run(const TestOutcomes& y, const NoiseModel& noise,
                               std::span<const double> priors, const BpConfig& cfg,
                               MessageState& msgs, std::vector<TraceRow>* trace) {
    if (cfg.max_iterations < 1)
        throw RejectedParameters("max_iterations must be at least 1");
    if (!(cfg.damping > 0.0 && cfg.damping <= 1.0))
        throw RejectedParameters("damping outside (0,1]");
    if (cfg.convergence_tol < 0.0)
        throw RejectedParameters("convergence_tol must be nonnegative");
    if (y.outcomes.size() != static_cast<std::size_t>(graph_.n_tests))
        throw DimensionMismatch("outcome length differs from design");
    if (priors.size() != static_cast<std::size_t>(graph_.n_patients))
        throw DimensionMismatch("prior length differs from design");
    for (double p : priors) check_probability(p, "prior");

    auto [lik_pos, lik_neg] = test_weights(y, noise);
    init_messages(cfg, msgs);

    bool converged = false;
    int used = cfg.max_iterations;
    for (int t = 1; t <= cfg.max_iterations; ++t) {
        const double delta = sweep(lik_pos, lik_neg, priors, cfg.damping, msgs);
        if (trace) trace->push_back({t, delta});
        if (delta < cfg.convergence_tol) {
            converged = true;
            used = t;
            break;
        }
    }
    MarginalEstimate est = marginals(priors, msgs);
    est.converged = converged;
    est.iterations_used = used;
    return est;
}

BpResult run_bp(const TestOutcomes& y, const PoolingDesign& d,
                const AssumedParams& params, const BpConfig& cfg,
                std::vector<TraceRow>* trace) {
    check_probability(params.rho_hat, "rho_hat");
    BpRunner runner(d);
    std::vector<double> priors(static_cast<std::size_t>(d.n_patients),
                               params.rho_hat);
    MessageState msgs;
    MarginalEstimate est =
        runner.run(y, params.noise_hat, priors, cfg, msgs, trace);
    return {std::move(est), std::move(msgs)};
}

std::vector<std::uint8_t> map_estimate(const MarginalEstimate& m) {
    std::vector<std::uint8_t> out(m.theta_hat.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = m.theta_hat[i] > 0.5 ? 1 : 0;
    return out;
}

std::vector<std::uint8_t> threshold_estimate(const MarginalEstimate& m,
                                             double threshold) {
    std::vector<std::uint8_t> out(m.tau_hat.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = m.tau_hat[i] > threshold ? 1 : 0;
    return out;
}

} // namespace gt
