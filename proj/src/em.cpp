#include "grouptest/em.hpp"

#include <cmath>
#include <string>

#include "grouptest/errors.hpp"

namespace gt {

namespace {

constexpr double kParamClamp = 1e-6;

double clamp_param(double v) {
    if (v < kParamClamp) return kParamClamp;
    if (v > 1.0 - kParamClamp) return 1.0 - kParamClamp;
    return v;
}

void check_edge_sizes(const MessageState& msgs, const FactorGraph& g) {
    if (msgs.theta_to_test.size() != static_cast<std::size_t>(g.n_edges) ||
        msgs.theta_to_patient.size() != static_cast<std::size_t>(g.n_edges))
        throw DimensionMismatch("message state does not match the design edge set");
}

} // namespace

PoolAggregates pool_aggregates(const MessageState& msgs, const TestOutcomes& y,
                               const PoolingDesign& d, const AssumedParams& params) {
    const FactorGraph g = FactorGraph::from_design(d);
    check_edge_sizes(msgs, g);
    auto [lik_pos, lik_neg] = test_weights(y, params.noise_hat);
    PoolAggregates agg;
    agg.q_tilde.resize(static_cast<std::size_t>(g.n_tests));
    agg.z_mu.resize(static_cast<std::size_t>(g.n_tests));
    for (int mu = 0; mu < g.n_tests; ++mu) {
        double clear = 1.0;
        for (int e = g.test_offset[static_cast<std::size_t>(mu)];
             e < g.test_offset[static_cast<std::size_t>(mu) + 1]; ++e)
            clear *= 1.0 - msgs.theta_to_test[static_cast<std::size_t>(e)];
        agg.q_tilde[static_cast<std::size_t>(mu)] = clear;
        agg.z_mu[static_cast<std::size_t>(mu)] =
            lik_pos[static_cast<std::size_t>(mu)] * (1.0 - clear) +
            lik_neg[static_cast<std::size_t>(mu)] * clear;
    }
    return agg;
}

double bethe_free_entropy(const MessageState& msgs, const TestOutcomes& y,
                          const PoolingDesign& d, const AssumedParams& params) {
    const FactorGraph g = FactorGraph::from_design(d);
    check_edge_sizes(msgs, g);
    const double rho = params.rho_hat;
    auto [lik_pos, lik_neg] = test_weights(y, params.noise_hat);

    double entropy = 0.0;
    for (int mu = 0; mu < g.n_tests; ++mu) {
        double clear = 1.0;
        for (int e = g.test_offset[static_cast<std::size_t>(mu)];
             e < g.test_offset[static_cast<std::size_t>(mu) + 1]; ++e)
            clear *= 1.0 - msgs.theta_to_test[static_cast<std::size_t>(e)];
        const double z = lik_pos[static_cast<std::size_t>(mu)] * (1.0 - clear) +
                         lik_neg[static_cast<std::size_t>(mu)] * clear;
        if (!(z > 0.0))
            throw NumericalDegeneracy("bethe_free_entropy: nonpositive test term at test " +
                                      std::to_string(mu + 1));
        entropy += std::log(z);
    }
    for (int i = 0; i < g.n_patients; ++i) {
        double on = 1.0, off = 1.0;
        for (int k = g.patient_offset[static_cast<std::size_t>(i)];
             k < g.patient_offset[static_cast<std::size_t>(i) + 1]; ++k) {
            const double v = msgs.theta_to_patient[static_cast<std::size_t>(
                g.patient_edge[static_cast<std::size_t>(k)])];
            on *= v;
            off *= 1.0 - v;
        }
        const double z = rho * on + (1.0 - rho) * off;
        if (!(z > 0.0))
            throw NumericalDegeneracy(
                "bethe_free_entropy: nonpositive patient term at patient " +
                std::to_string(i + 1));
        entropy += std::log(z);
    }
    for (int e = 0; e < g.n_edges; ++e) {
        const double t = msgs.theta_to_test[static_cast<std::size_t>(e)];
        const double h = msgs.theta_to_patient[static_cast<std::size_t>(e)];
        const double z = t * h + (1.0 - t) * (1.0 - h);
        if (!(z > 0.0))
            throw NumericalDegeneracy(
                "bethe_free_entropy: nonpositive edge term at test " +
                std::to_string(g.edge_test[static_cast<std::size_t>(e)] + 1) +
                " <-> patient " +
                std::to_string(g.edge_patient[static_cast<std::size_t>(e)] + 1));
        entropy -= std::log(z);
    }
    return entropy;
}

BetheGradients bethe_gradients(const MessageState& msgs, const TestOutcomes& y,
                               const PoolingDesign& d, const AssumedParams& params) {
    const FactorGraph g = FactorGraph::from_design(d);
    check_edge_sizes(msgs, g);
    const double rho = params.rho_hat;
    const PoolAggregates agg = pool_aggregates(msgs, y, d, params);

    BetheGradients grad;
    for (int i = 0; i < g.n_patients; ++i) {
        double on = 1.0, off = 1.0;
        for (int k = g.patient_offset[static_cast<std::size_t>(i)];
             k < g.patient_offset[static_cast<std::size_t>(i) + 1]; ++k) {
            const double v = msgs.theta_to_patient[static_cast<std::size_t>(
                g.patient_edge[static_cast<std::size_t>(k)])];
            on *= v;
            off *= 1.0 - v;
        }
        const double z = rho * on + (1.0 - rho) * off;
        if (!(z > 0.0))
            throw NumericalDegeneracy(
                "bethe_gradients: nonpositive patient term at patient " +
                std::to_string(i + 1));
        grad.d_rho += (on - off) / z;
    }
    for (int mu = 0; mu < g.n_tests; ++mu) {
        const double sign = 2.0 * y.outcomes[static_cast<std::size_t>(mu)] - 1.0;
        const double clear = agg.q_tilde[static_cast<std::size_t>(mu)];
        const double z = agg.z_mu[static_cast<std::size_t>(mu)];
        if (!(z > 0.0))
            throw NumericalDegeneracy("bethe_gradients: nonpositive test term at test " +
                                      std::to_string(mu + 1));
        grad.f += sign * (1.0 - clear) / z;
        grad.g += sign * clear / z;
    }
    return grad;
}

double m_step_rho(std::span<const double> theta_hat) {
    double sum = 0.0;
    for (double t : theta_hat) sum += t;
    return theta_hat.empty() ? 0.0 : sum / static_cast<double>(theta_hat.size());
}

NoiseStep m_step_noise(const PoolAggregates& agg, const TestOutcomes& y,
                       const NoiseModel& current) {
    if (agg.q_tilde.size() != y.outcomes.size() ||
        agg.z_mu.size() != y.outcomes.size())
        throw DimensionMismatch("m_step_noise: aggregate length differs from outcomes");

    NoiseStep step;
    step.next = current;
    // residuals and Jacobian of the stationarity conditions; the squared
    // sign factor (2Y-1)^2 is identically 1
    double g11 = 0.0, g12 = 0.0, g22 = 0.0;
    for (std::size_t mu = 0; mu < y.outcomes.size(); ++mu) {
        const double sign = 2.0 * y.outcomes[mu] - 1.0;
        const double clear = agg.q_tilde[mu];
        const double z = agg.z_mu[mu];
        if (!(z > 0.0))
            throw NumericalDegeneracy("m_step_noise: nonpositive evidence at test " +
                                      std::to_string(mu + 1));
        const double hit = (1.0 - clear) / z;
        const double miss = clear / z;
        step.f += sign * hit;
        step.g += sign * miss;
        g11 += hit * hit;
        g12 += hit * miss;
        g22 += miss * miss;
    }
    // G = -[[g11,g12],[g12,g22]]; Newton step is x - G^{-1} r
    const double det = g11 * g22 - g12 * g12;
    const double scale = g11 * g22 + g12 * g12;
    if (!(std::abs(det) > 1e-14 * scale)) {
        step.stalled = true;
        return step;
    }
    const double dp_tp = -(g22 * step.f - g12 * step.g) / det;
    const double dp_fp = -(g11 * step.g - g12 * step.f) / det;
    step.next.p_tp = clamp_param(current.p_tp - dp_tp);
    step.next.p_fp = clamp_param(current.p_fp - dp_fp);
    return step;
}

EmResult run_bp_em(const TestOutcomes& y, const PoolingDesign& d,
                   const AssumedParams& init, const EmConfig& cfg) {
    if (cfg.rounds < 1) throw RejectedParameters("run_bp_em: rounds below 1");
    if (!(init.rho_hat > 0.0 && init.rho_hat < 1.0) ||
        !(init.noise_hat.p_tp > 0.0 && init.noise_hat.p_tp < 1.0) ||
        !(init.noise_hat.p_fp > 0.0 && init.noise_hat.p_fp < 1.0))
        throw RejectedParameters("run_bp_em: init parameters must lie in (0,1)");

    BpRunner runner(d);
    MessageState msgs;
    BpConfig inner = cfg.inner;
    AssumedParams params = init;
    params.rho_hat = clamp_param(params.rho_hat);
    params.noise_hat.p_tp = clamp_param(params.noise_hat.p_tp);
    params.noise_hat.p_fp = clamp_param(params.noise_hat.p_fp);

    EmResult result;
    std::vector<double> priors(static_cast<std::size_t>(d.n_patients));
    for (int s = 1; s <= cfg.rounds; ++s) {
        priors.assign(static_cast<std::size_t>(d.n_patients), params.rho_hat);
        MarginalEstimate est;
        try {
            est = runner.run(y, params.noise_hat, priors, inner, msgs);
        } catch (const NumericalDegeneracy& e) {
            throw NumericalDegeneracy("EM round " + std::to_string(s) + ": " +
                                      e.what());
        }
        inner.init = BpInit::provided; // warm start from here on

        const double rho_next = clamp_param(m_step_rho(est.theta_hat));
        const PoolAggregates agg = pool_aggregates(msgs, y, d, params);
        const double entropy = bethe_free_entropy(msgs, y, d, params);
        NoiseStep noise = m_step_noise(agg, y, params.noise_hat);

        EmRound row;
        row.round = s;
        row.rho = rho_next;
        row.p_tp = cfg.update_noise ? noise.next.p_tp : params.noise_hat.p_tp;
        row.p_fp = cfg.update_noise ? noise.next.p_fp : params.noise_hat.p_fp;
        row.bethe_entropy = entropy;
        row.f = noise.f;
        row.g = noise.g;
        row.newton_stalled = noise.stalled;
        result.trace.rounds.push_back(row);

        params.rho_hat = rho_next;
        if (cfg.update_noise) params.noise_hat = noise.next;
        result.marginals = std::move(est);
    }
    result.params = params;
    result.messages = std::move(msgs);
    return result;
}

} // namespace gt
