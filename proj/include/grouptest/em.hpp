#pragma once

#include <span>
#include <vector>

#include "grouptest/bp.hpp"
#include "grouptest/pooling.hpp"
#include "grouptest/synth.hpp"

namespace gt {

// Per-test aggregates at a message fixed point: q_tilde is the belief that
// the pool contains no infected member, z_mu the per-test evidence.
struct PoolAggregates {
    std::vector<double> q_tilde;
    std::vector<double> z_mu;
};

PoolAggregates pool_aggregates(const MessageState& msgs, const TestOutcomes& y,
                               const PoolingDesign& d, const AssumedParams& params);

// Bethe approximation of the log evidence: sum of test and patient terms
// minus the edge terms. Throws NumericalDegeneracy on a nonpositive term.
double bethe_free_entropy(const MessageState& msgs, const TestOutcomes& y,
                          const PoolingDesign& d, const AssumedParams& params);

// Analytic derivatives with messages frozen: d_rho is the prevalence
// derivative; f and g are the stationarity residuals for p_tp and p_fp.
struct BetheGradients {
    double d_rho = 0.0;
    double f = 0.0;
    double g = 0.0;
};

BetheGradients bethe_gradients(const MessageState& msgs, const TestOutcomes& y,
                               const PoolingDesign& d, const AssumedParams& params);

// Closed-form prevalence update: the mean marginal.
double m_step_rho(std::span<const double> theta_hat);

struct NoiseStep {
    NoiseModel next;
    double f = 0.0;
    double g = 0.0;
    bool stalled = false; // Jacobian singular; parameters left unchanged
};

// One damped Newton step on (p_tp, p_fp) from the stationarity residuals,
// clamped to [eps, 1-eps] so the trivial roots at 0 and 1 are unreachable.
NoiseStep m_step_noise(const PoolAggregates& agg, const TestOutcomes& y,
                       const NoiseModel& current);

struct EmConfig {
    int rounds = 50;        // S
    BpConfig inner;         // E-step; messages warm-start across rounds
    bool update_noise = true;
    EmConfig() { inner.max_iterations = 200; }
};

struct EmRound {
    int round = 0;
    double rho = 0.0;  // parameters after this round's M-step
    double p_tp = 0.0;
    double p_fp = 0.0;
    double bethe_entropy = 0.0; // at the round's fixed point, pre-update params
    double f = 0.0;
    double g = 0.0;
    bool newton_stalled = false;
};

struct EmTrace {
    std::vector<EmRound> rounds;
};

struct EmResult {
    MarginalEstimate marginals;
    AssumedParams params;
    EmTrace trace;
    MessageState messages;
};

// Alternates BP sweeps at the current parameters with the closed-form rho
// update and a single Newton step on the noise pair. Sensitive to the noise
// initialization; callers should start near plausible values.
EmResult run_bp_em(const TestOutcomes& y, const PoolingDesign& d,
                   const AssumedParams& init, const EmConfig& cfg);

} // namespace gt
