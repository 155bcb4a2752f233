#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "grouptest/pooling.hpp"
#include "grouptest/synth.hpp"

namespace gt {

// CSR views of the design's edge set in both directions. Edges are numbered
// test-major: pools in order, members in listed order.
struct FactorGraph {
    int n_patients = 0;
    int n_tests = 0;
    int n_edges = 0;
    std::vector<int> test_offset;    // size M+1, edge range of each test
    std::vector<int> edge_patient;   // size E
    std::vector<int> edge_test;      // size E
    std::vector<int> patient_offset; // size N+1
    std::vector<int> patient_edge;   // size E, edge ids grouped by patient

    static FactorGraph from_design(const PoolingDesign& d);
};

// Per-edge Bernoulli parameters of the two message families.
struct MessageState {
    std::vector<double> theta_to_test;    // patient -> test
    std::vector<double> theta_to_patient; // test -> patient
};

enum class BpInit { uniform_random, constant_half, provided };

struct BpConfig {
    int max_iterations = 1000;
    double damping = 0.1; // in (0,1]; 1 = undamped
    BpInit init = BpInit::uniform_random;
    double convergence_tol = 1e-8; // early stop on max message change
    std::uint64_t rng_seed = 0;
};

struct MarginalEstimate {
    std::vector<double> theta_hat; // per-patient infection probability
    std::vector<double> tau_hat;   // log-odds, clamped finite
    bool converged = false;
    int iterations_used = 0;
};

struct AssumedParams {
    double rho_hat = 0.0;
    NoiseModel noise_hat;
};

struct TraceRow {
    int iter;
    double max_delta;
};

// Likelihood weights per test: first = P(Y_mu | pool positive),
// second = P(Y_mu | pool negative).
std::pair<std::vector<double>, std::vector<double>> test_weights(
    const TestOutcomes& y, const NoiseModel& noise);

// log(theta / (1-theta)) with theta clipped to [1e-12, 1-1e-12] so the
// result is always finite.
double log_odds(double theta);

// Synchronous damped message passing over one factor graph. A runner owns
// scratch buffers, so use one instance per thread; distinct runners on
// distinct message states are freely parallel.
class BpRunner {
public:
    explicit BpRunner(const PoolingDesign& d);

    // Fills msgs per cfg.init; BpInit::provided validates sizes only.
    void init_messages(const BpConfig& cfg, MessageState& msgs) const;

    // One synchronous sweep: every message recomputed from the previous
    // iteration's values, then damped. Returns the max absolute change.
    // Throws NumericalDegeneracy naming the edge when a normalizer is zero.
    double sweep(std::span<const double> lik_pos, std::span<const double> lik_neg,
                 std::span<const double> priors, double damping, MessageState& msgs);

    // Posterior marginals from the test->patient messages and per-patient
    // prior probabilities. Patients with no pools get their prior back.
    MarginalEstimate marginals(std::span<const double> priors,
                               const MessageState& msgs) const;

    // Full run: init (unless provided), iterate to tolerance or the cap,
    // then read out marginals.
    MarginalEstimate run(const TestOutcomes& y, const NoiseModel& noise,
                         std::span<const double> priors, const BpConfig& cfg,
                         MessageState& msgs, std::vector<TraceRow>* trace = nullptr);

    const FactorGraph& graph() const { return graph_; }

private:
    FactorGraph graph_;
    // leave-one-out products, rebuilt each sweep
    std::vector<double> excl_pool_; // prod of (1 - theta_to_test) over pool peers
    std::vector<double> excl_on_;   // prod of theta_to_patient over other pools
    std::vector<double> excl_off_;  // prod of (1 - theta_to_patient) over other pools
};

struct BpResult {
    MarginalEstimate estimate;
    MessageState messages;
};

// Algorithm: damped BP with a shared prevalence prior.
BpResult run_bp(const TestOutcomes& y, const PoolingDesign& d,
                const AssumedParams& params, const BpConfig& cfg,
                std::vector<TraceRow>* trace = nullptr);

// MAP decision: infected iff theta_hat > 0.5 (strict).
std::vector<std::uint8_t> map_estimate(const MarginalEstimate& m);

// Log-odds threshold decision; threshold 0 reproduces map_estimate.
std::vector<std::uint8_t> threshold_estimate(const MarginalEstimate& m,
                                             double threshold);

} // namespace gt
