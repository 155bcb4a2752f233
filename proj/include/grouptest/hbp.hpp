#pragma once

#include <span>
#include <vector>

#include "grouptest/bp.hpp"
#include "grouptest/pooling.hpp"
#include "grouptest/quadrature.hpp"
#include "grouptest/synth.hpp"

namespace gt {

// Beta hyperprior on the prevalence.
struct BetaHyperprior {
    double a = 1.0;
    double b = 1.0;
    double mean() const { return a / (a + b); }
};

enum class HbpMode { quadrature, saddle };

struct HbpConfig {
    BpConfig bp;
    HbpMode mode = HbpMode::quadrature;
    int quad_nodes = 64;
};

struct HbpResult {
    MarginalEstimate marginals;
    std::vector<double> rho_tilde; // per-patient prevalence message
    std::vector<double> pi;        // infection probability ignoring the prior
    double rho_hat = 0.0;          // mean of rho_tilde
    MessageState messages;
    bool saddle_converged = true; // false if any saddle solve hit its cap
};

// Hierarchical-Bayes BP: edge messages as in plain BP but with a per-patient
// prior probability that is itself re-estimated every sweep from the beta
// hyperprior and the leave-one-out evidence of the other patients.
HbpResult run_hbp(const TestOutcomes& y, const PoolingDesign& d,
                  const NoiseModel& noise, const BetaHyperprior& prior,
                  const HbpConfig& cfg);

// Posterior mean of the prevalence under the hyperprior and the evidence of
// all patients except `exclude`. Gauss-Legendre on [0,1]; the per-node
// product over patients is exponent-tracked and combined in log space with a
// max shift (leave-one-out realized as total product over own term).
double rho_tilde_quadrature(std::span<const double> pi, const BetaHyperprior& prior,
                            int exclude, int quad_nodes = 64);

struct SaddleOptions {
    double damping = 0.5;
    int max_iterations = 500;
    double tol = 1e-8;
};

struct SaddleResult {
    double rho = 0.0;
    bool converged = false;
    bool degenerate = false; // the map looked like the identity
};

// Large-N evaluation of the prevalence message: scalar fixed point of the
// mean leave-one-out marginal, independent of the hyperprior. Damped
// iteration with a bisection fallback on oscillation. Requires >= 100
// patients for the approximation to be meaningful.
SaddleResult rho_tilde_saddle(std::span<const double> pi, int exclude, double init,
                              const SaddleOptions& opts = {});

// HBP with the per-patient priors held constant; with all entries equal this
// is exactly run_bp.
MarginalEstimate run_bp_fixed_priors(const TestOutcomes& y, const PoolingDesign& d,
                                     const NoiseModel& noise,
                                     std::span<const double> per_patient_rho,
                                     const BpConfig& cfg);

} // namespace gt
