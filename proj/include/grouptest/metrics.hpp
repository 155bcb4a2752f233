#pragma once

#include <cstdint>
#include <span>

#include "grouptest/synth.hpp"

namespace gt {

// A rate whose denominator may be empty; undefined rates carry NaN and are
// excluded from averages by callers.
struct Rate {
    double value = 0.0;
    bool defined = false;
};

struct ReconstructionMetrics {
    Rate tp_rate;
    Rate fp_rate;
    Rate m_plus;
    Rate m_minus;
};

// Fraction of infected reconstructed positive / of non-infected reconstructed
// positive. A rate with an empty denominator is flagged undefined.
std::pair<Rate, Rate> tp_fp(const PatientStates& truth,
                            std::span<const std::uint8_t> estimate);

// Mean posterior infection probability over infected / non-infected patients.
std::pair<Rate, Rate> magnetizations(const PatientStates& truth,
                                     std::span<const double> theta_hat);

// Mean absolute deviation of prevalence estimates from truth.
double bias(double true_rho, std::span<const double> rho_estimates);

} // namespace gt
