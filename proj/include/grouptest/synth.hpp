#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "grouptest/pooling.hpp"

namespace gt {

struct PatientStates {
    std::vector<std::uint8_t> states; // 1 = infected
};

struct TestOutcomes {
    std::vector<std::uint8_t> outcomes;                            // observed Y
    std::optional<std::vector<std::uint8_t>> true_outcomes;        // pre-noise pool states
};

// Per-test error model: probability a positive/negative pool reads positive.
struct NoiseModel {
    double p_tp = 1.0;
    double p_fp = 0.0;
};

// Exactly round(N * prevalence) infected, positions uniform. Deterministic
// per seed.
PatientStates generate_states(int n_patients, double prevalence, std::uint64_t seed);

// Pool state = OR over its members.
TestOutcomes true_pool_states(const PoolingDesign& d, const PatientStates& x);

// Independent flip per pool, one RNG draw per pool in pool order.
TestOutcomes observe(const TestOutcomes& y0, const NoiseModel& noise,
                     std::uint64_t seed);

// Single-test likelihood P(y | pool state). The two values over y sum to 1.
double pool_likelihood(int y, int pool_or, const NoiseModel& noise);

} // namespace gt
