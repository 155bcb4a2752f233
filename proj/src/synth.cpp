#include "grouptest/synth.hpp"

#include <cmath>
#include <numeric>

#include "grouptest/errors.hpp"
#include "grouptest/rng.hpp"

namespace gt {

PatientStates generate_states(int n_patients, double prevalence, std::uint64_t seed) {
    if (n_patients <= 0)
        throw RejectedParameters("generate_states: n_patients must be positive");
    if (!(prevalence >= 0.0 && prevalence <= 1.0))
        throw RejectedParameters("generate_states: prevalence outside [0,1]");
    // round-half-up
    const int infected =
        static_cast<int>(std::floor(n_patients * prevalence + 0.5));
    PatientStates x;
    x.states.assign(static_cast<std::size_t>(n_patients), 0);
    std::vector<int> order(static_cast<std::size_t>(n_patients));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);
    for (int k = 0; k < infected; ++k)
        x.states[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = 1;
    return x;
}

TestOutcomes true_pool_states(const PoolingDesign& d, const PatientStates& x) {
    if (x.states.size() != static_cast<std::size_t>(d.n_patients))
        throw DimensionMismatch("true_pool_states: states length differs from design");
    TestOutcomes y0;
    y0.outcomes.assign(static_cast<std::size_t>(d.n_tests), 0);
    for (int mu = 0; mu < d.n_tests; ++mu) {
        for (int i : d.patients_of_test[static_cast<std::size_t>(mu)]) {
            if (x.states[static_cast<std::size_t>(i)]) {
                y0.outcomes[static_cast<std::size_t>(mu)] = 1;
                break;
            }
        }
    }
    return y0;
}

TestOutcomes observe(const TestOutcomes& y0, const NoiseModel& noise,
                     std::uint64_t seed) {
    if (!(noise.p_tp >= 0.0 && noise.p_tp <= 1.0 && noise.p_fp >= 0.0 &&
          noise.p_fp <= 1.0))
        throw RejectedParameters("observe: noise probabilities outside [0,1]");
    TestOutcomes y;
    y.outcomes.resize(y0.outcomes.size());
    y.true_outcomes = y0.outcomes;
    Rng rng(seed);
    for (std::size_t mu = 0; mu < y0.outcomes.size(); ++mu) {
        const double keep = y0.outcomes[mu] ? noise.p_tp : noise.p_fp;
        y.outcomes[mu] = rng.uniform01() < keep ? 1 : 0;
    }
    return y;
}

double pool_likelihood(int y, int pool_or, const NoiseModel& noise) {
    if (pool_or)
        return y ? noise.p_tp : 1.0 - noise.p_tp;
    return y ? noise.p_fp : 1.0 - noise.p_fp;
}

} // namespace gt
