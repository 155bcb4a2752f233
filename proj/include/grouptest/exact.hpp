#pragma once

#include "grouptest/bp.hpp"
#include "grouptest/pooling.hpp"
#include "grouptest/synth.hpp"

namespace gt {

// Posterior marginals by enumerating all 2^N patient configurations.
// Gray-code order with incremental pool counters, log-space accumulation.
// Throws CostGuard when n_patients exceeds the cap.
MarginalEstimate exact_marginals(const TestOutcomes& y, const PoolingDesign& d,
                                 const AssumedParams& params,
                                 int max_patients = 22);

} // namespace gt
