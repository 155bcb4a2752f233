#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "grouptest/bp.hpp"
#include "grouptest/pooling.hpp"
#include "grouptest/synth.hpp"

namespace gt {

struct ResampleResult {
    TestOutcomes y;
    PoolingDesign design; // row-regular, column degrees 0..M'
    std::vector<int> source_rows;
};

// Draws M (outcome, test-row) pairs with replacement from their joint
// empirical distribution, then drops duplicate pairs (membership compared as
// a set). Deterministic per seed.
ResampleResult resample(const TestOutcomes& y, const PoolingDesign& d,
                        std::uint64_t seed);

struct BootstrapConfig {
    int n_bootstrap = 1000;
    std::uint64_t seed = 0;
    double z = 1.96; // 97.5% normal quantile; configurable confidence level
    bool retain_samples = false;
    int workers = 1;
};

struct BootstrapSummary {
    std::vector<double> tau_point; // log-odds from the original data
    std::vector<double> tau_mean;  // bootstrap mean per patient
    std::vector<double> sigma_hat; // standard error per patient
    std::vector<std::uint8_t> decisions; // I(tau_point + z*sigma > 0)
    int n_bootstrap = 0;
    std::optional<std::vector<double>> per_sample_tau; // n_bootstrap x N, row-major
};

// Runs BP on the original data and on n_bootstrap resamples. Replicate b uses
// resample seed (seed XOR b) and message-init seed mix64(seed XOR b), b from 1.
// Replicates run in parallel; the reduction order is fixed, so results do not
// depend on the worker count.
BootstrapSummary bootstrap_estimate(const TestOutcomes& y, const PoolingDesign& d,
                                    const AssumedParams& params,
                                    const BpConfig& bp_cfg,
                                    const BootstrapConfig& boot_cfg);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

// Linear-interpolation quantiles of each patient's bootstrap column.
// Requires at least 40 retained samples.
std::vector<Interval> percentile_interval(const std::vector<double>& per_sample_tau,
                                          int n_bootstrap, int n_patients,
                                          double lo = 0.025, double hi = 0.975);

} // namespace gt
