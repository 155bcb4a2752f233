#include "grouptest/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <utility>

#include "grouptest/errors.hpp"
#include "grouptest/parallel.hpp"
#include "grouptest/rng.hpp"

namespace gt {

ResampleResult resample(const TestOutcomes& y, const PoolingDesign& d,
                        std::uint64_t seed) {
    const int m = d.n_tests;
    if (m < 1) throw RejectedParameters("resample: need at least one test");
    if (y.outcomes.size() != static_cast<std::size_t>(m))
        throw DimensionMismatch("resample: outcome length differs from design");

    Rng rng(seed);
    // dedup key is the (outcome, membership-set) pair; identical membership
    // with a different outcome is kept
    std::set<std::pair<int, std::vector<int>>> seen;
    ResampleResult out;
    for (int k = 0; k < m; ++k) {
        const int nu = static_cast<int>(rng.below(static_cast<std::uint64_t>(m)));
        std::vector<int> key_members = d.patients_of_test[static_cast<std::size_t>(nu)];
        std::sort(key_members.begin(), key_members.end());
        if (!seen.insert({y.outcomes[static_cast<std::size_t>(nu)],
                          std::move(key_members)})
                 .second)
            continue;
        out.source_rows.push_back(nu);
    }

    out.design.n_patients = d.n_patients;
    out.design.n_tests = static_cast<int>(out.source_rows.size());
    out.design.group_size = d.group_size;
    out.design.overlap = d.overlap; // nominal; column degrees now vary
    out.design.patients_of_test.reserve(out.source_rows.size());
    out.y.outcomes.reserve(out.source_rows.size());
    const bool carry_truth = y.true_outcomes.has_value();
    if (carry_truth) out.y.true_outcomes.emplace();
    for (int nu : out.source_rows) {
        out.design.patients_of_test.push_back(
            d.patients_of_test[static_cast<std::size_t>(nu)]);
        out.y.outcomes.push_back(y.outcomes[static_cast<std::size_t>(nu)]);
        if (carry_truth)
            out.y.true_outcomes->push_back(
                (*y.true_outcomes)[static_cast<std::size_t>(nu)]);
    }
    out.design.tests_of_patient =
        tests_from_pools(d.n_patients, out.design.patients_of_test);
    return out;
}

BootstrapSummary bootstrap_estimate(const TestOutcomes& y, const PoolingDesign& d,
                                    const AssumedParams& params,
                                    const BpConfig& bp_cfg,
                                    const BootstrapConfig& boot_cfg) {
    const int nb = boot_cfg.n_bootstrap;
    if (nb < 2) throw RejectedParameters("bootstrap_estimate: n_bootstrap below 2");
    const int n = d.n_patients;

    const BpResult base = run_bp(y, d, params, bp_cfg);

    std::vector<double> taus(static_cast<std::size_t>(nb) * static_cast<std::size_t>(n));
    parallel_for(nb, boot_cfg.workers, [&](int bi) {
        const int b = bi + 1;
        const std::uint64_t sample_seed =
            boot_cfg.seed ^ static_cast<std::uint64_t>(b);
        try {
            const ResampleResult rs = resample(y, d, sample_seed);
            BpConfig cfg = bp_cfg;
            cfg.init = BpInit::uniform_random;
            if (bp_cfg.init == BpInit::constant_half) cfg.init = BpInit::constant_half;
            cfg.rng_seed = mix64(sample_seed);
            const BpResult r = run_bp(rs.y, rs.design, params, cfg);
            // patients absent from every resampled pool fall back to the
            // prior-only log-odds through the BP marginal itself
            std::copy(r.estimate.tau_hat.begin(), r.estimate.tau_hat.end(),
                      taus.begin() + static_cast<std::size_t>(bi) *
                                         static_cast<std::size_t>(n));
        } catch (const NumericalDegeneracy& e) {
            throw NumericalDegeneracy("bootstrap sample " + std::to_string(b) +
                                      ": " + e.what());
        }
    });

    BootstrapSummary summary;
    summary.n_bootstrap = nb;
    summary.tau_point = base.estimate.tau_hat;
    summary.tau_mean.resize(static_cast<std::size_t>(n));
    summary.sigma_hat.resize(static_cast<std::size_t>(n));
    summary.decisions.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double mean = 0.0;
        for (int b = 0; b < nb; ++b)
            mean += taus[static_cast<std::size_t>(b) * static_cast<std::size_t>(n) +
                         static_cast<std::size_t>(i)];
        mean /= nb;
        double ss = 0.0;
        for (int b = 0; b < nb; ++b) {
            const double dlt =
                taus[static_cast<std::size_t>(b) * static_cast<std::size_t>(n) +
                     static_cast<std::size_t>(i)] -
                mean;
            ss += dlt * dlt;
        }
        summary.tau_mean[static_cast<std::size_t>(i)] = mean;
        summary.sigma_hat[static_cast<std::size_t>(i)] = std::sqrt(ss / (nb - 1));
        summary.decisions[static_cast<std::size_t>(i)] =
            summary.tau_point[static_cast<std::size_t>(i)] +
                        boot_cfg.z * summary.sigma_hat[static_cast<std::size_t>(i)] >
                    0.0
                ? 1
                : 0;
    }
    if (boot_cfg.retain_samples) summary.per_sample_tau = std::move(taus);
    return summary;
}

std::vector<Interval> percentile_interval(const std::vector<double>& per_sample_tau,
                                          int n_bootstrap, int n_patients,
                                          double lo, double hi) {
    if (n_bootstrap < 40)
        throw InsufficientSamples(
            "percentile_interval: need at least 40 bootstrap samples");
    if (per_sample_tau.size() !=
        static_cast<std::size_t>(n_bootstrap) * static_cast<std::size_t>(n_patients))
        throw DimensionMismatch("percentile_interval: matrix shape mismatch");

    auto quantile = [&](std::vector<double>& sorted, double q) {
        const double h = (n_bootstrap - 1) * q;
        const std::size_t k = static_cast<std::size_t>(h);
        if (k + 1 >= sorted.size()) return sorted.back();
        return sorted[k] + (h - static_cast<double>(k)) * (sorted[k + 1] - sorted[k]);
    };

    std::vector<Interval> out(static_cast<std::size_t>(n_patients));
    std::vector<double> column(static_cast<std::size_t>(n_bootstrap));
    for (int i = 0; i < n_patients; ++i) {
        for (int b = 0; b < n_bootstrap; ++b)
            column[static_cast<std::size_t>(b)] =
                per_sample_tau[static_cast<std::size_t>(b) *
                                   static_cast<std::size_t>(n_patients) +
                               static_cast<std::size_t>(i)];
        std::sort(column.begin(), column.end());
        out[static_cast<std::size_t>(i)] = {quantile(column, lo), quantile(column, hi)};
    }
    return out;
}

} // namespace gt
