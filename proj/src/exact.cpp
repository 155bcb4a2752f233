#include "grouptest/exact.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <string>

#include "grouptest/errors.hpp"

namespace gt {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log-sum-exp with a running max shift
struct LogAccumulator {
    double max_log = kNegInf;
    double scaled_sum = 0.0;

    void add(double lw) {
        if (lw == kNegInf) return;
        if (lw <= max_log) {
            scaled_sum += std::exp(lw - max_log);
        } else {
            scaled_sum = scaled_sum * std::exp(max_log - lw) + 1.0;
            max_log = lw;
        }
    }
    double log_value() const {
        return scaled_sum == 0.0 ? kNegInf : max_log + std::log(scaled_sum);
    }
};

double safe_log(double v) { return v > 0.0 ? std::log(v) : kNegInf; }

} // namespace

MarginalEstimate exact_marginals(const TestOutcomes& y, const PoolingDesign& d,
                                 const AssumedParams& params, int max_patients) {
    const int n = d.n_patients;
    const int m = d.n_tests;
    if (n > max_patients)
        throw CostGuard("exact_marginals: N=" + std::to_string(n) +
                        " exceeds enumeration cap " + std::to_string(max_patients));
    if (n > 30)
        throw CostGuard("exact_marginals: cap above 30 not supported");
    if (y.outcomes.size() != static_cast<std::size_t>(m))
        throw DimensionMismatch("exact_marginals: outcome length differs from design");
    const double rho = params.rho_hat;
    if (!(rho >= 0.0 && rho <= 1.0))
        throw RejectedParameters("exact_marginals: rho_hat outside [0,1]");

    auto [lik_pos, lik_neg] = test_weights(y, params.noise_hat);
    std::vector<double> log_pos(static_cast<std::size_t>(m));
    std::vector<double> log_neg(static_cast<std::size_t>(m));
    for (int mu = 0; mu < m; ++mu) {
        log_pos[static_cast<std::size_t>(mu)] = safe_log(lik_pos[static_cast<std::size_t>(mu)]);
        log_neg[static_cast<std::size_t>(mu)] = safe_log(lik_neg[static_cast<std::size_t>(mu)]);
    }
    const double log_rho = safe_log(rho);
    const double log_1mrho = safe_log(1.0 - rho);

    // state for the current configuration
    std::vector<int> infected_in_pool(static_cast<std::size_t>(m), 0);
    int zero_factors = 0;  // pools whose active likelihood factor is exactly 0
    double sum_log = 0.0;  // sum of finite log factors
    auto resync = [&] {
        zero_factors = 0;
        sum_log = 0.0;
        for (int mu = 0; mu < m; ++mu) {
            const double lf = infected_in_pool[static_cast<std::size_t>(mu)] > 0
                                  ? log_pos[static_cast<std::size_t>(mu)]
                                  : log_neg[static_cast<std::size_t>(mu)];
            if (lf == kNegInf)
                ++zero_factors;
            else
                sum_log += lf;
        }
    };
    resync();

    LogAccumulator evidence;
    std::vector<LogAccumulator> numerator(static_cast<std::size_t>(n));
    std::uint32_t mask = 0;
    int ones = 0;

    auto add_current = [&] {
        if (zero_factors > 0) return;
        double log_prior;
        if (rho == 0.0) {
            if (ones > 0) return;
            log_prior = 0.0;
        } else if (rho == 1.0) {
            if (ones < n) return;
            log_prior = 0.0;
        } else {
            log_prior = ones * log_rho + (n - ones) * log_1mrho;
        }
        const double lw = sum_log + log_prior;
        evidence.add(lw);
        for (std::uint32_t rest = mask; rest; rest &= rest - 1)
            numerator[static_cast<std::size_t>(std::countr_zero(rest))].add(lw);
    };

    add_current(); // all-healthy configuration
    const std::uint64_t total = 1ULL << n;
    for (std::uint64_t step = 1; step < total; ++step) {
        const int i = std::countr_zero(step); // Gray-code flip
        const std::uint32_t bit = 1u << i;
        mask ^= bit;
        const bool now_infected = (mask & bit) != 0;
        ones += now_infected ? 1 : -1;
        for (int mu : d.tests_of_patient[static_cast<std::size_t>(i)]) {
            auto& cnt = infected_in_pool[static_cast<std::size_t>(mu)];
            const bool was_pos = cnt > 0;
            cnt += now_infected ? 1 : -1;
            const bool is_pos = cnt > 0;
            if (was_pos == is_pos) continue;
            const double removed = was_pos ? log_pos[static_cast<std::size_t>(mu)]
                                           : log_neg[static_cast<std::size_t>(mu)];
            const double added = is_pos ? log_pos[static_cast<std::size_t>(mu)]
                                        : log_neg[static_cast<std::size_t>(mu)];
            if (removed == kNegInf)
                --zero_factors;
            else
                sum_log -= removed;
            if (added == kNegInf)
                ++zero_factors;
            else
                sum_log += added;
        }
        if ((step & 0xFFFFULL) == 0) resync(); // shed incremental FP drift
        add_current();
    }

    const double log_evidence = evidence.log_value();
    if (log_evidence == kNegInf)
        throw NumericalDegeneracy("exact_marginals: zero evidence");

    MarginalEstimate est;
    est.theta_hat.resize(static_cast<std::size_t>(n));
    est.tau_hat.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double theta =
            std::exp(numerator[static_cast<std::size_t>(i)].log_value() - log_evidence);
        if (theta > 1.0) theta = 1.0;
        est.theta_hat[static_cast<std::size_t>(i)] = theta;
        est.tau_hat[static_cast<std::size_t>(i)] = log_odds(theta);
    }
    est.converged = true;
    est.iterations_used = 0;
    return est;
}

} // namespace gt
