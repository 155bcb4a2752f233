#include "grouptest/metrics.hpp"

#include <cmath>
#include <limits>

#include "grouptest/errors.hpp"

namespace gt {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Rate make_rate(double num, double den) {
    if (den <= 0.0) return {kNaN, false};
    return {num / den, true};
}

} // namespace

std::pair<Rate, Rate> tp_fp(const PatientStates& truth,
                            std::span<const std::uint8_t> estimate) {
    if (truth.states.size() != estimate.size())
        throw DimensionMismatch("tp_fp: estimate length differs from truth");
    double infected = 0, healthy = 0, tp = 0, fp = 0;
    for (std::size_t i = 0; i < estimate.size(); ++i) {
        if (truth.states[i]) {
            infected += 1;
            if (estimate[i]) tp += 1;
        } else {
            healthy += 1;
            if (estimate[i]) fp += 1;
        }
    }
    return {make_rate(tp, infected), make_rate(fp, healthy)};
}

std::pair<Rate, Rate> magnetizations(const PatientStates& truth,
                                     std::span<const double> theta_hat) {
    if (truth.states.size() != theta_hat.size())
        throw DimensionMismatch("magnetizations: theta length differs from truth");
    double infected = 0, healthy = 0, plus = 0, minus = 0;
    for (std::size_t i = 0; i < theta_hat.size(); ++i) {
        if (truth.states[i]) {
            infected += 1;
            plus += theta_hat[i];
        } else {
            healthy += 1;
            minus += theta_hat[i];
        }
    }
    return {make_rate(plus, infected), make_rate(minus, healthy)};
}

double bias(double true_rho, std::span<const double> rho_estimates) {
    if (rho_estimates.empty())
        throw InsufficientSamples("bias: empty estimate list");
    double sum = 0.0;
    for (double r : rho_estimates) sum += std::abs(r - true_rho);
    return sum / static_cast<double>(rho_estimates.size());
}

} // namespace gt
