#include "grouptest/quadrature.hpp"

#include <cmath>

#include "grouptest/errors.hpp"

namespace gt {

// Nodes by Newton iteration on the Legendre recurrence
// (j+1) P_{j+1} = (2j+1) x P_j - j P_{j-1}.
QuadratureRule gauss_legendre(int n) {
    if (n < 2) throw RejectedParameters("gauss_legendre: need at least 2 nodes");
    QuadratureRule rule;
    rule.nodes.resize(static_cast<std::size_t>(n));
    rule.weights.resize(static_cast<std::size_t>(n));
    const int half = (n + 1) / 2;
    for (int k = 0; k < half; ++k) {
        double x = std::cos(M_PI * (k + 0.75) / (n + 0.5));
        double deriv = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0; // P_j(x), P_{j-1}(x)
            for (int j = 0; j < n; ++j) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) * x * p1 - j * p2) / (j + 1);
            }
            deriv = n * (x * p0 - p1) / (x * x - 1.0);
            double dx = p0 / deriv;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        // map [-1,1] -> [0,1]; Jacobian halves the weight
        const double w = 1.0 / ((1.0 - x * x) * deriv * deriv);
        rule.nodes[static_cast<std::size_t>(k)] = 0.5 * (1.0 - x);
        rule.nodes[static_cast<std::size_t>(n - 1 - k)] = 0.5 * (1.0 + x);
        rule.weights[static_cast<std::size_t>(k)] = w;
        rule.weights[static_cast<std::size_t>(n - 1 - k)] = w;
    }
    return rule;
}

} // namespace gt
