#pragma once

#include <vector>

namespace gt {

// Gauss-Legendre rule mapped to [0,1]; all nodes interior, weights sum to 1.
struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
    int size() const { return static_cast<int>(nodes.size()); }
};

QuadratureRule gauss_legendre(int n);

} // namespace gt
