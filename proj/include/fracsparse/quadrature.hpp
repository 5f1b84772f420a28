#pragma once

#include <array>
#include <vector>

#include <Eigen/Core>

namespace fracsparse {

struct Rule1d {
    Eigen::VectorXd nodes;    // on [0,1]
    Eigen::VectorXd weights;  // sum to 1
};

/// Gauss-Legendre rule with n points on [0,1] (Golub-Welsch).
const Rule1d& gauss_legendre(int n);

/// Symmetric quadrature rule on a triangle, in barycentric coordinates.
/// Weights sum to 1; integrals are weight * |T| * f(point).
struct TriangleRule {
    std::vector<std::array<double, 3>> bary;
    std::vector<double> weights;
};

/// Rule exact for polynomials up to the given degree (2, 4 or 6).
const TriangleRule& triangle_rule(int degree);

}  // namespace fracsparse
