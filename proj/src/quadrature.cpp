#include "fracsparse/quadrature.hpp"

#include <array>
#include <map>
#include <mutex>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace fracsparse {

namespace {

Rule1d compute_gauss_legendre(int n) {
    // Golub-Welsch: eigenvalues of the Jacobi matrix for Legendre weight on [-1,1]
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) {
        const double kk = static_cast<double>(k);
        const double b = kk / std::sqrt(4.0 * kk * kk - 1.0);
        J(k, k - 1) = b;
        J(k - 1, k) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    Rule1d rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        rule.nodes[i] = 0.5 * (es.eigenvalues()[i] + 1.0);
        const double v0 = es.eigenvectors()(0, i);
        rule.weights[i] = v0 * v0;  // mu0 = 2 on [-1,1]; halved by the map to [0,1]
    }
    return rule;
}

}  // namespace

const Rule1d& gauss_legendre(int n) {
    if (n < 1 || n > 64) throw std::invalid_argument("gauss_legendre: order out of range");
    static std::map<int, Rule1d> cache;
    static std::mutex mutex;
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, compute_gauss_legendre(n)).first;
    return it->second;
}

namespace {

TriangleRule make_rule(int degree) {
    TriangleRule r;
    auto push3 = [&r](double a, double w) {
        const double b = 0.5 * (1.0 - a);
        r.bary.push_back({a, b, b});
        r.bary.push_back({b, a, b});
        r.bary.push_back({b, b, a});
        r.weights.insert(r.weights.end(), 3, w);
    };
    auto push6 = [&r](double a, double b, double w) {
        const double c = 1.0 - a - b;
        r.bary.push_back({a, b, c});
        r.bary.push_back({a, c, b});
        r.bary.push_back({b, a, c});
        r.bary.push_back({b, c, a});
        r.bary.push_back({c, a, b});
        r.bary.push_back({c, b, a});
        r.weights.insert(r.weights.end(), 6, w);
    };
    switch (degree) {
        case 2:
            push3(2.0 / 3.0, 1.0 / 3.0);
            break;
        case 4:
            push3(0.108103018168070, 0.223381589678011);
            push3(0.816847572980459, 0.109951743655322);
            break;
        case 6:
            push3(0.873821971016996, 0.050844906370207);
            push3(0.501426509658179, 0.116786275726379);
            push6(0.636502499121399, 0.310352451033785, 0.082851075618374);
            break;
        default:
            throw std::invalid_argument("triangle_rule: supported degrees are 2, 4, 6");
    }
    return r;
}

}  // namespace

const TriangleRule& triangle_rule(int degree) {
    static const TriangleRule r2 = make_rule(2);
    static const TriangleRule r4 = make_rule(4);
    static const TriangleRule r6 = make_rule(6);
    switch (degree) {
        case 2: return r2;
        case 4: return r4;
        case 6: return r6;
        default: throw std::invalid_argument("triangle_rule: supported degrees are 2, 4, 6");
    }
}

}  // namespace fracsparse
