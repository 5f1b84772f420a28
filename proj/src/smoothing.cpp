#include "fracsparse/smoothing.hpp"

#include <cmath>
#include <stdexcept>

namespace fracsparse {

void SmoothingParams::validate() const {
    // p = 1 is admitted for the sweep over exponents; the smoothing lemmas hold for p in (0,2)
    if (!(p > 0.0 && p < 2.0)) throw std::invalid_argument("SmoothingParams: requires 0 < p < 2");
    if (!(eps >= 0.0)) throw std::invalid_argument("SmoothingParams: requires eps >= 0");
}

double psi(const SmoothingParams& params, double t) {
    if (t < 0.0) throw std::domain_error("psi: requires t >= 0");
    const double p = params.p, eps = params.eps;
    if (eps > 0.0 && t < eps * eps) {
        return 0.5 * p * t / std::pow(eps, 2.0 - p) + (1.0 - 0.5 * p) * std::pow(eps, p);
    }
    return std::pow(t, 0.5 * p);
}

double psi_prime(const SmoothingParams& params, double t) {
    if (t < 0.0) throw std::domain_error("psi_prime: requires t >= 0");
    if (!(params.eps > 0.0))
        throw std::invalid_argument("psi_prime: unsupported at eps = 0 (derivative unbounded)");
    const double p = params.p, eps = params.eps;
    const double cap = std::pow(eps, p - 2.0);
    if (t <= 0.0) return 0.5 * p * cap;
    return 0.5 * p * std::min(cap, std::pow(t, 0.5 * (p - 2.0)));
}

double smoothed_lp(const SmoothingParams& params, const Eigen::VectorXd& w,
                   const Eigen::VectorXd& vertex_weights) {
    if (w.size() != vertex_weights.size()) throw std::invalid_argument("smoothed_lp: size mismatch");
    double total = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i)
        total += vertex_weights[i] * psi(params, w[i] * w[i]);
    return total;
}

double smoothed_lp(const SmoothingParams& params, const Eigen::VectorXd& w, const Mesh& mesh) {
    return smoothed_lp(params, w, mesh.vertex_weights());
}

Eigen::VectorXd smoothed_lp_gradient(const SmoothingParams& params, const Eigen::VectorXd& w,
                                     const Eigen::VectorXd& vertex_weights) {
    if (w.size() != vertex_weights.size())
        throw std::invalid_argument("smoothed_lp_gradient: size mismatch");
    Eigen::VectorXd g(w.size());
    for (Eigen::Index i = 0; i < w.size(); ++i)
        g[i] = vertex_weights[i] * 2.0 * w[i] * psi_prime(params, w[i] * w[i]);
    return g;
}

Eigen::VectorXd smoothed_lp_gradient(const SmoothingParams& params, const Eigen::VectorXd& w,
                                     const Mesh& mesh) {
    return smoothed_lp_gradient(params, w, mesh.vertex_weights());
}

double majorizer_gap(const SmoothingParams& params, const Eigen::VectorXd& w_ref,
                     const Eigen::VectorXd& w, const Eigen::VectorXd& vertex_weights) {
    if (w.size() != w_ref.size() || w.size() != vertex_weights.size())
        throw std::invalid_argument("majorizer_gap: size mismatch");
    double total = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        const double t_ref = w_ref[i] * w_ref[i];
        const double t = w[i] * w[i];
        const double tangent = psi_prime(params, t_ref) * (t - t_ref);
        total += vertex_weights[i] * (tangent - (psi(params, t) - psi(params, t_ref)));
    }
    return total;
}

double majorizer_gap(const SmoothingParams& params, const Eigen::VectorXd& w_ref,
                     const Eigen::VectorXd& w, const Mesh& mesh) {
    return majorizer_gap(params, w_ref, w, mesh.vertex_weights());
}

}  // namespace fracsparse
