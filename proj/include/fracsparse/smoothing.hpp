#pragma once

#include <Eigen/Core>

#include "fracsparse/mesh.hpp"

namespace fracsparse {

/// Parameters of the smoothed p-quasinorm. The smoothing replaces
/// t -> t^{p/2} by a linear branch below t = eps^2, which keeps the
/// integrand differentiable while eps > 0.
struct SmoothingParams {
    double p = 0.5;
    double eps = 0.1;

    void validate() const;
};

/// Smoothed power function: linear in t below eps^2, t^{p/2} above.
/// eps = 0 gives the exact t^{p/2} (with 0^0 := 0 at p = 0 excluded by validation).
double psi(const SmoothingParams& params, double t);

/// Derivative (p/2) * min(eps^{p-2}, t^{(p-2)/2}); requires eps > 0.
double psi_prime(const SmoothingParams& params, double t);

/// Integral of psi(w(x)^2) over the domain by the vertex rule.
double smoothed_lp(const SmoothingParams& params, const Eigen::VectorXd& w,
                   const Eigen::VectorXd& vertex_weights);
double smoothed_lp(const SmoothingParams& params, const Eigen::VectorXd& w, const Mesh& mesh);

/// Dual vector g with g_k = weight_k * 2 w_k psi'(w_k^2); requires eps > 0.
Eigen::VectorXd smoothed_lp_gradient(const SmoothingParams& params, const Eigen::VectorXd& w,
                                     const Eigen::VectorXd& vertex_weights);
Eigen::VectorXd smoothed_lp_gradient(const SmoothingParams& params, const Eigen::VectorXd& w,
                                     const Mesh& mesh);

/// Integral of the tangent-majorizer surplus at w_ref:
///   psi'(w_ref^2)(w^2 - w_ref^2) - (psi(w^2) - psi(w_ref^2)),
/// nonnegative by concavity of psi.
double majorizer_gap(const SmoothingParams& params, const Eigen::VectorXd& w_ref,
                     const Eigen::VectorXd& w, const Eigen::VectorXd& vertex_weights);
double majorizer_gap(const SmoothingParams& params, const Eigen::VectorXd& w_ref,
                     const Eigen::VectorXd& w, const Mesh& mesh);

}  // namespace fracsparse
