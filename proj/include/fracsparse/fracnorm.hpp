#pragma once

#include <memory>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/Cholesky>

#include "fracsparse/mesh.hpp"

namespace fracsparse {

/// Order and normalization of the fractional inner product.
struct FractionalKernel {
    double s = 0.1;
    int dim = 1;

    /// closed-form normalization s 2^{2s} Gamma(s + d/2) / (pi^{d/2} Gamma(1-s))
    double normalization() const;
    void validate() const;
};

/// Quadrature orders for the nonlocal assembly. Touching and identical
/// cell pairs go through singularity-removing transforms whose radial
/// part is integrated exactly; these orders control the remaining smooth
/// directions and the far field.
struct QuadConfig {
    int order_regular = 4;    // far-field rule degree / point count
    int order_singular = 6;   // points per smooth direction in transformed integrals
    int angular_points = 16;  // per smooth arc of the complement weight (2d)
    double near_field_factor = 1.0;  // separation (relative to diameter) below which
                                     // far-field pairs use the boosted order
};

class AssemblyError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Discrete inner products of one problem instance. `stiffness` carries the
/// full W inner product (L2 part + weighted double integral + complement
/// term) so that a single dense matrix represents (., .)_W. The space-time
/// mass is never materialized: it acts through its tensor factorization.
struct GramSet {
    Eigen::SparseMatrix<double> mass;  // spatial mass M
    Eigen::MatrixXd stiffness;         // dense W Gram matrix
    Eigen::MatrixXd time_mass;         // temporal mass
    Eigen::VectorXd lumped_space;      // row sums of mass
    Eigen::VectorXd lumped_time;       // row sums of time_mass
    Index n_space = 0;
    Index n_time = 0;

    std::shared_ptr<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>> mass_solver;
    std::shared_ptr<Eigen::LLT<Eigen::MatrixXd>> time_solver;

    Index st_size() const { return n_space * n_time; }

    /// space-time mass applied through the tensor structure
    Eigen::VectorXd st_apply_mass(const Eigen::VectorXd& v) const;
    Eigen::VectorXd st_solve_mass(const Eigen::VectorXd& r) const;
    double st_inner(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const;
    double st_norm2(const Eigen::VectorXd& u) const { return st_inner(u, u); }
    double st_norm(const Eigen::VectorXd& u) const;

    /// constant-in-time extension of a spatial vector
    Eigen::VectorXd extend_const(const Eigen::VectorXd& z) const;
    /// adjoint of the extension against the space-time mass: E^T M_U v
    Eigen::VectorXd time_collapse(const Eigen::VectorXd& v) const;

    double w_inner(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const;
    double w_norm2(const Eigen::VectorXd& w) const { return w_inner(w, w); }
    double w_norm(const Eigen::VectorXd& w) const;
    double l2_inner(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const;
};

Eigen::SparseMatrix<double> assemble_mass(const Mesh& mesh);
Eigen::MatrixXd assemble_time_mass(const TimeGrid& grid);

/// Full W Gram matrix for zero-extended P1 functions. Parallel over cell
/// pairs with per-worker buffers merged in a fixed order; output is
/// reproducible for a fixed thread count.
Eigen::MatrixXd assemble_fractional_stiffness(const Mesh& mesh, const FractionalKernel& kernel,
                                              const QuadConfig& quad);
/// Single-threaded reference implementation (identical pair ordering).
Eigen::MatrixXd assemble_fractional_stiffness_serial(const Mesh& mesh,
                                                     const FractionalKernel& kernel,
                                                     const QuadConfig& quad);

GramSet assemble_gram_set(const Mesh& mesh, const TimeGrid& grid, const FractionalKernel& kernel,
                          const QuadConfig& quad);

/// Integral over the complement of the domain of |x - y|^{-d-2s} dy.
/// Exposed for validation; the domain must be convex.
double complement_weight(const Mesh& mesh, const FractionalKernel& kernel, const QuadConfig& quad,
                         double x, double y);

/// integral over the domain of (integral over time of v) z, through the mass structure
double time_average_pairing(const GramSet& gram, const Eigen::VectorXd& v_spacetime,
                            const Eigen::VectorXd& z_spatial);

/// coordinate-list text export: "row col value" per nonzero line
void export_coo(const Eigen::MatrixXd& m, const std::string& path);
void export_coo(const Eigen::SparseMatrix<double>& m, const std::string& path);

}  // namespace fracsparse
