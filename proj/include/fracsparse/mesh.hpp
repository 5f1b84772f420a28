#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace fracsparse {

using Index = std::ptrdiff_t;

/// Simplicial mesh of a bounded domain: intervals in 1d, triangles in 2d.
/// Vertices on the boundary are kept as degrees of freedom; the nonlocal
/// form handles them through the complement term.
struct Mesh {
    int dim = 1;
    // vertex coordinates, one row per vertex (dim columns used)
    std::vector<std::array<double, 2>> vertices;
    // each cell lists dim+1 distinct vertex indices
    std::vector<std::array<Index, 3>> cells;
    std::vector<bool> boundary_flag;
    double h = 0.0;  // max cell diameter

    Index num_vertices() const { return static_cast<Index>(vertices.size()); }
    Index num_cells() const { return static_cast<Index>(cells.size()); }

    double cell_measure(Index c) const;
    double cell_diameter(Index c) const;
    /// total measure of the domain
    double domain_measure() const;
    /// integral of each vertex hat function (row sums of the mass matrix)
    Eigen::VectorXd vertex_weights() const;
    /// axis-aligned bounding box [lo, hi] per coordinate
    void bounding_box(std::array<double, 2>& lo, std::array<double, 2>& hi) const;

    /// throws std::runtime_error if a structural invariant is violated
    void validate() const;
};

/// Uniform grid on the time interval [0, T].
struct TimeGrid {
    double T = 1.0;
    Index M = 2;
    std::vector<double> nodes;

    double dt() const { return nodes[1] - nodes[0]; }
};

/// Index map between space-time coefficients and (space, time) pairs.
/// Layout is time-major: all spatial values of time node 0 first.
struct DofMap {
    Index n_space = 0;
    Index n_time = 0;

    Index size() const { return n_space * n_time; }
    Index flatten(Index i_space, Index j_time) const { return j_time * n_space + i_space; }
    Index space_of(Index k) const { return k % n_space; }
    Index time_of(Index k) const { return k / n_space; }
};

Mesh build_interval_mesh(double a, double b, Index n_vertices);
Mesh build_square_mesh(double lo, double hi, Index n_per_side);
TimeGrid build_time_grid(double T, Index M);

/// Plain-text mesh format:
///   line 1: "dim N n_cells"
///   N lines of vertex coordinates (dim numbers each)
///   n_cells lines of dim+1 vertex indices (0-based)
Mesh read_mesh(const std::string& path);
void write_mesh(const Mesh& mesh, const std::string& path);

}  // namespace fracsparse
