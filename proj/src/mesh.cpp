#include "fracsparse/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace fracsparse {

double Mesh::cell_measure(Index c) const {
    const auto& cell = cells[static_cast<size_t>(c)];
    if (dim == 1) {
        return std::abs(vertices[cell[1]][0] - vertices[cell[0]][0]);
    }
    const auto& p0 = vertices[cell[0]];
    const auto& p1 = vertices[cell[1]];
    const auto& p2 = vertices[cell[2]];
    const double det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
    return 0.5 * std::abs(det);
}

double Mesh::cell_diameter(Index c) const {
    const auto& cell = cells[static_cast<size_t>(c)];
    if (dim == 1) return cell_measure(c);
    double d = 0.0;
    for (int i = 0; i < 3; ++i) {
        for (int j = i + 1; j < 3; ++j) {
            const double dx = vertices[cell[i]][0] - vertices[cell[j]][0];
            const double dy = vertices[cell[i]][1] - vertices[cell[j]][1];
            d = std::max(d, std::hypot(dx, dy));
        }
    }
    return d;
}

double Mesh::domain_measure() const {
    double total = 0.0;
    for (Index c = 0; c < num_cells(); ++c) total += cell_measure(c);
    return total;
}

Eigen::VectorXd Mesh::vertex_weights() const {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(num_vertices());
    const double share = 1.0 / (dim + 1);
    for (Index c = 0; c < num_cells(); ++c) {
        const double m = cell_measure(c) * share;
        for (int k = 0; k <= dim; ++k) w[cells[static_cast<size_t>(c)][k]] += m;
    }
    return w;
}

void Mesh::bounding_box(std::array<double, 2>& lo, std::array<double, 2>& hi) const {
    lo = {1e300, 1e300};
    hi = {-1e300, -1e300};
    for (const auto& v : vertices) {
        for (int d = 0; d < dim; ++d) {
            lo[d] = std::min(lo[d], v[d]);
            hi[d] = std::max(hi[d], v[d]);
        }
    }
}

void Mesh::validate() const {
    if (dim != 1 && dim != 2) throw std::runtime_error("mesh: dim must be 1 or 2");
    if (boundary_flag.size() != vertices.size())
        throw std::runtime_error("mesh: boundary flags inconsistent with vertex count");
    for (Index c = 0; c < num_cells(); ++c) {
        const auto& cell = cells[static_cast<size_t>(c)];
        for (int k = 0; k <= dim; ++k) {
            if (cell[k] < 0 || cell[k] >= num_vertices())
                throw std::runtime_error("mesh: cell vertex index out of range");
            for (int l = k + 1; l <= dim; ++l)
                if (cell[k] == cell[l]) throw std::runtime_error("mesh: degenerate cell (repeated vertex)");
        }
        if (cell_measure(c) <= 0.0) throw std::runtime_error("mesh: nonpositive cell measure");
    }
}

namespace {

std::vector<bool> detect_boundary(int dim, const std::vector<std::array<Index, 3>>& cells, Index n) {
    std::vector<bool> flag(static_cast<size_t>(n), false);
    if (dim == 1) {
        // a vertex is boundary iff it belongs to exactly one interval
        std::vector<int> count(static_cast<size_t>(n), 0);
        for (const auto& c : cells) {
            ++count[static_cast<size_t>(c[0])];
            ++count[static_cast<size_t>(c[1])];
        }
        for (Index i = 0; i < n; ++i) flag[static_cast<size_t>(i)] = count[static_cast<size_t>(i)] < 2;
        return flag;
    }
    // facet = edge; boundary edges belong to exactly one triangle
    std::map<std::pair<Index, Index>, int> edge_count;
    for (const auto& c : cells) {
        for (int k = 0; k < 3; ++k) {
            Index a = c[k], b = c[(k + 1) % 3];
            if (a > b) std::swap(a, b);
            ++edge_count[{a, b}];
        }
    }
    for (const auto& [edge, count] : edge_count) {
        if (count == 1) {
            flag[static_cast<size_t>(edge.first)] = true;
            flag[static_cast<size_t>(edge.second)] = true;
        }
    }
    return flag;
}

void finalize(Mesh& mesh) {
    mesh.boundary_flag = detect_boundary(mesh.dim, mesh.cells, mesh.num_vertices());
    double h = 0.0;
    for (Index c = 0; c < mesh.num_cells(); ++c) h = std::max(h, mesh.cell_diameter(c));
    mesh.h = h;
    mesh.validate();
}

}  // namespace

Mesh build_interval_mesh(double a, double b, Index n_vertices) {
    if (!(a < b)) throw std::invalid_argument("build_interval_mesh: requires a < b");
    if (n_vertices < 2) throw std::invalid_argument("build_interval_mesh: requires N >= 2");
    Mesh mesh;
    mesh.dim = 1;
    mesh.vertices.resize(static_cast<size_t>(n_vertices));
    const double h = (b - a) / static_cast<double>(n_vertices - 1);
    for (Index i = 0; i < n_vertices; ++i) {
        const double x = (i == n_vertices - 1) ? b : a + static_cast<double>(i) * h;
        mesh.vertices[static_cast<size_t>(i)] = {x, 0.0};
    }
    for (Index c = 0; c + 1 < n_vertices; ++c) mesh.cells.push_back({c, c + 1, -1});
    finalize(mesh);
    return mesh;
}

Mesh build_square_mesh(double lo, double hi, Index n_per_side) {
    if (!(lo < hi)) throw std::invalid_argument("build_square_mesh: requires lo < hi");
    if (n_per_side < 2) throw std::invalid_argument("build_square_mesh: requires n_per_side >= 2");
    Mesh mesh;
    mesh.dim = 2;
    const Index n = n_per_side;
    const double h = (hi - lo) / static_cast<double>(n - 1);
    mesh.vertices.resize(static_cast<size_t>(n * n));
    for (Index j = 0; j < n; ++j) {
        for (Index i = 0; i < n; ++i) {
            const double x = (i == n - 1) ? hi : lo + static_cast<double>(i) * h;
            const double y = (j == n - 1) ? hi : lo + static_cast<double>(j) * h;
            mesh.vertices[static_cast<size_t>(j * n + i)] = {x, y};
        }
    }
    for (Index j = 0; j + 1 < n; ++j) {
        for (Index i = 0; i + 1 < n; ++i) {
            const Index v00 = j * n + i;
            const Index v10 = j * n + i + 1;
            const Index v01 = (j + 1) * n + i;
            const Index v11 = (j + 1) * n + i + 1;
            mesh.cells.push_back({v00, v10, v11});
            mesh.cells.push_back({v00, v11, v01});
        }
    }
    finalize(mesh);
    return mesh;
}

TimeGrid build_time_grid(double T, Index M) {
    if (!(T > 0.0)) throw std::invalid_argument("build_time_grid: requires T > 0");
    if (M < 2) throw std::invalid_argument("build_time_grid: requires M >= 2");
    TimeGrid grid;
    grid.T = T;
    grid.M = M;
    grid.nodes.resize(static_cast<size_t>(M));
    const double dt = T / static_cast<double>(M - 1);
    for (Index j = 0; j < M; ++j)
        grid.nodes[static_cast<size_t>(j)] = (j == M - 1) ? T : static_cast<double>(j) * dt;
    return grid;
}

Mesh read_mesh(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_mesh: cannot open " + path);
    Index n = 0, n_cells = 0;
    int dim = 0;
    in >> dim >> n >> n_cells;
    if (!in || (dim != 1 && dim != 2) || n < 2 || n_cells < 1)
        throw std::runtime_error("read_mesh: malformed header in " + path);
    Mesh mesh;
    mesh.dim = dim;
    mesh.vertices.resize(static_cast<size_t>(n));
    for (Index i = 0; i < n; ++i) {
        auto& v = mesh.vertices[static_cast<size_t>(i)];
        v = {0.0, 0.0};
        for (int d = 0; d < dim; ++d) in >> v[d];
    }
    mesh.cells.resize(static_cast<size_t>(n_cells));
    for (Index c = 0; c < n_cells; ++c) {
        auto& cell = mesh.cells[static_cast<size_t>(c)];
        cell = {-1, -1, -1};
        for (int k = 0; k <= dim; ++k) in >> cell[k];
    }
    if (!in) throw std::runtime_error("read_mesh: truncated file " + path);
    finalize(mesh);
    return mesh;
}

void write_mesh(const Mesh& mesh, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_mesh: cannot open " + path);
    out.precision(17);
    out << mesh.dim << ' ' << mesh.num_vertices() << ' ' << mesh.num_cells() << '\n';
    for (const auto& v : mesh.vertices) {
        out << v[0];
        if (mesh.dim == 2) out << ' ' << v[1];
        out << '\n';
    }
    for (const auto& c : mesh.cells) {
        out << c[0] << ' ' << c[1];
        if (mesh.dim == 2) out << ' ' << c[2];
        out << '\n';
    }
}

}  // namespace fracsparse
