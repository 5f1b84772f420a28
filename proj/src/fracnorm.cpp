#include "fracsparse/fracnorm.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <vector>

#include <omp.h>

#include "fracsparse/quadrature.hpp"

namespace fracsparse {

double FractionalKernel::normalization() const {
    const double d = static_cast<double>(dim);
    return s * std::pow(2.0, 2.0 * s) * std::tgamma(s + 0.5 * d) /
           (std::pow(std::numbers::pi, 0.5 * d) * std::tgamma(1.0 - s));
}

void FractionalKernel::validate() const {
    if (!(s > 0.0 && s < 1.0)) throw std::invalid_argument("FractionalKernel: requires 0 < s < 1");
    if (dim != 1 && dim != 2) throw std::invalid_argument("FractionalKernel: dim must be 1 or 2");
}

Eigen::SparseMatrix<double> assemble_mass(const Mesh& mesh) {
    mesh.validate();
    const Index n = mesh.num_vertices();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<size_t>(mesh.num_cells()) * 9);
    for (Index c = 0; c < mesh.num_cells(); ++c) {
        const auto& cell = mesh.cells[static_cast<size_t>(c)];
        const double m = mesh.cell_measure(c);
        if (mesh.dim == 1) {
            const double d = m / 3.0, o = m / 6.0;
            trips.emplace_back(cell[0], cell[0], d);
            trips.emplace_back(cell[1], cell[1], d);
            trips.emplace_back(cell[0], cell[1], o);
            trips.emplace_back(cell[1], cell[0], o);
        } else {
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j)
                    trips.emplace_back(cell[i], cell[j], m / 12.0 * (i == j ? 2.0 : 1.0));
        }
    }
    Eigen::SparseMatrix<double> M(n, n);
    M.setFromTriplets(trips.begin(), trips.end());
    return M;
}

Eigen::MatrixXd assemble_time_mass(const TimeGrid& grid) {
    const Index m = grid.M;
    const double dt = grid.dt();
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(m, m);
    for (Index j = 0; j + 1 < m; ++j) {
        M(j, j) += dt / 3.0;
        M(j + 1, j + 1) += dt / 3.0;
        M(j, j + 1) += dt / 6.0;
        M(j + 1, j) += dt / 6.0;
    }
    return M;
}

namespace {

struct CellGeom {
    std::array<Index, 3> v;
    std::array<std::array<double, 2>, 3> p;
    double measure;
    double diameter;
};

std::vector<CellGeom> cell_geometry(const Mesh& mesh) {
    std::vector<CellGeom> cells(static_cast<size_t>(mesh.num_cells()));
    for (Index c = 0; c < mesh.num_cells(); ++c) {
        auto& g = cells[static_cast<size_t>(c)];
        g.v = mesh.cells[static_cast<size_t>(c)];
        for (int k = 0; k <= mesh.dim; ++k) g.p[k] = mesh.vertices[static_cast<size_t>(g.v[k])];
        g.measure = mesh.cell_measure(c);
        g.diameter = mesh.cell_diameter(c);
    }
    return cells;
}

/// small dense contribution over up to 6 global basis functions
struct LocalBlock {
    int n = 0;
    std::array<Index, 6> idx{};
    std::array<double, 36> val{};

    void reset(int count) {
        n = count;
        val.fill(0.0);
    }
    void rank1(double weight, const double* d) {
        for (int i = 0; i < n; ++i) {
            const double wdi = weight * d[i];
            for (int j = 0; j < n; ++j) val[static_cast<size_t>(i * n + j)] += wdi * d[j];
        }
    }
    void scatter(Eigen::MatrixXd& buf, double factor) const {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                buf(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]) +=
                    factor * val[static_cast<size_t>(i * n + j)];
    }
};

// ------------------------------------------------------------------ 1d pairs

void pair_identical_1d(const CellGeom& c, double s, LocalBlock& out) {
    out.reset(2);
    out.idx = {c.v[0], c.v[1], -1, -1, -1, -1};
    const double h = c.measure;
    // slopes are +-1/h; the double integral of |x-y|^{1-2s} has a closed form
    const double base = 2.0 * std::pow(h, 1.0 - 2.0 * s) / ((2.0 - 2.0 * s) * (3.0 - 2.0 * s));
    out.val = {base, -base, -base, base};
}

void pair_adjacent_1d(const CellGeom& a, const CellGeom& b, Index shared, double s, int q,
                      LocalBlock& out) {
    const Index pa = (a.v[0] == shared) ? a.v[1] : a.v[0];
    const Index pb = (b.v[0] == shared) ? b.v[1] : b.v[0];
    out.reset(3);
    out.idx = {pa, shared, pb, -1, -1, -1};
    const double h1 = a.measure, h2 = b.measure;
    const Rule1d& gl = gauss_legendre(q);
    const double pref = h1 * h2 / (3.0 - 2.0 * s);
    for (int k = 0; k < q; ++k) {
        const double w = gl.nodes[k];
        // radial direction integrated exactly; w parametrizes the Duffy ray
        const double k1 = std::pow(h1 + w * h2, -1.0 - 2.0 * s);
        const double k2 = std::pow(w * h1 + h2, -1.0 - 2.0 * s);
        const double d1[3] = {1.0, w - 1.0, -w};
        const double d2[3] = {w, 1.0 - w, -1.0};
        out.rank1(pref * gl.weights[k] * k1, d1);
        out.rank1(pref * gl.weights[k] * k2, d2);
    }
}

void pair_separated_1d(const CellGeom& a, const CellGeom& b, double s, int q, LocalBlock& out) {
    out.reset(4);
    out.idx = {a.v[0], a.v[1], b.v[0], b.v[1], -1, -1};
    const Rule1d& gl = gauss_legendre(q);
    const double xa = a.p[0][0], ha = a.p[1][0] - a.p[0][0];
    const double xb = b.p[0][0], hb = b.p[1][0] - b.p[0][0];
    for (int i = 0; i < q; ++i) {
        const double tx = gl.nodes[i];
        const double x = xa + tx * ha;
        for (int j = 0; j < q; ++j) {
            const double ty = gl.nodes[j];
            const double y = xb + ty * hb;
            const double kern = std::pow(std::abs(x - y), -1.0 - 2.0 * s);
            const double d[4] = {1.0 - tx, tx, -(1.0 - ty), -ty};
            out.rank1(gl.weights[i] * gl.weights[j] * std::abs(ha) * std::abs(hb) * kern, d);
        }
    }
}

// ------------------------------------------------------------------ 2d pairs

void pair_identical_2d(const CellGeom& c, double s, int q, LocalBlock& out) {
    out.reset(3);
    out.idx = {c.v[0], c.v[1], c.v[2], -1, -1, -1};
    const double b00 = c.p[1][0] - c.p[0][0], b10 = c.p[1][1] - c.p[0][1];
    const double b01 = c.p[2][0] - c.p[0][0], b11 = c.p[2][1] - c.p[0][1];
    const double jac = std::abs(b00 * b11 - b01 * b10);  // = 2|T|
    const double pref = jac * jac / ((2.0 - 2.0 * s) * (3.0 - 2.0 * s) * (4.0 - 2.0 * s));
    const double pi = std::numbers::pi;
    // six angular sectors of the covariogram of the reference triangle
    const double bounds[7] = {0.0,      0.5 * pi,  0.75 * pi, pi,
                              1.5 * pi, 1.75 * pi, 2.0 * pi};
    const Rule1d& gl = gauss_legendre(q);
    for (int sec = 0; sec < 6; ++sec) {
        const double t0 = bounds[sec], t1 = bounds[sec + 1];
        for (int k = 0; k < q; ++k) {
            const double theta = t0 + gl.nodes[k] * (t1 - t0);
            const double ce = std::cos(theta), se = std::sin(theta);
            double mu;
            switch (sec) {
                case 0: mu = ce + se; break;
                case 1: mu = se; break;
                case 2: mu = -ce; break;
                case 3: mu = -(ce + se); break;
                case 4: mu = -se; break;
                default: mu = ce; break;
            }
            const double ex = b00 * ce + b01 * se;
            const double ey = b10 * ce + b11 * se;
            const double kern = std::pow(ex * ex + ey * ey, -(1.0 + s));
            const double wq = gl.weights[k] * (t1 - t0) * kern * std::pow(mu, 2.0 * s - 2.0) * pref;
            const double d[3] = {-(ce + se), ce, se};  // reference P1 gradients dotted with e
            out.rank1(wq, d);
        }
    }
}

void pair_edge_2d(const CellGeom& a, const CellGeom& b, const std::array<Index, 2>& shared,
                  double s, int degree, LocalBlock& out) {
    Index off_a = -1, off_b = -1;
    for (int k = 0; k < 3; ++k) {
        if (a.v[k] != shared[0] && a.v[k] != shared[1]) off_a = a.v[k];
        if (b.v[k] != shared[0] && b.v[k] != shared[1]) off_b = b.v[k];
    }
    out.reset(4);
    out.idx = {shared[0], shared[1], off_a, off_b, -1, -1};

    auto coord = [](const CellGeom& g, Index global) -> std::array<double, 2> {
        for (int k = 0; k < 3; ++k)
            if (g.v[k] == global) return g.p[k];
        throw AssemblyError("pair_edge_2d: vertex lookup failed");
    };
    const auto P0 = coord(a, shared[0]);
    const auto P1 = coord(a, shared[1]);
    const auto Pa = coord(a, off_a);
    const auto Pb = coord(b, off_b);
    const double ex = P1[0] - P0[0], ey = P1[1] - P0[1];
    const double ax = Pa[0] - P0[0], ay = Pa[1] - P0[1];
    const double bx = Pb[0] - P0[0], by = Pb[1] - P0[1];

    const double pref = 4.0 * a.measure * b.measure / ((3.0 - 2.0 * s) * (4.0 - 2.0 * s));

    // pieces of the homogeneous cross-section, split along the kinks of sigma
    struct Piece {
        std::array<std::array<double, 2>, 3> tri;
        double area;
        bool delta_positive;
    };
    const std::array<Piece, 6> pieces = {{
        {{{{0.5, 0.0}, {1.0, 0.0}, {0.5, 0.5}}}, 0.125, true},
        {{{{0.0, 0.0}, {0.5, 0.0}, {0.5, 0.5}}}, 0.125, true},
        {{{{0.0, 0.0}, {0.5, 0.5}, {0.0, 1.0}}}, 0.25, true},
        {{{{0.0, 0.5}, {0.5, 0.5}, {0.0, 1.0}}}, 0.125, false},
        {{{{0.0, 0.0}, {1.0, 0.0}, {0.5, 0.5}}}, 0.25, false},
        {{{{0.0, 0.0}, {0.5, 0.5}, {0.0, 0.5}}}, 0.125, false},
    }};
    const TriangleRule& rule = triangle_rule(degree);
    for (const auto& piece : pieces) {
        for (size_t k = 0; k < rule.bary.size(); ++k) {
            const auto& lam = rule.bary[k];
            const double u = lam[0] * piece.tri[0][0] + lam[1] * piece.tri[1][0] + lam[2] * piece.tri[2][0];
            const double v = lam[0] * piece.tri[0][1] + lam[1] * piece.tri[1][1] + lam[2] * piece.tri[2][1];
            const double delta = piece.delta_positive ? (1.0 - u - v) : -(1.0 - u - v);
            const double sigma = piece.delta_positive
                                     ? std::max(u, 1.0 - u)
                                     : std::max(u, u + 2.0 * v - 1.0) + (1.0 - u - v);
            const double dx = -delta * ex + u * ax - v * bx;
            const double dy = -delta * ey + u * ay - v * by;
            const double kern = std::pow(dx * dx + dy * dy, -(1.0 + s));
            const double wq =
                rule.weights[k] * piece.area * kern * std::pow(sigma, 2.0 * s - 3.0) * pref;
            const double d[4] = {delta - u + v, -delta, u, -v};
            out.rank1(wq, d);
        }
    }
}

void pair_vertex_2d(const CellGeom& a, const CellGeom& b, Index shared, double s, int q,
                    LocalBlock& out) {
    std::array<Index, 2> oa{}, ob{};
    std::array<std::array<double, 2>, 2> pa{}, pb{};
    std::array<double, 2> P{};
    int ka = 0, kb = 0;
    for (int k = 0; k < 3; ++k) {
        if (a.v[k] == shared) P = a.p[k];
        else { oa[ka] = a.v[k]; pa[ka] = a.p[k]; ++ka; }
        if (b.v[k] != shared) { ob[kb] = b.v[k]; pb[kb] = b.p[k]; ++kb; }
    }
    out.reset(5);
    out.idx = {shared, oa[0], oa[1], ob[0], ob[1], -1};

    const double a1x = pa[0][0] - P[0], a1y = pa[0][1] - P[1];
    const double a2x = pa[1][0] - P[0], a2y = pa[1][1] - P[1];
    const double b1x = pb[0][0] - P[0], b1y = pb[0][1] - P[1];
    const double b2x = pb[1][0] - P[0], b2y = pb[1][1] - P[1];
    const double pref = 4.0 * a.measure * b.measure / (4.0 - 2.0 * s);
    const Rule1d& gl = gauss_legendre(q);
    for (int is = 0; is < q; ++is) {
        const double sig = gl.nodes[is];
        const double xix = a1x + sig * (a2x - a1x), xiy = a1y + sig * (a2y - a1y);
        for (int it = 0; it < q; ++it) {
            const double tau = gl.nodes[it];
            const double zex = b1x + tau * (b2x - b1x), zey = b1y + tau * (b2y - b1y);
            const double wst = gl.weights[is] * gl.weights[it] * pref;
            for (int iw = 0; iw < q; ++iw) {
                const double w = gl.nodes[iw];
                const double d1x = xix - w * zex, d1y = xiy - w * zey;
                const double d2x = w * xix - zex, d2y = w * xiy - zey;
                const double k1 = std::pow(d1x * d1x + d1y * d1y, -(1.0 + s));
                const double k2 = std::pow(d2x * d2x + d2y * d2y, -(1.0 + s));
                const double wq = wst * gl.weights[iw] * w;
                const double da[5] = {w - 1.0, 1.0 - sig, sig, -w * (1.0 - tau), -w * tau};
                const double db[5] = {1.0 - w, w * (1.0 - sig), w * sig, -(1.0 - tau), -tau};
                out.rank1(wq * k1, da);
                out.rank1(wq * k2, db);
            }
        }
    }
}

void pair_separated_2d(const CellGeom& a, const CellGeom& b, double s, int degree,
                       LocalBlock& out) {
    out.reset(6);
    out.idx = {a.v[0], a.v[1], a.v[2], b.v[0], b.v[1], b.v[2]};
    const TriangleRule& rule = triangle_rule(degree);
    const size_t nq = rule.bary.size();
    for (size_t i = 0; i < nq; ++i) {
        const auto& la = rule.bary[i];
        const double x0 = la[0] * a.p[0][0] + la[1] * a.p[1][0] + la[2] * a.p[2][0];
        const double x1 = la[0] * a.p[0][1] + la[1] * a.p[1][1] + la[2] * a.p[2][1];
        const double wa = rule.weights[i] * a.measure;
        for (size_t j = 0; j < nq; ++j) {
            const auto& lb = rule.bary[j];
            const double y0 = lb[0] * b.p[0][0] + lb[1] * b.p[1][0] + lb[2] * b.p[2][0];
            const double y1 = lb[0] * b.p[0][1] + lb[1] * b.p[1][1] + lb[2] * b.p[2][1];
            const double dx = x0 - y0, dy = x1 - y1;
            const double kern = std::pow(dx * dx + dy * dy, -(1.0 + s));
            const double d[6] = {la[0], la[1], la[2], -lb[0], -lb[1], -lb[2]};
            out.rank1(wa * rule.weights[j] * b.measure * kern, d);
        }
    }
}

int count_shared(const CellGeom& a, const CellGeom& b, int dim, std::array<Index, 2>& shared) {
    int n = 0;
    for (int i = 0; i <= dim; ++i)
        for (int j = 0; j <= dim; ++j)
            if (a.v[i] == b.v[j]) {
                if (n < 2) shared[static_cast<size_t>(n)] = a.v[i];
                ++n;
            }
    return n;
}

double min_vertex_dist2(const CellGeom& a, const CellGeom& b, int dim) {
    double best = 1e300;
    for (int i = 0; i <= dim; ++i)
        for (int j = 0; j <= dim; ++j) {
            const double dx = a.p[i][0] - b.p[j][0];
            const double dy = a.p[i][1] - b.p[j][1];
            best = std::min(best, dx * dx + dy * dy);
        }
    return best;
}

// ------------------------------------------------------- complement weight

struct DomainGeometry {
    int dim = 1;
    std::array<double, 2> lo{}, hi{};
    bool is_rectangle = false;
    // boundary segments (2d, generic domains)
    std::vector<std::array<std::array<double, 2>, 2>> segments;
    std::vector<std::array<double, 2>> corner_points;
};

DomainGeometry domain_geometry(const Mesh& mesh) {
    DomainGeometry g;
    g.dim = mesh.dim;
    mesh.bounding_box(g.lo, g.hi);
    if (mesh.dim == 1) return g;
    std::map<std::pair<Index, Index>, int> edge_count;
    for (const auto& c : mesh.cells) {
        for (int k = 0; k < 3; ++k) {
            Index a = c[k], b = c[(k + 1) % 3];
            if (a > b) std::swap(a, b);
            ++edge_count[{a, b}];
        }
    }
    std::set<Index> boundary_vertices;
    for (const auto& [edge, count] : edge_count) {
        if (count != 1) continue;
        g.segments.push_back({mesh.vertices[static_cast<size_t>(edge.first)],
                              mesh.vertices[static_cast<size_t>(edge.second)]});
        boundary_vertices.insert(edge.first);
        boundary_vertices.insert(edge.second);
    }
    const double area = mesh.domain_measure();
    const double box_area = (g.hi[0] - g.lo[0]) * (g.hi[1] - g.lo[1]);
    bool on_box = true;
    const double tol = 1e-12 * std::max(1.0, g.hi[0] - g.lo[0]);
    for (Index v : boundary_vertices) {
        const auto& p = mesh.vertices[static_cast<size_t>(v)];
        const bool edge_x = std::abs(p[0] - g.lo[0]) < tol || std::abs(p[0] - g.hi[0]) < tol;
        const bool edge_y = std::abs(p[1] - g.lo[1]) < tol || std::abs(p[1] - g.hi[1]) < tol;
        if (!edge_x && !edge_y) on_box = false;
    }
    g.is_rectangle = on_box && std::abs(area - box_area) < 1e-9 * box_area;
    if (g.is_rectangle) {
        g.corner_points = {{g.lo[0], g.lo[1]}, {g.hi[0], g.lo[1]}, {g.hi[0], g.hi[1]}, {g.lo[0], g.hi[1]}};
    } else {
        for (Index v : boundary_vertices) g.corner_points.push_back(mesh.vertices[static_cast<size_t>(v)]);
    }
    return g;
}

double exit_distance(const DomainGeometry& g, double x, double y, double cs, double sn) {
    if (g.is_rectangle) {
        double t = 1e300;
        if (cs > 1e-15) t = std::min(t, (g.hi[0] - x) / cs);
        if (cs < -1e-15) t = std::min(t, (g.lo[0] - x) / cs);
        if (sn > 1e-15) t = std::min(t, (g.hi[1] - y) / sn);
        if (sn < -1e-15) t = std::min(t, (g.lo[1] - y) / sn);
        return t;
    }
    // star-shaped domains: the last crossing of the boundary along the ray
    double t_exit = 0.0;
    for (const auto& seg : g.segments) {
        const double qx = seg[0][0], qy = seg[0][1];
        const double rx = seg[1][0] - qx, ry = seg[1][1] - qy;
        const double det = cs * (-ry) - sn * (-rx);
        if (std::abs(det) < 1e-15) continue;
        const double bxv = qx - x, byv = qy - y;
        const double t = (bxv * (-ry) + byv * rx) / det;
        const double u = (cs * byv - sn * bxv) / det;
        if (t > 1e-14 && u >= -1e-12 && u <= 1.0 + 1e-12) t_exit = std::max(t_exit, t);
    }
    return t_exit;
}

/// rho(x) = (1/2s) * integral over angles of exit_distance^{-2s}
double rho_weight(const DomainGeometry& g, double s, int points_per_arc, double x, double y) {
    std::vector<double> angles;
    angles.reserve(g.corner_points.size());
    for (const auto& c : g.corner_points) angles.push_back(std::atan2(c[1] - y, c[0] - x));
    std::sort(angles.begin(), angles.end());
    angles.erase(std::unique(angles.begin(), angles.end()), angles.end());
    const Rule1d& gl = gauss_legendre(points_per_arc);
    double acc = 0.0;
    const double two_pi = 2.0 * std::numbers::pi;
    const size_t na = angles.size();
    for (size_t a = 0; a < na; ++a) {
        const double t0 = angles[a];
        const double t1 = (a + 1 < na) ? angles[a + 1] : angles[0] + two_pi;
        const double len = t1 - t0;
        if (len <= 0.0) continue;
        for (int k = 0; k < points_per_arc; ++k) {
            const double theta = t0 + gl.nodes[k] * len;
            const double t = exit_distance(g, x, y, std::cos(theta), std::sin(theta));
            acc += gl.weights[k] * len * std::pow(t, -2.0 * s);
        }
    }
    return acc / (2.0 * s);
}

/// exact moments of t^{-2s} against the quadratic basis products, 1d
void add_complement_1d(const Mesh& mesh, double s, double c_norm, Eigen::MatrixXd& A) {
    std::array<double, 2> lo{}, hi{};
    mesh.bounding_box(lo, hi);
    const double xa = lo[0], xb = hi[0];
    auto moments = [s](double tl, double tr, const std::array<double, 2>& ci,
                       const std::array<double, 2>& cj) {
        // product of two linear polynomials in t, integrated against t^{-2s}
        const double q0 = ci[0] * cj[0];
        const double q1 = ci[0] * cj[1] + ci[1] * cj[0];
        const double q2 = ci[1] * cj[1];
        double total = 0.0;
        const double qs[3] = {q0, q1, q2};
        for (int m = 0; m < 3; ++m) {
            const double e = static_cast<double>(m) + 1.0 - 2.0 * s;
            total += qs[m] * (std::pow(tr, e) - std::pow(tl, e)) / e;
        }
        return total;
    };
    for (Index c = 0; c < mesh.num_cells(); ++c) {
        const auto& cell = mesh.cells[static_cast<size_t>(c)];
        double xl = mesh.vertices[static_cast<size_t>(cell[0])][0];
        double xr = mesh.vertices[static_cast<size_t>(cell[1])][0];
        Index vl = cell[0], vr = cell[1];
        if (xl > xr) { std::swap(xl, xr); std::swap(vl, vr); }
        const double h = xr - xl;
        // left boundary, t = x - xa
        const double tl = xl - xa, tr = xr - xa;
        const std::array<double, 2> left_l = {tr / h, -1.0 / h};   // basis at xl
        const std::array<double, 2> left_r = {-tl / h, 1.0 / h};   // basis at xr
        // right boundary, t = xb - x
        const double sl = xb - xr, sr = xb - xl;
        const std::array<double, 2> right_l = {-sl / h, 1.0 / h};
        const std::array<double, 2> right_r = {sr / h, -1.0 / h};
        const double fac = c_norm / (2.0 * s);
        const Index g[2] = {vl, vr};
        const std::array<double, 2> Lc[2] = {left_l, left_r};
        const std::array<double, 2> Rc[2] = {right_l, right_r};
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                A(g[i], g[j]) += fac * (moments(tl, tr, Lc[i], Lc[j]) + moments(sl, sr, Rc[i], Rc[j]));
    }
}

}  // namespace

double complement_weight(const Mesh& mesh, const FractionalKernel& kernel, const QuadConfig& quad,
                         double x, double y) {
    if (mesh.dim == 1) {
        std::array<double, 2> lo{}, hi{};
        mesh.bounding_box(lo, hi);
        return (std::pow(x - lo[0], -2.0 * kernel.s) + std::pow(hi[0] - x, -2.0 * kernel.s)) /
               (2.0 * kernel.s);
    }
    const DomainGeometry g = domain_geometry(mesh);
    return rho_weight(g, kernel.s, quad.angular_points, x, y);
}

namespace {

Eigen::MatrixXd assemble_impl(const Mesh& mesh, const FractionalKernel& kernel,
                              const QuadConfig& quad, bool parallel) {
    kernel.validate();
    mesh.validate();
    if (kernel.dim != mesh.dim)
        throw std::invalid_argument("assemble_fractional_stiffness: kernel/mesh dimension mismatch");
    if (kernel.s >= 0.5)
        std::cerr << "fracsparse: warning: s = " << kernel.s
                  << " >= 1/2 is outside the supported regime; boundary degrees of freedom "
                     "make the zero-extension form divergent\n";

    const double s = kernel.s;
    const double c_norm = kernel.normalization();
    const Index n = mesh.num_vertices();
    const Index n_cells = mesh.num_cells();
    const std::vector<CellGeom> cells = cell_geometry(mesh);
    const DomainGeometry geom = domain_geometry(mesh);

    const int q_far = std::max(2, quad.order_regular);
    const int q_sing = std::max(3, quad.order_singular);
    const int deg_far = (quad.order_regular >= 6) ? 6 : (quad.order_regular >= 4 ? 4 : 2);
    const int deg_near = 6;
    const int deg_sing = (q_sing >= 6) ? 6 : 4;

    const int n_threads = parallel ? omp_get_max_threads() : 1;
    std::vector<Eigen::MatrixXd> buffers(static_cast<size_t>(n_threads));

#pragma omp parallel num_threads(n_threads) if (parallel)
    {
        const int tid = omp_get_thread_num();
        Eigen::MatrixXd& buf = buffers[static_cast<size_t>(tid)];
        buf = Eigen::MatrixXd::Zero(n, n);
        LocalBlock local;

#pragma omp for schedule(static)
        for (Index ta = 0; ta < n_cells; ++ta) {
            const CellGeom& a = cells[static_cast<size_t>(ta)];

            // complement term of the zero extension, cell by cell
            if (mesh.dim == 2) {
                const bool touches_boundary =
                    mesh.boundary_flag[static_cast<size_t>(a.v[0])] ||
                    mesh.boundary_flag[static_cast<size_t>(a.v[1])] ||
                    mesh.boundary_flag[static_cast<size_t>(a.v[2])];
                const TriangleRule& rule = triangle_rule(touches_boundary ? deg_near : deg_far);
                local.reset(3);
                local.idx = {a.v[0], a.v[1], a.v[2], -1, -1, -1};
                for (size_t k = 0; k < rule.bary.size(); ++k) {
                    const auto& lam = rule.bary[k];
                    const double x = lam[0] * a.p[0][0] + lam[1] * a.p[1][0] + lam[2] * a.p[2][0];
                    const double y = lam[0] * a.p[0][1] + lam[1] * a.p[1][1] + lam[2] * a.p[2][1];
                    const double rho = rho_weight(geom, s, quad.angular_points, x, y);
                    const double d[3] = {lam[0], lam[1], lam[2]};
                    local.rank1(rule.weights[k] * a.measure * rho, d);
                }
                local.scatter(buf, c_norm);
            }

            for (Index tb = ta; tb < n_cells; ++tb) {
                const CellGeom& b = cells[static_cast<size_t>(tb)];
                const double pair_factor = (ta == tb) ? 0.5 * c_norm : c_norm;
                if (ta == tb) {
                    if (mesh.dim == 1) pair_identical_1d(a, s, local);
                    else pair_identical_2d(a, s, q_sing + 4, local);
                    local.scatter(buf, pair_factor);
                    continue;
                }
                std::array<Index, 2> shared{};
                const int ns = count_shared(a, b, mesh.dim, shared);
                if (mesh.dim == 1) {
                    if (ns == 1) pair_adjacent_1d(a, b, shared[0], s, q_sing + 4, local);
                    else {
                        const double dist2 = min_vertex_dist2(a, b, 1);
                        const double diam = std::max(a.diameter, b.diameter) * quad.near_field_factor;
                        pair_separated_1d(a, b, s, dist2 < diam * diam ? q_sing : q_far, local);
                    }
                } else {
                    if (ns == 2) pair_edge_2d(a, b, shared, s, deg_sing, local);
                    else if (ns == 1) pair_vertex_2d(a, b, shared[0], s, q_sing, local);
                    else {
                        const double dist2 = min_vertex_dist2(a, b, 2);
                        const double diam = std::max(a.diameter, b.diameter) * quad.near_field_factor;
                        pair_separated_2d(a, b, s, dist2 < diam * diam ? deg_near : deg_far, local);
                    }
                }
                local.scatter(buf, pair_factor);
            }
        }
    }

    Eigen::MatrixXd A = std::move(buffers[0]);
    for (int t = 1; t < n_threads; ++t) A += buffers[static_cast<size_t>(t)];

    if (mesh.dim == 1) add_complement_1d(mesh, s, c_norm, A);

    // L2 part of the W inner product
    A += Eigen::MatrixXd(assemble_mass(mesh));

    if (!A.allFinite())
        throw AssemblyError("assemble_fractional_stiffness: non-finite entry (quadrature failure "
                            "or unsupported configuration)");
    return A;
}

}  // namespace

Eigen::MatrixXd assemble_fractional_stiffness(const Mesh& mesh, const FractionalKernel& kernel,
                                              const QuadConfig& quad) {
    return assemble_impl(mesh, kernel, quad, true);
}

Eigen::MatrixXd assemble_fractional_stiffness_serial(const Mesh& mesh,
                                                     const FractionalKernel& kernel,
                                                     const QuadConfig& quad) {
    return assemble_impl(mesh, kernel, quad, false);
}

GramSet assemble_gram_set(const Mesh& mesh, const TimeGrid& grid, const FractionalKernel& kernel,
                          const QuadConfig& quad) {
    GramSet g;
    g.mass = assemble_mass(mesh);
    g.stiffness = assemble_fractional_stiffness(mesh, kernel, quad);
    g.time_mass = assemble_time_mass(grid);
    g.lumped_space = mesh.vertex_weights();
    g.lumped_time = g.time_mass.rowwise().sum();
    g.n_space = mesh.num_vertices();
    g.n_time = grid.M;
    g.mass_solver = std::make_shared<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>>();
    g.mass_solver->compute(g.mass);
    if (g.mass_solver->info() != Eigen::Success)
        throw AssemblyError("assemble_gram_set: mass factorization failed");
    g.time_solver = std::make_shared<Eigen::LLT<Eigen::MatrixXd>>(g.time_mass);
    if (g.time_solver->info() != Eigen::Success)
        throw AssemblyError("assemble_gram_set: time mass factorization failed");
    return g;
}

Eigen::VectorXd GramSet::st_apply_mass(const Eigen::VectorXd& v) const {
    if (v.size() != st_size()) throw std::invalid_argument("st_apply_mass: dimension mismatch");
    Eigen::Map<const Eigen::MatrixXd> V(v.data(), n_space, n_time);
    Eigen::MatrixXd R = mass * V * time_mass;
    return Eigen::Map<Eigen::VectorXd>(R.data(), st_size());
}

Eigen::VectorXd GramSet::st_solve_mass(const Eigen::VectorXd& r) const {
    if (r.size() != st_size()) throw std::invalid_argument("st_solve_mass: dimension mismatch");
    Eigen::Map<const Eigen::MatrixXd> R(r.data(), n_space, n_time);
    Eigen::MatrixXd X = mass_solver->solve(R);
    Eigen::MatrixXd Y = time_solver->solve(X.transpose()).transpose();
    return Eigen::Map<Eigen::VectorXd>(Y.data(), st_size());
}

double GramSet::st_inner(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const {
    if (u.size() != st_size() || v.size() != st_size())
        throw std::invalid_argument("st_inner: dimension mismatch");
    Eigen::Map<const Eigen::MatrixXd> U(u.data(), n_space, n_time);
    Eigen::Map<const Eigen::MatrixXd> V(v.data(), n_space, n_time);
    return ((mass * U).cwiseProduct(V * time_mass)).sum();
}

double GramSet::st_norm(const Eigen::VectorXd& u) const { return std::sqrt(std::max(0.0, st_norm2(u))); }

Eigen::VectorXd GramSet::extend_const(const Eigen::VectorXd& z) const {
    if (z.size() != n_space) throw std::invalid_argument("extend_const: dimension mismatch");
    Eigen::VectorXd v(st_size());
    for (Index j = 0; j < n_time; ++j) v.segment(j * n_space, n_space) = z;
    return v;
}

Eigen::VectorXd GramSet::time_collapse(const Eigen::VectorXd& v) const {
    if (v.size() != st_size()) throw std::invalid_argument("time_collapse: dimension mismatch");
    Eigen::Map<const Eigen::MatrixXd> V(v.data(), n_space, n_time);
    return mass * (V * lumped_time);
}

double GramSet::w_inner(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
    if (a.size() != n_space || b.size() != n_space)
        throw std::invalid_argument("w_inner: dimension mismatch");
    return a.dot(stiffness * b);
}

double GramSet::w_norm(const Eigen::VectorXd& w) const { return std::sqrt(std::max(0.0, w_norm2(w))); }

double GramSet::l2_inner(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
    if (a.size() != n_space || b.size() != n_space)
        throw std::invalid_argument("l2_inner: dimension mismatch");
    return a.dot(mass * b);
}

double time_average_pairing(const GramSet& gram, const Eigen::VectorXd& v_spacetime,
                            const Eigen::VectorXd& z_spatial) {
    if (z_spatial.size() != gram.n_space)
        throw std::invalid_argument("time_average_pairing: dimension mismatch");
    return gram.time_collapse(v_spacetime).dot(z_spatial);
}

void export_coo(const Eigen::MatrixXd& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("export_coo: cannot open " + path);
    out.precision(17);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            if (m(i, j) != 0.0) out << i << ' ' << j << ' ' << m(i, j) << '\n';
}

void export_coo(const Eigen::SparseMatrix<double>& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("export_coo: cannot open " + path);
    out.precision(17);
    for (int k = 0; k < m.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it)
            out << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
}

}  // namespace fracsparse
