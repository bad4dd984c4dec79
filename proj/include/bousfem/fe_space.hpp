#pragma once

#include "bousfem/mesh.hpp"
#include "bousfem/quadrature.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <utility>
#include <vector>

namespace bousfem {

using VecX = Eigen::VectorXd;
using Mat2 = Eigen::Matrix2d;

namespace basis {

/// Silvester factor R_m(t) = prod_{r=0}^{m-1} (k*t - r)/(m - r) and its
/// t-derivative, for the degree-k Lagrange lattice basis on the triangle.
inline double silvester(int m, int k, double t) {
    double v = 1.0;
    for (int r = 0; r < m; ++r) v *= (k * t - r) / (m - r);
    return v;
}

inline double silvester_deriv(int m, int k, double t) {
    double sum = 0.0;
    for (int s = 0; s < m; ++s) {
        double p = 1.0;
        for (int r = 0; r < m; ++r) {
            if (r != s) p *= (k * t - r);
        }
        sum += p;
    }
    double denom = 1.0;
    for (int r = 0; r < m; ++r) denom *= (m - r);
    return k * sum / denom;
}

inline int num_local_dofs(int degree) { return (degree + 1) * (degree + 2) / 2; }

/// Local lattice nodes (i,j,l), i+j+l=k, in the canonical local order:
/// 3 vertices, then k-1 nodes per edge (01, 12, 20, each walked from its
/// first vertex), then the interior node (degree 3 only).
inline const std::vector<std::array<int, 3>>& lattice_nodes(int degree) {
    static const auto tables = [] {
        std::array<std::vector<std::array<int, 3>>, 4> t;
        for (int k = 1; k <= 3; ++k) {
            auto& nodes = t[k];
            nodes.push_back({k, 0, 0});
            nodes.push_back({0, k, 0});
            nodes.push_back({0, 0, k});
            for (int m = 1; m < k; ++m) nodes.push_back({k - m, m, 0});
            for (int m = 1; m < k; ++m) nodes.push_back({0, k - m, m});
            for (int m = 1; m < k; ++m) nodes.push_back({m, 0, k - m});
            if (k == 3) nodes.push_back({1, 1, 1});
        }
        return t;
    }();
    return tables[degree];
}

/// Value and (d/dlam1, d/dlam2) of every local basis function at one
/// barycentric point (lam0 = 1 - lam1 - lam2 eliminated).
inline void eval_all(int degree, const std::array<double, 3>& lam, std::vector<double>& vals,
                     std::vector<Eigen::Vector2d>& grads) {
    const auto& nodes = lattice_nodes(degree);
    const int n = static_cast<int>(nodes.size());
    vals.resize(n);
    grads.resize(n);
    for (int a = 0; a < n; ++a) {
        const auto [i, j, l] = nodes[a];
        const double Ri = silvester(i, degree, lam[0]);
        const double Rj = silvester(j, degree, lam[1]);
        const double Rl = silvester(l, degree, lam[2]);
        const double dRi = silvester_deriv(i, degree, lam[0]);
        const double dRj = silvester_deriv(j, degree, lam[1]);
        const double dRl = silvester_deriv(l, degree, lam[2]);
        vals[a] = Ri * Rj * Rl;
        grads[a][0] = -dRi * Rj * Rl + Ri * dRj * Rl;
        grads[a][1] = -dRi * Rj * Rl + Ri * Rj * dRl;
    }
}

} // namespace basis

/// Basis values/reference-gradients tabulated at the points of one rule.
struct BasisTable {
    int degree = 0;
    std::vector<std::vector<double>> values;            // [q][i]
    std::vector<std::vector<Eigen::Vector2d>> ref_grad; // [q][i], d/d(lam1,lam2)

    static BasisTable build(int degree, const QuadratureRule& rule) {
        BasisTable t;
        t.degree = degree;
        t.values.resize(rule.size());
        t.ref_grad.resize(rule.size());
        for (int q = 0; q < rule.size(); ++q) {
            basis::eval_all(degree, rule.points[q], t.values[q], t.ref_grad[q]);
        }
        return t;
    }
};

/// Affine geometry of one triangle.
struct ElemGeom {
    Vec2 p0;
    Mat2 jac;      // columns p1-p0, p2-p0
    Mat2 inv_jac_t;
    double area = 0.0;

    static ElemGeom from(const TriMesh& mesh, int t) {
        const auto& tri = mesh.triangles[t];
        ElemGeom g;
        g.p0 = mesh.vertices[tri[0]];
        g.jac.col(0) = mesh.vertices[tri[1]] - g.p0;
        g.jac.col(1) = mesh.vertices[tri[2]] - g.p0;
        const double det = g.jac(0, 0) * g.jac(1, 1) - g.jac(0, 1) * g.jac(1, 0);
        g.area = 0.5 * det;
        g.inv_jac_t = g.jac.inverse().transpose();
        return g;
    }

    Vec2 physical(const std::array<double, 3>& lam) const {
        return p0 + jac * Eigen::Vector2d(lam[1], lam[2]);
    }
};

/// Scalar continuous Lagrange space of degree 1..3 on a TriMesh.
/// Vector-valued fields stack components: global index c * ndofs + i.
class FeSpace {
public:
    FeSpace(const TriMesh& mesh, int degree) : mesh_(&mesh), degree_(degree) {
        if (degree < 1 || degree > 3) {
            throw AssemblyError("FeSpace: degree must be 1, 2, or 3");
        }
        build();
    }

    const TriMesh& mesh() const { return *mesh_; }
    int degree() const { return degree_; }
    int ndofs() const { return ndofs_; }
    int local_dofs() const { return basis::num_local_dofs(degree_); }

    const std::vector<int>& elem_dofs(int t) const { return elem_dofs_[t]; }
    const std::vector<Vec2>& dof_coords() const { return dof_coords_; }

    /// All dofs lying on the marked boundary (sorted, unique).
    const std::vector<int>& boundary_dofs() const { return boundary_all_; }
    const std::vector<int>& boundary_dofs(BoundaryMarker m) const {
        return boundary_by_marker_[static_cast<int>(m)];
    }

private:
    void build() {
        const TriMesh& m = *mesh_;
        const int k = degree_;
        const int nv = m.num_vertices();

        // Conformity check: positive areas, and every edge in 1 or 2 triangles.
        std::map<std::pair<int, int>, int> edge_id;
        std::map<std::pair<int, int>, int> edge_count;
        for (int t = 0; t < m.num_triangles(); ++t) {
            if (!(m.signed_area(t) > 0.0)) {
                throw MeshError("FeSpace: triangle " + std::to_string(t) +
                                " has non-positive area");
            }
            const auto& tri = m.triangles[t];
            for (int e = 0; e < 3; ++e) {
                auto key = std::minmax(tri[e], tri[(e + 1) % 3]);
                if (edge_id.emplace(key, static_cast<int>(edge_id.size())).second == false) {
                    // seen before
                }
                edge_count[key]++;
            }
        }
        for (const auto& [key, cnt] : edge_count) {
            if (cnt > 2) throw MeshError("FeSpace: non-conforming edge");
        }
        const int ne = static_cast<int>(edge_id.size());

        const int per_edge = k - 1;
        const int per_tri = (k - 1) * (k - 2) / 2;
        ndofs_ = nv + per_edge * ne + per_tri * m.num_triangles();

        dof_coords_.resize(ndofs_);
        for (int v = 0; v < nv; ++v) dof_coords_[v] = m.vertices[v];

        auto edge_slot = [&](int u, int v, int mth) {
            // node at fraction mth/k walking u -> v; global slots walk
            // min(u,v) -> max(u,v)
            auto key = std::minmax(u, v);
            const int e = edge_id.at(key);
            const int s = (u < v) ? (mth - 1) : (k - 1 - mth);
            return nv + e * per_edge + s;
        };

        elem_dofs_.assign(m.num_triangles(), {});
        for (int t = 0; t < m.num_triangles(); ++t) {
            const auto& tri = m.triangles[t];
            auto& dofs = elem_dofs_[t];
            dofs.reserve(local_dofs());
            dofs.push_back(tri[0]);
            dofs.push_back(tri[1]);
            dofs.push_back(tri[2]);
            const std::array<std::pair<int, int>, 3> edges = {
                std::pair{tri[0], tri[1]}, {tri[1], tri[2]}, {tri[2], tri[0]}};
            for (const auto& [u, v] : edges) {
                for (int mth = 1; mth < k; ++mth) dofs.push_back(edge_slot(u, v, mth));
            }
            if (per_tri == 1) {
                dofs.push_back(nv + per_edge * ne + t);
            }
        }

        // dof coordinates from the lattice (covers edge + interior dofs)
        for (int t = 0; t < m.num_triangles(); ++t) {
            const auto& nodes = basis::lattice_nodes(k);
            const auto& tri = m.triangles[t];
            for (std::size_t a = 0; a < nodes.size(); ++a) {
                const auto [i, j, l] = nodes[a];
                const Vec2 x = (static_cast<double>(i) * m.vertices[tri[0]] +
                                static_cast<double>(j) * m.vertices[tri[1]] +
                                static_cast<double>(l) * m.vertices[tri[2]]) /
                               static_cast<double>(k);
                dof_coords_[elem_dofs_[t][a]] = x;
            }
        }

        // boundary dofs per marker
        for (auto& v : boundary_by_marker_) v.clear();
        for (const auto& be : m.boundary_edges) {
            auto& list = boundary_by_marker_[static_cast<int>(be.marker)];
            list.push_back(be.v0);
            list.push_back(be.v1);
            auto key = std::minmax(be.v0, be.v1);
            auto it = edge_id.find(key);
            if (it == edge_id.end()) {
                throw MeshError("FeSpace: boundary edge not part of any triangle");
            }
            for (int s = 0; s < per_edge; ++s) list.push_back(nv + it->second * per_edge + s);
        }
        boundary_all_.clear();
        for (auto& v : boundary_by_marker_) {
            std::sort(v.begin(), v.end());
            v.erase(std::unique(v.begin(), v.end()), v.end());
            boundary_all_.insert(boundary_all_.end(), v.begin(), v.end());
        }
        std::sort(boundary_all_.begin(), boundary_all_.end());
        boundary_all_.erase(std::unique(boundary_all_.begin(), boundary_all_.end()),
                            boundary_all_.end());
    }

    const TriMesh* mesh_;
    int degree_;
    int ndofs_ = 0;
    std::vector<std::vector<int>> elem_dofs_;
    std::vector<Vec2> dof_coords_;
    std::array<std::vector<int>, 4> boundary_by_marker_;
    std::vector<int> boundary_all_;
};

/// Coefficient vector bound to a space; 1 (scalar) or 2 (velocity) components,
/// stacked component-major.
struct Field {
    const FeSpace* space = nullptr;
    int components = 1;
    VecX coeffs;

    Field() = default;
    Field(const FeSpace& s, int comps) : space(&s), components(comps) {
        coeffs = VecX::Zero(static_cast<Eigen::Index>(comps) * s.ndofs());
    }

    double& at(int component, int dof) { return coeffs[component * space->ndofs() + dof]; }
    double at(int component, int dof) const { return coeffs[component * space->ndofs() + dof]; }

    bool all_finite() const { return coeffs.allFinite(); }
};

/// Nodal interpolation of a scalar function.
inline Field interpolate(const FeSpace& space, const std::function<double(Vec2)>& f) {
    Field out(space, 1);
    const auto& xs = space.dof_coords();
    for (int i = 0; i < space.ndofs(); ++i) out.coeffs[i] = f(xs[i]);
    return out;
}

/// Nodal interpolation of a vector function.
inline Field interpolate_vec(const FeSpace& space, const std::function<Vec2(Vec2)>& f) {
    Field out(space, 2);
    const auto& xs = space.dof_coords();
    for (int i = 0; i < space.ndofs(); ++i) {
        const Vec2 v = f(xs[i]);
        out.coeffs[i] = v.x();
        out.coeffs[space.ndofs() + i] = v.y();
    }
    return out;
}

/// Evaluate a field inside a known triangle at a barycentric point.
inline void eval_in_triangle(const Field& f, int t, const std::array<double, 3>& lam,
                             double* out_components) {
    const FeSpace& sp = *f.space;
    std::vector<double> vals;
    std::vector<Eigen::Vector2d> grads;
    basis::eval_all(sp.degree(), lam, vals, grads);
    const auto& dofs = sp.elem_dofs(t);
    for (int c = 0; c < f.components; ++c) {
        double acc = 0.0;
        for (std::size_t a = 0; a < dofs.size(); ++a) {
            acc += f.coeffs[c * sp.ndofs() + dofs[a]] * vals[a];
        }
        out_components[c] = acc;
    }
}

/// Uniform-grid point locator over the mesh (queries in O(candidates)).
class PointLocator {
public:
    explicit PointLocator(const TriMesh& mesh) : mesh_(&mesh) {
        lo_ = mesh.vertices.front();
        hi_ = lo_;
        for (const auto& v : mesh.vertices) {
            lo_ = lo_.cwiseMin(v);
            hi_ = hi_.cwiseMax(v);
        }
        const int n = std::max(1, static_cast<int>(std::sqrt(mesh.num_triangles() / 2.0)));
        nx_ = ny_ = n;
        cells_.resize(static_cast<std::size_t>(nx_) * ny_);
        for (int t = 0; t < mesh.num_triangles(); ++t) {
            Vec2 tlo = mesh.vertices[mesh.triangles[t][0]];
            Vec2 thi = tlo;
            for (int k = 1; k < 3; ++k) {
                tlo = tlo.cwiseMin(mesh.vertices[mesh.triangles[t][k]]);
                thi = thi.cwiseMax(mesh.vertices[mesh.triangles[t][k]]);
            }
            const auto [i0, j0] = cell_of(tlo);
            const auto [i1, j1] = cell_of(thi);
            for (int j = j0; j <= j1; ++j)
                for (int i = i0; i <= i1; ++i) cells_[j * nx_ + i].push_back(t);
        }
    }

    /// Containing triangle and barycentric coordinates; throws if outside.
    std::pair<int, std::array<double, 3>> locate(const Vec2& x, double tol = 1e-10) const {
        const auto [ci, cj] = cell_of(x);
        const auto& cands = cells_[cj * nx_ + ci];
        int best = -1;
        std::array<double, 3> best_lam{};
        double best_min = -std::numeric_limits<double>::infinity();
        for (int t : cands) {
            const ElemGeom g = ElemGeom::from(*mesh_, t);
            const Eigen::Vector2d ref = g.jac.inverse() * (x - g.p0);
            const std::array<double, 3> lam = {1.0 - ref[0] - ref[1], ref[0], ref[1]};
            const double mn = std::min({lam[0], lam[1], lam[2]});
            if (mn > best_min) {
                best_min = mn;
                best = t;
                best_lam = lam;
            }
        }
        if (best < 0 || best_min < -tol) {
            throw AssemblyError("PointLocator: point outside mesh");
        }
        return {best, best_lam};
    }

private:
    std::pair<int, int> cell_of(const Vec2& x) const {
        const double fx = (x.x() - lo_.x()) / std::max(hi_.x() - lo_.x(), 1e-300);
        const double fy = (x.y() - lo_.y()) / std::max(hi_.y() - lo_.y(), 1e-300);
        const int i = std::clamp(static_cast<int>(fx * nx_), 0, nx_ - 1);
        const int j = std::clamp(static_cast<int>(fy * ny_), 0, ny_ - 1);
        return {i, j};
    }

    const TriMesh* mesh_;
    Vec2 lo_, hi_;
    int nx_ = 1, ny_ = 1;
    std::vector<std::vector<int>> cells_;
};

/// Evaluate a field at arbitrary physical points (throws if a point lies
/// outside the mesh). Returns values laid out point-major.
inline std::vector<double> evaluate_field(const Field& f, const std::vector<Vec2>& points) {
    PointLocator loc(f.space->mesh());
    std::vector<double> out(points.size() * static_cast<std::size_t>(f.components));
    std::vector<double> comp(f.components);
    for (std::size_t p = 0; p < points.size(); ++p) {
        const auto [t, lam] = loc.locate(points[p]);
        eval_in_triangle(f, t, lam, comp.data());
        for (int c = 0; c < f.components; ++c) out[p * f.components + c] = comp[c];
    }
    return out;
}

} // namespace bousfem
