#pragma once

#include "bousfem/fe_space.hpp"
#include "bousfem/sparse.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

namespace bousfem {

/// Default quadrature order for assembling on a degree-k space (2k+1 keeps
/// every assembled polynomial product exact except transcendental loads).
inline int default_quad_order(int degree) { return std::min(2 * degree + 1, 8); }

/// Order for the skew convection form with a degree-kw wind.
inline int convection_quad_order(int degree, int wind_degree) {
    return std::min(std::max(2 * degree + 1, wind_degree + 2 * degree - 1), 8);
}

/// Per-triangle, per-quadrature-point scalar samples aligned with a rule.
struct QuadSamples {
    int quad_order = 0;
    int points_per_tri = 0;
    std::vector<double> values; // [tri * points_per_tri + q]

    double at(int tri, int q) const { return values[tri * points_per_tri + q]; }
};

namespace detail {

struct TableCache {
    const QuadratureRule* rule;
    BasisTable table;
};

inline const BasisTable& basis_table(int degree, const QuadratureRule& rule) {
    // keyed by degree and rule size+order; rules are static singletons
    static std::vector<std::tuple<int, const QuadratureRule*, BasisTable>> cache;
    for (const auto& [d, r, t] : cache) {
        if (d == degree && r == &rule) return t;
    }
    cache.emplace_back(degree, &rule, BasisTable::build(degree, rule));
    return std::get<2>(cache.back());
}

} // namespace detail

/// M_ij = int phi_i phi_j over the mesh (symmetric positive definite).
inline std::vector<Triplet> mass_triplets(const FeSpace& space, int quad_order = 0) {
    const int order = quad_order > 0 ? quad_order : default_quad_order(space.degree());
    const auto& rule = triangle_rule(order);
    const auto& tab = detail::basis_table(space.degree(), rule);
    const int nl = space.local_dofs();
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(space.mesh().num_triangles()) * nl * nl);
    std::vector<double> local(nl * nl);
    for (int t = 0; t < space.mesh().num_triangles(); ++t) {
        const ElemGeom g = ElemGeom::from(space.mesh(), t);
        std::fill(local.begin(), local.end(), 0.0);
        for (int q = 0; q < rule.size(); ++q) {
            const double w = rule.weights[q] * g.area;
            const auto& N = tab.values[q];
            for (int i = 0; i < nl; ++i) {
                for (int j = 0; j < nl; ++j) local[i * nl + j] += w * N[i] * N[j];
            }
        }
        const auto& dofs = space.elem_dofs(t);
        for (int i = 0; i < nl; ++i)
            for (int j = 0; j < nl; ++j) trips.emplace_back(dofs[i], dofs[j], local[i * nl + j]);
    }
    return trips;
}

inline SparseMat assemble_mass(const FeSpace& space, int quad_order = 0) {
    return SparseMat::from_triplets(space.ndofs(), space.ndofs(),
                                    mass_triplets(space, quad_order));
}

/// K_ij = int c(x) grad(phi_i) . grad(phi_j); c == 1 when no samples given.
/// Negative coefficient samples are rejected (the indicator must be >= 0).
inline std::vector<Triplet> stiffness_triplets(const FeSpace& space,
                                               const QuadSamples* coeff = nullptr,
                                               int quad_order = 0) {
    const int order = quad_order > 0 ? quad_order
                      : coeff        ? coeff->quad_order
                                     : default_quad_order(space.degree());
    const auto& rule = triangle_rule(order);
    if (coeff && coeff->points_per_tri != rule.size()) {
        throw AssemblyError("assemble_stiffness: coefficient samples do not match quadrature");
    }
    const auto& tab = detail::basis_table(space.degree(), rule);
    const int nl = space.local_dofs();
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(space.mesh().num_triangles()) * nl * nl);
    std::vector<Vec2> gph(nl);
    std::vector<double> local(nl * nl);
    for (int t = 0; t < space.mesh().num_triangles(); ++t) {
        const ElemGeom g = ElemGeom::from(space.mesh(), t);
        std::fill(local.begin(), local.end(), 0.0);
        for (int q = 0; q < rule.size(); ++q) {
            double c = 1.0;
            if (coeff) {
                c = coeff->at(t, q);
                if (c < 0.0 || !std::isfinite(c)) {
                    throw AssemblyError("assemble_stiffness: negative coefficient sample");
                }
            }
            const double w = rule.weights[q] * g.area * c;
            for (int i = 0; i < nl; ++i) gph[i] = g.inv_jac_t * tab.ref_grad[q][i];
            for (int i = 0; i < nl; ++i) {
                for (int j = 0; j < nl; ++j) local[i * nl + j] += w * gph[i].dot(gph[j]);
            }
        }
        const auto& dofs = space.elem_dofs(t);
        for (int i = 0; i < nl; ++i)
            for (int j = 0; j < nl; ++j) trips.emplace_back(dofs[i], dofs[j], local[i * nl + j]);
    }
    return trips;
}

inline SparseMat assemble_stiffness(const FeSpace& space, const QuadSamples* coeff = nullptr,
                                    int quad_order = 0) {
    return SparseMat::from_triplets(space.ndofs(), space.ndofs(),
                                    stiffness_triplets(space, coeff, quad_order));
}

/// Skew-symmetrized convection operator on a scalar space:
///   B_ij = 1/2 [ (wind . grad phi_j, phi_i) - (wind . grad phi_i, phi_j) ]
/// so that w^T B v = b(wind, v, w); B is skew-symmetric by construction.
/// The same operator serves each velocity component and the temperature.
inline std::vector<Triplet> skew_convection_triplets(const FeSpace& space, const Field& wind,
                                                     int quad_order = 0) {
    if (wind.components != 2) {
        throw AssemblyError("skew convection: wind must have 2 components");
    }
    if (&wind.space->mesh() != &space.mesh()) {
        throw AssemblyError("skew convection: wind and target space live on different meshes");
    }
    const int order = quad_order > 0
                          ? quad_order
                          : convection_quad_order(space.degree(), wind.space->degree());
    const auto& rule = triangle_rule(order);
    const auto& tab = detail::basis_table(space.degree(), rule);
    const auto& wtab = detail::basis_table(wind.space->degree(), rule);
    const int nl = space.local_dofs();
    const int nwl = wind.space->local_dofs();
    const int nw = wind.space->ndofs();
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(space.mesh().num_triangles()) * nl * nl);
    std::vector<Vec2> gph(nl);
    std::vector<double> local(nl * nl);
    for (int t = 0; t < space.mesh().num_triangles(); ++t) {
        const ElemGeom g = ElemGeom::from(space.mesh(), t);
        const auto& wdofs = wind.space->elem_dofs(t);
        std::fill(local.begin(), local.end(), 0.0);
        for (int q = 0; q < rule.size(); ++q) {
            Vec2 wvec = Vec2::Zero();
            for (int a = 0; a < nwl; ++a) {
                const double N = wtab.values[q][a];
                wvec.x() += wind.coeffs[wdofs[a]] * N;
                wvec.y() += wind.coeffs[nw + wdofs[a]] * N;
            }
            const double w = 0.5 * rule.weights[q] * g.area;
            const auto& N = tab.values[q];
            for (int i = 0; i < nl; ++i) gph[i] = g.inv_jac_t * tab.ref_grad[q][i];
            for (int i = 0; i < nl; ++i) {
                const double wi = wvec.dot(gph[i]);
                for (int j = 0; j < nl; ++j) {
                    const double wj = wvec.dot(gph[j]);
                    local[i * nl + j] += w * (wj * N[i] - wi * N[j]);
                }
            }
        }
        const auto& dofs = space.elem_dofs(t);
        for (int i = 0; i < nl; ++i)
            for (int j = 0; j < nl; ++j) trips.emplace_back(dofs[i], dofs[j], local[i * nl + j]);
    }
    return trips;
}

inline SparseMat assemble_skew_convection(const FeSpace& space, const Field& wind,
                                          int quad_order = 0) {
    return SparseMat::from_triplets(space.ndofs(), space.ndofs(),
                                    skew_convection_triplets(space, wind, quad_order));
}

/// D with (D u) . q = (div u, q); shape n_pressure x 2*n_velocity.
inline std::vector<Triplet> div_triplets(const FeSpace& vel_space, const FeSpace& pres_space,
                                         int quad_order = 0) {
    if (vel_space.degree() < pres_space.degree() + 1) {
        throw AssemblyError("assemble_div: velocity degree must exceed pressure degree "
                            "(inf-sup stable Taylor-Hood pairing)");
    }
    if (&vel_space.mesh() != &pres_space.mesh()) {
        throw AssemblyError("assemble_div: spaces on different meshes");
    }
    const int order = quad_order > 0 ? quad_order : default_quad_order(vel_space.degree());
    const auto& rule = triangle_rule(order);
    const auto& vtab = detail::basis_table(vel_space.degree(), rule);
    const auto& ptab = detail::basis_table(pres_space.degree(), rule);
    const int nvl = vel_space.local_dofs();
    const int npl = pres_space.local_dofs();
    const int nv = vel_space.ndofs();
    std::vector<Triplet> trips;
    std::vector<Vec2> gph(nvl);
    for (int t = 0; t < vel_space.mesh().num_triangles(); ++t) {
        const ElemGeom g = ElemGeom::from(vel_space.mesh(), t);
        const auto& vdofs = vel_space.elem_dofs(t);
        const auto& pdofs = pres_space.elem_dofs(t);
        for (int q = 0; q < rule.size(); ++q) {
            const double w = rule.weights[q] * g.area;
            for (int j = 0; j < nvl; ++j) gph[j] = g.inv_jac_t * vtab.ref_grad[q][j];
            for (int i = 0; i < npl; ++i) {
                const double psi = ptab.values[q][i];
                for (int j = 0; j < nvl; ++j) {
                    trips.emplace_back(pdofs[i], vdofs[j], w * psi * gph[j].x());
                    trips.emplace_back(pdofs[i], nv + vdofs[j], w * psi * gph[j].y());
                }
            }
        }
    }
    return trips;
}

inline SparseMat assemble_div(const FeSpace& vel_space, const FeSpace& pres_space,
                              int quad_order = 0) {
    return SparseMat::from_triplets(pres_space.ndofs(), 2 * vel_space.ndofs(),
                                    div_triplets(vel_space, pres_space, quad_order));
}

/// L_i = int f(x) phi_i for a scalar integrand.
inline VecX assemble_load(const FeSpace& space, const std::function<double(Vec2)>& f,
                          int quad_order = 0) {
    const int order = quad_order > 0 ? quad_order : default_quad_order(space.degree());
    const auto& rule = triangle_rule(order);
    const auto& tab = detail::basis_table(space.degree(), rule);
    const int nl = space.local_dofs();
    VecX out = VecX::Zero(space.ndofs());
    for (int t = 0; t < space.mesh().num_triangles(); ++t) {
        const ElemGeom g = ElemGeom::from(space.mesh(), t);
        const auto& dofs = space.elem_dofs(t);
        for (int q = 0; q < rule.size(); ++q) {
            const double fx = f(g.physical(rule.points[q]));
            if (!std::isfinite(fx)) {
                throw AssemblyError("assemble_load: non-finite integrand sample");
            }
            const double w = rule.weights[q] * g.area * fx;
            for (int i = 0; i < nl; ++i) out[dofs[i]] += w * tab.values[q][i];
        }
    }
    return out;
}

/// Vector load, component-major layout (size 2*ndofs).
inline VecX assemble_load_vec(const FeSpace& space, const std::function<Vec2(Vec2)>& f,
                              int quad_order = 0) {
    const int order = quad_order > 0 ? quad_order : default_quad_order(space.degree());
    const auto& rule = triangle_rule(order);
    const auto& tab = detail::basis_table(space.degree(), rule);
    const int nl = space.local_dofs();
    const int n = space.ndofs();
    VecX out = VecX::Zero(2 * n);
    for (int t = 0; t < space.mesh().num_triangles(); ++t) {
        const ElemGeom g = ElemGeom::from(space.mesh(), t);
        const auto& dofs = space.elem_dofs(t);
        for (int q = 0; q < rule.size(); ++q) {
            const Vec2 fx = f(g.physical(rule.points[q]));
            if (!fx.allFinite()) {
                throw AssemblyError("assemble_load_vec: non-finite integrand sample");
            }
            const double w = rule.weights[q] * g.area;
            for (int i = 0; i < nl; ++i) {
                out[dofs[i]] += w * fx.x() * tab.values[q][i];
                out[n + dofs[i]] += w * fx.y() * tab.values[q][i];
            }
        }
    }
    return out;
}

/// Volume weights m_q = int psi_q (used for mean-zero pressure bordering).
inline VecX volume_weights(const FeSpace& space) {
    return assemble_load(space, [](Vec2) { return 1.0; });
}

/// Duplicate a scalar operator onto both components of a stacked vector space
/// (block diagonal), optionally scaled.
inline std::vector<Triplet> block_diag2(const std::vector<Triplet>& scalar, int n,
                                        double scale = 1.0) {
    std::vector<Triplet> out;
    out.reserve(2 * scalar.size());
    for (const auto& t : scalar) {
        out.emplace_back(t.row(), t.col(), scale * t.value());
        out.emplace_back(n + t.row(), n + t.col(), scale * t.value());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dirichlet constraints (row/column elimination preserving symmetry)
// ---------------------------------------------------------------------------

/// In-place elimination on triplets of a square operator: constrained rows
/// become identity rows with rhs = g, constrained columns move to the rhs.
/// `bmask` has one entry per (block-)dof, `gvals` the prescribed values.
inline void eliminate_dirichlet(std::vector<Triplet>& trips, VecX& rhs,
                                const std::vector<char>& bmask, const VecX& gvals) {
    std::vector<Triplet> kept;
    kept.reserve(trips.size());
    for (const auto& t : trips) {
        if (bmask[t.row()]) continue;
        if (bmask[t.col()]) {
            rhs[t.row()] -= t.value() * gvals[t.col()];
            continue;
        }
        kept.push_back(t);
    }
    for (int i = 0; i < static_cast<int>(bmask.size()); ++i) {
        if (bmask[i]) {
            kept.emplace_back(i, i, 1.0);
            rhs[i] = gvals[i];
        }
    }
    trips = std::move(kept);
}

/// Column-only elimination for rectangular blocks (e.g. the divergence block,
/// whose rows are never constrained).
inline void eliminate_dirichlet_cols(std::vector<Triplet>& trips, VecX& rhs,
                                     const std::vector<char>& bmask, const VecX& gvals) {
    std::vector<Triplet> kept;
    kept.reserve(trips.size());
    for (const auto& t : trips) {
        if (bmask[t.col()]) {
            rhs[t.row()] -= t.value() * gvals[t.col()];
            continue;
        }
        kept.push_back(t);
    }
    trips = std::move(kept);
}

/// Spec-level apply_dirichlet: returns the constrained (matrix, rhs) pair for
/// a scalar space with boundary values from a callable.
inline std::pair<SparseMat, VecX> apply_dirichlet(const SparseMat& mat, const VecX& rhs,
                                                  const FeSpace& space,
                                                  const std::function<double(Vec2)>& g) {
    const int n = mat.rows();
    std::vector<char> mask(n, 0);
    VecX gv = VecX::Zero(n);
    for (int d : space.boundary_dofs()) {
        mask[d] = 1;
        gv[d] = g(space.dof_coords()[d]);
    }
    std::vector<Triplet> trips;
    trips.reserve(mat.nnz());
    const auto ro = mat.row_offsets();
    const auto ci = mat.col_indices();
    const auto v = mat.values();
    for (int r = 0; r < n; ++r)
        for (int k = ro[r]; k < ro[r + 1]; ++k) trips.emplace_back(r, ci[k], v[k]);
    VecX b = rhs;
    eliminate_dirichlet(trips, b, mask, gv);
    return {SparseMat::from_triplets(n, n, trips), b};
}

/// Reusable constrained operator: the eliminated matrix is fixed while the
/// boundary values may change per solve (the boundary columns of the original
/// operator are kept for rhs corrections).
class ConstrainedOperator {
public:
    ConstrainedOperator() = default;

    ConstrainedOperator(const std::vector<Triplet>& trips, int n, std::vector<int> bdofs)
        : n_(n), bdofs_(std::move(bdofs)) {
        mask_.assign(n, 0);
        index_in_b_.assign(n, -1);
        for (std::size_t k = 0; k < bdofs_.size(); ++k) {
            mask_[bdofs_[k]] = 1;
            index_in_b_[bdofs_[k]] = static_cast<int>(k);
        }
        std::vector<Triplet> kept;
        std::vector<Triplet> bc_cols;
        kept.reserve(trips.size());
        for (const auto& t : trips) {
            if (mask_[t.row()]) continue;
            if (mask_[t.col()]) {
                bc_cols.emplace_back(t.row(), index_in_b_[t.col()], t.value());
                continue;
            }
            kept.push_back(t);
        }
        for (int d : bdofs_) kept.emplace_back(d, d, 1.0);
        eliminated_ = SparseMat::from_triplets(n, n, kept);
        bc_cols_.resize(n, static_cast<int>(bdofs_.size()));
        bc_cols_.setFromTriplets(bc_cols.begin(), bc_cols.end());
    }

    const SparseMat& eliminated() const { return eliminated_; }
    const std::vector<int>& bdofs() const { return bdofs_; }

    /// rhs for the eliminated system given interior load b and boundary values
    /// g (indexed like bdofs()).
    VecX corrected_rhs(const VecX& b, const VecX& g) const {
        VecX out = b - bc_cols_ * g;
        for (std::size_t k = 0; k < bdofs_.size(); ++k) out[bdofs_[k]] = g[k];
        return out;
    }

private:
    int n_ = 0;
    std::vector<int> bdofs_;
    std::vector<char> mask_;
    std::vector<int> index_in_b_;
    SparseMat eliminated_;
    Eigen::SparseMatrix<double> bc_cols_;
};

// ---------------------------------------------------------------------------
// Field norms and errors via quadrature
// ---------------------------------------------------------------------------

/// L2 norm of a discrete field: sqrt(x^T M x) given the space mass matrix.
inline double l2_norm(const Field& f, const SparseMat& scalar_mass) {
    double acc = 0.0;
    const int n = f.space->ndofs();
    for (int c = 0; c < f.components; ++c) {
        const VecX xc = f.coeffs.segment(c * n, n);
        acc += xc.dot(scalar_mass * xc);
    }
    return std::sqrt(std::max(acc, 0.0));
}

/// H1 seminorm: sqrt(x^T K x) with the plain stiffness matrix.
inline double h1_seminorm(const Field& f, const SparseMat& scalar_stiffness) {
    double acc = 0.0;
    const int n = f.space->ndofs();
    for (int c = 0; c < f.components; ++c) {
        const VecX xc = f.coeffs.segment(c * n, n);
        acc += xc.dot(scalar_stiffness * xc);
    }
    return std::sqrt(std::max(acc, 0.0));
}

} // namespace bousfem
