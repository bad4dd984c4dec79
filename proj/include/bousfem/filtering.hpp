#pragma once

#include "bousfem/assembly.hpp"
#include "bousfem/solve.hpp"

#include <Eigen/SparseCholesky>

#include <memory>
#include <optional>

namespace bousfem {

/// Boundary values given to filtered quantities. `homogeneous` matches the
/// H1_0 setting of the analysis (and wall-bounded benchmarks where u = 0 on
/// the boundary); `inherit` copies the filtered field's own boundary dof
/// values, which keeps the filter consistent when filtering fields with
/// nonzero boundary data (manufactured-solution runs).
enum class FilterBc { homogeneous, inherit };

/// Indicator field sampled at the quadrature points of the weighted-stiffness
/// rule; values are in [0,1] once normalized.
struct IndicatorSamples : QuadSamples {
    double max_raw = 0.0;
    bool normalized = false;

    /// Weight-averaged per-triangle values (for VTK cell data).
    std::vector<double> cell_means() const {
        const auto& rule = triangle_rule(quad_order);
        std::vector<double> out(values.size() / points_per_tri, 0.0);
        for (std::size_t t = 0; t < out.size(); ++t) {
            double acc = 0.0;
            for (int q = 0; q < points_per_tri; ++q) {
                acc += rule.weights[q] * values[t * points_per_tri + q];
            }
            out[t] = acc;
        }
        return out;
    }

    double mean() const {
        const auto m = cell_means();
        double acc = 0.0;
        for (double v : m) acc += v;
        return m.empty() ? 0.0 : acc / static_cast<double>(m.size());
    }
    double max() const {
        double mx = 0.0;
        for (double v : values) mx = std::max(mx, v);
        return mx;
    }
};

struct AdaptiveFilterResult {
    Field velocity;   // filtered velocity u_bar
    Field multiplier; // mean-zero Lagrange multiplier in the pressure space
    SolveReport report;
};

/// Cached operators for the discrete Helmholtz filter, van Cittert
/// deconvolution, deconvolution-based indicator, and the divergence-
/// constrained adaptive filter. Immutable after construction; the cached
/// factorizations are reused across every time step.
class FilterContext {
public:
    FilterContext(const FeSpace& vel_space, const FeSpace& pres_space, double alpha,
                  int deconv_order, FilterBc bc = FilterBc::homogeneous)
        : vel_(&vel_space), pres_(&pres_space), alpha_(alpha), order_n_(deconv_order), bc_(bc) {
        if (!(alpha > 0.0)) throw AssemblyError("FilterContext: alpha must be positive");
        if (deconv_order < 0) throw AssemblyError("FilterContext: N must be >= 0");

        quad_order_ = default_quad_order(vel_->degree());
        mass_ = assemble_mass(*vel_);
        stiff_trips_ = stiffness_triplets(*vel_);
        mass_trips_ = mass_triplets(*vel_);

        // plain Helmholtz operator alpha^2 K + M with velocity Dirichlet rows
        std::vector<Triplet> helm;
        helm.reserve(stiff_trips_.size() + mass_trips_.size());
        for (const auto& t : stiff_trips_)
            helm.emplace_back(t.row(), t.col(), alpha_ * alpha_ * t.value());
        helm.insert(helm.end(), mass_trips_.begin(), mass_trips_.end());
        helm_op_ = ConstrainedOperator(helm, vel_->ndofs(), vel_->boundary_dofs());
        helm_ldlt_.compute(Eigen::SparseMatrix<double>(helm_op_.eliminated().eigen()));
        if (helm_ldlt_.info() != Eigen::Success) {
            throw SolveError("FilterContext: Helmholtz operator not SPD");
        }

        div_trips_ = div_triplets(*vel_, *pres_);
        pres_weights_ = volume_weights(*pres_);

        // stacked velocity boundary dofs (both components)
        const int n = vel_->ndofs();
        for (int d : vel_->boundary_dofs()) vel_bdofs2_.push_back(d);
        for (int d : vel_->boundary_dofs()) vel_bdofs2_.push_back(n + d);
        std::sort(vel_bdofs2_.begin(), vel_bdofs2_.end());
    }

    const FeSpace& velocity_space() const { return *vel_; }
    const FeSpace& pressure_space() const { return *pres_; }
    double alpha() const { return alpha_; }
    int deconv_order() const { return order_n_; }
    FilterBc bc_policy() const { return bc_; }
    int quad_order() const { return quad_order_; }
    const SparseMat& scalar_mass() const { return mass_; }

    /// Discrete Helmholtz filter: solves (alpha^2 K + M) psi_tilde = M psi
    /// componentwise with Dirichlet values per the BC policy.
    Field helmholtz(const Field& psi) const {
        if (psi.space != vel_) throw AssemblyError("helmholtz: field not on the velocity space");
        Field out(*vel_, psi.components);
        const int n = vel_->ndofs();
        const auto& bd = vel_->boundary_dofs();
        for (int c = 0; c < psi.components; ++c) {
            const VecX comp = psi.coeffs.segment(c * n, n);
            VecX rhs = mass_ * comp;
            VecX g = VecX::Zero(static_cast<Eigen::Index>(bd.size()));
            if (bc_ == FilterBc::inherit) {
                for (std::size_t k = 0; k < bd.size(); ++k) g[k] = comp[bd[k]];
            }
            const VecX b = helm_op_.corrected_rhs(rhs, g);
            out.coeffs.segment(c * n, n) = helm_ldlt_.solve(b);
        }
        return out;
    }

    /// Applies the van Cittert operator D_N = sum_{n=0}^{N} (I - F_h)^n to an
    /// already filtered field, by repeated application of F_h.
    Field van_cittert(const Field& psi_filtered) const {
        Field sum = psi_filtered;
        Field term = psi_filtered;
        for (int n = 1; n <= order_n_; ++n) {
            const Field f = helmholtz(term);
            term.coeffs -= f.coeffs;
            sum.coeffs += term.coeffs;
        }
        return sum;
    }

    /// a_{D_N}(u)(x) = |u(x) - D_N^h u_tilde(x)| at the quadrature points of
    /// the weighted-stiffness rule; optionally normalized into [0,1] by
    /// max(1, max_raw).
    IndicatorSamples indicator(const Field& u, bool normalize = true) const {
        if (u.components != 2) throw AssemblyError("indicator: velocity field expected");
        const Field deconv = van_cittert(helmholtz(u));
        Field diff = u;
        diff.coeffs -= deconv.coeffs;

        const auto& rule = triangle_rule(quad_order_);
        const auto& tab = detail::basis_table(vel_->degree(), rule);
        const int nl = vel_->local_dofs();
        const int n = vel_->ndofs();
        IndicatorSamples s;
        s.quad_order = quad_order_;
        s.points_per_tri = rule.size();
        s.values.resize(static_cast<std::size_t>(vel_->mesh().num_triangles()) * rule.size());
        double mx = 0.0;
        for (int t = 0; t < vel_->mesh().num_triangles(); ++t) {
            const auto& dofs = vel_->elem_dofs(t);
            for (int q = 0; q < rule.size(); ++q) {
                double ex = 0.0, ey = 0.0;
                for (int a = 0; a < nl; ++a) {
                    const double N = tab.values[q][a];
                    ex += diff.coeffs[dofs[a]] * N;
                    ey += diff.coeffs[n + dofs[a]] * N;
                }
                const double v = std::sqrt(ex * ex + ey * ey);
                s.values[static_cast<std::size_t>(t) * rule.size() + q] = v;
                mx = std::max(mx, v);
            }
        }
        s.max_raw = mx;
        if (normalize) {
            const double d = std::max(1.0, mx);
            for (double& v : s.values) v /= d;
            s.normalized = true;
        }
        return s;
    }

    /// Divergence-constrained adaptive filter: solves
    ///   [[alpha^2 K_a + M, -D^T], [D, 0]] (u_bar, lambda) = (M u, 0)
    /// with velocity Dirichlet values per the BC policy and mean-zero lambda.
    AdaptiveFilterResult adaptive(const Field& u, const QuadSamples& a) const {
        auto kw = stiffness_triplets(*vel_, &a);
        return constrained_filter_solve(u, kw, adaptive_solver_);
    }

    /// The a == 1 case (Leray-alpha filter); reuses one cached factorization.
    AdaptiveFilterResult leray(const Field& u) const {
        return constrained_filter_solve(u, stiff_trips_, leray_solver_, /*reuse=*/true);
    }

    const std::vector<Triplet>& div_trips() const { return div_trips_; }
    const VecX& pressure_weights() const { return pres_weights_; }

private:
    AdaptiveFilterResult constrained_filter_solve(const Field& u,
                                                  const std::vector<Triplet>& k_scalar,
                                                  std::unique_ptr<SaddleSolver>& solver,
                                                  bool reuse = false) const {
        if (u.space != vel_ || u.components != 2) {
            throw AssemblyError("adaptive filter: 2-component field on the velocity space "
                                "expected");
        }
        const int n = vel_->ndofs();
        const int np = pres_->ndofs();

        const bool need_assemble = !reuse || !solver;
        if (!solver) solver = std::make_unique<SaddleSolver>(2 * n, np, pres_weights_);

        VecX b_u(2 * n);
        b_u.head(n) = mass_ * u.coeffs.head(n);
        b_u.tail(n) = mass_ * u.coeffs.tail(n);
        VecX b_p = VecX::Zero(np);

        std::vector<char> mask(2 * n, 0);
        VecX gfull = VecX::Zero(2 * n);
        for (int d : vel_bdofs2_) {
            mask[d] = 1;
            if (bc_ == FilterBc::inherit) gfull[d] = u.coeffs[d];
        }

        if (need_assemble) {
            std::vector<Triplet> scalar;
            scalar.reserve(k_scalar.size() + mass_trips_.size());
            for (const auto& t : k_scalar)
                scalar.emplace_back(t.row(), t.col(), alpha_ * alpha_ * t.value());
            scalar.insert(scalar.end(), mass_trips_.begin(), mass_trips_.end());
            auto f_trips = block_diag2(scalar, n);
            auto d_trips = div_trips_;
            eliminate_dirichlet(f_trips, b_u, mask, gfull);
            eliminate_dirichlet_cols(d_trips, b_p, mask, gfull);
            solver->assemble(f_trips, d_trips);
        } else {
            // matrix cached; still need the rhs corrections for the values g
            std::vector<Triplet> scalar;
            scalar.reserve(k_scalar.size() + mass_trips_.size());
            for (const auto& t : k_scalar)
                scalar.emplace_back(t.row(), t.col(), alpha_ * alpha_ * t.value());
            scalar.insert(scalar.end(), mass_trips_.begin(), mass_trips_.end());
            auto f_trips = block_diag2(scalar, n);
            auto d_trips = div_trips_;
            eliminate_dirichlet(f_trips, b_u, mask, gfull);
            eliminate_dirichlet_cols(d_trips, b_p, mask, gfull);
        }

        const SaddleSolution sol = solver->solve(b_u, b_p);
        AdaptiveFilterResult out{Field(*vel_, 2), Field(*pres_, 1), sol.report};
        out.velocity.coeffs = sol.primal;
        out.multiplier.coeffs = sol.multiplier;
        return out;
    }

    const FeSpace* vel_;
    const FeSpace* pres_;
    double alpha_;
    int order_n_;
    FilterBc bc_;
    int quad_order_ = 5;

    SparseMat mass_;
    std::vector<Triplet> mass_trips_;
    std::vector<Triplet> stiff_trips_;
    std::vector<Triplet> div_trips_;
    VecX pres_weights_;
    std::vector<int> vel_bdofs2_;

    ConstrainedOperator helm_op_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> helm_ldlt_;

    mutable std::unique_ptr<SaddleSolver> adaptive_solver_;
    mutable std::unique_ptr<SaddleSolver> leray_solver_;
};

} // namespace bousfem
