#pragma once

#include "bousfem/filtering.hpp"

#include <cmath>
#include <functional>
#include <optional>

namespace bousfem {

enum class RegModel { none, leray_alpha, adaptive_leray };

inline const char* to_string(RegModel m) {
    switch (m) {
        case RegModel::none: return "nomodel";
        case RegModel::leray_alpha: return "leray-alpha";
        case RegModel::adaptive_leray: return "adaptive";
    }
    return "?";
}

enum class InitStrategy { interpolate_exact, backward_euler_bootstrap };

/// Which velocity feeds the indicator function (the algorithm only says it
/// uses known velocities; the filtered quantity is the extrapolation).
enum class IndicatorArg { extrapolated, current };

struct FlowParams {
    double Re = 1.0;
    double Ri = 1.0;
    double Pr = 1.0;
    double dt = 0.1;
    double t_end = 1.0;
    double alpha = 0.1;
    int deconv_order = 0;
    RegModel model = RegModel::adaptive_leray;
    bool normalize_indicator = true;
    IndicatorArg indicator_arg = IndicatorArg::extrapolated;

    int num_steps() const {
        const double m = t_end / dt;
        const int mi = static_cast<int>(std::lround(m));
        if (mi < 1 || std::abs(m - mi) > 1e-8 * std::max(1.0, m)) {
            throw ConfigError({"t_end must be a positive integer multiple of dt"});
        }
        return mi;
    }

    void validate() const {
        std::vector<std::string> bad;
        if (!(Re > 0)) bad.push_back("Re must be positive");
        if (!(Ri > 0)) bad.push_back("Ri must be positive");
        if (!(Pr > 0)) bad.push_back("Pr must be positive");
        if (!(dt > 0)) bad.push_back("dt must be positive");
        if (!(t_end > 0)) bad.push_back("t_end must be positive");
        if (!(alpha > 0)) bad.push_back("alpha must be positive");
        if (deconv_order < 0) bad.push_back("deconvolution order must be >= 0");
        if (!bad.empty()) throw ConfigError(bad);
        num_steps();
    }
};

/// Rolling state: steps n-1 and n of (u, T), the latest pressure, and the
/// clock; advanced in place by the stepper.
struct SimState {
    Field u_prev, u_curr;
    Field T_prev, T_curr;
    Field p_curr;
    int step_index = 0; // index n of u_curr
    double time = 0.0;  // = step_index * dt
};

/// Per-step entries of the Lemma 4.2 energy audit. Dual norms are replaced by
/// the computable surrogate C_P ||.||_L2 with C_P = diam(Omega), so `holds`
/// audits a sufficient upper bound rather than the sharp constant.
struct EnergyRow {
    int step = 0;
    double time = 0.0;
    double u_sq = 0.0;        // ||u^n||^2
    double T_sq = 0.0;        // ||T^n||^2
    double extrap_u_sq = 0.0; // ||2u^n - u^{n-1}||^2
    double extrap_T_sq = 0.0; // ||2T^n - T^{n-1}||^2
    double cum_grad_u = 0.0;  // 2/Re dt sum ||grad u||^2 over computed steps
    double cum_grad_T = 0.0;  // 2/(Re Pr) dt sum ||grad T||^2
    double lhs = 0.0;
    double rhs = 0.0;
    bool holds = false;
};

struct EnergyLedger {
    double init_u_sq = 0.0, init_T_sq = 0.0;
    double init_extrap_u_sq = 0.0, init_extrap_T_sq = 0.0;
    double poincare = 1.0; // surrogate C_P
    std::vector<EnergyRow> rows;

    bool all_hold() const {
        for (const auto& r : rows)
            if (!r.holds) return false;
        return true;
    }
};

/// Forcings and boundary data defining a concrete flow problem. Velocity is
/// Dirichlet on every wall; temperature is Dirichlet when a callable is given
/// and adiabatic (natural) otherwise.
struct ProblemSetup {
    std::function<Vec2(double, Vec2)> forcing_f = [](double, Vec2) { return Vec2::Zero().eval(); };
    std::function<double(double, Vec2)> forcing_gamma = [](double, Vec2) { return 0.0; };
    std::function<Vec2(double, Vec2)> velocity_bc = [](double, Vec2) { return Vec2::Zero().eval(); };
    std::optional<std::function<double(double, Vec2)>> temperature_bc;
};

/// Linearized BDF2 advance of (u, p, T): per step one linear transport solve
/// for T^{n+1} (convected by the raw extrapolation 2u^n - u^{n-1}), one
/// saddle-point solve for (u^{n+1}, p^{n+1}) convected by the model wind, and
/// the filter step producing that wind. All three are mutually decoupled.
class BoussinesqStepper {
public:
    BoussinesqStepper(const FeSpace& scalar_space, const FeSpace& pressure_space,
                      FlowParams params, ProblemSetup setup,
                      FilterBc bc = FilterBc::homogeneous)
        : space_(&scalar_space), pres_(&pressure_space), params_(params),
          setup_(std::move(setup)),
          filter_(scalar_space, pressure_space, params.alpha, params.deconv_order, bc) {
        params_.validate();
        const int n = space_->ndofs();
        mass_trips_ = mass_triplets(*space_);
        stiff_trips_ = stiffness_triplets(*space_);
        mass_ = SparseMat::from_triplets(n, n, mass_trips_);
        stiff_ = SparseMat::from_triplets(n, n, stiff_trips_);
        div_trips_ = div_triplets(*space_, *pres_);
        pres_weights_ = volume_weights(*pres_);
        momentum_ = std::make_unique<SaddleSolver>(2 * n, pres_->ndofs(), pres_weights_);

        vel_mask_.assign(2 * n, 0);
        for (int d : space_->boundary_dofs()) {
            vel_mask_[d] = 1;
            vel_mask_[n + d] = 1;
        }
        if (setup_.temperature_bc) {
            temp_mask_.assign(n, 0);
            for (int d : space_->boundary_dofs()) temp_mask_[d] = 1;
        }

        // surrogate Poincare constant: domain diameter
        Vec2 lo = space_->mesh().vertices.front(), hi = lo;
        for (const auto& v : space_->mesh().vertices) {
            lo = lo.cwiseMin(v);
            hi = hi.cwiseMax(v);
        }
        ledger_.poincare = (hi - lo).norm();
    }

    const FeSpace& scalar_space() const { return *space_; }
    const FeSpace& pressure_space() const { return *pres_; }
    const FlowParams& params() const { return params_; }
    const FilterContext& filter() const { return filter_; }
    const EnergyLedger& ledger() const { return ledger_; }
    const SparseMat& scalar_mass() const { return mass_; }
    const SparseMat& scalar_stiffness() const { return stiff_; }
    const IndicatorSamples& last_indicator() const { return last_indicator_; }

    /// u^0, T^0 from the ICs; u^1, T^1 by nodal interpolation of the exact
    /// solution (MMS) or by one backward-Euler step of the same spatial scheme.
    SimState initialize(InitStrategy strategy,
                        const std::function<Vec2(double, Vec2)>& u_of_t,
                        const std::function<double(double, Vec2)>& T_of_t,
                        const std::function<double(double, Vec2)>* p_of_t = nullptr) {
        SimState s;
        const double dt = params_.dt;
        s.u_prev = interpolate_vec(*space_, [&](Vec2 x) { return u_of_t(0.0, x); });
        s.T_prev = interpolate(*space_, [&](Vec2 x) { return T_of_t(0.0, x); });
        s.p_curr = Field(*pres_, 1);

        if (strategy == InitStrategy::interpolate_exact) {
            s.u_curr = interpolate_vec(*space_, [&](Vec2 x) { return u_of_t(dt, x); });
            s.T_curr = interpolate(*space_, [&](Vec2 x) { return T_of_t(dt, x); });
            if (p_of_t) {
                s.p_curr = interpolate(*pres_, [&](Vec2 x) { return (*p_of_t)(dt, x); });
                // report the mean-zero representative
                const double mean = pres_weights_.dot(s.p_curr.coeffs) / pres_weights_.sum();
                s.p_curr.coeffs.array() -= mean;
            }
        } else {
            backward_euler_bootstrap(s);
        }
        s.step_index = 1;
        s.time = dt;
        seed_ledger(s);
        return s;
    }

    /// Convenience for zero-IC benchmark runs (bootstrap start).
    SimState initialize_from_rest(const std::function<double(Vec2)>& ic_T) {
        return initialize(
            InitStrategy::backward_euler_bootstrap,
            [](double, Vec2) { return Vec2::Zero().eval(); },
            [&](double t, Vec2 x) {
                if (t > 0.0) throw ConfigError({"bootstrap initialization queried t>0"});
                return ic_T(x);
            });
    }

    /// The convecting velocity for the momentum step, per the selected model.
    Field select_wind(const SimState& s) {
        Field extrap(*space_, 2);
        extrap.coeffs = 2.0 * s.u_curr.coeffs - s.u_prev.coeffs;
        switch (params_.model) {
            case RegModel::none:
                return extrap;
            case RegModel::leray_alpha:
                return filter_.leray(extrap).velocity;
            case RegModel::adaptive_leray: {
                const Field& arg_field =
                    (params_.indicator_arg == IndicatorArg::extrapolated) ? extrap : s.u_curr;
                last_indicator_ = filter_.indicator(arg_field, params_.normalize_indicator);
                return filter_.adaptive(extrap, last_indicator_).velocity;
            }
        }
        return extrap;
    }

    /// Temperature transport solve for T^{n+1} (Dirichlet or adiabatic).
    Field advance_temperature(const SimState& s) {
        const int n = space_->ndofs();
        const double dt = params_.dt;
        const double t_new = s.time + dt;

        Field wind(*space_, 2);
        wind.coeffs = 2.0 * s.u_curr.coeffs - s.u_prev.coeffs;

        std::vector<Triplet> trips;
        append_scaled(trips, mass_trips_, 1.5 / dt);
        append_scaled(trips, stiff_trips_, 1.0 / (params_.Re * params_.Pr));
        auto conv = skew_convection_triplets(*space_, wind);
        trips.insert(trips.end(), conv.begin(), conv.end());

        VecX rhs = assemble_load(*space_, [&](Vec2 x) { return setup_.forcing_gamma(t_new, x); });
        rhs += (0.5 / dt) * (mass_ * (4.0 * s.T_curr.coeffs - s.T_prev.coeffs));

        if (setup_.temperature_bc) {
            VecX g = VecX::Zero(n);
            for (int d : space_->boundary_dofs()) {
                g[d] = (*setup_.temperature_bc)(t_new, space_->dof_coords()[d]);
            }
            eliminate_dirichlet(trips, rhs, temp_mask_, g);
        }

        Eigen::SparseMatrix<double> A(n, n);
        A.setFromTriplets(trips.begin(), trips.end());
        A.makeCompressed();
        if (!temp_pattern_ready_) {
            temp_lu_.analyzePattern(A);
            temp_pattern_ready_ = true;
        }
        temp_lu_.factorize(A);
        if (temp_lu_.info() != Eigen::Success) {
            throw SolveError("advance_temperature: factorization failed at step " +
                             std::to_string(s.step_index));
        }
        Field T_new(*space_, 1);
        T_new.coeffs = temp_lu_.solve(rhs);
        return T_new;
    }

    /// Momentum/pressure saddle solve for (u^{n+1}, p^{n+1}); the buoyancy
    /// load uses the extrapolated old temperatures (decoupled system).
    std::pair<Field, Field> advance_momentum(const SimState& s, const Field& wind) {
        const int n = space_->ndofs();
        const double dt = params_.dt;
        const double t_new = s.time + dt;

        std::vector<Triplet> scalar;
        append_scaled(scalar, mass_trips_, 1.5 / dt);
        append_scaled(scalar, stiff_trips_, 1.0 / params_.Re);
        auto f_trips = block_diag2(scalar, n);
        {
            auto conv = block_diag2(skew_convection_triplets(*space_, wind), n);
            f_trips.insert(f_trips.end(), conv.begin(), conv.end());
        }

        VecX b_u = assemble_load_vec(*space_, [&](Vec2 x) { return setup_.forcing_f(t_new, x); });
        b_u.head(n) += (0.5 / dt) * (mass_ * (4.0 * s.u_curr.coeffs.head(n) -
                                              s.u_prev.coeffs.head(n)));
        b_u.tail(n) += (0.5 / dt) * (mass_ * (4.0 * s.u_curr.coeffs.tail(n) -
                                              s.u_prev.coeffs.tail(n)));
        const VecX theta = 2.0 * s.T_curr.coeffs - s.T_prev.coeffs;
        b_u.tail(n) += params_.Ri * (mass_ * theta); // buoyancy along k_hat = (0,1)
        VecX b_p = VecX::Zero(pres_->ndofs());

        VecX g = VecX::Zero(2 * n);
        for (int d : space_->boundary_dofs()) {
            const Vec2 gv = setup_.velocity_bc(t_new, space_->dof_coords()[d]);
            g[d] = gv.x();
            g[n + d] = gv.y();
        }
        auto d_trips = div_trips_;
        eliminate_dirichlet(f_trips, b_u, vel_mask_, g);
        eliminate_dirichlet_cols(d_trips, b_p, vel_mask_, g);

        momentum_->assemble(f_trips, d_trips);
        const SaddleSolution sol = momentum_->solve(b_u, b_p);
        last_momentum_report_ = sol.report;

        Field u_new(*space_, 2);
        u_new.coeffs = sol.primal;
        Field p_new(*pres_, 1);
        p_new.coeffs = sol.multiplier;
        return {std::move(u_new), std::move(p_new)};
    }

    /// One Algorithm step: filter, then temperature, then momentum; rotates
    /// the state and appends the energy-audit row.
    void step(SimState& s) {
        try {
            const Field wind = select_wind(s);
            Field T_new = advance_temperature(s);
            auto [u_new, p_new] = advance_momentum(s, wind);

            s.u_prev = std::move(s.u_curr);
            s.u_curr = std::move(u_new);
            s.T_prev = std::move(s.T_curr);
            s.T_curr = std::move(T_new);
            s.p_curr = std::move(p_new);
            s.step_index += 1;
            s.time = s.step_index * params_.dt;
            append_ledger_row(s);
        } catch (const Error& e) {
            throw SolveError("step " + std::to_string(s.step_index + 1) + ": " + e.what());
        }
    }

    /// Max |(div u^{n+1}, q_h)| over pressure test functions, with the
    /// bordered compensation removed (the raw constraint-row residual).
    double divergence_residual(const SimState& s) const {
        VecX du = VecX::Zero(pres_->ndofs());
        for (const auto& t : div_trips_) du[t.row()] += t.value() * s.u_curr.coeffs[t.col()];
        // remove the uniform component the mean border absorbs
        const double mu = du.sum() / pres_weights_.sum();
        du -= mu * pres_weights_;
        return du.cwiseAbs().maxCoeff();
    }

    const SolveReport& last_momentum_report() const { return last_momentum_report_; }

private:
    static void append_scaled(std::vector<Triplet>& dst, const std::vector<Triplet>& src,
                              double c) {
        dst.reserve(dst.size() + src.size());
        for (const auto& t : src) dst.emplace_back(t.row(), t.col(), c * t.value());
    }

    void backward_euler_bootstrap(SimState& s) {
        const int n = space_->ndofs();
        const double dt = params_.dt;

        // temperature BE step
        {
            Field wind = s.u_prev; // constant-history extrapolation
            std::vector<Triplet> trips;
            append_scaled(trips, mass_trips_, 1.0 / dt);
            append_scaled(trips, stiff_trips_, 1.0 / (params_.Re * params_.Pr));
            auto conv = skew_convection_triplets(*space_, wind);
            trips.insert(trips.end(), conv.begin(), conv.end());
            VecX rhs =
                assemble_load(*space_, [&](Vec2 x) { return setup_.forcing_gamma(dt, x); });
            rhs += (1.0 / dt) * (mass_ * s.T_prev.coeffs);
            if (setup_.temperature_bc) {
                VecX g = VecX::Zero(n);
                for (int d : space_->boundary_dofs())
                    g[d] = (*setup_.temperature_bc)(dt, space_->dof_coords()[d]);
                eliminate_dirichlet(trips, rhs, temp_mask_, g);
            }
            Eigen::SparseMatrix<double> A(n, n);
            A.setFromTriplets(trips.begin(), trips.end());
            Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
            lu.compute(A);
            if (lu.info() != Eigen::Success) {
                throw SolveError("bootstrap: temperature factorization failed");
            }
            s.T_curr = Field(*space_, 1);
            s.T_curr.coeffs = lu.solve(rhs);
        }

        // momentum BE step (wind = model filter of u^0, buoyancy from T^0)
        {
            Field wind(*space_, 2);
            switch (params_.model) {
                case RegModel::none: wind = s.u_prev; break;
                case RegModel::leray_alpha: wind = filter_.leray(s.u_prev).velocity; break;
                case RegModel::adaptive_leray: {
                    last_indicator_ = filter_.indicator(s.u_prev, params_.normalize_indicator);
                    wind = filter_.adaptive(s.u_prev, last_indicator_).velocity;
                    break;
                }
            }
            std::vector<Triplet> scalar;
            append_scaled(scalar, mass_trips_, 1.0 / dt);
            append_scaled(scalar, stiff_trips_, 1.0 / params_.Re);
            auto f_trips = block_diag2(scalar, n);
            auto conv = block_diag2(skew_convection_triplets(*space_, wind), n);
            f_trips.insert(f_trips.end(), conv.begin(), conv.end());

            VecX b_u =
                assemble_load_vec(*space_, [&](Vec2 x) { return setup_.forcing_f(dt, x); });
            b_u.head(n) += (1.0 / dt) * (mass_ * s.u_prev.coeffs.head(n));
            b_u.tail(n) += (1.0 / dt) * (mass_ * s.u_prev.coeffs.tail(n));
            b_u.tail(n) += params_.Ri * (mass_ * s.T_prev.coeffs);
            VecX b_p = VecX::Zero(pres_->ndofs());

            VecX g = VecX::Zero(2 * n);
            for (int d : space_->boundary_dofs()) {
                const Vec2 gv = setup_.velocity_bc(dt, space_->dof_coords()[d]);
                g[d] = gv.x();
                g[n + d] = gv.y();
            }
            auto d_trips = div_trips_;
            eliminate_dirichlet(f_trips, b_u, vel_mask_, g);
            eliminate_dirichlet_cols(d_trips, b_p, vel_mask_, g);

            momentum_->assemble(f_trips, d_trips);
            const SaddleSolution sol = momentum_->solve(b_u, b_p);
            s.u_curr = Field(*space_, 2);
            s.u_curr.coeffs = sol.primal;
            s.p_curr = Field(*pres_, 1);
            s.p_curr.coeffs = sol.multiplier;
        }
    }

    double l2_sq(const VecX& scalar_coeffs) const {
        return scalar_coeffs.dot(mass_ * scalar_coeffs);
    }
    double l2_sq_vec(const VecX& c) const {
        const int n = space_->ndofs();
        return l2_sq(c.head(n)) + l2_sq(c.tail(n));
    }
    double h1_sq(const VecX& scalar_coeffs) const {
        return scalar_coeffs.dot(stiff_ * scalar_coeffs);
    }
    double h1_sq_vec(const VecX& c) const {
        const int n = space_->ndofs();
        return h1_sq(c.head(n)) + h1_sq(c.tail(n));
    }

    void seed_ledger(const SimState& s) {
        ledger_.rows.clear();
        ledger_.init_u_sq = l2_sq_vec(s.u_curr.coeffs);
        ledger_.init_T_sq = l2_sq(s.T_curr.coeffs);
        ledger_.init_extrap_u_sq = l2_sq_vec(2.0 * s.u_curr.coeffs - s.u_prev.coeffs);
        ledger_.init_extrap_T_sq = l2_sq(2.0 * s.T_curr.coeffs - s.T_prev.coeffs);
        cum_grad_u_ = 0.0;
        cum_grad_T_ = 0.0;
        cum_force_f_ = 0.0;
        cum_force_g_ = 0.0;
    }

    void append_ledger_row(const SimState& s) {
        const double dt = params_.dt;
        const double cp2 = ledger_.poincare * ledger_.poincare;
        const double t_new = s.time;

        // ||f^{n+1}||^2 and ||gamma^{n+1}||^2 by quadrature
        double f_sq = 0.0, g_sq = 0.0;
        {
            const auto& rule = triangle_rule(5);
            for (int t = 0; t < space_->mesh().num_triangles(); ++t) {
                const ElemGeom geo = ElemGeom::from(space_->mesh(), t);
                for (int q = 0; q < rule.size(); ++q) {
                    const Vec2 x = geo.physical(rule.points[q]);
                    const double w = rule.weights[q] * geo.area;
                    f_sq += w * setup_.forcing_f(t_new, x).squaredNorm();
                    const double gv = setup_.forcing_gamma(t_new, x);
                    g_sq += w * gv * gv;
                }
            }
        }

        cum_grad_u_ += 2.0 / params_.Re * dt * h1_sq_vec(s.u_curr.coeffs);
        cum_grad_T_ += 2.0 / (params_.Re * params_.Pr) * dt * h1_sq(s.T_curr.coeffs);
        cum_force_f_ += 4.0 * params_.Re * dt * cp2 * f_sq;
        cum_force_g_ += 2.0 * params_.Re * params_.Pr * dt * cp2 * g_sq;

        EnergyRow r;
        r.step = s.step_index;
        r.time = t_new;
        r.u_sq = l2_sq_vec(s.u_curr.coeffs);
        r.T_sq = l2_sq(s.T_curr.coeffs);
        r.extrap_u_sq = l2_sq_vec(2.0 * s.u_curr.coeffs - s.u_prev.coeffs);
        r.extrap_T_sq = l2_sq(2.0 * s.T_curr.coeffs - s.T_prev.coeffs);
        r.cum_grad_u = cum_grad_u_;
        r.cum_grad_T = cum_grad_T_;
        r.lhs = r.u_sq + r.T_sq + r.extrap_u_sq + r.extrap_T_sq + r.cum_grad_u + r.cum_grad_T;

        const double c_T = ledger_.init_T_sq + ledger_.init_extrap_T_sq + cum_force_g_;
        r.rhs = ledger_.init_u_sq + ledger_.init_T_sq + ledger_.init_extrap_u_sq +
                ledger_.init_extrap_T_sq + cum_force_f_ + cum_force_g_ +
                4.0 * cp2 * params_.Ri * params_.Ri * params_.Re * c_T * t_new;
        r.holds = r.lhs <= r.rhs * (1.0 + 1e-12) + 1e-300;
        ledger_.rows.push_back(r);
    }

    const FeSpace* space_;
    const FeSpace* pres_;
    FlowParams params_;
    ProblemSetup setup_;
    FilterContext filter_;

    std::vector<Triplet> mass_trips_, stiff_trips_, div_trips_;
    SparseMat mass_, stiff_;
    VecX pres_weights_;
    std::vector<char> vel_mask_;
    std::vector<char> temp_mask_;
    std::unique_ptr<SaddleSolver> momentum_;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> temp_lu_;
    bool temp_pattern_ready_ = false;

    EnergyLedger ledger_;
    double cum_grad_u_ = 0.0, cum_grad_T_ = 0.0;
    double cum_force_f_ = 0.0, cum_force_g_ = 0.0;

    IndicatorSamples last_indicator_;
    SolveReport last_momentum_report_;
};

} // namespace bousfem
