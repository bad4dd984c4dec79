#pragma once

#include "bousfem/sparse.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <chrono>
#include <optional>
#include <string>
#include <utility>

namespace bousfem {

enum class SolverBackend { direct, iterative };

struct SolveOptions {
    SolverBackend backend = SolverBackend::direct;
    double tol = 1e-10;
    int max_iterations = 10000;
};

struct SolveReport {
    std::string method;
    int iterations = 0; // 0 for direct backends
    double residual_norm = 0.0; // ||Ax-b|| / ||b||
    double wall_time_s = 0.0;
};

namespace detail {

class Stopwatch {
public:
    Stopwatch() : t0_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    }

private:
    std::chrono::steady_clock::time_point t0_;
};

inline double relative_residual(const SparseMat& A, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& b) {
    const double nb = b.norm();
    return (A * x - b).norm() / (nb > 0.0 ? nb : 1.0);
}

} // namespace detail

/// Symmetric positive-definite solve (Helmholtz-filter systems).
inline std::pair<Eigen::VectorXd, SolveReport> solve_spd(const SparseMat& A,
                                                         const Eigen::VectorXd& b,
                                                         const SolveOptions& opts = {}) {
    detail::Stopwatch sw;
    SolveReport rep;
    Eigen::VectorXd x;
    if (opts.backend == SolverBackend::direct) {
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
        Eigen::SparseMatrix<double> Ac(A.eigen());
        ldlt.compute(Ac);
        if (ldlt.info() != Eigen::Success) {
            throw SolveError("solve_spd: factorization failed (matrix not SPD?)");
        }
        x = ldlt.solve(b);
        rep.method = "ldlt";
    } else {
        Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
        Eigen::SparseMatrix<double> Ac(A.eigen());
        cg.setTolerance(opts.tol * 1e-2);
        cg.setMaxIterations(opts.max_iterations);
        cg.compute(Ac);
        x = cg.solve(b);
        if (cg.info() != Eigen::Success) {
            throw SolveError("solve_spd: CG did not converge",
                             {cg.error()});
        }
        rep.method = "cg";
        rep.iterations = static_cast<int>(cg.iterations());
    }
    rep.residual_norm = detail::relative_residual(A, x, b);
    rep.wall_time_s = sw.seconds();
    if (rep.residual_norm > std::max(opts.tol, 1e-12) * 100 && rep.residual_norm > opts.tol) {
        throw SolveError("solve_spd: residual " + std::to_string(rep.residual_norm) +
                             " above tolerance",
                         {rep.residual_norm});
    }
    return {std::move(x), rep};
}

/// General nonsingular solve (temperature transport systems).
inline std::pair<Eigen::VectorXd, SolveReport> solve_general(const SparseMat& A,
                                                             const Eigen::VectorXd& b,
                                                             const SolveOptions& opts = {}) {
    detail::Stopwatch sw;
    SolveReport rep;
    Eigen::VectorXd x;
    if (opts.backend == SolverBackend::direct) {
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        Eigen::SparseMatrix<double> Ac(A.eigen());
        lu.compute(Ac);
        if (lu.info() != Eigen::Success) {
            throw SolveError("solve_general: LU factorization failed");
        }
        x = lu.solve(b);
        rep.method = "sparselu";
    } else {
        Eigen::BiCGSTAB<Eigen::SparseMatrix<double>, Eigen::IncompleteLUT<double>> bicg;
        Eigen::SparseMatrix<double> Ac(A.eigen());
        bicg.setTolerance(opts.tol * 1e-2);
        bicg.setMaxIterations(opts.max_iterations);
        bicg.compute(Ac);
        x = bicg.solve(b);
        if (bicg.info() != Eigen::Success) {
            throw SolveError("solve_general: BiCGSTAB stagnated", {bicg.error()});
        }
        rep.method = "bicgstab+ilut";
        rep.iterations = static_cast<int>(bicg.iterations());
    }
    rep.residual_norm = detail::relative_residual(A, x, b);
    rep.wall_time_s = sw.seconds();
    if (rep.residual_norm > std::max(opts.tol, 1e-12) * 100 && rep.residual_norm > opts.tol) {
        throw SolveError("solve_general: residual above tolerance", {rep.residual_norm});
    }
    return {std::move(x), rep};
}

struct SaddleSolution {
    Eigen::VectorXd primal;     // velocity-like unknown
    Eigen::VectorXd multiplier; // pressure / Lagrange multiplier, mean-zero
    SolveReport report;
};

/// Direct solver for [[F, -D^T], [D, 0]] (x, p) = (b_u, b_p) with the constant
/// multiplier nullspace removed by one bordering row/column carrying the
/// multiplier-space volume weights m (so the returned multiplier satisfies
/// m . p = 0 exactly). The factorization pattern can be reused across calls
/// with identical sparsity (set_pattern_reuse).
class SaddleSolver {
public:
    /// m: volume weights of the multiplier space (integral of each test fn).
    SaddleSolver(int n_primal, int n_multiplier, Eigen::VectorXd mean_weights)
        : n_(n_primal), m_(n_multiplier), w_(std::move(mean_weights)) {}

    /// Assemble the bordered matrix from block triplets: F (n x n) and
    /// D (m x n). Momentum rows get -D^T columns.
    void assemble(const std::vector<Triplet>& f_trips, const std::vector<Triplet>& d_trips) {
        std::vector<Triplet> trips;
        trips.reserve(f_trips.size() + 2 * d_trips.size() + 2 * m_);
        for (const auto& t : f_trips) trips.emplace_back(t.row(), t.col(), t.value());
        for (const auto& t : d_trips) {
            trips.emplace_back(n_ + t.row(), t.col(), t.value());  // D
            trips.emplace_back(t.col(), n_ + t.row(), -t.value()); // -D^T
        }
        for (int q = 0; q < m_; ++q) {
            trips.emplace_back(n_ + q, n_ + m_, w_[q]);
            trips.emplace_back(n_ + m_, n_ + q, w_[q]);
        }
        const int dim = n_ + m_ + 1;
        Eigen::SparseMatrix<double> A(dim, dim);
        A.setFromTriplets(trips.begin(), trips.end());
        A.makeCompressed();
        detail::Stopwatch sw;
        if (!pattern_ready_) {
            lu_.analyzePattern(A);
            pattern_ready_ = true;
        }
        lu_.factorize(A);
        if (lu_.info() != Eigen::Success) {
            throw SolveError("SaddleSolver: factorization failed (singular system?)");
        }
        factor_time_s_ = sw.seconds();
        A_ = SparseMat::from_eigen(Eigen::SparseMatrix<double, Eigen::RowMajor>(A));
    }

    SaddleSolution solve(const Eigen::VectorXd& b_u, const Eigen::VectorXd& b_p) const {
        detail::Stopwatch sw;
        Eigen::VectorXd rhs(n_ + m_ + 1);
        rhs.head(n_) = b_u;
        rhs.segment(n_, m_) = b_p;
        rhs[n_ + m_] = 0.0;
        Eigen::VectorXd sol = lu_.solve(rhs);
        SaddleSolution out;
        out.primal = sol.head(n_);
        out.multiplier = sol.segment(n_, m_);
        out.report.method = "sparselu(bordered)";
        out.report.residual_norm = detail::relative_residual(A_, sol, rhs);
        out.report.wall_time_s = factor_time_s_ + sw.seconds();
        if (!sol.allFinite()) {
            throw SolveError("SaddleSolver: non-finite solution");
        }
        return out;
    }

    double factor_time_s() const { return factor_time_s_; }

private:
    int n_;
    int m_;
    Eigen::VectorXd w_;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
    SparseMat A_;
    bool pattern_ready_ = false;
    double factor_time_s_ = 0.0;
};

/// One-shot saddle solve from assembled blocks (momentum rows F x - D^T p,
/// constraint rows D x). The returned multiplier is mean-zero with respect to
/// the supplied volume weights.
inline SaddleSolution solve_saddle(const SparseMat& F, const SparseMat& D,
                                   const Eigen::VectorXd& b_u, const Eigen::VectorXd& b_p,
                                   const Eigen::VectorXd& mean_weights,
                                   const SolveOptions& opts = {}) {
    std::vector<Triplet> f_trips;
    f_trips.reserve(F.nnz());
    const auto fro = F.row_offsets();
    const auto fci = F.col_indices();
    const auto fv = F.values();
    for (int r = 0; r < F.rows(); ++r) {
        for (int k = fro[r]; k < fro[r + 1]; ++k) f_trips.emplace_back(r, fci[k], fv[k]);
    }
    std::vector<Triplet> d_trips;
    d_trips.reserve(D.nnz());
    const auto dro = D.row_offsets();
    const auto dci = D.col_indices();
    const auto dv = D.values();
    for (int r = 0; r < D.rows(); ++r) {
        for (int k = dro[r]; k < dro[r + 1]; ++k) d_trips.emplace_back(r, dci[k], dv[k]);
    }

    if (opts.backend == SolverBackend::iterative) {
        // bordered matrix, BiCGSTAB + ILUT
        const int n = F.rows(), m = D.rows();
        std::vector<Triplet> trips;
        for (const auto& t : f_trips) trips.emplace_back(t.row(), t.col(), t.value());
        for (const auto& t : d_trips) {
            trips.emplace_back(n + t.row(), t.col(), t.value());
            trips.emplace_back(t.col(), n + t.row(), -t.value());
        }
        for (int q = 0; q < m; ++q) {
            trips.emplace_back(n + q, n + m, mean_weights[q]);
            trips.emplace_back(n + m, n + q, mean_weights[q]);
        }
        Eigen::SparseMatrix<double> A(n + m + 1, n + m + 1);
        A.setFromTriplets(trips.begin(), trips.end());
        Eigen::VectorXd rhs(n + m + 1);
        rhs.head(n) = b_u;
        rhs.segment(n, m) = b_p;
        rhs[n + m] = 0.0;
        detail::Stopwatch sw;
        Eigen::BiCGSTAB<Eigen::SparseMatrix<double>, Eigen::IncompleteLUT<double>> bicg;
        bicg.preconditioner().setFillfactor(40);
        bicg.setTolerance(opts.tol * 1e-3);
        bicg.setMaxIterations(opts.max_iterations);
        bicg.compute(A);
        Eigen::VectorXd sol = bicg.solve(rhs);
        if (bicg.info() != Eigen::Success) {
            throw SolveError("solve_saddle: iterative backend stagnated", {bicg.error()});
        }
        SaddleSolution out;
        out.primal = sol.head(n);
        out.multiplier = sol.segment(n, m);
        out.report.method = "bicgstab+ilut(bordered)";
        out.report.iterations = static_cast<int>(bicg.iterations());
        out.report.residual_norm = (A * sol - rhs).norm() / std::max(rhs.norm(), 1e-300);
        out.report.wall_time_s = sw.seconds();
        return out;
    }

    SaddleSolver solver(F.rows(), D.rows(), mean_weights);
    solver.assemble(f_trips, d_trips);
    return solver.solve(b_u, b_p);
}

} // namespace bousfem
