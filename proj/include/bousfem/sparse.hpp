#pragma once

#include "bousfem/errors.hpp"

#include <Eigen/Sparse>

#include <span>
#include <vector>

namespace bousfem {

using Triplet = Eigen::Triplet<double>;

/// Compressed-sparse-row matrix. Wraps a compressed Eigen row-major matrix so
/// the CSR arrays (row offsets / column indices / values) are directly
/// addressable; construction rejects non-finite entries.
class SparseMat {
public:
    SparseMat() = default;

    static SparseMat from_triplets(int rows, int cols, const std::vector<Triplet>& trips) {
        SparseMat s;
        s.m_.resize(rows, cols);
        s.m_.setFromTriplets(trips.begin(), trips.end());
        s.m_.makeCompressed();
        s.check_finite();
        return s;
    }

    static SparseMat from_eigen(Eigen::SparseMatrix<double, Eigen::RowMajor> m) {
        SparseMat s;
        s.m_ = std::move(m);
        s.m_.makeCompressed();
        s.check_finite();
        return s;
    }

    int rows() const { return static_cast<int>(m_.rows()); }
    int cols() const { return static_cast<int>(m_.cols()); }
    long nnz() const { return m_.nonZeros(); }

    std::span<const int> row_offsets() const {
        return {m_.outerIndexPtr(), static_cast<std::size_t>(m_.outerSize() + 1)};
    }
    std::span<const int> col_indices() const {
        return {m_.innerIndexPtr(), static_cast<std::size_t>(m_.nonZeros())};
    }
    std::span<const double> values() const {
        return {m_.valuePtr(), static_cast<std::size_t>(m_.nonZeros())};
    }

    const Eigen::SparseMatrix<double, Eigen::RowMajor>& eigen() const { return m_; }

    Eigen::VectorXd operator*(const Eigen::VectorXd& x) const { return m_ * x; }

    SparseMat transpose() const {
        return from_eigen(Eigen::SparseMatrix<double, Eigen::RowMajor>(m_.transpose()));
    }

    /// this + c * other (matching shapes).
    SparseMat plus(const SparseMat& other, double c = 1.0) const {
        if (rows() != other.rows() || cols() != other.cols()) {
            throw AssemblyError("SparseMat::plus: shape mismatch");
        }
        return from_eigen(
            Eigen::SparseMatrix<double, Eigen::RowMajor>(m_ + c * other.m_));
    }

    SparseMat scaled(double c) const {
        return from_eigen(Eigen::SparseMatrix<double, Eigen::RowMajor>(c * m_));
    }

    Eigen::MatrixXd dense() const { return Eigen::MatrixXd(m_); }

private:
    void check_finite() const {
        for (long i = 0; i < m_.nonZeros(); ++i) {
            if (!std::isfinite(m_.valuePtr()[i])) {
                throw AssemblyError("SparseMat: non-finite entry");
            }
        }
    }

    Eigen::SparseMatrix<double, Eigen::RowMajor> m_;
};

} // namespace bousfem
