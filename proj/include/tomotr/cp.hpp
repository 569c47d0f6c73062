#pragma once

#include <filesystem>

#include <Eigen/Core>

#include "tomotr/geometry.hpp"

namespace tomotr {

/// Rank-R factor pair (W1, W2), both K x R. The represented image is
/// the sum of the R outer products of matching columns, i.e. W1 * W2^T.
struct CPFactorPair {
    Eigen::MatrixXd W1;
    Eigen::MatrixXd W2;

    int rank() const { return static_cast<int>(W1.cols()); }
    int grid_size() const { return static_cast<int>(W1.rows()); }

    void validate() const;
};

/// W(i,j) = sum_r W1(i,r) * W2(j,r).
Image cp_compose(const CPFactorPair& factors);

/// Linearize the projection of a composed image in one factor. For
/// mode 1 (solving W1, `other` = W2):
///   A(b, r*K + i) = sum_j L[b,i,j] * other(j, r)
/// so A * vec(W1) reproduces forward_project(L, cp_compose(W1, other)).
/// Mode 2 swaps the roles (contracts over rows, indexes columns).
Eigen::MatrixXd assemble_design(const SparseSystemTensor& tensor,
                                const Eigen::MatrixXd& other, int mode);

/// Number of singular values above tol * sigma_max. A negative tol picks
/// the default 1e-10 * max(rows, cols).
int matrix_rank(const Image& image, double tol = -1.0);

/// Unknown count of a rank-R factor pair on a K x K grid: 2*K*R.
long parameter_count(int grid_size, int rank);

/// Writes <base>_W1.csv and <base>_W2.csv (K rows x R columns each) plus
/// a <base>_meta.json sidecar carrying {K, R, iteration}.
void save_factors_csv(const CPFactorPair& factors, const std::filesystem::path& base,
                      int iteration = 0);
CPFactorPair load_factors_csv(const std::filesystem::path& base);

}  // namespace tomotr
