#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "invprob/inverse_core.hpp"

namespace invprob {

inline constexpr double kDefaultRankTol = 1e-10;

/**
 * Singular system of the discretized kernel operator:
 *   K u_i = lambda_i v_i,   K^T v_i = lambda_i u_i,   i = 1..M.
 * Columns of data_vectors are the v_i (orthonormal in the data inner product),
 * columns of object_functions the u_i sampled on the grid.  The sign of each
 * pair is fixed so that the first non-negligible component of v_i is positive.
 */
struct SingularSystem {
    Vector lambdas;
    Matrix data_vectors;
    Matrix object_functions;

    std::size_t rank() const { return static_cast<std::size_t>(lambdas.size()); }
};

/// Expansion coefficients b_i of the normal solution and their uncertainties.
struct CoefficientSet {
    Vector b;
    Vector db;
};

struct Truncation {
    std::size_t r_cut = 0;
    double threshold = 0.0;
    /// Data points with G~_i == 0, left out of the mean relative error.
    std::vector<std::size_t> skipped_points;
};

/// (K K^T)_ij = sum_k K_ik K_jk.
Matrix build_gram(const DiscretizedProblem& problem);

/**
 * Eigen-decomposition of K K^T, obtained from the thin SVD of K (same
 * eigenvectors, eigenvalues lambda_i^2) so the small end of the spectrum keeps
 * full relative precision.  Keeps the M pairs with lambda_i / lambda_1 >= rank_tol.
 */
SingularSystem compute_singular_system(const DiscretizedProblem& problem,
                                       double rank_tol = kDefaultRankTol);

/// b_i = (v_i, G~) / lambda_i,  db_i = sum_k |v_ik| sigma_k / lambda_i.
CoefficientSet expansion_coefficients(const SingularSystem& system, const DataSet& data);

/// Noise-driven cut-off: keep lambda_i / lambda_1 >= mean_i(sigma_i / |G~_i|).
Truncation truncation_index(const SingularSystem& system, const DataSet& data);

/// Number of singular values with lambda_i / lambda_1 >= cutoff.
std::size_t cutoff_index(const SingularSystem& system, double cutoff);

/// sum_{i <= r_cut} b_i u_i on the grid.
Vector reconstruct(const SingularSystem& system, const CoefficientSet& coeffs, std::size_t r_cut);

struct TsvdResult {
    Vector object;
    std::size_t r_cut = 0;
    std::size_t rank = 0;
    /// Relative singular-value cut-off actually applied.
    double cutoff = 0.0;
};

/// Truncated normal solution; without an explicit cut-off the noise-driven one is used.
TsvdResult tsvd_solve(const DiscretizedProblem& problem, std::optional<double> cutoff = std::nullopt,
                      double rank_tol = kDefaultRankTol);

enum class SvdCost { norm, chi_squared };

struct ConstrainedSvdOptions {
    SvdCost cost = SvdCost::norm;
    double relative_tolerance = 1e-6;
    double absolute_floor = 1e-10;
    int continuation_steps = 8;
    double penalty_growth = 10.0;
};

struct ConstrainedSvdResult {
    Vector object;
    Vector coefficients;
    /// c_l - sum_j g_l(x_j) dx A_j at return.
    Vector residuals;
    int continuation_steps = 0;
    double cost = 0.0;
};

/**
 * Picks coefficients inside b_i +- db_i that satisfy the problem's integral
 * constraints while minimizing the selected cost (solution norm or chi^2).
 * Uses the first coeffs.b.size() singular functions.
 *
 * Equality constraints are enforced by a penalty continuation with
 * multiplier updates; each step solves a box-constrained quadratic program.
 * Throws InfeasibleError when the tolerance is still missed after the last
 * continuation step.
 */
ConstrainedSvdResult constrained_svd_solve(const DiscretizedProblem& problem,
                                           const SingularSystem& system,
                                           const CoefficientSet& coeffs,
                                           const ConstrainedSvdOptions& options = {});

}  // namespace invprob
