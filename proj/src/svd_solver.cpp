#include "invprob/svd_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/SVD>

#include "box_qp.hpp"

namespace invprob {

Matrix build_gram(const DiscretizedProblem& problem) {
    const Matrix& k = problem.kernel_matrix();
    Matrix gram = k * k.transpose();
    // Exact symmetry; the product above can differ in the last bit.
    return 0.5 * (gram + gram.transpose());
}

SingularSystem compute_singular_system(const DiscretizedProblem& problem, double rank_tol) {
    if (!(rank_tol > 0.0 && rank_tol < 1.0)) {
        throw std::invalid_argument("compute_singular_system: rank_tol must lie in (0, 1)");
    }
    const Matrix& k = problem.kernel_matrix();
    Eigen::JacobiSVD<Matrix> svd(k, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& sv = svd.singularValues();
    if (sv.size() == 0 || !(sv[0] > 0.0)) {
        throw DegenerateProblemError("compute_singular_system: kernel matrix has no positive singular value");
    }

    Eigen::Index rank = 0;
    while (rank < sv.size() && sv[rank] > 0.0 && sv[rank] / sv[0] >= rank_tol) {
        ++rank;
    }

    SingularSystem system;
    system.lambdas = sv.head(rank);
    system.data_vectors = svd.matrixU().leftCols(rank);
    system.object_functions = svd.matrixV().leftCols(rank);

    for (Eigen::Index i = 0; i < rank; ++i) {
        auto v = system.data_vectors.col(i);
        const double cut = 1e-8 * v.cwiseAbs().maxCoeff();
        for (Eigen::Index r = 0; r < v.size(); ++r) {
            if (std::abs(v[r]) > cut) {
                if (v[r] < 0.0) {
                    v = -v;
                    system.object_functions.col(i) *= -1.0;
                }
                break;
            }
        }
    }
    return system;
}

CoefficientSet expansion_coefficients(const SingularSystem& system, const DataSet& data) {
    const auto m = static_cast<Eigen::Index>(system.rank());
    if (m == 0) {
        throw std::invalid_argument("expansion_coefficients: empty singular system");
    }
    if (system.data_vectors.rows() != static_cast<Eigen::Index>(data.size())) {
        throw DimensionError("expansion_coefficients: data size does not match singular vectors");
    }
    CoefficientSet coeffs;
    coeffs.b.resize(m);
    coeffs.db.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const Vector v = system.data_vectors.col(i);
        coeffs.b[i] = inner_product_data(v, data.values()) / system.lambdas[i];
        coeffs.db[i] = inner_product_data(v.cwiseAbs(), data.sigmas()) / system.lambdas[i];
    }
    return coeffs;
}

Truncation truncation_index(const SingularSystem& system, const DataSet& data) {
    Truncation t;
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double g = std::abs(data.values()[static_cast<Eigen::Index>(i)]);
        if (g == 0.0) {
            t.skipped_points.push_back(i);
            continue;
        }
        sum += data.sigmas()[static_cast<Eigen::Index>(i)] / g;
        ++used;
    }
    t.threshold = used > 0 ? sum / static_cast<double>(used) : std::numeric_limits<double>::infinity();
    t.r_cut = cutoff_index(system, t.threshold);
    return t;
}

std::size_t cutoff_index(const SingularSystem& system, double cutoff) {
    std::size_t r = 0;
    if (system.rank() == 0) {
        return r;
    }
    const double lead = system.lambdas[0];
    while (r < system.rank() && system.lambdas[static_cast<Eigen::Index>(r)] / lead >= cutoff) {
        ++r;
    }
    return r;
}

Vector reconstruct(const SingularSystem& system, const CoefficientSet& coeffs, std::size_t r_cut) {
    if (r_cut > system.rank() || static_cast<Eigen::Index>(r_cut) > coeffs.b.size()) {
        std::ostringstream msg;
        msg << "reconstruct: r_cut = " << r_cut << " outside [0, " << system.rank() << "]";
        throw std::out_of_range(msg.str());
    }
    const auto r = static_cast<Eigen::Index>(r_cut);
    if (r == 0) {
        return Vector::Zero(system.object_functions.rows());
    }
    return system.object_functions.leftCols(r) * coeffs.b.head(r);
}

TsvdResult tsvd_solve(const DiscretizedProblem& problem, std::optional<double> cutoff, double rank_tol) {
    const SingularSystem system = compute_singular_system(problem, rank_tol);
    const CoefficientSet coeffs = expansion_coefficients(system, problem.data());
    TsvdResult result;
    result.rank = system.rank();
    if (cutoff) {
        if (!(*cutoff >= 0.0)) {
            throw std::invalid_argument("tsvd_solve: cut-off must be nonnegative");
        }
        result.cutoff = *cutoff;
        result.r_cut = cutoff_index(system, *cutoff);
    } else {
        const Truncation t = truncation_index(system, problem.data());
        result.cutoff = t.threshold;
        result.r_cut = t.r_cut;
    }
    result.object = reconstruct(system, coeffs, result.r_cut);
    return result;
}

ConstrainedSvdResult constrained_svd_solve(const DiscretizedProblem& problem,
                                           const SingularSystem& system,
                                           const CoefficientSet& coeffs,
                                           const ConstrainedSvdOptions& options) {
    const auto& constraints = problem.integral_constraints();
    if (constraints.empty()) {
        throw std::invalid_argument("constrained_svd_solve: at least one integral constraint required");
    }
    const Eigen::Index m = coeffs.b.size();
    if (m == 0 || m > static_cast<Eigen::Index>(system.rank()) || coeffs.db.size() != m) {
        throw DimensionError("constrained_svd_solve: coefficient set does not match the singular system");
    }
    if ((coeffs.db.array() < 0.0).any()) {
        throw std::invalid_argument("constrained_svd_solve: box widths must be nonnegative");
    }

    const Matrix basis = system.object_functions.leftCols(m);
    const Matrix cmat = problem.constraint_matrix() * basis;  // L x m
    const Vector& targets = problem.constraint_targets();
    const Eigen::Index nl = cmat.rows();

    Vector tolerance(nl);
    Vector weight(nl);
    for (Eigen::Index l = 0; l < nl; ++l) {
        tolerance[l] = std::max(options.relative_tolerance * std::abs(targets[l]), options.absolute_floor);
        const double scale = std::max(std::abs(targets[l]), options.absolute_floor);
        weight[l] = 1.0 / (scale * scale);
    }

    // Cost written as 1/2 b^T H b - h^T b.
    Matrix hess(m, m);
    Vector lin(m);
    double cost_constant = 0.0;
    if (options.cost == SvdCost::norm) {
        hess = 2.0 * Matrix::Identity(m, m);
        lin.setZero();
    } else {
        const auto& data = problem.data();
        const Vector inv_sigma = data.sigmas().cwiseInverse();
        const Matrix p = inv_sigma.asDiagonal() * system.data_vectors.leftCols(m) *
                         system.lambdas.head(m).asDiagonal();
        const Vector d = data.values().cwiseProduct(inv_sigma);
        hess = 2.0 * p.transpose() * p;
        lin = 2.0 * p.transpose() * d;
        cost_constant = d.squaredNorm();
    }
    auto cost_of = [&](const Vector& b) { return 0.5 * b.dot(hess * b) - lin.dot(b) + cost_constant; };

    const Vector lower = coeffs.b - coeffs.db;
    const Vector upper = coeffs.b + coeffs.db;

    const Matrix wc = weight.asDiagonal() * cmat;
    const double penalty_curvature = (cmat.transpose() * wc).diagonal().mean();
    double mu = 10.0 * std::max(hess.diagonal().mean(), 1e-300) / std::max(penalty_curvature, 1e-300);
    Vector multipliers = Vector::Zero(nl);

    ConstrainedSvdResult result;
    Vector b = coeffs.b;
    double best_violation = std::numeric_limits<double>::infinity();
    Vector best_b = b;

    const int steps = std::max(options.continuation_steps, 1);
    for (int step = 0; step < steps; ++step) {
        // Augmented Lagrangian: cost + sum nu_l r_l + mu/2 sum w_l r_l^2, r = C b - c.
        const Matrix h_total = hess + mu * cmat.transpose() * wc;
        const Vector l_total = lin + mu * wc.transpose() * targets - cmat.transpose() * multipliers;
        b = detail::solve_box_qp(h_total, l_total, lower, upper, b).x;

        const Vector r = cmat * b - targets;
        double violation = 0.0;
        bool satisfied = true;
        for (Eigen::Index l = 0; l < nl; ++l) {
            violation = std::max(violation, std::abs(r[l]) / tolerance[l]);
            satisfied = satisfied && std::abs(r[l]) <= tolerance[l];
        }
        result.continuation_steps = step + 1;
        if (violation < best_violation) {
            best_violation = violation;
            best_b = b;
        }
        if (satisfied) {
            break;
        }
        multipliers += mu * weight.cwiseProduct(r);
        mu *= options.penalty_growth;
    }

    const Vector residual = targets - cmat * best_b;
    bool satisfied = true;
    for (Eigen::Index l = 0; l < nl; ++l) {
        satisfied = satisfied && std::abs(residual[l]) <= tolerance[l];
    }
    if (!satisfied) {
        std::ostringstream msg;
        msg.precision(6);
        msg << "constrained_svd_solve: constraints infeasible within the coefficient box; best residual "
            << residual.cwiseAbs().maxCoeff();
        throw InfeasibleError(msg.str(), residual.cwiseAbs().maxCoeff());
    }

    result.coefficients = best_b;
    result.object = basis * best_b;
    result.residuals = constraint_residuals(problem, result.object);
    result.cost = cost_of(best_b);
    return result;
}

}  // namespace invprob
