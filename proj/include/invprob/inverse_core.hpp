#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "invprob/errors.hpp"

namespace invprob {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/**
 * Uniform discretization of the object interval [a, b] into N points,
 * endpoints included: x_1 = a, x_N = b, dx = (b - a) / (N - 1).
 */
class ObjectGrid {
public:
    ObjectGrid(double a, double b, std::size_t n);

    double a() const { return a_; }
    double b() const { return b_; }
    std::size_t size() const { return static_cast<std::size_t>(points_.size()); }
    double dx() const { return dx_; }
    const Vector& points() const { return points_; }
    double operator[](std::size_t j) const { return points_[static_cast<Eigen::Index>(j)]; }

private:
    double a_;
    double b_;
    double dx_;
    Vector points_;
};

/// Measurement abscissae y_i, measured values G~_i and their standard deviations.
class DataSet {
public:
    DataSet(Vector y, Vector values, Vector sigmas);

    std::size_t size() const { return static_cast<std::size_t>(y_.size()); }
    const Vector& y() const { return y_; }
    const Vector& values() const { return values_; }
    const Vector& sigmas() const { return sigmas_; }

    DataSet with_values(Vector values) const;

private:
    Vector y_;
    Vector values_;
    Vector sigmas_;
};

/// Presumed support (a_s, b_s) of the object; points outside are forced to zero.
struct SupportInterval {
    SupportInterval(double lower_, double upper_);

    bool contains(double x) const { return x > lower && x < upper; }

    double lower;
    double upper;
};

using KernelFunction = std::function<double(double x, double y)>;

struct KernelSpec {
    KernelFunction evaluate;
    std::optional<SupportInterval> support;
};

/// Integral condition  int g(x) A(x) dx = c.  The stiffness is only used by the
/// maximum entropy penalty term.
struct IntegralConstraint {
    std::string name;
    std::function<double(double)> weight;
    double target = 0.0;
    double stiffness = 0.0;
};

/// Pointwise bound l <= A(x) <= u.
struct BoundConstraint {
    double x = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};

/**
 * Linear map from a gridded object to the data points, G_i = sum_j K_ij A_j,
 * together with the data and the a priori constraints.  Immutable.
 */
class DiscretizedProblem {
public:
    DiscretizedProblem(ObjectGrid grid, DataSet data, Matrix kernel_matrix,
                       std::vector<IntegralConstraint> integral_constraints = {},
                       std::vector<BoundConstraint> bound_constraints = {},
                       std::optional<SupportInterval> support = std::nullopt);

    const ObjectGrid& grid() const { return grid_; }
    const DataSet& data() const { return data_; }
    const Matrix& kernel_matrix() const { return kmatrix_; }
    const std::vector<IntegralConstraint>& integral_constraints() const { return integral_; }
    const std::vector<BoundConstraint>& bound_constraints() const { return bounds_; }
    const std::optional<SupportInterval>& support() const { return support_; }

    /// Rows g_l(x_j) dx of the discretized integral constraints (L x N).
    const Matrix& constraint_matrix() const { return constraint_matrix_; }
    /// Targets c_l.
    const Vector& constraint_targets() const { return constraint_targets_; }

    DiscretizedProblem with_data(DataSet data) const;
    DiscretizedProblem with_constraints(std::vector<IntegralConstraint> integral,
                                        std::vector<BoundConstraint> bounds = {}) const;

private:
    ObjectGrid grid_;
    DataSet data_;
    Matrix kmatrix_;
    std::vector<IntegralConstraint> integral_;
    std::vector<BoundConstraint> bounds_;
    std::optional<SupportInterval> support_;
    Matrix constraint_matrix_;
    Vector constraint_targets_;
};

DiscretizedProblem discretize_kernel(const KernelSpec& kernel, const ObjectGrid& grid,
                                     const DataSet& data);

Vector apply_forward(const DiscretizedProblem& problem, const Vector& object);

/// Data-space inner product for uncorrelated data.  Every data-space
/// projection goes through here; a covariance-weighted variant would replace
/// this one function.
double inner_product_data(const Vector& v, const Vector& w);

/// (G~_i - G_i) / sigma_i
Vector normalized_residuals(const DiscretizedProblem& problem, const Vector& object);

/// Unhalved chi^2 = sum_i ((G~_i - G_i) / sigma_i)^2.
double chi_squared(const DiscretizedProblem& problem, const Vector& object);

double rmse(const Vector& object, const Vector& reference);

/// c_l - sum_j g_l(x_j) dx A_j for every integral constraint.
Vector constraint_residuals(const DiscretizedProblem& problem, const Vector& object);

}  // namespace invprob
