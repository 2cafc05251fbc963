#include "invprob/inverse_core.hpp"

#include <cmath>
#include <sstream>
#include <utility>

namespace invprob {

namespace {

void require_same_size(Eigen::Index lhs, Eigen::Index rhs, const char* what) {
    if (lhs != rhs) {
        std::ostringstream msg;
        msg << what << ": size mismatch (" << lhs << " vs " << rhs << ")";
        throw DimensionError(msg.str());
    }
}

}  // namespace

ObjectGrid::ObjectGrid(double a, double b, std::size_t n) : a_(a), b_(b), dx_(0.0) {
    if (n < 2) {
        throw std::invalid_argument("ObjectGrid: at least 2 points required");
    }
    if (!std::isfinite(a) || !std::isfinite(b) || !(b > a)) {
        throw std::invalid_argument("ObjectGrid: bounds must be finite with a < b");
    }
    const auto count = static_cast<Eigen::Index>(n);
    dx_ = (b - a) / static_cast<double>(n - 1);
    points_.resize(count);
    for (Eigen::Index j = 0; j < count; ++j) {
        points_[j] = a + static_cast<double>(j) * dx_;
    }
    points_[count - 1] = b;
}

DataSet::DataSet(Vector y, Vector values, Vector sigmas)
    : y_(std::move(y)), values_(std::move(values)), sigmas_(std::move(sigmas)) {
    if (y_.size() < 1) {
        throw std::invalid_argument("DataSet: at least one data point required");
    }
    require_same_size(y_.size(), values_.size(), "DataSet values");
    require_same_size(y_.size(), sigmas_.size(), "DataSet sigmas");
    for (Eigen::Index i = 0; i < y_.size(); ++i) {
        if (!(sigmas_[i] > 0.0) || !std::isfinite(sigmas_[i])) {
            throw std::invalid_argument("DataSet: sigma_" + std::to_string(i) + " must be positive");
        }
        if (!std::isfinite(values_[i]) || !std::isfinite(y_[i])) {
            throw std::invalid_argument("DataSet: non-finite entry at index " + std::to_string(i));
        }
        if (i > 0 && !(y_[i] > y_[i - 1])) {
            throw std::invalid_argument("DataSet: abscissae must be strictly increasing");
        }
    }
}

DataSet DataSet::with_values(Vector values) const {
    return DataSet(y_, std::move(values), sigmas_);
}

SupportInterval::SupportInterval(double lower_, double upper_) : lower(lower_), upper(upper_) {
    if (!(lower < upper)) {
        throw std::invalid_argument("SupportInterval: lower bound must be below upper bound");
    }
}

DiscretizedProblem::DiscretizedProblem(ObjectGrid grid, DataSet data, Matrix kernel_matrix,
                                       std::vector<IntegralConstraint> integral_constraints,
                                       std::vector<BoundConstraint> bound_constraints,
                                       std::optional<SupportInterval> support)
    : grid_(std::move(grid)),
      data_(std::move(data)),
      kmatrix_(std::move(kernel_matrix)),
      integral_(std::move(integral_constraints)),
      bounds_(std::move(bound_constraints)),
      support_(support) {
    require_same_size(kmatrix_.rows(), static_cast<Eigen::Index>(data_.size()), "kernel rows");
    require_same_size(kmatrix_.cols(), static_cast<Eigen::Index>(grid_.size()), "kernel columns");

    if (support_) {
        for (Eigen::Index j = 0; j < kmatrix_.cols(); ++j) {
            if (!support_->contains(grid_.points()[j])) {
                kmatrix_.col(j).setZero();
            }
        }
    }

    const auto n = static_cast<Eigen::Index>(grid_.size());
    constraint_matrix_.resize(static_cast<Eigen::Index>(integral_.size()), n);
    constraint_targets_.resize(static_cast<Eigen::Index>(integral_.size()));
    for (std::size_t l = 0; l < integral_.size(); ++l) {
        const auto& c = integral_[l];
        if (!(c.stiffness >= 0.0)) {
            throw std::invalid_argument("IntegralConstraint '" + c.name + "': stiffness must be >= 0");
        }
        if (!c.weight) {
            throw std::invalid_argument("IntegralConstraint '" + c.name + "': missing weight function");
        }
        const auto row = static_cast<Eigen::Index>(l);
        for (Eigen::Index j = 0; j < n; ++j) {
            const double g = c.weight(grid_.points()[j]);
            if (!std::isfinite(g)) {
                throw EvaluationError("IntegralConstraint '" + c.name + "': non-finite weight at x = " +
                                      std::to_string(grid_.points()[j]));
            }
            constraint_matrix_(row, j) = g * grid_.dx();
        }
        constraint_targets_[row] = c.target;
    }
    for (const auto& b : bounds_) {
        if (!(b.lower <= b.upper)) {
            throw std::invalid_argument("BoundConstraint: lower bound exceeds upper bound");
        }
    }
}

DiscretizedProblem DiscretizedProblem::with_data(DataSet data) const {
    return DiscretizedProblem(grid_, std::move(data), kmatrix_, integral_, bounds_, support_);
}

DiscretizedProblem DiscretizedProblem::with_constraints(std::vector<IntegralConstraint> integral,
                                                        std::vector<BoundConstraint> bounds) const {
    return DiscretizedProblem(grid_, data_, kmatrix_, std::move(integral), std::move(bounds), support_);
}

DiscretizedProblem discretize_kernel(const KernelSpec& kernel, const ObjectGrid& grid,
                                     const DataSet& data) {
    if (!kernel.evaluate) {
        throw std::invalid_argument("discretize_kernel: kernel has no evaluator");
    }
    const auto rows = static_cast<Eigen::Index>(data.size());
    const auto cols = static_cast<Eigen::Index>(grid.size());
    Matrix k(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const double y = data.y()[i];
        for (Eigen::Index j = 0; j < cols; ++j) {
            const double x = grid.points()[j];
            const double value = kernel.evaluate(x, y);
            if (!std::isfinite(value)) {
                std::ostringstream msg;
                msg.precision(17);
                msg << "discretize_kernel: non-finite kernel value at (x = " << x << ", y = " << y << ")";
                throw EvaluationError(msg.str());
            }
            k(i, j) = value * grid.dx();
        }
    }
    return DiscretizedProblem(grid, data, std::move(k), {}, {}, kernel.support);
}

Vector apply_forward(const DiscretizedProblem& problem, const Vector& object) {
    require_same_size(object.size(), problem.kernel_matrix().cols(), "apply_forward");
    return problem.kernel_matrix() * object;
}

double inner_product_data(const Vector& v, const Vector& w) {
    require_same_size(v.size(), w.size(), "inner_product_data");
    double sum = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        sum += v[i] * w[i];
    }
    return sum;
}

Vector normalized_residuals(const DiscretizedProblem& problem, const Vector& object) {
    const Vector g = apply_forward(problem, object);
    const auto& data = problem.data();
    return ((data.values() - g).array() / data.sigmas().array()).matrix();
}

double chi_squared(const DiscretizedProblem& problem, const Vector& object) {
    const Vector r = normalized_residuals(problem, object);
    return inner_product_data(r, r);
}

double rmse(const Vector& object, const Vector& reference) {
    require_same_size(object.size(), reference.size(), "rmse");
    if (object.size() == 0) {
        throw DimensionError("rmse: empty vectors");
    }
    return std::sqrt((object - reference).squaredNorm() / static_cast<double>(object.size()));
}

Vector constraint_residuals(const DiscretizedProblem& problem, const Vector& object) {
    require_same_size(object.size(), static_cast<Eigen::Index>(problem.grid().size()),
                      "constraint_residuals");
    return problem.constraint_targets() - problem.constraint_matrix() * object;
}

}  // namespace invprob
