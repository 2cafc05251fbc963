#include <algorithm>
#include <cmath>
#include <sstream>

#include "invprob/mem_solver.hpp"

namespace invprob {

namespace {

void require_same_size(Eigen::Index lhs, Eigen::Index rhs, const char* what) {
    if (lhs != rhs) {
        std::ostringstream msg;
        msg << what << ": size mismatch (" << lhs << " vs " << rhs << ")";
        throw DimensionError(msg.str());
    }
}

void require_positive_model(const Vector& model, const char* what) {
    for (Eigen::Index j = 0; j < model.size(); ++j) {
        if (!(model[j] > 0.0)) {
            std::ostringstream msg;
            msg << what << ": model must be positive (M_" << j << " = " << model[j] << ")";
            throw DomainError(msg.str());
        }
    }
}

// A log(A/M) with the 0 log 0 = 0 convention.
double xlogx_over(double a, double m) {
    if (a < 0.0) {
        throw DomainError("entropy: negative object value");
    }
    return a == 0.0 ? 0.0 : a * std::log(a / m);
}

}  // namespace

double entropy(const Vector& object, const Vector& model) {
    require_same_size(object.size(), model.size(), "entropy");
    require_positive_model(model, "entropy");
    double sum = 0.0;
    for (Eigen::Index j = 0; j < object.size(); ++j) {
        sum += xlogx_over(object[j], model[j]);
    }
    return -sum;
}

double noninformative_entropy(const Vector& object) {
    if ((object.array() < 0.0).any()) {
        throw DomainError("noninformative_entropy: negative object value");
    }
    const double total = object.sum();
    if (!(total > 0.0)) {
        throw DomainError("noninformative_entropy: object has zero mass");
    }
    double sum = 0.0;
    for (Eigen::Index j = 0; j < object.size(); ++j) {
        const double p = object[j] / total;
        if (p > 0.0) {
            sum += p * std::log(p);
        }
    }
    return -sum;
}

double likelihood(const DiscretizedProblem& problem, const Vector& object, const Vector& model,
                  double alpha) {
    return 0.5 * chi_squared(problem, object) - alpha * entropy(object, model);
}

MemObjective::MemObjective(const DiscretizedProblem& problem, Vector model, double alpha, Entropy form,
                           bool with_penalties)
    : problem_(&problem), model_(std::move(model)), alpha_(alpha), form_(form) {
    require_same_size(model_.size(), static_cast<Eigen::Index>(problem.grid().size()), "MemObjective");
    require_positive_model(model_, "MemObjective");
    if (!(alpha_ > 0.0)) {
        throw std::invalid_argument("MemObjective: alpha must be positive");
    }

    const Matrix& k = problem.kernel_matrix();
    const auto& data = problem.data();
    std::vector<Eigen::Index> penalty_rows;
    if (with_penalties) {
        const auto& constraints = problem.integral_constraints();
        for (std::size_t l = 0; l < constraints.size(); ++l) {
            if (constraints[l].stiffness > 0.0) {
                penalty_rows.push_back(static_cast<Eigen::Index>(l));
            }
        }
    }
    const Eigen::Index nt = k.rows();
    const auto np = static_cast<Eigen::Index>(penalty_rows.size());
    rows_.resize(nt + np, k.cols());
    targets_.resize(nt + np);
    inverse_weights_.resize(nt + np);
    rows_.topRows(nt) = k;
    targets_.head(nt) = data.values();
    inverse_weights_.head(nt) = data.sigmas().array().square().matrix();
    for (Eigen::Index p = 0; p < np; ++p) {
        const Eigen::Index l = penalty_rows[static_cast<std::size_t>(p)];
        rows_.row(nt + p) = problem.constraint_matrix().row(l);
        targets_[nt + p] = problem.constraint_targets()[l];
        // theta (c - g.A)^2 == 1/2 (c - g.A)^2 / (1 / (2 theta))
        inverse_weights_[nt + p] =
            1.0 / (2.0 * problem.integral_constraints()[static_cast<std::size_t>(l)].stiffness);
    }
}

double MemObjective::value(const Vector& object) const {
    require_same_size(object.size(), model_.size(), "MemObjective::value");
    const Vector r = rows_ * object - targets_;
    const double misfit = 0.5 * (r.array().square() / inverse_weights_.array()).sum();
    double ent = 0.0;
    for (Eigen::Index j = 0; j < object.size(); ++j) {
        ent += xlogx_over(object[j], model_[j]);
        if (form_ == Entropy::generalized) {
            ent += model_[j] - object[j];
        }
    }
    return misfit + alpha_ * ent;
}

Vector MemObjective::gradient(const Vector& object) const {
    require_same_size(object.size(), model_.size(), "MemObjective::gradient");
    if ((object.array() <= 0.0).any()) {
        throw DomainError("MemObjective::gradient: object must be strictly positive");
    }
    const Vector r = rows_ * object - targets_;
    Vector g = rows_.transpose() * (r.array() / inverse_weights_.array()).matrix();
    for (Eigen::Index j = 0; j < object.size(); ++j) {
        g[j] += alpha_ * (std::log(object[j] / model_[j]) + (form_ == Entropy::relative ? 1.0 : 0.0));
    }
    return g;
}

QuadraticTerms std_mem_quadratic_terms(const Vector& expansion_point, const Vector& model) {
    require_same_size(expansion_point.size(), model.size(), "std_mem_quadratic_terms");
    require_positive_model(model, "std_mem_quadratic_terms");
    QuadraticTerms terms;
    terms.gamma.resize(model.size());
    terms.omega.resize(model.size());
    for (Eigen::Index i = 0; i < model.size(); ++i) {
        const double a0 = expansion_point[i];
        if (!(a0 > 0.0)) {
            throw DomainError("std_mem_quadratic_terms: expansion point must be positive");
        }
        const double lg = std::log(a0 / model[i]);
        terms.gamma[i] = a0 * (1.0 - lg);
        terms.omega[i] = model[i] - a0 * (1.0 - lg + 0.5 * lg * lg);
    }
    return terms;
}

double overlap(const Vector& object, const Vector& model) {
    require_same_size(object.size(), model.size(), "overlap");
    const double aa = object.squaredNorm();
    const double mm = model.squaredNorm();
    if (!(aa > 0.0) || !(mm > 0.0)) {
        throw DomainError("overlap: zero-norm input");
    }
    const double am = object.dot(model);
    return std::clamp((am * am) / (aa * mm), 0.0, 1.0);
}

}  // namespace invprob
