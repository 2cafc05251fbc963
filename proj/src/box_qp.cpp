#include "box_qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace invprob::detail {

namespace {

enum class State { free, at_lower, at_upper };

}  // namespace

BoxQpResult solve_box_qp(const Eigen::MatrixXd& hessian, const Eigen::VectorXd& linear,
                         const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                         const Eigen::VectorXd& start) {
    const Eigen::Index n = linear.size();
    BoxQpResult result;
    result.x = start.cwiseMax(lower).cwiseMin(upper);

    // Tiny ridge keeps the reduced systems solvable when H is only semidefinite.
    const double ridge = 1e-13 * std::max(hessian.diagonal().cwiseAbs().maxCoeff(), 1e-300);

    std::vector<State> state(static_cast<std::size_t>(n), State::free);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (lower[i] == upper[i]) {
            state[static_cast<std::size_t>(i)] = State::at_lower;
        }
    }

    const int max_iterations = static_cast<int>(10 * n + 50);
    for (int iter = 0; iter < max_iterations; ++iter) {
        result.iterations = iter + 1;

        std::vector<Eigen::Index> free_idx;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (state[static_cast<std::size_t>(i)] == State::free) {
                free_idx.push_back(i);
            }
        }

        Eigen::VectorXd candidate = result.x;
        if (!free_idx.empty()) {
            const auto nf = static_cast<Eigen::Index>(free_idx.size());
            Eigen::MatrixXd hff(nf, nf);
            Eigen::VectorXd rhs(nf);
            for (Eigen::Index a = 0; a < nf; ++a) {
                const Eigen::Index i = free_idx[static_cast<std::size_t>(a)];
                double r = linear[i];
                for (Eigen::Index j = 0; j < n; ++j) {
                    if (state[static_cast<std::size_t>(j)] != State::free) {
                        r -= hessian(i, j) * result.x[j];
                    }
                }
                rhs[a] = r;
                for (Eigen::Index b = 0; b < nf; ++b) {
                    hff(a, b) = hessian(i, free_idx[static_cast<std::size_t>(b)]);
                }
                hff(a, a) += ridge;
            }
            const Eigen::VectorXd xf = hff.ldlt().solve(rhs);
            for (Eigen::Index a = 0; a < nf; ++a) {
                candidate[free_idx[static_cast<std::size_t>(a)]] = xf[a];
            }
        }

        // Longest feasible step toward the candidate.
        double step = 1.0;
        Eigen::Index blocking = -1;
        bool blocking_upper = false;
        for (Eigen::Index i : free_idx) {
            const double d = candidate[i] - result.x[i];
            if (d < 0.0 && candidate[i] < lower[i]) {
                const double t = (lower[i] - result.x[i]) / d;
                if (t < step) {
                    step = t;
                    blocking = i;
                    blocking_upper = false;
                }
            } else if (d > 0.0 && candidate[i] > upper[i]) {
                const double t = (upper[i] - result.x[i]) / d;
                if (t < step) {
                    step = t;
                    blocking = i;
                    blocking_upper = true;
                }
            }
        }

        if (blocking >= 0) {
            step = std::clamp(step, 0.0, 1.0);
            result.x += step * (candidate - result.x);
            result.x[blocking] = blocking_upper ? upper[blocking] : lower[blocking];
            state[static_cast<std::size_t>(blocking)] = blocking_upper ? State::at_upper : State::at_lower;
            result.x = result.x.cwiseMax(lower).cwiseMin(upper);
            continue;
        }

        result.x = candidate.cwiseMax(lower).cwiseMin(upper);

        // KKT check on the bound set: release the worst violator.
        const Eigen::VectorXd gradient = hessian * result.x - linear;
        const double scale = std::max(gradient.cwiseAbs().maxCoeff(), linear.cwiseAbs().maxCoeff());
        const double tol = 1e-12 * std::max(scale, 1e-300);
        Eigen::Index worst = -1;
        double worst_violation = tol;
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto s = state[static_cast<std::size_t>(i)];
            if (s == State::free || lower[i] == upper[i]) {
                continue;
            }
            // At a lower bound the objective must not decrease when moving up.
            const double violation = (s == State::at_lower) ? -gradient[i] : gradient[i];
            if (violation > worst_violation) {
                worst_violation = violation;
                worst = i;
            }
        }
        if (worst < 0) {
            result.converged = true;
            return result;
        }
        state[static_cast<std::size_t>(worst)] = State::free;
    }
    return result;
}

}  // namespace invprob::detail
