#pragma once

#include <Eigen/Dense>

namespace invprob::detail {

struct BoxQpResult {
    Eigen::VectorXd x;
    int iterations = 0;
    bool converged = false;
};

/**
 * Primal active-set solver for
 *     minimize 1/2 x^T H x - h^T x   subject to  lower <= x <= upper
 * with H symmetric positive semidefinite.  Intended for small dense problems
 * (a few dozen variables).  `start` must lie inside the box.
 */
BoxQpResult solve_box_qp(const Eigen::MatrixXd& hessian, const Eigen::VectorXd& linear,
                         const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                         const Eigen::VectorXd& start);

}  // namespace invprob::detail
