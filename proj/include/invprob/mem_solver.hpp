#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "invprob/inverse_core.hpp"

namespace invprob {

/**
 * Parametrized family of default models M(x; f) with box bounds on f.
 * Sampled models are floored at `floor_rel * max(M)` so logarithms stay finite.
 */
class ModelClass {
public:
    using Evaluator = std::function<double(double x, std::span<const double> params)>;

    ModelClass(std::string name, Evaluator evaluator, std::vector<std::string> param_names,
               Vector lower, Vector upper);

    const std::string& name() const { return name_; }
    std::size_t parameter_count() const { return static_cast<std::size_t>(lower_.size()); }
    const std::vector<std::string>& parameter_names() const { return param_names_; }
    const Vector& lower() const { return lower_; }
    const Vector& upper() const { return upper_; }

    bool in_bounds(const Vector& params) const;
    Vector clamp(const Vector& params) const;

    /// Raw samples M(x_j; f), no floor applied.
    Vector sample(const ObjectGrid& grid, const Vector& params) const;
    /// Samples with the positivity floor applied.
    Vector evaluate(const ObjectGrid& grid, const Vector& params, double floor_rel = 1e-12) const;

private:
    std::string name_;
    Evaluator evaluator_;
    std::vector<std::string> param_names_;
    Vector lower_;
    Vector upper_;
};

/// c N(x; mu, sigma).  Parameters (c, mu, sigma).
ModelClass gaussian_model_class(double mu_lo = -5.0, double mu_hi = 5.0, double sigma_lo = 0.1,
                                double sigma_hi = 5.0);
/// c1 N(x; mu1, sigma1) + c2 N(x; mu2, sigma2).  Parameters (c1, c2, mu1, mu2, sigma1, sigma2).
ModelClass two_gaussian_model_class(double mu_lo = -5.0, double mu_hi = 5.0, double sigma_lo = 0.1,
                                    double sigma_hi = 5.0);

/// Floors every entry at floor_rel * max(model).
Vector floor_model(const Vector& model, double floor_rel);

enum class MemVariant { standard, direct, exponential };

struct MemIterate {
    int iteration = 0;
    double objective = 0.0;
    double step_norm = 0.0;
    Vector constraint_residuals;
};

struct MEMConfig {
    double alpha = 1.0;
    double xi = 0.1;
    /// Stop when successive iterates differ by less than eps; unset means 1e-6 * ||M||.
    std::optional<double> eps;
    int max_iters = 500;
    /// Positivity floor relative to max(M).
    double floor_rel = 1e-12;
    /// Inner solver used by the self-consistent engine.
    MemVariant inner = MemVariant::standard;
    int max_outer_iters = 30;
    std::function<void(const MemIterate&)> sink;

    void validate() const;
};

struct MEMSolution {
    Vector object;
    double objective = 0.0;
    int iterations = 0;
    bool converged = false;
    /// Final model parameters (self-consistent engine only).
    Vector model_params;
    Vector model;
    /// Exponential variant: some f_i hit the [-40, 40] guard.
    bool clamp_active = false;
    Vector constraint_residuals;
};

/// -sum_j A_j log(A_j / M_j), with 0 log 0 = 0.
double entropy(const Vector& object, const Vector& model);

/// -sum_j p_j log p_j with p = A / sum(A); the model-free entropy.
double noninformative_entropy(const Vector& object);

/// F(A) = 1/2 chi^2(A) + alpha sum_j A_j log(A_j / M_j).
double likelihood(const DiscretizedProblem& problem, const Vector& object, const Vector& model,
                  double alpha);

/**
 * Objective the MEM solvers minimize:
 *   1/2 chi^2 + alpha sum_j (A_j log(A_j/M_j) - A_j + M_j) + sum_l theta_l (c_l - g_l.A)^2.
 * The entropy part equals the relative-entropy term of `likelihood` whenever
 * sum A = sum M, and its second-order expansion is exactly the gamma/omega
 * quadratic used by the standard solver.
 */
class MemObjective {
public:
    enum class Entropy { relative, generalized };

    MemObjective(const DiscretizedProblem& problem, Vector model, double alpha,
                 Entropy form = Entropy::generalized, bool with_penalties = true);

    double value(const Vector& object) const;
    Vector gradient(const Vector& object) const;

    const DiscretizedProblem& problem() const { return *problem_; }
    const Vector& model() const { return model_; }
    double alpha() const { return alpha_; }

    /// Stacked data and penalty rows: B = [K; g_l], targets t, inverse weights W^{-1}.
    const Matrix& rows() const { return rows_; }
    const Vector& targets() const { return targets_; }
    const Vector& inverse_weights() const { return inverse_weights_; }

private:
    const DiscretizedProblem* problem_;
    Vector model_;
    double alpha_;
    Entropy form_;
    Matrix rows_;
    Vector targets_;
    Vector inverse_weights_;
};

struct QuadraticTerms {
    Vector gamma;
    Vector omega;
};

/// gamma_i = A0_i (1 - log(A0_i/M_i)),
/// omega_i = M_i - A0_i (1 - log(A0_i/M_i) + 1/2 log^2(A0_i/M_i)).
QuadraticTerms std_mem_quadratic_terms(const Vector& expansion_point, const Vector& model);

/// Iterated least squares with mixing parameter xi.
MEMSolution std_mem_solve(const DiscretizedProblem& problem, const Vector& model, const MEMConfig& config);

/// Projected Newton minimization of the objective, A kept above the positivity floor.
MEMSolution mem_solve_direct(const DiscretizedProblem& problem, const Vector& model,
                             const MEMConfig& config);

/// Minimization over f with A = M exp(f), f clamped to [-40, 40].
MEMSolution exp_mem_solve(const DiscretizedProblem& problem, const Vector& model,
                          const MEMConfig& config);

MEMSolution mem_solve(MemVariant variant, const DiscretizedProblem& problem, const Vector& model,
                      const MEMConfig& config);

/// (sum A M)^2 / (sum A^2 sum M^2)
double overlap(const Vector& object, const Vector& model);

struct ModelFit {
    Vector params;
    double overlap = 0.0;
    bool stagnated = false;
};

/// Bounded Nelder-Mead maximization of overlap(A, M(.; f)) starting from f0.
ModelFit fit_model(const Vector& object, const ModelClass& model_class, const ObjectGrid& grid,
                   const Vector& initial_params);

/// Self-consistent engine: alternate an inner MEM solve with overlap refits of the model.
MEMSolution sc_mem_solve(const DiscretizedProblem& problem, const ModelClass& model_class,
                         const Vector& initial_params, const MEMConfig& config);

}  // namespace invprob
