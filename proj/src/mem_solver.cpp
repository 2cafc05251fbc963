#include "invprob/mem_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Cholesky>

namespace invprob {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kExpClamp = 40.0;
constexpr double kDivergenceNorm = 1e12;

double gaussian(double x, double mu, double sigma) {
    const double z = (x - mu) / sigma;
    return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * kPi));
}

/// Solves with S = W^{-1} + (1/alpha) B diag(a) B^T.
class DataSpaceSystem {
public:
    DataSpaceSystem(const MemObjective& objective, const Vector& a) : objective_(objective), a_(a) {
        const Matrix& b = objective.rows();
        Matrix s = (1.0 / objective.alpha()) * (b * a.asDiagonal() * b.transpose());
        s.diagonal() += objective.inverse_weights();
        ldlt_.compute(s);
        if (ldlt_.info() != Eigen::Success) {
            throw DegenerateProblemError("MEM: data-space system is singular");
        }
    }

    Vector solve(const Vector& rhs) const { return ldlt_.solve(rhs); }

    /// -H^{-1} g for H = B^T W B + alpha diag(1/a).
    Vector newton_step(const Vector& g) const {
        const double alpha = objective_.alpha();
        const Matrix& b = objective_.rows();
        const Vector ag = a_.cwiseProduct(g);
        const Vector z = solve(b * ag);
        return -(ag / alpha) + a_.cwiseProduct(b.transpose() * z) / (alpha * alpha);
    }

private:
    const MemObjective& objective_;
    const Vector& a_;
    Eigen::LDLT<Matrix> ldlt_;
};

double resolve_eps(const MEMConfig& config, const Vector& model) {
    return config.eps ? *config.eps : 1e-6 * model.norm();
}

void check_problem_model(const DiscretizedProblem& problem, const Vector& model, const char* what) {
    if (model.size() != static_cast<Eigen::Index>(problem.grid().size())) {
        std::ostringstream msg;
        msg << what << ": model has " << model.size() << " entries, grid has " << problem.grid().size();
        throw DimensionError(msg.str());
    }
    if (!model.allFinite()) {
        throw DomainError(std::string(what) + ": model contains non-finite values");
    }
}

void check_finite(const Vector& a, const char* what, int iteration) {
    if (!a.allFinite() || a.norm() > kDivergenceNorm) {
        std::ostringstream msg;
        msg << what << ": iteration diverged at step " << iteration;
        if (std::string(what) == "std_mem_solve") msg << ", try a smaller xi";
        throw DivergenceError(msg.str());
    }
}

void emit(const MEMConfig& config, const DiscretizedProblem& problem, int iteration, double objective,
          double step, const Vector& a) {
    if (config.sink) {
        MemIterate it;
        it.iteration = iteration;
        it.objective = objective;
        it.step_norm = step;
        it.constraint_residuals = constraint_residuals(problem, a);
        config.sink(it);
    }
}

std::optional<Eigen::Index> normalization_index(const DiscretizedProblem& problem) {
    const auto& constraints = problem.integral_constraints();
    for (std::size_t l = 0; l < constraints.size(); ++l) {
        if (constraints[l].name == "normalization" && constraints[l].stiffness > 0.0) {
            return static_cast<Eigen::Index>(l);
        }
    }
    return std::nullopt;
}

void renormalize(const DiscretizedProblem& problem, Vector& a) {
    const auto l = normalization_index(problem);
    if (!l) {
        return;
    }
    const double current = problem.constraint_matrix().row(*l).dot(a);
    const double target = problem.constraint_targets()[*l];
    if (current > 0.0 && target > 0.0) {
        a *= target / current;
    }
}

MEMSolution finish(const DiscretizedProblem& problem, const MemObjective& objective, Vector a,
                   int iterations, bool converged) {
    MEMSolution sol;
    sol.objective = objective.value(a);
    sol.object = std::move(a);
    sol.iterations = iterations;
    sol.converged = converged;
    sol.model = objective.model();
    sol.constraint_residuals = constraint_residuals(problem, sol.object);
    return sol;
}

}  // namespace

ModelClass::ModelClass(std::string name, Evaluator evaluator, std::vector<std::string> param_names,
                       Vector lower, Vector upper)
    : name_(std::move(name)),
      evaluator_(std::move(evaluator)),
      param_names_(std::move(param_names)),
      lower_(std::move(lower)),
      upper_(std::move(upper)) {
    if (lower_.size() != upper_.size() || static_cast<std::size_t>(lower_.size()) != param_names_.size()) {
        throw DimensionError("ModelClass: bounds and parameter names disagree in size");
    }
    if ((lower_.array() > upper_.array()).any()) {
        throw std::invalid_argument("ModelClass: lower bound exceeds upper bound");
    }
    if (!evaluator_) {
        throw std::invalid_argument("ModelClass: empty evaluator");
    }
}

bool ModelClass::in_bounds(const Vector& params) const {
    return params.size() == lower_.size() && (params.array() >= lower_.array()).all() &&
           (params.array() <= upper_.array()).all();
}

Vector ModelClass::clamp(const Vector& params) const {
    if (params.size() != lower_.size()) {
        throw DimensionError("ModelClass::clamp: wrong parameter count");
    }
    return params.cwiseMax(lower_).cwiseMin(upper_);
}

Vector ModelClass::sample(const ObjectGrid& grid, const Vector& params) const {
    if (params.size() != lower_.size()) {
        std::ostringstream msg;
        msg << name_ << ": expected " << lower_.size() << " parameters, got " << params.size();
        throw DimensionError(msg.str());
    }
    const std::span<const double> p(params.data(), static_cast<std::size_t>(params.size()));
    Vector out(static_cast<Eigen::Index>(grid.size()));
    for (std::size_t j = 0; j < grid.size(); ++j) {
        out[static_cast<Eigen::Index>(j)] = evaluator_(grid[j], p);
    }
    return out;
}

Vector ModelClass::evaluate(const ObjectGrid& grid, const Vector& params, double floor_rel) const {
    return floor_model(sample(grid, params), floor_rel);
}

ModelClass gaussian_model_class(double mu_lo, double mu_hi, double sigma_lo, double sigma_hi) {
    Vector lo(3), hi(3);
    lo << 0.0, mu_lo, sigma_lo;
    hi << 10.0, mu_hi, sigma_hi;
    return ModelClass(
        "gaussian",
        [](double x, std::span<const double> p) { return p[0] * gaussian(x, p[1], p[2]); },
        {"c", "mu", "sigma"}, lo, hi);
}

ModelClass two_gaussian_model_class(double mu_lo, double mu_hi, double sigma_lo, double sigma_hi) {
    Vector lo(6), hi(6);
    lo << 0.0, 0.0, mu_lo, mu_lo, sigma_lo, sigma_lo;
    hi << 10.0, 10.0, mu_hi, mu_hi, sigma_hi, sigma_hi;
    return ModelClass(
        "two_gaussian",
        [](double x, std::span<const double> p) {
            return p[0] * gaussian(x, p[2], p[4]) + p[1] * gaussian(x, p[3], p[5]);
        },
        {"c1", "c2", "mu1", "mu2", "sigma1", "sigma2"}, lo, hi);
}

Vector floor_model(const Vector& model, double floor_rel) {
    if (model.size() == 0) {
        throw DimensionError("floor_model: empty model");
    }
    if (!model.allFinite()) {
        throw DomainError("floor_model: non-finite model value");
    }
    const double top = model.maxCoeff();
    if (!(top > 0.0)) {
        throw DomainError("floor_model: model has no positive entry");
    }
    return model.cwiseMax(floor_rel * top);
}

void MEMConfig::validate() const {
    std::ostringstream msg;
    if (!(alpha > 0.0) || !std::isfinite(alpha)) {
        msg << "alpha must be positive; ";
    }
    if (!(xi > 0.0 && xi <= 1.0)) {
        msg << "xi must lie in (0, 1]; ";
    }
    if (eps && !(*eps > 0.0)) {
        msg << "eps must be positive; ";
    }
    if (max_iters < 1) {
        msg << "max_iters must be at least 1; ";
    }
    if (!(floor_rel >= 0.0 && floor_rel < 1.0)) {
        msg << "floor_rel must lie in [0, 1); ";
    }
    if (max_outer_iters < 1) {
        msg << "max_outer_iters must be at least 1; ";
    }
    const std::string text = msg.str();
    if (!text.empty()) {
        throw std::invalid_argument("MEMConfig: " + text.substr(0, text.size() - 2));
    }
}

MEMSolution std_mem_solve(const DiscretizedProblem& problem, const Vector& model, const MEMConfig& config) {
    config.validate();
    check_problem_model(problem, model, "std_mem_solve");
    const Vector m = floor_model(model, config.floor_rel);
    const double floor = config.floor_rel * m.maxCoeff();
    const MemObjective objective(problem, m, config.alpha);
    const double eps = resolve_eps(config, m);
    const Matrix& b = objective.rows();

    Vector a0 = m;
    bool clamped = false;
    for (int k = 1; k <= config.max_iters; ++k) {
        const QuadraticTerms terms = std_mem_quadratic_terms(a0, m);
        const DataSpaceSystem system(objective, a0);
        const Vector z = system.solve(objective.targets() - b * terms.gamma);
        const Vector raw = terms.gamma + a0.cwiseProduct(b.transpose() * z) / config.alpha;
        check_finite(raw, "std_mem_solve", k);
        const double step = (raw - a0).norm();
        if (step < eps) {
            emit(config, problem, k, objective.value(a0), step, a0);
            if (clamped) {
                renormalize(problem, a0);
            }
            return finish(problem, objective, a0, k, true);
        }
        a0 = config.xi * raw + (1.0 - config.xi) * a0;
        clamped = (a0.array() < floor).any();
        a0 = a0.cwiseMax(floor);
        check_finite(a0, "std_mem_solve", k);
        emit(config, problem, k, objective.value(a0), step, a0);
    }
    if (clamped) {
        renormalize(problem, a0);
    }
    return finish(problem, objective, a0, config.max_iters, false);
}

MEMSolution mem_solve_direct(const DiscretizedProblem& problem, const Vector& model,
                             const MEMConfig& config) {
    config.validate();
    check_problem_model(problem, model, "mem_solve_direct");
    const Vector m = floor_model(model, config.floor_rel);
    const double floor = std::max(config.floor_rel, 1e-300) * m.maxCoeff();
    const MemObjective objective(problem, m, config.alpha);
    const double eps = resolve_eps(config, m);

    Vector a = m;
    double value = objective.value(a);
    for (int k = 1; k <= config.max_iters; ++k) {
        const Vector g = objective.gradient(a);
        const DataSpaceSystem system(objective, a);
        const Vector d = system.newton_step(g);
        check_finite(d, "mem_solve_direct", k);
        if (d.norm() < eps) {
            emit(config, problem, k, value, d.norm(), a);
            return finish(problem, objective, a, k, true);
        }

        // Projected Newton: entries pushed below the floor stay on it.
        auto project = [&](double t) { return Vector((a + t * d).cwiseMax(floor)); };
        double t = 1.0;
        Vector trial = project(t);
        double trial_value = objective.value(trial);
        while (!(trial_value <= value + 1e-4 * g.dot(trial - a)) && t > 1e-12) {
            t *= 0.5;
            trial = project(t);
            trial_value = objective.value(trial);
        }
        const double step = (trial - a).norm();
        if (!(trial_value <= value) && !(trial_value - value <= 1e-14 * std::abs(value))) {
            // No descent possible at working precision.
            emit(config, problem, k, value, 0.0, a);
            return finish(problem, objective, a, k, step < eps);
        }
        a = trial;
        value = trial_value;
        check_finite(a, "mem_solve_direct", k);
        emit(config, problem, k, value, step, a);
        if (step < eps) {
            return finish(problem, objective, a, k, true);
        }
    }
    return finish(problem, objective, a, config.max_iters, false);
}

MEMSolution exp_mem_solve(const DiscretizedProblem& problem, const Vector& model, const MEMConfig& config) {
    config.validate();
    check_problem_model(problem, model, "exp_mem_solve");
    if ((model.array() < 0.0).any() || !(model.maxCoeff() > 0.0)) {
        throw DomainError("exp_mem_solve: model must be nonnegative with a positive entry");
    }
    // No floor here: A = M exp(f) never takes log M.
    const Vector& m = model;
    const MemObjective rows(problem, floor_model(model, 1e-300), config.alpha);
    const Matrix& b = rows.rows();
    const Vector& t = rows.targets();
    const Vector& winv = rows.inverse_weights();
    const double alpha = config.alpha;
    const double eps = resolve_eps(config, m);

    auto objective = [&](const Vector& f, const Vector& a) {
        const Vector r = b * a - t;
        double ent = 0.0;
        for (Eigen::Index j = 0; j < a.size(); ++j) {
            ent += a[j] * (f[j] - 1.0) + m[j];
        }
        return 0.5 * (r.array().square() / winv.array()).sum() + alpha * ent;
    };

    Vector f = Vector::Zero(m.size());
    Vector a = m;
    double value = objective(f, a);
    bool clamp_active = false;

    auto result = [&](int iterations, bool converged) {
        MEMSolution sol;
        sol.object = a;
        sol.objective = value;
        sol.iterations = iterations;
        sol.converged = converged;
        sol.model = m;
        sol.clamp_active = clamp_active;
        sol.constraint_residuals = constraint_residuals(problem, a);
        return sol;
    };

    for (int k = 1; k <= config.max_iters; ++k) {
        const Vector r = b * a - t;
        const Vector grad_a = b.transpose() * (r.array() / winv.array()).matrix() + alpha * f;
        const DataSpaceSystem system(rows, a);
        const Vector ag = a.cwiseProduct(grad_a);
        const Vector z = system.solve(b * ag);
        const Vector df = -(grad_a - b.transpose() * z / alpha) / alpha;
        check_finite(df.cwiseProduct(a), "exp_mem_solve", k);

        const double slope = ag.dot(df);
        double step_len = 1.0;
        Vector f_trial, a_trial;
        double trial_value = 0.0;
        for (;;) {
            f_trial = (f + step_len * df).cwiseMax(-kExpClamp).cwiseMin(kExpClamp);
            a_trial = m.array() * f_trial.array().exp();
            trial_value = objective(f_trial, a_trial);
            if (trial_value <= value + 1e-4 * step_len * slope || step_len < 1e-12) {
                break;
            }
            step_len *= 0.5;
        }
        const double step = (a_trial - a).norm();
        if (!(trial_value <= value) && !(trial_value - value <= 1e-14 * std::abs(value))) {
            emit(config, problem, k, value, 0.0, a);
            return result(k, step < eps);
        }
        clamp_active = (f_trial.array().abs() >= kExpClamp).any();
        f = f_trial;
        a = a_trial;
        value = trial_value;
        check_finite(a, "exp_mem_solve", k);
        emit(config, problem, k, value, step, a);
        if (step < eps) {
            return result(k, true);
        }
    }
    return result(config.max_iters, false);
}

MEMSolution mem_solve(MemVariant variant, const DiscretizedProblem& problem, const Vector& model,
                      const MEMConfig& config) {
    switch (variant) {
        case MemVariant::standard:
            return std_mem_solve(problem, model, config);
        case MemVariant::direct:
            return mem_solve_direct(problem, model, config);
        case MemVariant::exponential:
            return exp_mem_solve(problem, model, config);
    }
    throw std::invalid_argument("mem_solve: unknown variant");
}

ModelFit fit_model(const Vector& object, const ModelClass& model_class, const ObjectGrid& grid,
                   const Vector& initial_params) {
    if (object.size() != static_cast<Eigen::Index>(grid.size())) {
        throw DimensionError("fit_model: object size does not match grid");
    }
    if (!model_class.in_bounds(initial_params)) {
        throw std::invalid_argument("fit_model: initial parameters outside the model class bounds");
    }
    const auto n = static_cast<Eigen::Index>(model_class.parameter_count());

    auto score = [&](const Vector& p) {
        try {
            return -overlap(object, model_class.evaluate(grid, model_class.clamp(p)));
        } catch (const DomainError&) {
            return 0.0;
        }
    };

    const double start_score = score(initial_params);
    const Vector width = model_class.upper() - model_class.lower();

    std::vector<Vector> simplex;
    std::vector<double> values;
    auto build_simplex = [&](const Vector& centre) {
        simplex.assign(1, centre);
        for (Eigen::Index i = 0; i < n; ++i) {
            Vector p = centre;
            const double h = 0.05 * width[i];
            p[i] = (p[i] + h <= model_class.upper()[i]) ? p[i] + h : p[i] - h;
            simplex.push_back(p);
        }
        values.resize(simplex.size());
        for (std::size_t i = 0; i < simplex.size(); ++i) {
            values[i] = score(simplex[i]);
        }
    };

    const int max_evaluations = 4000 * static_cast<int>(n);
    int evaluations = 0;
    bool stagnated = true;
    Vector best = initial_params;
    double best_value = start_score;

    for (int restart = 0; restart < 3; ++restart) {
        build_simplex(best);
        evaluations += static_cast<int>(n) + 1;
        bool done = false;
        while (evaluations < max_evaluations) {
            std::vector<std::size_t> order(simplex.size());
            std::iota(order.begin(), order.end(), 0);
            std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return values[x] < values[y]; });
            std::vector<Vector> s2;
            std::vector<double> v2;
            for (auto i : order) {
                s2.push_back(simplex[i]);
                v2.push_back(values[i]);
            }
            simplex.swap(s2);
            values.swap(v2);

            double size = 0.0;
            for (std::size_t i = 1; i < simplex.size(); ++i) {
                size = std::max(size, ((simplex[i] - simplex[0]).array() / width.array().max(1e-300)).abs().maxCoeff());
            }
            if (std::abs(values.back() - values.front()) < 1e-13 && size < 1e-8) {
                done = true;
                break;
            }

            Vector centroid = Vector::Zero(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                centroid += simplex[static_cast<std::size_t>(i)];
            }
            centroid /= static_cast<double>(n);
            const Vector& worst = simplex.back();

            auto trial = [&](double coef) {
                return model_class.clamp(centroid + coef * (worst - centroid));
            };
            const Vector xr = trial(-1.0);
            const double fr = score(xr);
            ++evaluations;
            if (fr < values.front()) {
                const Vector xe = trial(-2.0);
                const double fe = score(xe);
                ++evaluations;
                if (fe < fr) {
                    simplex.back() = xe;
                    values.back() = fe;
                } else {
                    simplex.back() = xr;
                    values.back() = fr;
                }
                continue;
            }
            if (fr < values[values.size() - 2]) {
                simplex.back() = xr;
                values.back() = fr;
                continue;
            }
            const bool outside = fr < values.back();
            const Vector xc = trial(outside ? -0.5 : 0.5);
            const double fc = score(xc);
            ++evaluations;
            if (fc < std::min(fr, values.back())) {
                simplex.back() = xc;
                values.back() = fc;
                continue;
            }
            for (std::size_t i = 1; i < simplex.size(); ++i) {
                simplex[i] = simplex[0] + 0.5 * (simplex[i] - simplex[0]);
                values[i] = score(simplex[i]);
            }
            evaluations += static_cast<int>(n);
        }
        const auto it = std::min_element(values.begin(), values.end());
        const bool improved = *it < best_value - 1e-12;
        if (*it < best_value) {
            best_value = *it;
            best = model_class.clamp(simplex[static_cast<std::size_t>(it - values.begin())]);
        }
        if (done) {
            stagnated = false;
        }
        if (!improved || evaluations >= max_evaluations) {
            break;
        }
    }

    ModelFit fit;
    // Only move away from the starting point on a genuine improvement.
    if (best_value < start_score - 1e-12) {
        fit.params = best;
        fit.overlap = -best_value;
    } else {
        fit.params = initial_params;
        fit.overlap = -start_score;
    }
    fit.stagnated = stagnated;
    return fit;
}

MEMSolution sc_mem_solve(const DiscretizedProblem& problem, const ModelClass& model_class,
                         const Vector& initial_params, const MEMConfig& config) {
    config.validate();
    if (!model_class.in_bounds(initial_params)) {
        throw std::invalid_argument("sc_mem_solve: initial parameters outside the model class bounds");
    }
    const ObjectGrid& grid = problem.grid();
    Vector params = initial_params;
    Vector model = model_class.evaluate(grid, params, config.floor_rel);
    if (const auto l = normalization_index(problem)) {
        const double mass = problem.constraint_matrix().row(*l).dot(model);
        const double target = problem.constraint_targets()[*l];
        if (mass > 0.0 && target > 0.0) {
            model *= target / mass;
        }
    }

    MEMConfig inner = config;
    inner.sink = nullptr;
    const double eps = resolve_eps(config, model);

    MEMSolution sol;
    Vector previous;
    for (int outer = 1; outer <= config.max_outer_iters; ++outer) {
        sol = mem_solve(config.inner, problem, model, inner);
        const double step = previous.size() ? (sol.object - previous).norm()
                                            : std::numeric_limits<double>::infinity();
        if (config.sink) {
            MemIterate it;
            it.iteration = outer;
            it.objective = sol.objective;
            it.step_norm = step;
            it.constraint_residuals = sol.constraint_residuals;
            config.sink(it);
        }
        sol.model_params = params;
        sol.model = model;
        if (step < eps) {
            sol.iterations = outer;
            sol.converged = true;
            return sol;
        }
        previous = sol.object;

        const ModelFit fit = fit_model(sol.object.cwiseMax(0.0), model_class, grid, params);
        params = fit.params;
        model = model_class.evaluate(grid, params, config.floor_rel);
        const double mass = model.sum();
        const double object_mass = sol.object.sum();
        if (mass > 0.0 && object_mass > 0.0) {
            model *= object_mass / mass;
        }
    }
    sol.iterations = config.max_outer_iters;
    sol.converged = false;
    return sol;
}

}  // namespace invprob
