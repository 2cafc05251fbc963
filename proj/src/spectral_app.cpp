#include "invprob/spectral_app.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "invprob/parallel.hpp"
#include "invprob/svd_solver.hpp"

namespace invprob {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;
constexpr double kSigmaFloor = 1e-15;
constexpr std::size_t kRefinement = 100;

double normal_pdf(double x, double mu, double sigma) {
    const double z = (x - mu) / sigma;
    return std::exp(-0.5 * z * z) / (sigma * std::sqrt(kTwoPi));
}

/// Composite Simpson rule of K(., y_i) A over [a, b] for every y_i.
Vector quadrature_propagator(const std::function<double(double)>& object, double a, double b,
                             std::size_t intervals, const Vector& y, double beta) {
    if (intervals % 2 != 0) {
        ++intervals;
    }
    const double h = (b - a) / static_cast<double>(intervals);
    Vector weights(static_cast<Eigen::Index>(intervals + 1));
    Vector xs(weights.size());
    Vector values(weights.size());
    for (std::size_t k = 0; k <= intervals; ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        xs[i] = (k == intervals) ? b : a + h * static_cast<double>(k);
        weights[i] = (k == 0 || k == intervals) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
        values[i] = object(xs[i]);
    }
    weights *= h / 3.0;
    Vector g(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        double sum = 0.0;
        for (Eigen::Index k = 0; k < xs.size(); ++k) {
            sum += weights[k] * fermionic_kernel(xs[k], y[i], beta) * values[k];
        }
        g[i] = sum;
    }
    return g;
}

/// Logistic factor 1 / (1 + exp(x beta)) without overflow.
double fermi(double x, double beta) {
    const double t = x * beta;
    if (t > 0.0) {
        const double e = std::exp(-t);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(t));
}

}  // namespace

double fermionic_kernel(double x, double y, double beta) {
    if (!(beta > 0.0)) {
        throw DomainError("fermionic_kernel: beta must be positive");
    }
    if (!(y >= 0.0 && y <= beta)) {
        std::ostringstream msg;
        msg << "fermionic_kernel: y = " << y << " outside [0, " << beta << "]";
        throw DomainError(msg.str());
    }
    if (x >= 0.0) {
        return -std::exp(-x * y) / (1.0 + std::exp(-x * beta)) / kTwoPi;
    }
    return -std::exp(x * (beta - y)) / (1.0 + std::exp(x * beta)) / kTwoPi;
}

KernelSpec fermionic_kernel_spec(double beta, std::optional<SupportInterval> support) {
    if (!(beta > 0.0)) {
        throw DomainError("fermionic_kernel_spec: beta must be positive");
    }
    KernelSpec spec;
    spec.evaluate = [beta](double x, double y) { return fermionic_kernel(x, y, beta); };
    spec.support = support;
    return spec;
}

double two_gaussian_density(double x) {
    return 0.5 * normal_pdf(x, -1.5, 0.5) + 0.5 * normal_pdf(x, 2.0, 0.7);
}

Vector two_gaussian_object(const ObjectGrid& grid) {
    Vector a(static_cast<Eigen::Index>(grid.size()));
    for (std::size_t j = 0; j < grid.size(); ++j) {
        a[static_cast<Eigen::Index>(j)] = two_gaussian_density(grid[j]);
    }
    return a;
}

Vector imaginary_time_points(double beta, std::size_t ntau) {
    if (!(beta > 0.0)) {
        throw DomainError("imaginary_time_points: beta must be positive");
    }
    if (ntau == 0) {
        throw DimensionError("imaginary_time_points: ntau must be at least 1");
    }
    if (ntau == 1) {
        return Vector::Zero(1);
    }
    Vector y = Vector::LinSpaced(static_cast<Eigen::Index>(ntau), 0.0, beta);
    y[y.size() - 1] = beta;
    return y;
}

DataSet delta_pair_propagator(double delta0, double beta, std::size_t ntau) {
    if (!std::isfinite(delta0)) {
        throw DomainError("delta_pair_propagator: delta0 must be finite");
    }
    const Vector y = imaginary_time_points(beta, ntau);
    Vector g(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        g[i] = fermionic_kernel(-delta0, y[i], beta) + fermionic_kernel(delta0, y[i], beta);
    }
    return DataSet(y, g, Vector::Constant(y.size(), kSigmaFloor));
}

ObjectGrid SpectralBenchmark::grid() const { return ObjectGrid(grid_lower, grid_upper, grid_points); }

void SpectralBenchmark::validate() const {
    std::ostringstream msg;
    if (!(beta > 0.0) || !std::isfinite(beta)) {
        msg << "beta must be positive; ";
    }
    if (ntau < 1) {
        msg << "ntau must be at least 1; ";
    }
    if (!(grid_lower < grid_upper)) {
        msg << "grid lower bound must be below the upper bound; ";
    }
    if (grid_points < 2) {
        msg << "grid needs at least 2 points; ";
    }
    if (!(noise_level >= 0.0) || !std::isfinite(noise_level)) {
        msg << "noise level must be nonnegative; ";
    }
    if (object_kind == ObjectKind::custom && !custom_object) {
        msg << "custom object requires a density; ";
    }
    if (object_kind == ObjectKind::delta_pair && !std::isfinite(delta0)) {
        msg << "delta0 must be finite; ";
    }
    if (!(stiffness_scale > 0.0)) {
        msg << "stiffness scale must be positive; ";
    }
    const std::string text = msg.str();
    if (!text.empty()) {
        throw std::invalid_argument("SpectralBenchmark: " + text.substr(0, text.size() - 2));
    }
}

BenchmarkInstance generate_benchmark(const SpectralBenchmark& bench) {
    bench.validate();
    const ObjectGrid grid = bench.grid();
    const double beta = bench.beta;
    const Vector y = imaginary_time_points(beta, bench.ntau);

    Vector truth;
    Vector noiseless;
    double mass = 0.0;  // int A dx
    std::optional<double> delta0;
    if (bench.object_kind == ObjectKind::delta_pair) {
        noiseless = delta_pair_propagator(bench.delta0, beta, bench.ntau).values();
        mass = 2.0;
        delta0 = bench.delta0;
    } else {
        const std::function<double(double)> density =
            bench.object_kind == ObjectKind::two_gaussian ? std::function<double(double)>(two_gaussian_density)
                                                          : bench.custom_object;
        truth.resize(static_cast<Eigen::Index>(grid.size()));
        for (std::size_t j = 0; j < grid.size(); ++j) {
            truth[static_cast<Eigen::Index>(j)] = density(grid[j]);
        }
        noiseless = quadrature_propagator(density, grid.a(), grid.b(), kRefinement * (grid.size() - 1), y, beta);
        mass = truth.sum() * grid.dx();
    }

    Vector values = noiseless;
    Vector sigmas(noiseless.size());
    std::mt19937_64 rng(bench.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < noiseless.size(); ++i) {
        const double sd = bench.noise_level * std::abs(noiseless[i]);
        if (bench.noise_level > 0.0) {
            values[i] += sd * normal(rng);
        }
        sigmas[i] = std::max(sd, kSigmaFloor);
    }

    std::vector<IntegralConstraint> constraints;
    if (bench.normalization) {
        IntegralConstraint c;
        c.name = "normalization";
        c.weight = [](double) { return 1.0 / kTwoPi; };
        c.target = mass / kTwoPi;
        c.stiffness = bench.stiffness_scale / (c.target * c.target);
        constraints.push_back(c);
    }
    if (bench.sum_rule) {
        IntegralConstraint c;
        c.name = "sum_rule";
        c.weight = [beta](double x) { return fermi(x, beta) / kTwoPi; };
        // G(beta) = -(1/2pi) int A(x) / (1 + exp(x beta)) dx
        c.target = -noiseless[noiseless.size() - 1];
        if (y[y.size() - 1] != beta) {
            throw DomainError("generate_benchmark: sum rule needs a data point at y = beta");
        }
        c.stiffness = bench.stiffness_scale / (c.target * c.target);
        constraints.push_back(c);
    }

    std::vector<BoundConstraint> bounds;
    bounds.reserve(grid.size());
    for (std::size_t j = 0; j < grid.size(); ++j) {
        bounds.push_back({grid[j], 0.0, std::numeric_limits<double>::infinity()});
    }

    const DataSet data(y, values, sigmas);
    const DiscretizedProblem base = discretize_kernel(fermionic_kernel_spec(beta, bench.support), grid, data);
    return BenchmarkInstance{base.with_constraints(std::move(constraints), std::move(bounds)), truth, noiseless,
                             delta0};
}

std::vector<std::size_t> detect_peaks(const Vector& object, double prominence_tol) {
    if (!(prominence_tol >= 0.0)) {
        throw std::invalid_argument("detect_peaks: prominence_tol must be nonnegative");
    }
    std::vector<std::size_t> peaks;
    const Eigen::Index n = object.size();
    if (n < 3) {
        return peaks;
    }
    const double top = object.maxCoeff();
    if (!(top > 0.0)) {
        return peaks;
    }
    const double needed = prominence_tol * top;
    for (Eigen::Index i = 1; i + 1 < n; ++i) {
        const double h = object[i];
        if (!(h > object[i - 1] && h > object[i + 1])) {
            continue;
        }
        double left_min = h;
        for (Eigen::Index k = i - 1; k >= 0 && object[k] <= h; --k) {
            left_min = std::min(left_min, object[k]);
        }
        double right_min = h;
        for (Eigen::Index k = i + 1; k < n && object[k] <= h; ++k) {
            right_min = std::min(right_min, object[k]);
        }
        const double prominence = h - std::max(left_min, right_min);
        if (prominence > 0.0 && prominence >= needed) {
            peaks.push_back(static_cast<std::size_t>(i));
        }
    }
    return peaks;
}

ObjectSolver default_resolution_solver() {
    return [](const DiscretizedProblem& problem) { return tsvd_solve(problem).object; };
}

std::vector<double> ResolutionConfig::default_deltas() {
    std::vector<double> d;
    for (int k = 1; k <= 39; ++k) {
        d.push_back(0.05 * k);
    }
    return d;
}

std::vector<ResolutionRow> resolution_experiment(const ResolutionConfig& config) {
    if (!(config.prominence_tol >= 0.0)) {
        throw std::invalid_argument("resolution_experiment: prominence_tol must be nonnegative");
    }
    const std::vector<double> deltas = config.deltas.empty() ? ResolutionConfig::default_deltas() : config.deltas;
    const ObjectSolver solver = config.solver ? config.solver : default_resolution_solver();

    std::vector<ResolutionRow> rows(config.betas.size() * deltas.size());
    for (std::size_t b = 0; b < config.betas.size(); ++b) {
        for (std::size_t d = 0; d < deltas.size(); ++d) {
            rows[b * deltas.size() + d].beta = config.betas[b];
            rows[b * deltas.size() + d].delta0 = deltas[d];
        }
    }

    parallel_for(rows.size(), config.workers, [&](std::size_t i) {
        ResolutionRow& row = rows[i];
        SpectralBenchmark bench;
        bench.beta = row.beta;
        bench.ntau = config.ntau;
        bench.grid_lower = config.grid_lower;
        bench.grid_upper = config.grid_upper;
        bench.grid_points = config.grid_points;
        bench.object_kind = ObjectKind::delta_pair;
        bench.delta0 = row.delta0;
        bench.noise_level = config.noise_level;
        bench.seed = config.seed;
        bench.support = config.support;
        const BenchmarkInstance inst = generate_benchmark(bench);
        const Vector a = solver(inst.problem);
        const ObjectGrid& grid = inst.problem.grid();
        // Peaks are searched inside the support only; its end points are never peaks.
        std::size_t first = 0;
        std::size_t last = grid.size();
        if (config.support) {
            while (first < grid.size() && !config.support->contains(grid[first])) {
                ++first;
            }
            last = first;
            while (last < grid.size() && config.support->contains(grid[last])) {
                ++last;
            }
        }
        auto peaks = detect_peaks(a.segment(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(last - first)),
                                  config.prominence_tol);
        for (auto& p : peaks) {
            p += first;
        }
        row.true_gap = 2.0 * std::abs(row.delta0);
        row.peak_count = peaks.size();
        row.bimodal = peaks.size() >= 2;
        row.reconstructed_gap = row.bimodal ? grid[peaks.back()] - grid[peaks.front()] : 0.0;
    });
    return rows;
}

std::optional<double> minimum_resolvable_delta(const std::vector<ResolutionRow>& rows, double beta) {
    std::optional<double> best;
    for (const auto& row : rows) {
        if (row.beta == beta && row.bimodal && (!best || row.delta0 < *best)) {
            best = row.delta0;
        }
    }
    return best;
}

}  // namespace invprob
