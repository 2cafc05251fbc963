#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "invprob/inverse_core.hpp"

namespace invprob {

/// K(x, y) = -(1/2pi) exp(-x y) / (1 + exp(-x beta)),  0 <= y <= beta.
double fermionic_kernel(double x, double y, double beta);

KernelSpec fermionic_kernel_spec(double beta, std::optional<SupportInterval> support = std::nullopt);

/// 1/2 N(x; -1.5, 0.5) + 1/2 N(x; 2.0, 0.7)
double two_gaussian_density(double x);
Vector two_gaussian_object(const ObjectGrid& grid);

/// ntau points spread uniformly over [0, beta], both ends included.
Vector imaginary_time_points(double beta, std::size_t ntau);

/// Noiseless propagator of delta(x + d0) + delta(x - d0); sigmas set to the 1e-15 floor.
DataSet delta_pair_propagator(double delta0, double beta, std::size_t ntau);

enum class ObjectKind { two_gaussian, delta_pair, custom };

struct SpectralBenchmark {
    double beta = 10.0;
    std::size_t ntau = 25;
    double grid_lower = -5.0;
    double grid_upper = 5.0;
    std::size_t grid_points = 201;
    ObjectKind object_kind = ObjectKind::two_gaussian;
    double delta0 = 1.0;
    std::function<double(double)> custom_object;
    double noise_level = 0.0;
    std::uint64_t seed = 0;
    std::optional<SupportInterval> support;
    bool normalization = true;
    bool sum_rule = true;
    /// theta_l = stiffness_scale / c_l^2.
    double stiffness_scale = 1e4;

    ObjectGrid grid() const;
    void validate() const;
};

struct BenchmarkInstance {
    DiscretizedProblem problem;
    /// True object on the grid; empty for the delta pair.
    Vector truth;
    Vector noiseless;
    std::optional<double> delta0;
};

/**
 * Builds the discretized problem for a benchmark: noiseless data from a fine
 * Simpson rule (or the closed form for the delta pair), seeded relative Gaussian
 * noise, and the normalization and sum-rule constraints when enabled.
 */
BenchmarkInstance generate_benchmark(const SpectralBenchmark& bench);

/// Grid indices of strict local maxima with prominence >= prominence_tol * max(A).
std::vector<std::size_t> detect_peaks(const Vector& object, double prominence_tol);

using ObjectSolver = std::function<Vector(const DiscretizedProblem&)>;

/// TSVD with the noise-driven cut-off.
ObjectSolver default_resolution_solver();

struct ResolutionConfig {
    std::vector<double> betas{5.0, 10.0, 20.0};
    std::vector<double> deltas;
    std::size_t ntau = 25;
    double grid_lower = -5.0;
    double grid_upper = 5.0;
    std::size_t grid_points = 201;
    std::optional<SupportInterval> support = SupportInterval(-2.0, 2.0);
    double noise_level = 0.01;
    std::uint64_t seed = 1;
    double prominence_tol = 0.2;
    ObjectSolver solver;
    std::size_t workers = 1;

    /// 0.05, 0.10, ..., 1.95
    static std::vector<double> default_deltas();
};

struct ResolutionRow {
    double beta = 0.0;
    double delta0 = 0.0;
    double true_gap = 0.0;
    double reconstructed_gap = 0.0;
    bool bimodal = false;
    std::size_t peak_count = 0;
};

std::vector<ResolutionRow> resolution_experiment(const ResolutionConfig& config);

/// Smallest scanned delta0 with a bimodal reconstruction at this beta.
std::optional<double> minimum_resolvable_delta(const std::vector<ResolutionRow>& rows, double beta);

}  // namespace invprob
