#include <fstream>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "invprob/cli.hpp"
#include "invprob/errors.hpp"
#include "invprob/mem_solver.hpp"
#include "invprob/parallel.hpp"
#include "invprob/spectral_app.hpp"
#include "invprob/svd_solver.hpp"

namespace invprob::cli {

namespace fs = std::filesystem;

namespace {

using Metrics = std::vector<std::pair<std::string, double>>;

struct Outcome {
    Vector object;
    Metrics metrics;
};

std::string num(double v) { return fmt::format("{:.17g}", v); }

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw fs::filesystem_error("cannot open for writing", path, std::make_error_code(std::errc::io_error));
    }
    out << text;
    if (!out) {
        throw fs::filesystem_error("write failed", path, std::make_error_code(std::errc::io_error));
    }
}

SpectralBenchmark benchmark_of(const RunConfig& c, std::uint64_t seed) {
    SpectralBenchmark b;
    b.beta = c.beta;
    b.ntau = c.ntau;
    b.grid_lower = c.grid_lower;
    b.grid_upper = c.grid_upper;
    b.grid_points = c.grid_points;
    b.object_kind = c.object == "delta_pair" ? ObjectKind::delta_pair : ObjectKind::two_gaussian;
    b.delta0 = c.delta0;
    b.noise_level = c.noise;
    b.seed = seed;
    if (c.support) {
        b.support = SupportInterval(c.support->first, c.support->second);
    }
    b.normalization = c.normalization;
    b.sum_rule = c.sum_rule;
    b.stiffness_scale = c.theta_scale;
    return b;
}

ModelClass model_class_of(const RunConfig& c) {
    return c.model == "two_gaussian" ? two_gaussian_model_class() : gaussian_model_class();
}

Vector model_params_of(const RunConfig& c) {
    return Eigen::Map<const Vector>(c.model_params.data(), static_cast<Eigen::Index>(c.model_params.size()));
}

MemVariant variant_of(SolverKind s) {
    switch (s) {
        case SolverKind::mem: return MemVariant::direct;
        case SolverKind::expmem: return MemVariant::exponential;
        default: return MemVariant::standard;
    }
}

MEMConfig mem_config_of(const RunConfig& c, double alpha) {
    MEMConfig m;
    m.alpha = alpha;
    m.xi = c.xi;
    m.eps = c.eps;
    m.max_iters = c.max_iters;
    m.max_outer_iters = c.max_outer_iters;
    m.floor_rel = c.floor_rel;
    m.inner = variant_of(c.inner);
    return m;
}

void add_residuals(const DiscretizedProblem& problem, const Vector& object, Metrics& metrics) {
    const Vector r = constraint_residuals(problem, object);
    for (std::size_t l = 0; l < problem.integral_constraints().size(); ++l) {
        metrics.emplace_back("residual_" + problem.integral_constraints()[l].name, r[static_cast<Eigen::Index>(l)]);
    }
}

Outcome solve_problem(const RunConfig& c, SolverKind solver, const DiscretizedProblem& problem,
                      std::optional<double> cutoff, double alpha) {
    Outcome out;
    Metrics& m = out.metrics;
    switch (solver) {
        case SolverKind::svd:
        case SolverKind::tsvd:
        case SolverKind::csvd: {
            const SingularSystem system = compute_singular_system(problem, c.rank_tol);
            const CoefficientSet coeffs = expansion_coefficients(system, problem.data());
            std::size_t r_cut = system.rank();
            double applied = 0.0;
            if (solver != SolverKind::svd) {
                if (cutoff) {
                    applied = *cutoff;
                    r_cut = cutoff_index(system, *cutoff);
                } else {
                    const Truncation t = truncation_index(system, problem.data());
                    applied = t.threshold;
                    r_cut = t.r_cut;
                }
            }
            m.emplace_back("rank", static_cast<double>(system.rank()));
            m.emplace_back("cutoff", applied);
            m.emplace_back("r_cut", static_cast<double>(r_cut));
            if (solver == SolverKind::csvd) {
                if (r_cut == 0) {
                    throw RunError("csvd: cut-off leaves no singular functions");
                }
                CoefficientSet head{coeffs.b.head(static_cast<Eigen::Index>(r_cut)),
                                    coeffs.db.head(static_cast<Eigen::Index>(r_cut))};
                ConstrainedSvdOptions options;
                options.cost = c.csvd_cost == "chi2" ? SvdCost::chi_squared : SvdCost::norm;
                const ConstrainedSvdResult res = constrained_svd_solve(problem, system, head, options);
                out.object = res.object;
                m.emplace_back("continuation_steps", res.continuation_steps);
                m.emplace_back("cost", res.cost);
            } else {
                out.object = reconstruct(system, coeffs, r_cut);
            }
            for (Eigen::Index i = 0; i < system.lambdas.size(); ++i) {
                m.emplace_back(fmt::format("lambda_{}", i + 1), system.lambdas[i]);
            }
            break;
        }
        case SolverKind::stdmem:
        case SolverKind::mem:
        case SolverKind::expmem:
        case SolverKind::scmem: {
            const ModelClass cls = model_class_of(c);
            const MEMConfig mc = mem_config_of(c, alpha);
            MEMSolution sol;
            if (solver == SolverKind::scmem) {
                sol = sc_mem_solve(problem, cls, model_params_of(c), mc);
            } else {
                Vector model = cls.evaluate(problem.grid(), model_params_of(c), c.floor_rel);
                for (std::size_t l = 0; l < problem.integral_constraints().size(); ++l) {
                    if (problem.integral_constraints()[l].name == "normalization") {
                        const auto li = static_cast<Eigen::Index>(l);
                        model *= problem.constraint_targets()[li] / problem.constraint_matrix().row(li).dot(model);
                    }
                }
                sol = mem_solve(variant_of(solver), problem, model, mc);
            }
            out.object = sol.object;
            m.emplace_back("iterations", sol.iterations);
            m.emplace_back("converged", sol.converged ? 1.0 : 0.0);
            m.emplace_back("objective", sol.objective);
            if (solver == SolverKind::expmem) {
                m.emplace_back("clamp_active", sol.clamp_active ? 1.0 : 0.0);
            }
            const auto names = cls.parameter_names();
            for (Eigen::Index k = 0; solver == SolverKind::scmem && k < sol.model_params.size(); ++k) {
                m.emplace_back("model_" + names[static_cast<std::size_t>(k)], sol.model_params[k]);
            }
            break;
        }
    }
    return out;
}

Outcome solve_instance(const RunConfig& c, const BenchmarkInstance& inst, std::optional<double> cutoff,
                       double alpha) {
    Outcome out = solve_problem(c, c.solver, inst.problem, cutoff, alpha);
    Metrics head;
    if (inst.truth.size() > 0) {
        head.emplace_back("rmse", rmse(out.object, inst.truth));
    }
    const double chi2 = chi_squared(inst.problem, out.object);
    head.emplace_back("chi2", chi2);
    head.emplace_back("chi2_per_point", chi2 / static_cast<double>(inst.problem.data().size()));
    add_residuals(inst.problem, out.object, head);
    out.metrics.insert(out.metrics.begin(), head.begin(), head.end());
    return out;
}

std::string data_csv(const BenchmarkInstance& inst) {
    const DataSet& d = inst.problem.data();
    std::string s = "y,G_true,G_noisy,sigma\n";
    for (Eigen::Index i = 0; i < d.y().size(); ++i) {
        s += num(d.y()[i]) + "," + num(inst.noiseless[i]) + "," + num(d.values()[i]) + "," + num(d.sigmas()[i]) + "\n";
    }
    return s;
}

std::string solution_csv(const BenchmarkInstance& inst, const Vector* solved) {
    const ObjectGrid& grid = inst.problem.grid();
    std::string s = solved ? "x,A_true,A_solved\n" : "x,A_true\n";
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        s += num(grid[j]) + "," + (inst.truth.size() ? num(inst.truth[jj]) : std::string("nan"));
        if (solved) {
            s += "," + num((*solved)[jj]);
        }
        s += "\n";
    }
    return s;
}

std::string metrics_csv(const Metrics& metrics) {
    std::string s = "metric,value\n";
    for (const auto& [name, value] : metrics) {
        s += name + "," + num(value) + "\n";
    }
    return s;
}

double metric(const Metrics& metrics, const std::string& name) {
    for (const auto& [k, v] : metrics) {
        if (k == name) {
            return v;
        }
    }
    return std::numeric_limits<double>::quiet_NaN();
}

BenchmarkInstance generate(const RunConfig& c, std::uint64_t seed) {
    try {
        return generate_benchmark(benchmark_of(c, seed));
    } catch (const std::exception& e) {
        throw RunError(std::string("benchmark generation failed: ") + e.what());
    }
}

Outcome guarded_solve(const RunConfig& c, const BenchmarkInstance& inst, std::optional<double> cutoff, double alpha) {
    try {
        return solve_instance(c, inst, cutoff, alpha);
    } catch (const RunError&) {
        throw;
    } catch (const std::exception& e) {
        throw RunError(std::string("solver failed: ") + e.what());
    }
}

void run_sweep(const RunConfig& c, const fs::path& dir, std::ostream& log) {
    const bool by_cutoff = c.solver == SolverKind::svd || c.solver == SolverKind::tsvd || c.solver == SolverKind::csvd;
    const std::vector<double>& values = by_cutoff ? c.cutoffs : c.alphas;
    const std::string parameter = by_cutoff ? "cutoff" : "alpha";
    const std::size_t cells = values.size() * c.sweep_seeds;
    std::vector<Metrics> results(cells);
    const std::size_t workers = c.workers ? c.workers : default_workers();
    log << fmt::format("sweep: {} cells over {} on {} worker(s)\n", cells, parameter, workers);

    parallel_for(cells, workers, [&](std::size_t i) {
        const double value = values[i / c.sweep_seeds];
        const std::uint64_t seed = c.seed + i % c.sweep_seeds;
        const BenchmarkInstance inst = generate(c, seed);
        const Outcome out = by_cutoff ? guarded_solve(c, inst, value, c.alpha) : guarded_solve(c, inst, c.cutoff, value);
        const fs::path cell = dir / fmt::format("cell-{:03d}", i);
        fs::create_directory(cell);
        write_file(cell / "data.csv", data_csv(inst));
        write_file(cell / "solution.csv", solution_csv(inst, &out.object));
        write_file(cell / "metrics.csv", metrics_csv(out.metrics));
        results[i] = out.metrics;
    });

    const char* count_name = by_cutoff ? "r_cut" : "iterations";
    std::string table = fmt::format("cell,{},seed,rmse,chi2_per_point,{}\n", parameter, count_name);
    std::string summary = fmt::format("{},mean_rmse,mean_chi2_per_point\n", parameter);
    for (std::size_t v = 0; v < values.size(); ++v) {
        double rmse_sum = 0.0;
        double chi_sum = 0.0;
        for (std::size_t s = 0; s < c.sweep_seeds; ++s) {
            const std::size_t i = v * c.sweep_seeds + s;
            const Metrics& m = results[i];
            table += fmt::format("{},{},{},{},{},{}\n", i, num(values[v]), c.seed + s, num(metric(m, "rmse")),
                                 num(metric(m, "chi2_per_point")), num(metric(m, count_name)));
            rmse_sum += metric(m, "rmse");
            chi_sum += metric(m, "chi2_per_point");
        }
        const auto n = static_cast<double>(c.sweep_seeds);
        summary += num(values[v]) + "," + num(rmse_sum / n) + "," + num(chi_sum / n) + "\n";
    }
    write_file(dir / "sweep.csv", table);
    write_file(dir / "sweep_summary.csv", summary);
}

void run_resolution(const RunConfig& c, const fs::path& dir, std::ostream& log) {
    ResolutionConfig rc;
    rc.betas = c.betas;
    rc.deltas = c.deltas;
    rc.ntau = c.ntau;
    rc.grid_lower = c.grid_lower;
    rc.grid_upper = c.grid_upper;
    rc.grid_points = c.grid_points;
    rc.support.reset();
    if (c.resolution_support) {
        rc.support = SupportInterval(c.resolution_support->first, c.resolution_support->second);
    }
    rc.noise_level = c.resolution_noise;
    rc.seed = c.seed;
    rc.prominence_tol = c.prominence;
    rc.workers = c.workers ? c.workers : default_workers();
    rc.solver = [&c](const DiscretizedProblem& problem) {
        return solve_problem(c, c.solver, problem, c.cutoff, c.alpha).object;
    };
    log << fmt::format("resolution: {} beta x {} delta0 cells on {} worker(s)\n", rc.betas.size(), rc.deltas.size(),
                       rc.workers);

    std::vector<ResolutionRow> rows;
    try {
        rows = resolution_experiment(rc);
    } catch (const std::exception& e) {
        throw RunError(std::string("resolution experiment failed: ") + e.what());
    }

    std::string table = "beta,delta0,true_gap,reconstructed_gap,bimodal,peaks\n";
    for (const auto& r : rows) {
        table += fmt::format("{},{},{},{},{},{}\n", num(r.beta), num(r.delta0), num(r.true_gap),
                             num(r.reconstructed_gap), r.bimodal ? 1 : 0, r.peak_count);
    }
    std::string limits = "beta,temperature,delta0_min\n";
    for (double beta : c.betas) {
        const auto d = minimum_resolvable_delta(rows, beta);
        limits += num(beta) + "," + num(1.0 / beta) + "," + (d ? num(*d) : std::string("nan")) + "\n";
    }
    write_file(dir / "resolution.csv", table);
    write_file(dir / "resolution_limit.csv", limits);
}

}  // namespace

fs::path run(const RunConfig& config, std::ostream& log) {
    const std::string hash = config_hash(config);
    const std::string command = resolved_entries(config).front().second;
    const fs::path dir = fs::path(config.output_root) / (command + "-" + hash);
    if (fs::exists(dir)) {
        if (!config.force) {
            throw ConfigError({"output: run directory '" + dir.string() + "' exists; pass --force to overwrite"});
        }
        fs::remove_all(dir);
    }
    fs::create_directories(dir);
    log << "run directory: " << dir.string() << "\n";

    switch (config.command) {
        case Command::generate: {
            const BenchmarkInstance inst = generate(config, config.seed);
            write_file(dir / "data.csv", data_csv(inst));
            write_file(dir / "solution.csv", solution_csv(inst, nullptr));
            break;
        }
        case Command::solve: {
            const BenchmarkInstance inst = generate(config, config.seed);
            const Outcome out = guarded_solve(config, inst, config.cutoff, config.alpha);
            write_file(dir / "data.csv", data_csv(inst));
            write_file(dir / "solution.csv", solution_csv(inst, &out.object));
            write_file(dir / "metrics.csv", metrics_csv(out.metrics));
            for (const auto& [k, v] : out.metrics) {
                if (k.rfind("lambda_", 0) != 0) {
                    log << fmt::format("  {} = {}\n", k, num(v));
                }
            }
            break;
        }
        case Command::sweep:
            run_sweep(config, dir, log);
            break;
        case Command::resolution:
            run_resolution(config, dir, log);
            break;
    }
    write_file(dir / "manifest.txt", render_manifest(config));
    return dir;
}

}  // namespace invprob::cli
