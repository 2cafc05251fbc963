#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "invprob/spectral_app.hpp"

using namespace invprob;

TEST_CASE("fermionic kernel values") {
    CHECK(fermionic_kernel(0.0, 3.0, 10.0) == doctest::Approx(-1.0 / (4.0 * M_PI)).epsilon(1e-14));
    CHECK(fermionic_kernel(1.7, 10.0 - 2.3, 10.0) == doctest::Approx(fermionic_kernel(-1.7, 2.3, 10.0)).epsilon(1e-12));
    CHECK(std::isfinite(fermionic_kernel(700.0, 10.0, 10.0)));
    CHECK(std::isfinite(fermionic_kernel(-700.0, 0.0, 10.0)));
    CHECK_THROWS_AS(fermionic_kernel(0.0, 10.5, 10.0), DomainError);
    CHECK_THROWS_AS(fermionic_kernel(0.0, -0.1, 10.0), DomainError);
}

TEST_CASE("two-Gaussian object") {
    ObjectGrid grid(-5.0, 5.0, 201);
    Vector a = two_gaussian_object(grid);
    double mass = a.sum() * grid.dx();
    CHECK(mass >= 0.999);
    CHECK(mass <= 1.001);
    CHECK(a.minCoeff() > 0.0);
    auto peaks = detect_peaks(a, 0.2);
    REQUIRE(peaks.size() == 2);
    CHECK(std::abs(grid[peaks[0]] + 1.5) < 0.05);
    CHECK(std::abs(grid[peaks[1]] - 2.0) < 0.05);
}

TEST_CASE("delta-pair propagator") {
    double beta = 10.0;
    auto small = delta_pair_propagator(1e-9, beta, 25);
    for (Eigen::Index i = 0; i < 25; ++i) CHECK(small.values()[i] == doctest::Approx(-1.0 / (2.0 * M_PI)).epsilon(1e-8));
    auto d = delta_pair_propagator(0.7, beta, 25);
    CHECK(d.values()[0] + d.values()[24] == doctest::Approx(-1.0 / M_PI).epsilon(1e-12));
    auto neg = delta_pair_propagator(-0.7, beta, 25);
    CHECK((neg.values() - d.values()).norm() < 1e-15);
}

TEST_CASE("noiseless benchmark reproduces quadrature") {
    SpectralBenchmark b;
    auto inst = generate_benchmark(b);
    CHECK((inst.problem.data().values() - inst.noiseless).norm() == 0.0);
    auto y = inst.problem.data().y();
    CHECK(y[0] == 0.0);
    CHECK(y[24] == 10.0);
    Vector disc = apply_forward(inst.problem, inst.truth);
    CHECK((disc - inst.noiseless).cwiseQuotient(inst.noiseless).cwiseAbs().maxCoeff() < 1e-4);
    CHECK(inst.problem.integral_constraints().size() == 2);
}

TEST_CASE("benchmark noise is seeded") {
    SpectralBenchmark b;
    b.noise_level = 0.01;
    b.seed = 42;
    auto x = generate_benchmark(b);
    auto y = generate_benchmark(b);
    CHECK((x.problem.data().values().array() == y.problem.data().values().array()).all());
    b.seed = 43;
    auto z = generate_benchmark(b);
    CHECK((x.problem.data().values() - z.problem.data().values()).norm() > 0.0);
}

TEST_CASE("benchmark noise has the requested relative spread") {
    SpectralBenchmark b;
    b.noise_level = 0.01;
    const int seeds = 1000;
    Vector sum = Vector::Zero(25), sum2 = Vector::Zero(25);
    Vector ref;
    for (int s = 0; s < seeds; ++s) {
        b.seed = static_cast<std::uint64_t>(s);
        auto inst = generate_benchmark(b);
        Vector r = (inst.problem.data().values() - inst.noiseless).cwiseQuotient(inst.noiseless.cwiseAbs());
        sum += r;
        sum2 += r.cwiseProduct(r);
    }
    Vector mean = sum / seeds;
    Vector var = (sum2 / seeds - mean.cwiseProduct(mean)) * seeds / (seeds - 1.0);
    for (Eigen::Index i = 0; i < 25; ++i) {
        double sd = std::sqrt(var[i]);
        CHECK(sd >= 0.009);
        CHECK(sd <= 0.011);
    }
}

TEST_CASE("benchmark validation") {
    SpectralBenchmark b;
    b.noise_level = -1.0;
    CHECK_THROWS(generate_benchmark(b));
}

TEST_CASE("peak detection") {
    CHECK(detect_peaks(Vector::Constant(50, 2.0), 0.2).empty());
    ObjectGrid grid(-5.0, 5.0, 201);
    Vector g = (-(grid.points().array() - 0.3).square() / 2.0).exp();
    auto p = detect_peaks(g, 0.2);
    REQUIRE(p.size() == 1);
    CHECK(std::abs(grid[p[0]] - 0.3) < 0.05);
    Vector bump = g;
    bump[20] += 0.05;
    CHECK(detect_peaks(bump, 0.2).size() == 1);
}

TEST_CASE("resolution experiment bookkeeping") {
    ResolutionConfig cfg;
    cfg.betas = {10.0};
    cfg.deltas = {1e-6, 1.5};
    cfg.noise_level = 0.0;
    cfg.support.reset();
    auto rows = resolution_experiment(cfg);
    REQUIRE(rows.size() == 2);
    CHECK_FALSE(rows[0].bimodal);
    CHECK(rows[0].reconstructed_gap == 0.0);
    CHECK(rows[1].true_gap == doctest::Approx(3.0));
    auto lim = minimum_resolvable_delta(rows, 10.0);
    if (rows[1].bimodal) {
        REQUIRE(lim.has_value());
        CHECK(*lim == 1.5);
    }
    CHECK_FALSE(minimum_resolvable_delta(rows, 5.0).has_value());
    auto d = ResolutionConfig::default_deltas();
    CHECK(d.size() == 39);
    CHECK(d.front() == doctest::Approx(0.05));
    CHECK(d.back() == doctest::Approx(1.95));
}
