#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "invprob/inverse_core.hpp"
#include "invprob/spectral_app.hpp"

using namespace invprob;

namespace {

DataSet unit_data(const Vector& y, const Vector& values) {
    return DataSet(y, values, Vector::Ones(y.size()));
}

DiscretizedProblem identity_problem(std::size_t n) {
    ObjectGrid grid(0.0, 1.0, n);
    Vector y = Vector::LinSpaced(static_cast<Eigen::Index>(n), 0.0, 1.0);
    return DiscretizedProblem(grid, unit_data(y, Vector::Zero(y.size())),
                              Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)));
}

double simpson(const std::function<double(double)>& f, double a, double b, int n) {
    double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int k = 1; k < n; ++k) s += f(a + k * h) * (k % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

}  // namespace

TEST_CASE("grid spacing and endpoints") {
    ObjectGrid grid(-5.0, 5.0, 201);
    CHECK(grid.size() == 201);
    CHECK(grid.dx() == doctest::Approx(0.05));
    CHECK(grid[0] == -5.0);
    CHECK(grid[200] == 5.0);
    CHECK_THROWS_AS(ObjectGrid(1.0, 0.0, 10), std::invalid_argument);
    CHECK_THROWS(ObjectGrid(0.0, 1.0, 1));
}

TEST_CASE("data set rejects bad sigmas and mismatched lengths") {
    Vector y = Vector::LinSpaced(3, 0.0, 1.0);
    CHECK_THROWS_AS(DataSet(y, Vector::Zero(2), Vector::Ones(3)), DimensionError);
    Vector s = Vector::Ones(3);
    s[1] = -1.0;
    CHECK_THROWS(DataSet(y, Vector::Zero(3), s));
}

TEST_CASE("constant kernel gives dx entries") {
    ObjectGrid grid(0.0, 1.0, 11);
    Vector y(3);
    y << 0.0, 0.5, 1.0;
    auto p = discretize_kernel({[](double, double) { return 1.0; }, std::nullopt}, grid,
                               unit_data(y, Vector::Zero(3)));
    CHECK(p.kernel_matrix().rows() == 3);
    CHECK(p.kernel_matrix().cols() == 11);
    for (Eigen::Index i = 0; i < 3; ++i)
        for (Eigen::Index j = 0; j < 11; ++j) CHECK(p.kernel_matrix()(i, j) == doctest::Approx(0.1));
}

TEST_CASE("kernel x on [0,2] gives row 0 1 2") {
    ObjectGrid grid(0.0, 2.0, 3);
    Vector y = Vector::Zero(1);
    auto p = discretize_kernel({[](double x, double) { return x; }, std::nullopt}, grid,
                               unit_data(y, Vector::Zero(1)));
    CHECK(p.kernel_matrix()(0, 0) == 0.0);
    CHECK(p.kernel_matrix()(0, 1) == 1.0);
    CHECK(p.kernel_matrix()(0, 2) == 2.0);
}

TEST_CASE("support zeroes columns outside the interval") {
    ObjectGrid grid(-2.0, 2.0, 5);
    Vector y = Vector::Zero(1);
    auto p = discretize_kernel({[](double, double) { return 1.0; }, SupportInterval(-1.5, 1.5)}, grid,
                               unit_data(y, Vector::Zero(1)));
    CHECK(p.kernel_matrix()(0, 0) == 0.0);
    CHECK(p.kernel_matrix()(0, 4) == 0.0);
    CHECK(p.kernel_matrix()(0, 2) == 1.0);
}

TEST_CASE("non-finite kernel names the point") {
    ObjectGrid grid(0.0, 1.0, 3);
    Vector y = Vector::Zero(1);
    KernelSpec bad{[](double x, double) { return x > 0.9 ? std::nan("") : 1.0; }, std::nullopt};
    try {
        discretize_kernel(bad, grid, unit_data(y, Vector::Zero(1)));
        FAIL("expected EvaluationError");
    } catch (const EvaluationError& e) {
        CHECK(std::string(e.what()).find("x = 1") != std::string::npos);
    }
}

TEST_CASE("fermionic forward map matches fine quadrature") {
    double beta = 10.0;
    ObjectGrid grid(-5.0, 5.0, 201);
    Vector y = imaginary_time_points(beta, 25);
    auto p = discretize_kernel(fermionic_kernel_spec(beta), grid, unit_data(y, Vector::Zero(25)));
    Vector g = apply_forward(p, two_gaussian_object(grid));
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        double yi = y[i];
        double oracle = simpson([&](double x) { return fermionic_kernel(x, yi, beta) * two_gaussian_density(x); },
                                -5.0, 5.0, 20000);
        CHECK(std::abs(g[i] - oracle) / std::abs(oracle) < 1e-4);
    }
}

TEST_CASE("G(0) + G(beta) equals minus the prefactored norm") {
    double beta = 10.0;
    ObjectGrid grid(-5.0, 5.0, 201);
    Vector y(2);
    y << 0.0, beta;
    auto p = discretize_kernel(fermionic_kernel_spec(beta), grid, unit_data(y, Vector::Zero(2)));
    Vector a = two_gaussian_object(grid);
    Vector g = apply_forward(p, a);
    double norm = a.sum() * grid.dx();
    CHECK(std::abs(g[0] + g[1] + norm / (2.0 * M_PI)) < 1e-6);
}

TEST_CASE("identity and zero forward maps") {
    auto p = identity_problem(4);
    Vector a(4);
    a << 1.0, -2.0, 3.0, 0.5;
    CHECK((apply_forward(p, a) - a).norm() == 0.0);
    CHECK(apply_forward(p, Vector::Zero(4)).norm() == 0.0);
    CHECK_THROWS_AS(apply_forward(p, Vector::Zero(3)), DimensionError);
}

TEST_CASE("data inner product") {
    Vector v(2), w(2);
    v << 1, 0;
    w << 0, 1;
    CHECK(inner_product_data(v, w) == 0.0);
    v << 3, 4;
    CHECK(inner_product_data(v, v) == 25.0);
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n;
    Vector a(25), b(25);
    for (Eigen::Index i = 0; i < 25; ++i) {
        a[i] = n(rng);
        b[i] = n(rng);
    }
    double sum = 0.0;
    for (Eigen::Index i = 0; i < 25; ++i) sum += a[i] * b[i];
    CHECK(inner_product_data(a, b) == doctest::Approx(sum).epsilon(1e-15));
    CHECK_THROWS_AS(inner_product_data(a, Vector::Zero(3)), DimensionError);
}

TEST_CASE("chi squared examples") {
    auto p = identity_problem(3);
    Vector a(3);
    a << 0.2, 0.4, 0.6;
    auto exact = p.with_data(p.data().with_values(a));
    CHECK(chi_squared(exact, a) == 0.0);

    ObjectGrid grid(0.0, 1.0, 2);
    Vector y = Vector::Zero(1), val(1), sig(1);
    val << 1.5;
    sig << 0.5;
    Matrix k(1, 2);
    k << 1.0, 0.0;
    DiscretizedProblem single(grid, DataSet(y, val, sig), k);
    Vector obj(2);
    obj << 1.0, 0.0;
    CHECK(chi_squared(single, obj) == doctest::Approx(1.0));
}

TEST_CASE("chi squared per point near one for true object over seeds") {
    SpectralBenchmark bench;
    bench.noise_level = 0.01;
    double total = 0.0;
    int within = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        bench.seed = seed;
        auto inst = generate_benchmark(bench);
        Vector resid = inst.problem.data().values() - inst.noiseless;
        double chi2 = resid.cwiseQuotient(inst.problem.data().sigmas()).squaredNorm();
        double per = chi2 / 25.0;
        total += per;
        if (per > 1.0 / 3.0 && per < 3.0) ++within;
    }
    CHECK(total / 100.0 == doctest::Approx(1.0).epsilon(0.15));
    CHECK(within >= 95);
}

TEST_CASE("rmse examples") {
    Vector a = Vector::LinSpaced(100, -1.0, 1.0);
    CHECK(rmse(a, a) == 0.0);
    Vector shifted = a.array() + 0.3;
    CHECK(rmse(shifted, a) == doctest::Approx(0.3));
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u;
    Vector b(100);
    for (auto& v : b) v = u(rng);
    double s = 0.0;
    for (Eigen::Index i = 0; i < 100; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    CHECK(rmse(a, b) == doctest::Approx(std::sqrt(s / 100.0)).epsilon(1e-14));
    CHECK_THROWS_AS(rmse(a, Vector::Zero(5)), DimensionError);
}

TEST_CASE("constraint residuals") {
    ObjectGrid grid(0.0, 1.0, 11);
    Vector y = Vector::Zero(1);
    auto p = discretize_kernel({[](double, double) { return 1.0; }, std::nullopt}, grid,
                               unit_data(y, Vector::Zero(1)));
    auto c = p.with_constraints({{"norm", [](double) { return 1.0; }, 1.1, 0.0}});
    Vector r = constraint_residuals(c, Vector::Ones(11));
    CHECK(r.size() == 1);
    CHECK(std::abs(r[0]) < 1e-12);
}
