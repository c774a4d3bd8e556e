#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "specshape/errors.hpp"
#include "specshape/filtering.hpp"
#include "specshape/rng.hpp"

using namespace specshape;

namespace {

SignalBatch random_batch(int n, int s, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd m(n, s);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return SignalBatch(std::move(m));
}

std::vector<double> eigen_to_vec(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

ShapedFilterBank smooth_random_bank(int K, double lambda_max, std::uint64_t seed,
                                    double gamma_cap) {
    ShapedFilterBank b = init_bank(K, lambda_max, seed);
    Rng rng(seed + 999);
    for (auto& c : b.components) {
        c.mu_raw = rng.uniform(-1.5, 1.5);
        c.amplitude = rng.uniform(-1.0, 1.0);
        const double gamma = rng.uniform(0.05, gamma_cap);
        c.gamma_raw = softplus_inverse(gamma);
    }
    return b;
}

double rel_l2(const SignalBatch& a, const SignalBatch& b) {
    return (a.values - b.values).norm() / std::max(b.values.norm(), 1e-300);
}

struct TestGraph {
    LaplacianOperator lap;
    SpectralDecomposition decomp;
};

TestGraph er_graph(int n, double p, std::uint64_t seed) {
    const Graph g = generate_graph(ErdosRenyiParams{n, p}, seed);
    LaplacianOperator lap = build_laplacian(g, LaplacianKind::Combinatorial);
    SpectralDecomposition d = decompose(lap);
    return {std::move(lap), std::move(d)};
}

} // namespace

TEST_CASE("unit response reproduces the input") {
    auto [lap, d] = er_graph(24, 0.3, 1);
    const SignalBatch x = random_batch(24, 5, 2);
    const std::vector<double> ones(24, 1.0);
    CHECK(rel_l2(apply_exact(d, ones, x), x) < 1e-10);
}

TEST_CASE("identity-on-eigenvalues response applies the laplacian") {
    auto [lap, d] = er_graph(24, 0.3, 3);
    const SignalBatch x = random_batch(24, 4, 4);
    const SignalBatch lx(lap.dense() * x.values);
    const SignalBatch filtered = apply_exact(d, eigen_to_vec(d.eigenvalues), x);
    CHECK((filtered.values - lx.values).norm() / lx.values.norm() < 1e-9);
}

TEST_CASE("single-eigenvalue indicator acts as an idempotent projector") {
    auto [lap, d] = er_graph(16, 0.4, 5);
    std::vector<double> indicator(16, 0.0);
    indicator[7] = 1.0;
    const SignalBatch x = random_batch(16, 3, 6);
    const SignalBatch once = apply_exact(d, indicator, x);
    const SignalBatch twice = apply_exact(d, indicator, once);
    CHECK((twice.values - once.values).norm() <=
          1e-9 * std::max(once.values.norm(), 1.0));
    // output lies in the eigenspace: L y = lambda_7 y
    const Eigen::MatrixXd ly = lap.dense() * once.values;
    CHECK((ly - d.eigenvalues[7] * once.values).norm() <=
          1e-9 * std::max(once.values.norm(), 1.0));
}

TEST_CASE("apply_exact validates dimensions") {
    auto [lap, d] = er_graph(8, 0.5, 7);
    const SignalBatch x = random_batch(8, 2, 8);
    CHECK_THROWS_AS(apply_exact(d, std::vector<double>(7, 1.0), x), ContractError);
    CHECK_THROWS_AS(apply_exact(d, std::vector<double>(8, 1.0), random_batch(9, 2, 9)),
                    ContractError);
}

TEST_CASE("projection of a constant keeps only the zeroth coefficient") {
    const auto f = project_chebyshev([](double) { return 1.0; }, 2.0, 8);
    CHECK(f.coefficients[0] == doctest::Approx(1.0).epsilon(1e-12));
    for (int r = 1; r <= 8; ++r)
        CHECK(std::abs(f.coefficients[r]) < 1e-12);
}

TEST_CASE("projection of the identity response is degree one") {
    // lambda = t + 1 on lambda_max = 2, so c_0 = c_1 = 1
    const auto f = project_chebyshev([](double l) { return l; }, 2.0, 6);
    CHECK(f.coefficients[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(f.coefficients[1] == doctest::Approx(1.0).epsilon(1e-12));
    for (int r = 2; r <= 6; ++r)
        CHECK(std::abs(f.coefficients[r]) < 1e-12);
}

TEST_CASE("projection parameters are validated") {
    CHECK_THROWS_AS(project_chebyshev([](double) { return 1.0; }, 2.0, 0),
                    ParameterError);
    CHECK_THROWS_AS(project_chebyshev([](double) { return 1.0; }, 2.0, 4, 3),
                    ParameterError);
}

TEST_CASE("smooth gaussian bump is captured to high accuracy at R=64") {
    const double lmax = 4.0;
    auto bump = [&](double l) { return std::exp(-3.0 * (l - 1.7) * (l - 1.7)); };
    const auto f = project_chebyshev(bump, lmax, 64);
    double worst = 0.0;
    for (int i = 0; i <= 2000; ++i) {
        const double l = lmax * i / 2000.0;
        worst = std::max(worst, std::abs(chebyshev_response(f, l) - bump(l)));
    }
    CHECK(worst < 1e-8);
}

TEST_CASE("jackson weights match the closed form and taper monotonically") {
    CHECK(jackson_weight(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(jackson_weight(0, 64) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(jackson_weight(1, 1) == doctest::Approx(0.0).epsilon(1e-12));
    // independent evaluation of the formula at r=3, R=7
    const int r = 3, R = 7;
    const double expect = ((R - r + 1) * std::cos(M_PI * r / (R + 1)) +
                           std::sin(M_PI * r / (R + 1)) / std::tan(M_PI / (R + 1))) /
                          (R + 1);
    CHECK(jackson_weight(r, R) == doctest::Approx(expect).epsilon(1e-12));
    for (int Rs = 1; Rs <= 256; ++Rs)
        for (int rs = 1; rs <= Rs; ++rs)
            REQUIRE(jackson_weight(rs, Rs) <= jackson_weight(rs - 1, Rs) + 1e-12);
    CHECK_THROWS_AS(jackson_weight(-1, 4), ContractError);
    CHECK_THROWS_AS(jackson_weight(5, 4), ContractError);
}

TEST_CASE("constant-term-only filter is the identity") {
    auto [lap, d] = er_graph(16, 0.4, 10);
    ChebyshevFilter f;
    f.coefficients = {1.0};
    f.lambda_max = lap.lambda_max();
    const SignalBatch x = random_batch(16, 3, 11);
    const SignalBatch y = apply_chebyshev(f, lap, x);
    CHECK((y.values - x.values).norm() == 0.0);
}

TEST_CASE("degree-one filter reproduces L x") {
    auto [lap, d] = er_graph(20, 0.35, 12);
    const auto f =
        project_chebyshev([](double l) { return l; }, lap.lambda_max(), 3);
    const SignalBatch x = random_batch(20, 4, 13);
    const SignalBatch y = apply_chebyshev(f, lap, x);
    const Eigen::MatrixXd lx = lap.dense() * x.values;
    CHECK((y.values - lx).norm() / lx.norm() < 1e-10);
}

TEST_CASE("recurrence costs exactly R matvecs per column") {
    auto [lap, d] = er_graph(16, 0.4, 14);
    const auto f = project_chebyshev([](double l) { return std::exp(-l); },
                                     lap.lambda_max(), 24);
    ApplyStats stats;
    apply_chebyshev(f, lap, random_batch(16, 5, 15), &stats);
    CHECK(stats.matvec_count == 24 * 5);
}

TEST_CASE("overrun of the stated spectrum is flagged when detectable") {
    auto [lap, d] = er_graph(16, 0.4, 16);
    ChebyshevFilter f = project_chebyshev([](double) { return 1.0; },
                                          lap.lambda_max() * 0.5, 8);
    ApplyStats stats;
    apply_chebyshev(f, lap, random_batch(16, 1, 17), &stats, &d);
    CHECK(stats.lambda_max_exceeded);
    ChebyshevFilter ok = project_chebyshev([](double) { return 1.0; },
                                           lap.lambda_max(), 8);
    ApplyStats stats2;
    apply_chebyshev(ok, lap, random_batch(16, 1, 18), &stats2, &d);
    CHECK_FALSE(stats2.lambda_max_exceeded);
}

TEST_CASE("polynomial responses of degree <= R are reproduced exactly") {
    auto [lap, d] = er_graph(18, 0.4, 19);
    const double lmax = lap.lambda_max();
    auto poly = [](double l) { return 0.3 - 1.2 * l + 0.25 * l * l * l; };
    const auto f = project_chebyshev(poly, lmax, 5);
    const SignalBatch x = random_batch(18, 3, 20);
    const SignalBatch via_cheb = apply_chebyshev(f, lap, x);
    const SignalBatch via_exact =
        apply_exact(d, [&] {
            std::vector<double> r;
            for (int j = 0; j < 18; ++j) r.push_back(poly(d.eigenvalues[j]));
            return r;
        }(), x);
    CHECK(rel_l2(via_cheb, via_exact) < 1e-10);
}

TEST_CASE("both paths are linear in the signal") {
    auto [lap, d] = er_graph(16, 0.4, 21);
    const ShapedFilterBank b = smooth_random_bank(2, lap.lambda_max(), 22, 0.5);
    const SignalBatch x = random_batch(16, 2, 23);
    const SignalBatch y = random_batch(16, 2, 24);
    const double alpha = 0.7, beta = -1.3;
    const SignalBatch mix(alpha * x.values + beta * y.values);

    for (const FilterMode mode :
         {FilterMode::exact(), FilterMode::chebyshev(48)}) {
        const SignalBatch fx = filter_bank_apply(b, lap, x, mode);
        const SignalBatch fy = filter_bank_apply(b, lap, y, mode);
        const SignalBatch fmix = filter_bank_apply(b, lap, mix, mode);
        const Eigen::MatrixXd expect = alpha * fx.values + beta * fy.values;
        CHECK((fmix.values - expect).norm() <=
              1e-10 * std::max(expect.norm(), 1.0));
    }
}

TEST_CASE("chebyshev path agrees with exact filtering for smooth banks") {
    // [oracle] exact spectral filtering; gamma capped so the response is
    // resolvable at R=64 (bandwidth heuristic R >= 8 lambda_max sqrt(gamma))
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto [lap, d] = er_graph(32, 0.3, 100 + seed);
        const double lmax = lap.lambda_max();
        const double cap = std::pow(64.0 / (8.0 * lmax), 2);
        const ShapedFilterBank b = smooth_random_bank(3, lmax, 200 + seed, cap);
        const SignalBatch x = random_batch(32, 4, 300 + seed);
        const SignalBatch exact = filter_bank_apply(b, lap, x, FilterMode::exact());
        const SignalBatch cheb =
            filter_bank_apply(b, lap, x, FilterMode::chebyshev(64));
        worst = std::max(worst, rel_l2(cheb, exact));
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("damped filtering matches exact application of the damped response") {
    auto [lap, d] = er_graph(24, 0.3, 30);
    const ShapedFilterBank b = smooth_random_bank(2, lap.lambda_max(), 31, 1.0);
    const auto f = project_bank_chebyshev(b, 32, 0, Damping::Jackson);
    const SignalBatch x = random_batch(24, 3, 32);
    const SignalBatch damped = apply_chebyshev(f, lap, x);
    std::vector<double> damped_response;
    for (int j = 0; j < 24; ++j)
        damped_response.push_back(chebyshev_response(f, d.eigenvalues[j]));
    const SignalBatch reference = apply_exact(d, damped_response, x);
    CHECK(rel_l2(damped, reference) < 1e-9);
}

TEST_CASE("zero-amplitude bank filters to zero in both modes") {
    auto [lap, d] = er_graph(16, 0.4, 33);
    ShapedFilterBank b = init_bank(1, lap.lambda_max(), 34);
    b.components[0].amplitude = 0.0;
    const SignalBatch x = random_batch(16, 2, 35);
    CHECK(filter_bank_apply(b, lap, x, FilterMode::exact()).values.norm() == 0.0);
    CHECK(filter_bank_apply(b, lap, x, FilterMode::chebyshev(16)).values.norm() <
          1e-12);
}

TEST_CASE("doubling amplitudes doubles the output in both modes") {
    auto [lap, d] = er_graph(16, 0.4, 36);
    ShapedFilterBank b = smooth_random_bank(2, lap.lambda_max(), 37, 1.0);
    ShapedFilterBank b2 = b;
    for (auto& c : b2.components) c.amplitude *= 2.0;
    const SignalBatch x = random_batch(16, 2, 38);
    for (const FilterMode mode :
         {FilterMode::exact(), FilterMode::chebyshev(48)}) {
        const SignalBatch y1 = filter_bank_apply(b, lap, x, mode);
        const SignalBatch y2 = filter_bank_apply(b2, lap, x, mode);
        CHECK((y2.values - 2.0 * y1.values).norm() <=
              1e-12 * std::max(y2.values.norm(), 1.0));
    }
}

TEST_CASE("bank projection happens once regardless of K") {
    auto [lap, d] = er_graph(16, 0.4, 39);
    const ShapedFilterBank b = smooth_random_bank(4, lap.lambda_max(), 40, 1.0);
    ApplyStats stats;
    filter_bank_apply(b, lap, random_batch(16, 2, 41),
                      FilterMode::chebyshev(32), &stats);
    CHECK(stats.matvec_count == 32 * 2); // independent of K = 4
}

TEST_CASE("chebyshev filter json round-trips") {
    auto f = project_chebyshev([](double l) { return std::cos(l); }, 3.5, 12, 0,
                               Damping::Jackson);
    const ChebyshevFilter back = chebyshev_from_json(chebyshev_to_json(f));
    CHECK(back.lambda_max == f.lambda_max);
    CHECK(back.damping == f.damping);
    REQUIRE(back.coefficients.size() == f.coefficients.size());
    for (std::size_t i = 0; i < f.coefficients.size(); ++i)
        CHECK(back.coefficients[i] == f.coefficients[i]);
    CHECK_THROWS_AS(chebyshev_from_json("{}"), FormatError);
}

TEST_CASE("response curve csv has the documented shape") {
    const ShapedFilterBank b = init_bank(3, 2.0, 42);
    const std::string csv = response_curve_csv(b, 16);
    std::istringstream is(csv);
    std::string header;
    std::getline(is, header);
    CHECK(header ==
          "lambda,response_total,response_component_1,response_component_2,"
          "response_component_3");
    int rows = 0;
    std::string line;
    while (std::getline(is, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 16);
}
