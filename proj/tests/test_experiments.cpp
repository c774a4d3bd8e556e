#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "specshape/errors.hpp"
#include "specshape/rng.hpp"
#include "specshape/experiments.hpp"

using namespace specshape;

namespace {

SignalBatch random_batch(int n, int s, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd m(n, s);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return SignalBatch(std::move(m));
}

struct TestGraph {
    Graph graph;
    LaplacianOperator lap;
    SpectralDecomposition decomp;
};

TestGraph er_graph(int n, double p, std::uint64_t seed) {
    Graph g = generate_graph(ErdosRenyiParams{n, p}, seed);
    LaplacianOperator lap = build_laplacian(g, LaplacianKind::Combinatorial);
    SpectralDecomposition d = decompose(lap);
    return {std::move(g), std::move(lap), std::move(d)};
}

std::vector<double> grid(double lambda_max, int points) {
    std::vector<double> xs;
    for (int i = 0; i < points; ++i)
        xs.push_back(lambda_max * i / (points - 1));
    return xs;
}

} // namespace

TEST_CASE("ground truth is max-one normalized on the grid") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull}) {
        const GroundTruthFilter f = make_ground_truth(2, 8.0, seed);
        double peak = 0.0;
        for (double l : grid(8.0, 512))
            peak = std::max(peak, f.response_at(l));
        CHECK(peak == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("one-peak target is a single normalized gaussian") {
    const GroundTruthFilter f = make_ground_truth(1, 4.0, 5);
    REQUIRE(f.peaks.size() == 1);
    CHECK(f.peaks[0].width >= 4.0 / 20);
    CHECK(f.peaks[0].width <= 4.0 / 8);
    CHECK(f.peaks[0].height >= 0.5);
    CHECK(f.peaks[0].height <= 1.0);
}

TEST_CASE("two-peak target shows two grid local maxima") {
    int good = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const GroundTruthFilter f = make_ground_truth(2, 8.0, seed);
        const auto xs = grid(8.0, 512);
        const auto r = f.response(xs);
        int maxima = 0;
        for (std::size_t i = 1; i + 1 < r.size(); ++i)
            if (r[i] > r[i - 1] && r[i] > r[i + 1]) ++maxima;
        if (maxima == 2) ++good;
        // centers respect the minimum separation
        CHECK(std::abs(f.peaks[0].center - f.peaks[1].center) >= 8.0 / 4 - 1e-12);
    }
    CHECK(good >= 9); // extremely uneven heights can merge shoulders
}

TEST_CASE("ground truth is deterministic and validates num_peaks") {
    const GroundTruthFilter a = make_ground_truth(3, 6.0, 77);
    const GroundTruthFilter b = make_ground_truth(3, 6.0, 77);
    REQUIRE(a.peaks.size() == b.peaks.size());
    for (std::size_t i = 0; i < a.peaks.size(); ++i) {
        CHECK(a.peaks[i].center == b.peaks[i].center);
        CHECK(a.peaks[i].width == b.peaks[i].width);
        CHECK(a.peaks[i].height == b.peaks[i].height);
    }
    CHECK(a.scale == b.scale);
    CHECK_THROWS_AS(make_ground_truth(0, 6.0, 0), ParameterError);
    CHECK_THROWS_AS(make_ground_truth(5, 6.0, 0), ParameterError);
    CHECK_THROWS_AS(make_ground_truth(2, 0.0, 0), ParameterError);
}

TEST_CASE("ground truth json round-trips bit-faithfully") {
    const GroundTruthFilter f = make_ground_truth(2, 5.5, 9);
    const GroundTruthFilter back = ground_truth_from_json(ground_truth_to_json(f));
    REQUIRE(back.peaks.size() == f.peaks.size());
    for (std::size_t i = 0; i < f.peaks.size(); ++i) {
        CHECK(back.peaks[i].center == f.peaks[i].center);
        CHECK(back.peaks[i].width == f.peaks[i].width);
        CHECK(back.peaks[i].height == f.peaks[i].height);
    }
    CHECK(back.lambda_max == f.lambda_max);
    CHECK(back.scale == f.scale);
    CHECK_THROWS_AS(ground_truth_from_json("[]"), FormatError);
}

TEST_CASE("full-band projection reproduces the unprojected gaussian draw") {
    auto [g, lap, d] = er_graph(20, 0.3, 10);
    SignalRegime full;
    full.kind = SignalRegime::Kind::BandLimited;
    full.band_lo = 0.0;
    full.band_hi = d.lambda_max();
    const SignalBatch banded = make_signals(full, d, 6, 11);
    SignalRegime iid; // same seed draws the same underlying gaussians
    const SignalBatch raw = make_signals(iid, d, 6, 11);
    CHECK((banded.values - raw.values).norm() /
              std::max(raw.values.norm(), 1.0) <
          1e-10);
}

TEST_CASE("diffusion at t=0 is the identity on the draw") {
    auto [g, lap, d] = er_graph(18, 0.35, 12);
    SignalRegime diff;
    diff.kind = SignalRegime::Kind::Diffusion;
    diff.t = 0.0;
    const SignalBatch diffused = make_signals(diff, d, 5, 13);
    SignalRegime iid;
    const SignalBatch raw = make_signals(iid, d, 5, 13);
    CHECK((diffused.values - raw.values).norm() /
              std::max(raw.values.norm(), 1.0) <
          1e-10);
}

TEST_CASE("band-limited signals have no energy outside the band") {
    auto [g, lap, d] = er_graph(24, 0.3, 14);
    const double lo = d.eigenvalues[5] - 1e-9;
    const double hi = d.eigenvalues[12] + 1e-9;
    SignalRegime band;
    band.kind = SignalRegime::Kind::BandLimited;
    band.band_lo = lo;
    band.band_hi = hi;
    const SignalBatch x = make_signals(band, d, 4, 15);
    std::vector<double> complement(24);
    for (int j = 0; j < 24; ++j)
        complement[j] =
            (d.eigenvalues[j] < lo || d.eigenvalues[j] > hi) ? 1.0 : 0.0;
    const SignalBatch outside = apply_exact(d, complement, x);
    CHECK(outside.values.norm() < 1e-9);
}

TEST_CASE("empty bands and invalid bands are rejected") {
    auto [g, lap, d] = er_graph(12, 0.4, 16);
    SignalRegime band;
    band.kind = SignalRegime::Kind::BandLimited;
    // a gap strictly between two adjacent eigenvalues
    band.band_lo = (d.eigenvalues[3] + d.eigenvalues[4]) / 2 - 1e-12;
    band.band_hi = (d.eigenvalues[3] + d.eigenvalues[4]) / 2 + 1e-12;
    CHECK_THROWS_AS(make_signals(band, d, 2, 17), DegenerateInputError);
    band.band_lo = 2.0;
    band.band_hi = 1.0;
    CHECK_THROWS_AS(make_signals(band, d, 2, 18), ParameterError);
}

TEST_CASE("smooth lowpass attenuates high frequencies") {
    auto [g, lap, d] = er_graph(24, 0.35, 19);
    SignalRegime smooth;
    smooth.kind = SignalRegime::Kind::SmoothLowpass;
    const SignalBatch x = make_signals(smooth, d, 32, 20);
    const Eigen::MatrixXd spectral = d.eigenvectors.transpose() * x.values;
    // mean energy in the lowest quartile of the spectrum dominates the top one
    const int q = 6;
    double low = 0.0, high = 0.0;
    for (int j = 0; j < q; ++j) low += spectral.row(j).squaredNorm();
    for (int j = 24 - q; j < 24; ++j) high += spectral.row(j).squaredNorm();
    CHECK(low > 4.0 * high);
}

TEST_CASE("localized bumps are one-hot diffusions") {
    auto [g, lap, d] = er_graph(16, 0.4, 21);
    SignalRegime bump;
    bump.kind = SignalRegime::Kind::LocalizedBump;
    const SignalBatch x = make_signals(bump, d, 3, 22);
    // each column equals exp(-0.5 L) e_i for some i: reverse the diffusion
    // and the result must be (numerically) a standard basis vector
    std::vector<double> inverse(16);
    for (int j = 0; j < 16; ++j) inverse[j] = std::exp(0.5 * d.eigenvalues[j]);
    const SignalBatch undone = apply_exact(d, inverse, x);
    for (int s = 0; s < 3; ++s) {
        Eigen::VectorXd col = undone.values.col(s);
        int big = 0;
        for (int i = 0; i < 16; ++i)
            if (std::abs(col[i]) > 0.5) ++big;
        CHECK(big == 1);
        CHECK(col.cwiseAbs().maxCoeff() == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("regime names round-trip") {
    for (auto kind : {SignalRegime::Kind::GaussianIID, SignalRegime::Kind::SmoothLowpass,
                      SignalRegime::Kind::LocalizedBump, SignalRegime::Kind::BandLimited,
                      SignalRegime::Kind::Diffusion})
        CHECK(regime_kind_from_name(regime_name(kind)) == kind);
    CHECK_THROWS_AS(regime_kind_from_name("nonsense"), ParameterError);
}

TEST_CASE("mse matches analytic and naive values") {
    const SignalBatch a = random_batch(4, 1, 23);
    CHECK(mse(a, a) == 0.0);
    SignalBatch shifted = a;
    shifted.values.array() += 1.0;
    CHECK(mse(shifted, a) == doctest::Approx(4.0).epsilon(1e-12));

    const SignalBatch x = random_batch(7, 5, 24);
    const SignalBatch y = random_batch(7, 5, 25);
    double naive = 0.0;
    for (int s = 0; s < 5; ++s)
        for (int i = 0; i < 7; ++i) {
            const double d = x.values(i, s) - y.values(i, s);
            naive += d * d;
        }
    naive /= 5.0;
    CHECK(mse(x, y) == doctest::Approx(naive).epsilon(1e-12));
    CHECK_THROWS_AS(mse(x, random_batch(7, 4, 26)), ContractError);
}

TEST_CASE("spectral discrepancy matches analytic and naive values") {
    const std::vector<double> a = {1.0, 2.0, 3.0};
    CHECK(spectral_discrepancy(a, a) == 0.0);
    const std::vector<double> b = {2.0, 3.0, 4.0};
    CHECK(spectral_discrepancy(a, b) == doctest::Approx(1.0).epsilon(1e-12));

    Rng rng(27);
    std::vector<double> u, v;
    for (int i = 0; i < 40; ++i) {
        u.push_back(rng.normal());
        v.push_back(rng.normal());
    }
    double naive = 0.0;
    for (int i = 0; i < 40; ++i) naive += (u[i] - v[i]) * (u[i] - v[i]);
    naive /= 40.0;
    CHECK(spectral_discrepancy(u, v) == doctest::Approx(naive).epsilon(1e-12));
    CHECK_THROWS_AS(spectral_discrepancy(u, a), ContractError);
}

TEST_CASE("improvement follows its definition and guards the domain") {
    CHECK(improvement(1.0, 0.5) == doctest::Approx(0.5));
    CHECK(improvement(2.0, 2.0) == 0.0);
    CHECK(improvement(0.5, 1.0) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(improvement(0.0, 1.0), DegenerateInputError);
    CHECK_THROWS_AS(improvement(-1.0, 0.5), DegenerateInputError);
}

TEST_CASE("filtering twice equals filtering by the squared response") {
    auto [g, lap, d] = er_graph(20, 0.3, 28);
    const GroundTruthFilter f = make_ground_truth(2, d.lambda_max(), 29);
    std::vector<double> resp, resp2;
    for (int j = 0; j < 20; ++j) {
        const double r = f.response_at(d.eigenvalues[j]);
        resp.push_back(r);
        resp2.push_back(r * r);
    }
    const SignalBatch x = random_batch(20, 4, 30);
    const SignalBatch twice = apply_exact(d, resp, apply_exact(d, resp, x));
    const SignalBatch squared = apply_exact(d, resp2, x);
    CHECK((twice.values - squared.values).norm() <=
          1e-9 * std::max(squared.values.norm(), 1.0));
}

TEST_CASE("self-comparison maximizes every similarity feature") {
    auto [g, lap, d] = er_graph(24, 0.3, 31);
    const SignalBatch sig = random_batch(24, 8, 32);
    const GraphView view{&g, &d, &sig};
    const SimilarityFeatures f = similarity_features(view, view);
    CHECK(f.spectral_distance == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(f.degree_correlation == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(f.clustering_similarity == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(f.path_length_similarity == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(f.density_similarity == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(f.signal_correlation == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(f.spectral_similarity == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(f.moment_similarity == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_FALSE(f.degenerate_pearson);
}

TEST_CASE("density similarity orders dense-vs-sparse below self") {
    // complete graph vs path graph on 12 nodes
    std::vector<Edge> ce, pe;
    for (int u = 0; u < 12; ++u)
        for (int v = u + 1; v < 12; ++v) ce.push_back({u, v, 1.0});
    for (int u = 0; u + 1 < 12; ++u) pe.push_back({u, u + 1, 1.0});
    Graph complete(12, std::move(ce)), path(12, std::move(pe));
    auto lc = build_laplacian(complete, LaplacianKind::Combinatorial);
    auto lp = build_laplacian(path, LaplacianKind::Combinatorial);
    auto dc = decompose(lc);
    auto dp = decompose(lp);
    const SignalBatch sc = random_batch(12, 6, 33);
    const SignalBatch sp = random_batch(12, 6, 34);
    const GraphView vc{&complete, &dc, &sc};
    const GraphView vp{&path, &dp, &sp};
    const SimilarityFeatures cross = similarity_features(vc, vp);
    const SimilarityFeatures self = similarity_features(vc, vc);
    CHECK(cross.density_similarity < self.density_similarity);
    CHECK(cross.spectral_distance > 0.0);
}

TEST_CASE("spectral distance equals the brute-force sorted-eigenvalue norm") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto a = er_graph(16 + static_cast<int>(seed % 5), 0.3, 40 + seed);
        auto b = er_graph(16 + static_cast<int>((seed * 3) % 7), 0.35, 80 + seed);
        const SignalBatch sa = random_batch(a.graph.num_nodes(), 4, 120 + seed);
        const SignalBatch sb = random_batch(b.graph.num_nodes(), 4, 160 + seed);
        const SimilarityFeatures f = similarity_features(
            GraphView{&a.graph, &a.decomp, &sa}, GraphView{&b.graph, &b.decomp, &sb});
        // both graphs resampled to the longer eigenvalue list, L2 of the gap
        const int na = a.graph.num_nodes(), nb = b.graph.num_nodes();
        const int m = std::max(na, nb);
        auto resample = [&](const Eigen::VectorXd& v, int n) {
            std::vector<double> out;
            for (int i = 0; i < m; ++i) {
                const double pos = m == 1 ? 0.0
                                          : static_cast<double>(i) * (n - 1) / (m - 1);
                const int lo = static_cast<int>(std::floor(pos));
                const int hi = std::min(lo + 1, n - 1);
                const double frac = pos - lo;
                out.push_back(v[lo] * (1 - frac) + v[hi] * frac);
            }
            return out;
        };
        const auto ra = resample(a.decomp.eigenvalues, na);
        const auto rb = resample(b.decomp.eigenvalues, nb);
        double sq = 0.0;
        for (int i = 0; i < m; ++i) sq += (ra[i] - rb[i]) * (ra[i] - rb[i]);
        CHECK(f.spectral_distance == doctest::Approx(std::sqrt(sq)).epsilon(1e-12));
    }
}

TEST_CASE("fixed prototype bank peaks where its atoms peak") {
    const FixedPrototypeBank proto = make_fixed_prototype(3, 10.0);
    REQUIRE(proto.scales.size() == 3);
    // atom a(z) = z exp(-z) with z = s * lambda peaks at lambda = 1/s
    for (double s : proto.scales) {
        const double peak_lambda = 1.0 / s;
        CHECK(peak_lambda >= 10.0 / 10 - 1e-9);
        CHECK(peak_lambda <= 0.9 * 10.0 + 1e-9);
        const std::vector<double> probe = {peak_lambda * 0.8, peak_lambda,
                                           peak_lambda * 1.2};
        FixedPrototypeBank single = proto;
        single.scales = {s};
        single.amplitudes = {1.0};
        const auto r = single.response(probe);
        CHECK(r[1] > r[0]);
        CHECK(r[1] > r[2]);
    }
}

TEST_CASE("least-squares amplitudes never lose to fixed ones on the data term") {
    auto [g, lap, d] = er_graph(20, 0.35, 50);
    const GroundTruthFilter gt = make_ground_truth(1, d.lambda_max(), 51);
    SignalBatch inputs = random_batch(20, 16, 52);
    std::vector<double> resp;
    for (int j = 0; j < 20; ++j) resp.push_back(gt.response_at(d.eigenvalues[j]));
    SignalBatch targets = apply_exact(d, resp, inputs);
    SupervisedDataset data{lap, d, std::move(inputs), std::move(targets)};

    const FixedPrototypeBank fixed = make_fixed_prototype(2, d.lambda_max());
    const FixedPrototypeBank ls = fit_prototype_amplitudes(fixed, data);
    std::vector<double> lambdas(d.eigenvalues.data(), d.eigenvalues.data() + 20);
    const double mse_fixed = response_mse(fixed.response(lambdas), data);
    const double mse_ls = response_mse(ls.response(lambdas), data);
    CHECK(mse_ls <= mse_fixed + 1e-12);
}

TEST_CASE("experiment datasets are deterministic end to end") {
    const SignalRegime regime;
    const ExperimentDataset a = make_experiment_dataset(
        ErdosRenyiParams{24, 0.3}, LaplacianKind::Combinatorial, regime, 2, 8, 60);
    const ExperimentDataset b = make_experiment_dataset(
        ErdosRenyiParams{24, 0.3}, LaplacianKind::Combinatorial, regime, 2, 8, 60);
    CHECK(a.graph.num_edges() == b.graph.num_edges());
    CHECK(a.data.inputs.values == b.data.inputs.values);
    CHECK(a.data.targets.values == b.data.targets.values);
    CHECK(a.gt.scale == b.gt.scale);
    // targets really are the ground truth applied to the inputs
    std::vector<double> resp;
    for (int j = 0; j < 24; ++j)
        resp.push_back(a.gt.response_at(a.data.decomp.eigenvalues[j]));
    const SignalBatch expect = apply_exact(a.data.decomp, resp, a.data.inputs);
    CHECK((a.data.targets.values - expect.values).norm() < 1e-12);
}

TEST_CASE("single-graph experiment returns one row per K with baselines") {
    SingleGraphSpec spec;
    spec.family = ErdosRenyiParams{16, 0.35};
    spec.num_peaks = 1;
    spec.num_signals = 12;
    spec.k_list = {1, 2};
    spec.training.epochs = 15;
    spec.seed = 61;
    const auto rows = run_single_graph_experiment(spec);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].K == 1);
    CHECK(rows[1].K == 2);
    for (const auto& r : rows) {
        CHECK(std::isfinite(r.mse_adaptive));
        CHECK(std::isfinite(r.espec_adaptive));
        CHECK(std::isfinite(r.mse_fixed));
        CHECK(std::isfinite(r.mse_fixed_ls));
        CHECK(static_cast<int>(r.components.size()) == r.K);
        CHECK(r.mse_fixed_ls <= r.mse_fixed + 1e-12);
        for (const auto& c : r.components) {
            CHECK(c.mu >= 0.0);
            CHECK(c.gamma >= 0.0);
        }
    }
}

TEST_CASE("transfer trial bookkeeping is exact") {
    TransferTrialSpec spec;
    spec.source_family = ErdosRenyiParams{16, 0.35};
    spec.target_family = ErdosRenyiParams{16, 0.35};
    spec.K = 2;
    spec.num_peaks = 1;
    spec.s_src = 24;
    spec.s_tgt = 8;
    spec.pretrain.epochs = 20;
    spec.adaptation.epochs = 15;
    spec.seed = 62;
    spec.label = "test_class";
    const TransferTrialResult r = run_transfer_trial(spec);
    CHECK(r.label == "test_class");
    CHECK(r.imp == improvement(r.mse_before, r.mse_after));
    CHECK(r.delta_t ==
          doctest::Approx((r.mse_scratch - r.mse_after) / r.mse_scratch)
              .epsilon(1e-15));
    CHECK(r.baseline_hash_before == r.baseline_hash_after);
    CHECK(r.adapt_steps == r.scratch_steps); // matched compute
    CHECK(r.mse_before > 0.0);
    CHECK(r.mse_after > 0.0);
}

TEST_CASE("transfer summary aggregates classes and correlations") {
    std::vector<TransferTrialResult> trials;
    Rng rng(63);
    for (int c = 0; c < 2; ++c)
        for (int t = 0; t < 5; ++t) {
            TransferTrialResult r;
            r.label = c == 0 ? "a" : "b";
            r.imp = rng.uniform(-0.2, 0.6);
            r.delta_t = rng.uniform(-0.5, 0.5);
            r.features.degree_correlation = rng.uniform(0.0, 1.0);
            r.features.signal_correlation = rng.uniform(0.0, 1.0);
            trials.push_back(r);
        }
    const TransferSummary s = summarize_transfer(trials);
    REQUIRE(s.classes.size() == 2);
    for (const auto& cs : s.classes) {
        CHECK(cs.count == 5);
        CHECK(std::isfinite(cs.mean_imp));
        CHECK(cs.stderr_imp >= 0.0);
        CHECK(cs.mean_abs_imp >= std::abs(cs.mean_imp) - 1e-15);
    }
    for (int f = 0; f < SimilarityFeatures::kCount; ++f) {
        if (s.correlation_degenerate[f]) continue;
        CHECK(std::abs(s.correlations[f]) <= 1.0 + 1e-12);
    }
    // hand-check one class mean
    double mean_a = 0.0;
    for (int t = 0; t < 5; ++t) mean_a += trials[t].imp;
    mean_a /= 5;
    const auto& ca = s.classes[0].label == "a" ? s.classes[0] : s.classes[1];
    CHECK(ca.mean_imp == doctest::Approx(mean_a).epsilon(1e-12));
}
