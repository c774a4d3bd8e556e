#include "specshape/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "specshape/errors.hpp"
#include "specshape/experiments.hpp"
#include "specshape/rng.hpp"
#include "specshape/version.hpp"

namespace fs = std::filesystem;

namespace specshape {

std::string to_hex(std::uint64_t value) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[value & 0xF];
        value >>= 4;
    }
    return out;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os << content;
    if (!os) throw IoError("write failed: " + path.string());
}

std::string read_file(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read: " + path.string());
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

namespace {

// ---------------------------------------------------------------- CSV I/O

/// Headerless CSV, one line per matrix column (the on-disk layout is
/// column-major; the sidecar schema repeats this).
std::string matrix_to_csv(const Eigen::MatrixXd& m) {
    std::ostringstream os;
    os.precision(17);
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            if (r) os << ",";
            os << m(r, c);
        }
        os << "\n";
    }
    return os.str();
}

Eigen::MatrixXd matrix_from_csv(const std::string& text, const std::string& name) {
    std::vector<std::vector<double>> cols;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<double> vals;
        std::size_t start = 0;
        while (start <= line.size()) {
            const std::size_t comma = line.find(',', start);
            const std::string tok =
                line.substr(start, comma == std::string::npos ? std::string::npos
                                                              : comma - start);
            try {
                std::size_t used = 0;
                vals.push_back(std::stod(tok, &used));
                if (used != tok.size()) throw std::invalid_argument(tok);
            } catch (const std::exception&) {
                throw FormatError(name + ": bad numeric field '" + tok + "'");
            }
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (!cols.empty() && vals.size() != cols.front().size())
            throw FormatError(name + ": ragged rows");
        cols.push_back(std::move(vals));
    }
    if (cols.empty()) throw FormatError(name + ": empty matrix");
    Eigen::MatrixXd m(cols.front().size(), cols.size());
    for (std::size_t c = 0; c < cols.size(); ++c)
        for (std::size_t r = 0; r < cols[c].size(); ++r) m(r, c) = cols[c][r];
    return m;
}

// ------------------------------------------------------------- config core

nlohmann::json default_training(int epochs) {
    return {{"learning_rate", 1e-3}, {"batch_size", 8},     {"epochs", epochs},
            {"alpha", 1e-3},         {"beta", 1e-4},        {"weight_decay", 1e-4},
            {"grid_points", 64},     {"carry_over_shaping", false}};
}

nlohmann::json default_config(const std::string& command) {
    if (command == "generate")
        return {{"graph",
                 {{"family", "erdos_renyi"}, {"n", 32}, {"p", 0.3}, {"weight", 1.0}}},
                {"laplacian", "combinatorial"},
                {"signals", {{"regime", "gaussian_iid"}, {"count", 64}}},
                {"ground_truth", {{"num_peaks", 2}}},
                {"chebyshev_degree", 128},
                {"seed", 7}};
    if (command == "fit")
        return {{"k", 2}, {"training", default_training(200)}, {"seed", 0}};
    if (command == "transfer")
        return {{"laplacian", "combinatorial"},
                {"k", 4},
                {"num_peaks", 2},
                {"s_src", 256},
                {"s_tgt", 16},
                {"pretrain", default_training(300)},
                {"adapt", default_training(200)},
                {"classes",
                 nlohmann::json::array(
                     {{{"label", "er_to_er"},
                       {"source_graph",
                        {{"family", "erdos_renyi"}, {"n", 32}, {"p", 0.3}}},
                       {"target_graph",
                        {{"family", "erdos_renyi"}, {"n", 32}, {"p", 0.3}}},
                       {"source_regime", {{"regime", "gaussian_iid"}}},
                       {"target_regime", {{"regime", "gaussian_iid"}}},
                       {"trials", 10}}})},
                {"verify_freeze", true},
                {"seed", 1}};
    if (command == "eval") return {{"mode", "exact"}, {"degree", 64}, {"seed", 0}};
    throw ParameterError("unknown command '" + command + "'");
}

/// Objects merge recursively, except graph specs which replace wholesale
/// (family parameter sets differ, stale keys would fail validation).
void merge_into(nlohmann::json& dst, const nlohmann::json& src) {
    static const std::set<std::string> replace = {"graph", "source_graph",
                                                  "target_graph"};
    for (auto it = src.begin(); it != src.end(); ++it) {
        if (it->is_object() && dst.contains(it.key()) && dst[it.key()].is_object() &&
            !replace.count(it.key()))
            merge_into(dst[it.key()], *it);
        else
            dst[it.key()] = *it;
    }
}

void apply_override(nlohmann::json& config, const std::string& spec) {
    const std::size_t eq = spec.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ParameterError("override must look like key.path=value: '" + spec + "'");
    std::string pointer = "/" + spec.substr(0, eq);
    std::replace(pointer.begin(), pointer.end(), '.', '/');
    const std::string raw = spec.substr(eq + 1);
    nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw; // unquoted strings stay strings
    try {
        config[nlohmann::json::json_pointer(pointer)] = value;
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError("cannot apply override '" + spec + "': " + e.what());
    }
}

void reject_unknown(const nlohmann::json& obj,
                    std::initializer_list<const char*> allowed,
                    const std::string& where) {
    if (!obj.is_object())
        throw ParameterError("config: expected an object at " +
                             (where.empty() ? std::string("top level") : where));
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed)
            if (it.key() == a) {
                ok = true;
                break;
            }
        if (!ok)
            throw ParameterError("unknown config key '" + where + it.key() + "'");
    }
}

// -------------------------------------------------------- config parsers

LaplacianKind parse_kind(const nlohmann::json& j) {
    const std::string s = j.get<std::string>();
    if (s == "combinatorial") return LaplacianKind::Combinatorial;
    if (s == "normalized") return LaplacianKind::Normalized;
    throw ParameterError("laplacian must be 'combinatorial' or 'normalized', got '" +
                         s + "'");
}

FamilyParams parse_family(const nlohmann::json& j, const std::string& where) {
    reject_unknown(j,
                   {"family", "n", "p", "m", "k", "beta", "rows", "cols",
                    "block_sizes", "p_in", "p_out", "weight"},
                   where);
    const std::string fam = j.at("family").get<std::string>();
    const double weight = j.value("weight", 1.0);
    if (fam == "erdos_renyi") {
        reject_unknown(j, {"family", "n", "p", "weight"}, where);
        return ErdosRenyiParams{j.at("n").get<int>(), j.at("p").get<double>(), weight};
    }
    if (fam == "barabasi_albert") {
        reject_unknown(j, {"family", "n", "m", "weight"}, where);
        return BarabasiAlbertParams{j.at("n").get<int>(), j.at("m").get<int>(), weight};
    }
    if (fam == "watts_strogatz") {
        reject_unknown(j, {"family", "n", "k", "beta", "weight"}, where);
        return WattsStrogatzParams{j.at("n").get<int>(), j.at("k").get<int>(),
                                   j.at("beta").get<double>(), weight};
    }
    if (fam == "grid2d") {
        reject_unknown(j, {"family", "rows", "cols", "weight"}, where);
        return Grid2DParams{j.at("rows").get<int>(), j.at("cols").get<int>(), weight};
    }
    if (fam == "sbm") {
        reject_unknown(j, {"family", "block_sizes", "p_in", "p_out", "weight"}, where);
        return StochasticBlockModelParams{j.at("block_sizes").get<std::vector<int>>(),
                                          j.at("p_in").get<double>(),
                                          j.at("p_out").get<double>(), weight};
    }
    throw ParameterError(where + "family: unknown graph family '" + fam + "'");
}

SignalRegime parse_regime(const nlohmann::json& j, const std::string& where,
                          bool allow_count = false) {
    if (allow_count)
        reject_unknown(j, {"regime", "count", "band_lo", "band_hi", "t"}, where);
    else
        reject_unknown(j, {"regime", "band_lo", "band_hi", "t"}, where);
    SignalRegime r;
    r.kind = regime_kind_from_name(j.at("regime").get<std::string>());
    r.band_lo = j.value("band_lo", 0.0);
    r.band_hi = j.value("band_hi", 0.0);
    r.t = j.value("t", 1.0);
    return r;
}

TrainingConfig parse_training(const nlohmann::json& j, const std::string& where) {
    reject_unknown(j,
                   {"learning_rate", "batch_size", "epochs", "alpha", "beta",
                    "weight_decay", "grid_points", "carry_over_shaping"},
                   where);
    TrainingConfig cfg;
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.alpha = j.value("alpha", cfg.alpha);
    cfg.beta = j.value("beta", cfg.beta);
    cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
    cfg.grid_points = j.value("grid_points", cfg.grid_points);
    cfg.carry_over_shaping = j.value("carry_over_shaping", cfg.carry_over_shaping);
    cfg.validate();
    return cfg;
}

// ------------------------------------------------------------ provenance

struct Provenance {
    std::string hash;

    void stamp(nlohmann::json& j) const {
        j["config_hash"] = hash;
        j["version"] = kVersion;
    }

    /// Sidecar schema next to a CSV: layout description plus provenance.
    void write_schema(const fs::path& csv_path, nlohmann::json schema) const {
        schema["file"] = csv_path.filename().string();
        stamp(schema);
        fs::path p = csv_path;
        p.replace_extension(".schema.json");
        write_file(p, schema.dump(2) + "\n");
    }
};

void write_resolved_config(const fs::path& out_dir, const nlohmann::json& config,
                           const Provenance& prov) {
    nlohmann::json doc;
    doc["config"] = config;
    prov.stamp(doc);
    write_file(out_dir / "resolved_config.json", doc.dump(2) + "\n");
}

/// Provenance fields are stamped into documents produced by the library
/// serializers (which know nothing about configs).
std::string stamped(const std::string& json_text, const Provenance& prov) {
    nlohmann::json j = nlohmann::json::parse(json_text);
    prov.stamp(j);
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------- dataset files

struct LoadedDataset {
    Graph graph;
    LaplacianKind kind;
    SignalBatch inputs;
    SignalBatch targets;
    std::optional<GroundTruthFilter> gt;
    nlohmann::json meta;
};

LoadedDataset load_dataset(const fs::path& dir) {
    if (dir.empty()) throw ParameterError("--data directory is required");
    auto loaded = [&](const char* name) { return read_file(dir / name); };

    Graph graph = [&] {
        try {
            return graph_from_json(loaded("graph.json"));
        } catch (const FormatError& e) {
            throw FormatError((dir / "graph.json").string() + ": " + e.what());
        }
    }();

    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(loaded("dataset.json"));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError((dir / "dataset.json").string() + ": " + e.what());
    }

    LoadedDataset ds{std::move(graph), LaplacianKind::Combinatorial, {}, {}, {}, meta};
    try {
        ds.kind = parse_kind(meta.at("laplacian"));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError((dir / "dataset.json").string() + ": " + e.what());
    }
    ds.inputs = SignalBatch(matrix_from_csv(loaded("inputs.csv"),
                                            (dir / "inputs.csv").string()));
    ds.targets = SignalBatch(matrix_from_csv(loaded("targets.csv"),
                                             (dir / "targets.csv").string()));
    if (ds.inputs.num_nodes() != ds.graph.num_nodes() ||
        ds.targets.num_nodes() != ds.graph.num_nodes())
        throw FormatError(dir.string() + ": signal rows do not match graph size");
    if (ds.inputs.num_signals() != ds.targets.num_signals())
        throw FormatError(dir.string() + ": inputs/targets column mismatch");

    if (fs::exists(dir / "ground_truth.json")) {
        try {
            ds.gt = ground_truth_from_json(loaded("ground_truth.json"));
        } catch (const FormatError& e) {
            throw FormatError((dir / "ground_truth.json").string() + ": " + e.what());
        }
    }
    return ds;
}

void ensure_out_dir(const fs::path& out) {
    if (out.empty()) throw ParameterError("--out directory is required");
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw IoError("cannot create output directory " + out.string());
}

std::vector<double> eigen_to_vec(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

} // namespace

nlohmann::json build_config(const std::string& command,
                            const std::string& config_path,
                            const std::vector<std::string>& overrides,
                            std::optional<std::uint64_t> seed_flag) {
    nlohmann::json config = default_config(command);
    if (!config_path.empty()) {
        nlohmann::json user;
        try {
            user = nlohmann::json::parse(read_file(config_path));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(config_path + ": " + e.what());
        }
        if (!user.is_object())
            throw FormatError(config_path + ": config must be a JSON object");
        merge_into(config, user);
    }
    for (const auto& o : overrides) apply_override(config, o);
    if (seed_flag) config["seed"] = *seed_flag;
    return config;
}

// ================================================================ generate

void run_generate(const CommandArgs& a) {
    const nlohmann::json& c = a.config;
    reject_unknown(c, {"graph", "laplacian", "signals", "ground_truth",
                       "chebyshev_degree", "seed"},
                   "");
    try {
        const FamilyParams family = parse_family(c.at("graph"), "graph.");
        const LaplacianKind kind = parse_kind(c.at("laplacian"));
        const SignalRegime regime = parse_regime(c.at("signals"), "signals.", true);
        const int S = c.at("signals").value("count", 64);
        reject_unknown(c.at("ground_truth"), {"num_peaks"}, "ground_truth.");
        const int num_peaks = c.at("ground_truth").at("num_peaks").get<int>();
        const int cheb_degree = c.at("chebyshev_degree").get<int>();
        const std::uint64_t seed = c.at("seed").get<std::uint64_t>();

        ensure_out_dir(a.out_dir);
        const Provenance prov{to_hex(fnv1a(c.dump()))};

        const Graph graph = generate_graph(family, derive_seed(seed, 1));
        const LaplacianOperator lap = build_laplacian(graph, kind);
        const int n = graph.num_nodes();
        const GroundTruthFilter gt =
            make_ground_truth(num_peaks, lap.lambda_max(), derive_seed(seed, 2));

        SignalBatch inputs, targets;
        std::string target_mode;
        if (n <= kDenseThreshold) {
            const SpectralDecomposition decomp = decompose(lap);
            inputs = make_signals(regime, decomp, S, derive_seed(seed, 3));
            targets = apply_exact(decomp, gt.response(eigen_to_vec(decomp.eigenvalues)),
                                  inputs);
            target_mode = "exact";
        } else {
            // Above the dense threshold only the i.i.d. regime is available
            // and supervision comes from the polynomial path.
            if (regime.kind != SignalRegime::Kind::GaussianIID)
                throw CapabilityError(
                    "graphs above the dense threshold support only the "
                    "gaussian_iid regime");
            inputs = make_gaussian_signals(n, S, derive_seed(seed, 3));
            const ChebyshevFilter filt = project_chebyshev(
                [&](double l) { return gt.response_at(l); }, lap.lambda_max(),
                cheb_degree);
            targets = apply_chebyshev(filt, lap, inputs);
            target_mode = "chebyshev";
        }

        write_file(a.out_dir / "graph.json",
                   stamped(graph_to_json(graph, family, derive_seed(seed, 1)), prov));
        write_file(a.out_dir / "ground_truth.json",
                   stamped(ground_truth_to_json(gt), prov));
        write_file(a.out_dir / "inputs.csv", matrix_to_csv(inputs.values));
        write_file(a.out_dir / "targets.csv", matrix_to_csv(targets.values));
        const nlohmann::json layout = {
            {"layout", "column-major"},
            {"line", "one signal (matrix column); fields are node values"},
            {"num_nodes", n},
            {"num_signals", S}};
        prov.write_schema(a.out_dir / "inputs.csv", layout);
        prov.write_schema(a.out_dir / "targets.csv", layout);

        nlohmann::json meta;
        meta["format_version"] = 1;
        meta["laplacian"] =
            kind == LaplacianKind::Combinatorial ? "combinatorial" : "normalized";
        meta["num_nodes"] = n;
        meta["num_signals"] = S;
        meta["regime"] = {{"regime", regime_name(regime.kind)}};
        if (regime.kind == SignalRegime::Kind::BandLimited) {
            meta["regime"]["band_lo"] = regime.band_lo;
            meta["regime"]["band_hi"] = regime.band_hi;
        }
        if (regime.kind == SignalRegime::Kind::Diffusion)
            meta["regime"]["t"] = regime.t;
        meta["seed"] = seed;
        meta["lambda_max"] = lap.lambda_max();
        meta["targets"] = target_mode;
        if (target_mode == "chebyshev") meta["chebyshev_degree"] = cheb_degree;
        prov.stamp(meta);
        write_file(a.out_dir / "dataset.json", meta.dump(2) + "\n");
        write_resolved_config(a.out_dir, c, prov);
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(std::string("config: ") + e.what());
    }
}

// ===================================================================== fit

void run_fit(const CommandArgs& a) {
    const nlohmann::json& c = a.config;
    reject_unknown(c, {"k", "training", "seed"}, "");
    int K = 0;
    TrainingConfig cfg;
    std::uint64_t seed = 0;
    try {
        K = c.at("k").get<int>();
        cfg = parse_training(c.at("training"), "training.");
        seed = c.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(std::string("config: ") + e.what());
    }
    cfg.seed = seed;

    ensure_out_dir(a.out_dir);
    const Provenance prov{to_hex(fnv1a(c.dump()))};

    LoadedDataset ds = load_dataset(a.data_dir);
    LaplacianOperator lap = build_laplacian(ds.graph, ds.kind);
    SpectralDecomposition decomp = decompose(lap);
    SupervisedDataset data{std::move(lap), std::move(decomp), std::move(ds.inputs),
                           std::move(ds.targets)};
    data.validate();

    const TrainingState state = fit(data, K, cfg);

    nlohmann::json metrics;
    metrics["format_version"] = 1;
    metrics["k"] = K;
    metrics["mse"] = state.best_mse;
    metrics["best_epoch"] = state.best_epoch;
    metrics["steps"] = state.step;
    metrics["lambda_max"] = data.decomp.lambda_max();
    if (ds.gt) {
        const std::vector<double> lambdas = eigen_to_vec(data.decomp.eigenvalues);
        metrics["espec"] = spectral_discrepancy(state.bank.response(lambdas),
                                                ds.gt->response(lambdas));
    } else {
        metrics["espec"] = nullptr;
    }
    prov.stamp(metrics);

    write_file(a.out_dir / "checkpoint.json",
               stamped(checkpoint_to_json(state), prov));
    write_file(a.out_dir / "metrics.json", metrics.dump(2) + "\n");
    write_file(a.out_dir / "loss_history.csv", history_csv(state));
    prov.write_schema(a.out_dir / "loss_history.csv",
                      {{"columns", {"epoch", "total", "data", "smooth", "shape"}}});
    write_file(a.out_dir / "response.csv", response_curve_csv(state.bank));
    nlohmann::json resp_schema = {{"points", 512}, {"k", K}};
    resp_schema["columns"] = {"lambda", "response_total", "response_component_1..k"};
    prov.write_schema(a.out_dir / "response.csv", resp_schema);
    write_resolved_config(a.out_dir, c, prov);
}

// ================================================================ transfer

void run_transfer(const CommandArgs& a) {
    const nlohmann::json& c = a.config;
    reject_unknown(c, {"laplacian", "k", "num_peaks", "s_src", "s_tgt", "pretrain",
                       "adapt", "classes", "verify_freeze", "seed"},
                   "");
    std::vector<TransferTrialSpec> specs;
    bool verify_freeze = true;
    try {
        const LaplacianKind kind = parse_kind(c.at("laplacian"));
        const int K = c.at("k").get<int>();
        const int num_peaks = c.at("num_peaks").get<int>();
        const int s_src = c.at("s_src").get<int>();
        const int s_tgt = c.at("s_tgt").get<int>();
        const TrainingConfig pre = parse_training(c.at("pretrain"), "pretrain.");
        const TrainingConfig ad = parse_training(c.at("adapt"), "adapt.");
        verify_freeze = c.at("verify_freeze").get<bool>();
        const std::uint64_t seed = c.at("seed").get<std::uint64_t>();

        const auto& classes = c.at("classes");
        if (!classes.is_array() || classes.empty())
            throw ParameterError("config: classes must be a nonempty array");
        for (std::size_t ci = 0; ci < classes.size(); ++ci) {
            const auto& cl = classes.at(ci);
            const std::string where = "classes[" + std::to_string(ci) + "].";
            reject_unknown(cl,
                           {"label", "source_graph", "target_graph", "source_regime",
                            "target_regime", "trials"},
                           where);
            const int trials = cl.at("trials").get<int>();
            if (trials < 1)
                throw ParameterError("config: " + where + "trials must be >= 1");
            TransferTrialSpec base;
            base.label = cl.at("label").get<std::string>();
            base.source_family =
                parse_family(cl.at("source_graph"), where + "source_graph.");
            base.target_family =
                parse_family(cl.at("target_graph"), where + "target_graph.");
            base.source_regime =
                parse_regime(cl.at("source_regime"), where + "source_regime.");
            base.target_regime =
                parse_regime(cl.at("target_regime"), where + "target_regime.");
            base.kind = kind;
            base.K = K;
            base.num_peaks = num_peaks;
            base.s_src = s_src;
            base.s_tgt = s_tgt;
            base.pretrain = pre;
            base.adaptation = ad;
            for (int t = 0; t < trials; ++t) {
                TransferTrialSpec spec = base;
                spec.seed = derive_seed(seed, ci * 100000ull + t);
                specs.push_back(std::move(spec));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(std::string("config: ") + e.what());
    }

    ensure_out_dir(a.out_dir);
    const Provenance prov{to_hex(fnv1a(c.dump()))};

    // Trials are independent; a worker pool fills a pre-sized slot table so
    // the merged output order never depends on scheduling.
    std::vector<TransferTrialResult> results(specs.size());
    const int jobs = std::max(1, std::min<int>(a.jobs, static_cast<int>(specs.size())));
    if (jobs == 1) {
        for (std::size_t i = 0; i < specs.size(); ++i)
            results[i] = run_transfer_trial(specs[i]);
    } else {
        std::atomic<std::size_t> next{0};
        std::mutex err_mutex;
        std::exception_ptr first_error;
        auto worker = [&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= specs.size()) return;
                try {
                    results[i] = run_transfer_trial(specs[i]);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        };
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
        if (first_error) std::rethrow_exception(first_error);
    }

    std::ostringstream csv;
    csv.precision(17);
    csv << "label,seed,mse_before,mse_after,mse_scratch,imp,delta_t,adapt_steps,"
           "scratch_steps,freeze_ok";
    for (const char* n : SimilarityFeatures::names()) csv << "," << n;
    csv << ",degenerate_pearson\n";
    int freeze_violations = 0;
    for (const auto& r : results) {
        const bool freeze_ok = r.baseline_hash_before == r.baseline_hash_after;
        freeze_violations += !freeze_ok;
        csv << r.label << "," << r.seed << "," << r.mse_before << "," << r.mse_after
            << "," << r.mse_scratch << "," << r.imp << "," << r.delta_t << ","
            << r.adapt_steps << "," << r.scratch_steps << "," << (freeze_ok ? 1 : 0);
        for (int f = 0; f < SimilarityFeatures::kCount; ++f)
            csv << "," << r.features.by_index(f);
        csv << "," << (r.features.degenerate_pearson ? 1 : 0) << "\n";
    }
    write_file(a.out_dir / "trials.csv", csv.str());
    nlohmann::json trial_schema;
    trial_schema["columns"] = {"label",       "seed",        "mse_before",
                               "mse_after",   "mse_scratch", "imp",
                               "delta_t",     "adapt_steps", "scratch_steps",
                               "freeze_ok"};
    for (const char* n : SimilarityFeatures::names())
        trial_schema["columns"].push_back(n);
    trial_schema["columns"].push_back("degenerate_pearson");
    prov.write_schema(a.out_dir / "trials.csv", trial_schema);

    const TransferSummary summary = summarize_transfer(results);
    nlohmann::json sj;
    sj["format_version"] = 1;
    sj["classes"] = nlohmann::json::array();
    for (const auto& st : summary.classes)
        sj["classes"].push_back({{"label", st.label},
                                 {"count", st.count},
                                 {"mean_imp", st.mean_imp},
                                 {"stderr_imp", st.stderr_imp},
                                 {"mean_abs_imp", st.mean_abs_imp},
                                 {"mean_delta_t", st.mean_delta_t}});
    if (verify_freeze) sj["freeze_violations"] = freeze_violations;
    prov.stamp(sj);
    write_file(a.out_dir / "summary.json", sj.dump(2) + "\n");

    nlohmann::json cj;
    cj["format_version"] = 1;
    cj["normalization"] = "improvement divided by class mean |improvement|";
    for (int f = 0; f < SimilarityFeatures::kCount; ++f) {
        const char* name = SimilarityFeatures::names()[f];
        cj["correlations"][name] = summary.correlations[f];
        cj["degenerate"][name] = summary.correlation_degenerate[f];
    }
    prov.stamp(cj);
    write_file(a.out_dir / "correlations.json", cj.dump(2) + "\n");
    write_resolved_config(a.out_dir, c, prov);

    if (!a.quiet)
        std::cerr << "transfer: " << results.size() << " trials, "
                  << summary.classes.size() << " classes\n";
}

// ==================================================================== eval

void run_eval(const CommandArgs& a) {
    const nlohmann::json& c = a.config;
    reject_unknown(c, {"mode", "degree", "seed"}, "");
    std::string mode;
    int degree = 64;
    try {
        mode = c.at("mode").get<std::string>();
        degree = c.at("degree").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(std::string("config: ") + e.what());
    }
    if (mode != "exact" && mode != "chebyshev")
        throw ParameterError("mode must be 'exact' or 'chebyshev', got '" + mode + "'");
    if (a.checkpoint_path.empty())
        throw ParameterError("--checkpoint is required for eval");

    ensure_out_dir(a.out_dir);
    const Provenance prov{to_hex(fnv1a(c.dump()))};

    TrainingState state = [&] {
        try {
            return checkpoint_from_json(read_file(a.checkpoint_path));
        } catch (const FormatError& e) {
            throw FormatError(a.checkpoint_path.string() + ": " + e.what());
        }
    }();
    const ShapedFilterBank& bank = state.bank;

    LoadedDataset ds = load_dataset(a.data_dir);
    LaplacianOperator lap = build_laplacian(ds.graph, ds.kind);

    const double lm_bank = bank.lambda_max;
    const double lm_graph = lap.lambda_max();
    const bool lambda_mismatch =
        std::abs(lm_bank - lm_graph) > 0.01 * std::max(lm_bank, lm_graph);
    if (lambda_mismatch && !a.quiet)
        std::cerr << "warning: checkpoint lambda_max " << lm_bank
                  << " differs from graph lambda_max " << lm_graph << "\n";

    nlohmann::json out;
    out["format_version"] = 1;
    out["mode"] = mode;
    out["lambda_max_checkpoint"] = lm_bank;
    out["lambda_max_graph"] = lm_graph;
    out["lambda_max_mismatch"] = lambda_mismatch;
    out["espec"] = nullptr;

    if (mode == "exact") {
        SpectralDecomposition decomp = decompose(lap);
        SupervisedDataset data{std::move(lap), std::move(decomp),
                               std::move(ds.inputs), std::move(ds.targets)};
        data.validate();
        out["mse"] = dataset_mse(bank, data);
        if (ds.gt) {
            const std::vector<double> lambdas = eigen_to_vec(data.decomp.eigenvalues);
            out["espec"] = spectral_discrepancy(bank.response(lambdas),
                                                ds.gt->response(lambdas));
        }
    } else {
        out["degree"] = degree;
        const ChebyshevFilter filt = project_bank_chebyshev(
            bank, degree, 0, Damping::None, std::max(lm_bank, lm_graph));
        ApplyStats stats;
        const SignalBatch yhat = apply_chebyshev(filt, lap, ds.inputs, &stats);
        out["mse"] = mse(yhat, ds.targets);
        out["matvec_count"] = stats.matvec_count;
    }
    prov.stamp(out);
    write_file(a.out_dir / "eval.json", out.dump(2) + "\n");
    write_resolved_config(a.out_dir, c, prov);
}

} // namespace specshape
