#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "specshape/errors.hpp"
#include "specshape/filtering.hpp"
#include "specshape/graph.hpp"

using namespace specshape;
namespace fs = std::filesystem;

namespace {

const char* cli = SPECSHAPE_CLI_PATH;

int run(const std::string& args) {
    const std::string cmd = std::string(cli) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("specshape_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

nlohmann::json load_json(const fs::path& p) {
    return nlohmann::json::parse(slurp(p));
}

Eigen::MatrixXd load_csv(const fs::path& p) {
    std::istringstream is(slurp(p));
    std::vector<std::vector<double>> cols;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<double> vals;
        std::istringstream ls(line);
        std::string tok;
        while (std::getline(ls, tok, ',')) vals.push_back(std::stod(tok));
        cols.push_back(std::move(vals));
    }
    Eigen::MatrixXd m(cols.front().size(), cols.size());
    for (std::size_t c = 0; c < cols.size(); ++c)
        for (std::size_t r = 0; r < cols[c].size(); ++r) m(r, c) = cols[c][r];
    return m;
}

} // namespace

TEST_CASE("generate twice is byte-identical") {
    const fs::path a = fresh_dir("gen_a");
    const fs::path b = fresh_dir("gen_b");
    REQUIRE(run("generate --out " + a.string() + " --seed 7") == 0);
    REQUIRE(run("generate --out " + b.string() + " --seed 7") == 0);
    for (const char* name :
         {"graph.json", "ground_truth.json", "inputs.csv", "targets.csv",
          "dataset.json", "resolved_config.json"})
        CHECK(slurp(a / name) == slurp(b / name));
}

TEST_CASE("missing required flag exits 2 and names the flag") {
    CHECK(run("generate") == 2);
    CHECK(run("fit --out /tmp/x") == 2); // --data missing
    const std::string cmd = std::string(cli) + " generate 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string output;
    char buf[256];
    while (fgets(buf, sizeof buf, pipe)) output += buf;
    pclose(pipe);
    CHECK(output.find("--out") != std::string::npos);
}

TEST_CASE("generated dataset reloads and refilters to the stored targets") {
    const fs::path dir = fresh_dir("roundtrip");
    REQUIRE(run("generate --out " + dir.string() + " --seed 11") == 0);
    const Graph g = graph_from_json(slurp(dir / "graph.json"));
    const auto lap = build_laplacian(g, LaplacianKind::Combinatorial);
    const auto d = decompose(lap);
    const nlohmann::json gt = load_json(dir / "ground_truth.json");
    std::vector<double> resp;
    for (int j = 0; j < g.num_nodes(); ++j) {
        double r = 0.0;
        for (const auto& pk : gt.at("peaks")) {
            const double c = pk.at("center").get<double>();
            const double w = pk.at("width").get<double>();
            const double h = pk.at("height").get<double>();
            const double z = (d.eigenvalues[j] - c) / w;
            r += h * std::exp(-0.5 * z * z);
        }
        resp.push_back(r * gt.at("scale").get<double>());
    }
    const SignalBatch inputs(load_csv(dir / "inputs.csv"));
    const Eigen::MatrixXd targets = load_csv(dir / "targets.csv");
    const SignalBatch refiltered = apply_exact(d, resp, inputs);
    CHECK((refiltered.values - targets).norm() /
              std::max(targets.norm(), 1.0) <
          1e-10);
}

TEST_CASE("fit produces finite metrics and honors --k") {
    const fs::path data = fresh_dir("fit_data");
    REQUIRE(run("generate --out " + data.string() +
                " --set ground_truth.num_peaks=1 --seed 3") == 0);
    const fs::path out = fresh_dir("fit_out");
    REQUIRE(run("fit --data " + data.string() + " --out " + out.string() +
                " --k 3 --set training.epochs=10") == 0);
    const nlohmann::json metrics = load_json(out / "metrics.json");
    CHECK(metrics.at("k").get<int>() == 3);
    CHECK(std::isfinite(metrics.at("mse").get<double>()));
    CHECK(std::isfinite(metrics.at("espec").get<double>()));
    CHECK(metrics.contains("config_hash"));
    CHECK(metrics.contains("version"));

    std::istringstream rs(slurp(out / "response.csv"));
    std::string header;
    std::getline(rs, header);
    CHECK(header ==
          "lambda,response_total,response_component_1,response_component_2,"
          "response_component_3");

    // rerun with the identical config reproduces metrics byte for byte
    const fs::path out2 = fresh_dir("fit_out2");
    REQUIRE(run("fit --data " + data.string() + " --out " + out2.string() +
                " --k 3 --set training.epochs=10") == 0);
    CHECK(slurp(out / "metrics.json") == slurp(out2 / "metrics.json"));
    CHECK(slurp(out / "checkpoint.json") == slurp(out2 / "checkpoint.json"));
    CHECK(slurp(out / "loss_history.csv") == slurp(out2 / "loss_history.csv"));
}

TEST_CASE("eval agrees with fit and across filter paths") {
    const fs::path data = fresh_dir("eval_data");
    REQUIRE(run("generate --out " + data.string() + " --seed 5") == 0);
    const fs::path fit_out = fresh_dir("eval_fit");
    REQUIRE(run("fit --data " + data.string() + " --out " + fit_out.string() +
                " --set training.epochs=15") == 0);
    const double fit_mse =
        load_json(fit_out / "metrics.json").at("mse").get<double>();

    const fs::path ev_exact = fresh_dir("eval_exact");
    REQUIRE(run("eval --data " + data.string() + " --checkpoint " +
                (fit_out / "checkpoint.json").string() + " --out " +
                ev_exact.string() + " --mode exact") == 0);
    const double exact_mse =
        load_json(ev_exact / "eval.json").at("mse").get<double>();
    CHECK(std::abs(exact_mse - fit_mse) <= 1e-10 * std::max(fit_mse, 1.0));

    const fs::path ev_cheb = fresh_dir("eval_cheb");
    REQUIRE(run("eval --data " + data.string() + " --checkpoint " +
                (fit_out / "checkpoint.json").string() + " --out " +
                ev_cheb.string() + " --mode chebyshev --degree 64") == 0);
    const nlohmann::json cheb = load_json(ev_cheb / "eval.json");
    const double cheb_mse = cheb.at("mse").get<double>();
    CHECK(std::abs(cheb_mse - exact_mse) / std::max(exact_mse, 1e-300) < 1e-6);
    CHECK(cheb.at("matvec_count").get<long long>() == 64 * 64);
}

TEST_CASE("transfer emits trial rows, summary, and correlations") {
    const fs::path out = fresh_dir("transfer");
    REQUIRE(run("transfer --out " + out.string() +
                " --set s_src=32 --set s_tgt=8"
                " --set pretrain.epochs=10 --set adapt.epochs=10"
                " --set classes.0.trials=3 --quiet") == 0);
    const std::string trials = slurp(out / "trials.csv");
    std::istringstream ts(trials);
    std::string header;
    std::getline(ts, header);
    CHECK(header.find("label,seed,mse_before,mse_after,mse_scratch,imp,delta_t") == 0);
    CHECK(header.find("degree_correlation") != std::string::npos);
    int rows = 0;
    std::string line;
    std::vector<std::string> first_row_fields;
    while (std::getline(ts, line)) {
        if (line.empty()) continue;
        if (rows == 0) {
            std::istringstream ls(line);
            std::string tok;
            while (std::getline(ls, tok, ',')) first_row_fields.push_back(tok);
        }
        ++rows;
    }
    CHECK(rows == 3);
    // imp column equals improvement(mse_before, mse_after) recomputed
    const double before = std::stod(first_row_fields[2]);
    const double after = std::stod(first_row_fields[3]);
    const double imp = std::stod(first_row_fields[5]);
    CHECK(imp ==
          doctest::Approx((before - after) / before).epsilon(1e-12));

    const nlohmann::json summary = load_json(out / "summary.json");
    REQUIRE(summary.at("classes").size() == 1);
    const auto& cls = summary.at("classes").at(0);
    CHECK(cls.at("count").get<int>() == 3);
    CHECK(std::isfinite(cls.at("mean_imp").get<double>()));
    CHECK(std::isfinite(cls.at("stderr_imp").get<double>()));
    CHECK(summary.at("freeze_violations").get<int>() == 0);

    const nlohmann::json corr = load_json(out / "correlations.json");
    CHECK(corr.at("correlations").contains("degree_correlation"));
    CHECK(corr.at("correlations").contains("signal_correlation"));
}

TEST_CASE("config file values merge under CLI overrides") {
    const fs::path dir = fresh_dir("cfgmerge");
    const fs::path cfg = dir / "cfg.json";
    {
        std::ofstream os(cfg);
        os << R"({"graph":{"family":"grid2d","rows":4,"cols":4},"seed":9})";
    }
    REQUIRE(run("generate --out " + dir.string() + " --config " + cfg.string() +
                " --set signals.count=5") == 0);
    const nlohmann::json resolved = load_json(dir / "resolved_config.json");
    CHECK(resolved.at("config").at("graph").at("family").get<std::string>() ==
          "grid2d");
    CHECK(resolved.at("config").at("signals").at("count").get<int>() == 5);
    CHECK(resolved.at("config").at("seed").get<int>() == 9);
    const nlohmann::json meta = load_json(dir / "dataset.json");
    CHECK(meta.at("num_nodes").get<int>() == 16);
    CHECK(meta.at("num_signals").get<int>() == 5);
}

TEST_CASE("error paths map to the documented exit codes") {
    // unknown config key -> 2
    CHECK(run("generate --out /tmp/specshape_cli_err --set graph.bogus=1") == 2);
    // unreadable dataset -> 3
    CHECK(run("fit --data /tmp/specshape_no_such_dir --out /tmp/specshape_cli_err") ==
          3);
    // malformed config file -> 3
    const fs::path dir = fresh_dir("badcfg");
    {
        std::ofstream os(dir / "bad.json");
        os << "{broken";
    }
    CHECK(run("generate --out " + dir.string() + " --config " +
              (dir / "bad.json").string()) == 3);
    // invalid parameter value -> 2
    CHECK(run("generate --out " + dir.string() + " --set graph.p=1.5") == 2);
    // corrupt dataset file -> 3
    const fs::path data = fresh_dir("corrupt");
    REQUIRE(run("generate --out " + data.string()) == 0);
    {
        std::ofstream os(data / "inputs.csv");
        os << "1,2,not_a_number\n";
    }
    CHECK(run("fit --data " + data.string() + " --out " + dir.string()) == 3);
}

TEST_CASE("large graphs generate through the polynomial path") {
    const fs::path dir = fresh_dir("large");
    // switching family replaces the whole graph object, so it goes in a file
    const fs::path cfg = dir / "large.json";
    {
        std::ofstream os(cfg);
        os << R"({"graph": {"family": "grid2d", "rows": 40, "cols": 40}})";
    }
    REQUIRE(run("generate --out " + dir.string() + " --config " + cfg.string() +
                " --set signals.count=2 --seed 1") == 0);
    const nlohmann::json meta = load_json(dir / "dataset.json");
    CHECK(meta.at("num_nodes").get<int>() == 1600);
    CHECK(meta.at("targets").get<std::string>() == "chebyshev");
    // non-iid regimes need the dense path and must be refused
    CHECK(run("generate --out " + dir.string() + " --config " + cfg.string() +
              " --set signals.regime=diffusion") == 2);
}
