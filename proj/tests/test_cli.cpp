#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dynnet/cli.hpp"
#include "dynnet/dynamics.hpp"
#include "dynnet/model.hpp"

using namespace dynnet;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "dynnet_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> lines;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) lines.push_back(line);
    return lines;
}

std::vector<std::vector<std::string>> csv_cells(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& line : lines_of(text)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

// the fast, stable smoke configuration shared by the CLI tests
std::vector<std::string> smoke_args(const fs::path& out) {
    return {"train",
            "--out",
            out.string(),
            "--seed",
            "11",
            "--set",
            "model.dt=0.5",
            "--set",
            "model.t_end=12.5",
            "--set",
            "data.synthetic.rows=400",
            "--set",
            "train.max_epochs=6"};
}

}  // namespace

TEST_CASE("train writes checkpoint, loss curve, and run record") {
    const auto out = fresh_dir("train_smoke");
    CHECK(cli::run(smoke_args(out)) == 0);

    const json effective = json::parse(slurp(out / "effective_config.json"));
    CHECK(effective["model"]["dt"] == 0.5);

    const Checkpoint ckpt = load_checkpoint((out / "checkpoint.json").string());
    CHECK(ckpt.model_config["kind"] == "fhn");
    CHECK(ckpt.params.size() == 25);
    CHECK(ckpt.standardizer.has_value());

    const json record = json::parse(slurp(out / "run_record.json"));
    CHECK(record["param_count"] == 25);
    const auto curve = lines_of(slurp(out / "loss_curve.csv"));
    CHECK(curve[0] == "epoch,train_loss,val_loss");
    CHECK(curve.size() == 1 + record["train_loss"].size());
}

TEST_CASE("model dispatch via the --model flag") {
    const auto out = fresh_dir("train_mlp");
    auto args = smoke_args(out);
    args.push_back("--model");
    args.push_back("mlp");
    args.push_back("--set");
    args.push_back("model.hidden_dim=2");
    CHECK(cli::run(args) == 0);
    const Checkpoint ckpt = load_checkpoint((out / "checkpoint.json").string());
    CHECK(ckpt.model_config["kind"] == "mlp");
    CHECK(ckpt.params.size() == 25);  // iso-parameter budget

    const auto out2 = fresh_dir("train_node");
    auto args2 = smoke_args(out2);
    args2.push_back("--model");
    args2.push_back("node");
    args2.push_back("--set");
    args2.push_back("model.hidden_dim=5");
    args2.push_back("--set");
    args2.push_back("train.max_epochs=2");
    CHECK(cli::run(args2) == 0);
    CHECK(load_checkpoint((out2 / "checkpoint.json").string()).model_config["kind"] ==
          "node");
}

TEST_CASE("evaluate reproduces the run record metrics") {
    const auto out = fresh_dir("train_for_eval");
    REQUIRE(cli::run(smoke_args(out)) == 0);
    const json record = json::parse(slurp(out / "run_record.json"));

    const auto eval_out = fresh_dir("eval");
    CHECK(cli::run({"evaluate", "--checkpoint", (out / "checkpoint.json").string(),
                    "--split", "test", "--out", eval_out.string(), "--seed", "11",
                    "--set", "data.synthetic.rows=400"}) == 0);
    const json metrics = json::parse(slurp(eval_out / "metrics.json"));
    CHECK(metrics["rmse"].get<double>() ==
          doctest::Approx(record["test_rmse"].get<double>()).epsilon(1e-12));
}

TEST_CASE("evaluate rejects a feature-dimension mismatch with exit 2") {
    const auto out = fresh_dir("train_for_mismatch");
    REQUIRE(cli::run(smoke_args(out)) == 0);
    const auto eval_out = fresh_dir("eval_mismatch");
    CHECK(cli::run({"evaluate", "--checkpoint", (out / "checkpoint.json").string(),
                    "--out", eval_out.string(), "--set", "data.synthetic.features=5"}) == 2);
}

TEST_CASE("reruns with the same seed are byte-identical") {
    const auto a = fresh_dir("repro_a");
    const auto b = fresh_dir("repro_b");
    REQUIRE(cli::run(smoke_args(a)) == 0);
    REQUIRE(cli::run(smoke_args(b)) == 0);
    CHECK(slurp(a / "loss_curve.csv") == slurp(b / "loss_curve.csv"));
    CHECK(slurp(a / "checkpoint.json") == slurp(b / "checkpoint.json"));
    // and a rerun from the echoed config reproduces the same artifacts
    const auto c = fresh_dir("repro_c");
    REQUIRE(cli::run({"train", "--config", (a / "effective_config.json").string(), "--out",
                      c.string()}) == 0);
    CHECK(slurp(a / "loss_curve.csv") == slurp(c / "loss_curve.csv"));
    CHECK(slurp(a / "checkpoint.json") == slurp(c / "checkpoint.json"));
}

TEST_CASE("grid-search emits one row per cell and a best config") {
    const auto out = fresh_dir("grid");
    const auto space_path = out / "space.json";
    {
        std::ofstream s(space_path);
        s << R"({"dt":[0.5,1.0],"t_end":[10.0],"batch_size":[32],"lr":[1e-3,1e-2]})";
    }
    auto run_grid = [&](const fs::path& dir, const char* workers) {
        return cli::run({"grid-search", "--out", dir.string(), "--space",
                         space_path.string(), "--seed", "4", "--workers", workers,
                         "--set", "data.synthetic.rows=300", "--set",
                         "train.max_epochs=4"});
    };
    CHECK(run_grid(out, "1") == 0);
    const auto rows = csv_cells(slurp(out / "grid_results.csv"));
    REQUIRE(rows.size() == 5);  // header + 4 cells
    CHECK(rows[0][0] == "dt");
    const json best = json::parse(slurp(out / "best_config.json"));
    CHECK(best.contains("model"));
    CHECK(best.contains("train"));

    SUBCASE("rerun matches except the timing column") {
        const auto out2 = fresh_dir("grid_rerun");
        CHECK(run_grid(out2, "1") == 0);
        const auto rows2 = csv_cells(slurp(out2 / "grid_results.csv"));
        REQUIRE(rows2.size() == rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            REQUIRE(rows2[r].size() == rows[r].size());
            for (std::size_t c = 0; c + 1 < rows[r].size(); ++c) {
                CHECK(rows2[r][c] == rows[r][c]);
            }
        }
    }
    SUBCASE("worker fan-out is a deterministic merge") {
        const auto out2 = fresh_dir("grid_workers");
        CHECK(run_grid(out2, "2") == 0);
        const auto rows2 = csv_cells(slurp(out2 / "grid_results.csv"));
        REQUIRE(rows2.size() == rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            for (std::size_t c = 0; c + 1 < rows[r].size(); ++c) {
                CHECK(rows2[r][c] == rows[r][c]);
            }
        }
    }
}

TEST_CASE("simulate") {
    SUBCASE("fixed point gives a constant trajectory") {
        const auto out = fresh_dir("sim_fixed");
        CHECK(cli::run({"simulate", "--out", out.string(), "--set",
                        "simulate.initial=[[0,0]]", "--set", "simulate.t_end=5"}) == 0);
        const auto rows = csv_cells(slurp(out / "trajectory_0.csv"));
        CHECK(rows[0] == std::vector<std::string>{"t", "v_1", "w_1"});
        for (std::size_t r = 1; r < rows.size(); ++r) {
            CHECK(rows[r][1] == "0");
            CHECK(rows[r][2] == "0");
        }
        CHECK(fs::exists(out / "v_nullcline.csv"));
        CHECK(fs::exists(out / "w_nullcline.csv"));
    }
    SUBCASE("sub-threshold start stays below 0.3") {
        const auto out = fresh_dir("sim_sub");
        CHECK(cli::run({"simulate", "--out", out.string(), "--set",
                        "simulate.initial=[[0.1,0]]", "--set", "simulate.t_end=1000"}) == 0);
        const auto rows = csv_cells(slurp(out / "trajectory_0.csv"));
        double v_max = -1.0;
        for (std::size_t r = 1; r < rows.size(); ++r) {
            v_max = std::max(v_max, std::stod(rows[r][1]));
        }
        CHECK(v_max < 0.3);
    }
    SUBCASE("super-threshold start spikes and recovers") {
        const auto out = fresh_dir("sim_super");
        CHECK(cli::run({"simulate", "--out", out.string(), "--set",
                        "simulate.initial=[[0.4,0]]", "--set", "simulate.t_end=1000"}) == 0);
        const auto rows = csv_cells(slurp(out / "trajectory_0.csv"));
        double v_max = -1.0;
        std::size_t argmax = 1;
        for (std::size_t r = 1; r < rows.size(); ++r) {
            const double v = std::stod(rows[r][1]);
            if (v > v_max) {
                v_max = v;
                argmax = r;
            }
        }
        CHECK(v_max > 0.5);
        bool recovered = false;
        for (std::size_t r = argmax; r < rows.size(); ++r) {
            if (std::abs(std::stod(rows[r][1])) < 0.05) {
                recovered = true;
                break;
            }
        }
        CHECK(recovered);
        // endpoint agrees with the RK4 oracle once both are back near rest
        const FhnField field(FhnParams{}, 1);
        const std::vector<double> s0 = {0.4, 0.0};
        const auto rk4 = reference_solve(s0, field, 1000.0, 1e-3);
        const auto& last = rows.back();
        CHECK(std::abs(std::stod(last[1]) - rk4[0]) < 0.05);
    }
    SUBCASE("g = 0 skips the w-nullcline") {
        const auto out = fresh_dir("sim_g0");
        CHECK(cli::run({"simulate", "--out", out.string(), "--set", "simulate.fhn.g=0",
                        "--set", "simulate.initial=[[0,0]]", "--set",
                        "simulate.t_end=1"}) == 0);
        CHECK(fs::exists(out / "v_nullcline.csv"));
        CHECK_FALSE(fs::exists(out / "w_nullcline.csv"));
    }
    SUBCASE("a blow-up configuration is reported as a config error") {
        const auto out = fresh_dir("sim_blowup");
        CHECK(cli::run({"simulate", "--out", out.string(), "--set",
                        "simulate.initial=[[0.73,-0.27]]", "--set", "simulate.dt=20",
                        "--set", "simulate.t_end=500"}) == 1);
    }
}

TEST_CASE("gradcheck exit codes") {
    const auto out = fresh_dir("gradcheck");
    CHECK(cli::run({"gradcheck", "--out", out.string(), "--set", "model.dt=0.5", "--set",
                    "model.t_end=2.5"}) == 0);
    CHECK(cli::run({"gradcheck", "--out", out.string(), "--set", "model.dt=0.5", "--set",
                    "model.t_end=2.5", "--set", "gradcheck.tolerance=0"}) == 3);
}

TEST_CASE("usage and data errors map to distinct exit codes") {
    const auto out = fresh_dir("errors");
    // missing CSV: data error
    CHECK(cli::run({"train", "--out", out.string(), "--data", "/nonexistent.csv"}) == 2);
    // the effective config was still echoed before the failure
    CHECK(fs::exists(out / "effective_config.json"));
    // malformed --set: usage error
    CHECK(cli::run({"train", "--out", out.string(), "--set", "model.dt"}) == 1);
    // unknown subcommand: usage error
    CHECK(cli::run({"frobnicate"}) == 1);
    // missing required option: usage error
    CHECK(cli::run({"evaluate", "--out", out.string()}) == 1);
    // unstable simulate grid: config error
    CHECK(cli::run({"train", "--out", out.string(), "--set", "model.dt=3",
                    "--set", "model.t_end=10"}) == 1);
}

TEST_CASE("the shipped grid space is the full 2304-cell cross-product") {
    fs::path space_path;
    for (const char* candidate :
         {"configs/fhn_grid.json", "../configs/fhn_grid.json",
          "../../configs/fhn_grid.json", "../../../configs/fhn_grid.json"}) {
        if (fs::exists(candidate)) {
            space_path = candidate;
            break;
        }
    }
    REQUIRE(fs::exists(space_path));
    const json space = json::parse(slurp(space_path));
    const std::size_t cells = space["dt"].size() * space["t_end"].size() *
                              space["batch_size"].size() * space["lr"].size();
    CHECK(space["dt"].size() == 8);
    CHECK(space["t_end"].size() == 8);
    CHECK(space["batch_size"].size() == 4);
    CHECK(space["lr"].size() == 9);
    CHECK(cells == 2304);
}

TEST_CASE("dotted overrides parse JSON values with string fallback") {
    json config = cli::default_config();
    cli::apply_override(config, "model.dt=2.5");
    CHECK(config["model"]["dt"] == 2.5);
    cli::apply_override(config, "model.kind=node");
    CHECK(config["model"]["kind"] == "node");
    cli::apply_override(config, "train.shuffle=false");
    CHECK(config["train"]["shuffle"] == false);
    cli::apply_override(config, "data.fractions=[0.8,0.1,0.1]");
    CHECK(config["data"]["fractions"][0] == 0.8);
    CHECK_THROWS_AS(cli::apply_override(config, "nonsense"), ConfigError);
}
