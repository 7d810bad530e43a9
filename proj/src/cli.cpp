#include "dynnet/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "dynnet/data.hpp"
#include "dynnet/model.hpp"
#include "dynnet/train.hpp"

namespace dynnet::cli {

using nlohmann::json;
namespace fs = std::filesystem;

json default_config() {
    json j;
    j["model"] = {
        {"kind", "fhn"},
        {"input_dim", 8},
        {"fhn_units", 1},
        {"output_dim", 1},
        {"t_start", 0.0},
        {"dt", 20.0},
        {"t_end", 500.0},
        {"use_layer_norm", true},
        {"use_silu", true},
        {"fhn", {{"a", 0.25}, {"b", 0.002}, {"g", 2.5}, {"I", 0.0}}},
        {"seed", 0},
    };
    j["train"] = {
        {"max_epochs", 100}, {"patience", 10}, {"min_delta", 5e-2}, {"batch_size", 32},
        {"lr", 5e-4},        {"seed", 0},      {"shuffle", true},
    };
    j["data"] = {
        {"kind", "synthetic"},
        {"path", ""},
        {"fractions", {0.7, 0.2, 0.1}},
        {"seed", 0},
        {"synthetic",
         {{"kind", "linear"}, {"rows", 2000}, {"features", 8}, {"noise", 1.33}, {"seed", 0}}},
    };
    j["simulate"] = {
        {"fhn", {{"a", 0.25}, {"b", 0.002}, {"g", 2.5}, {"I", 0.0}}},
        {"initial", {{0.4, 0.0}}},
        {"t_start", 0.0},
        {"t_end", 1000.0},
        {"dt", 0.01},
        {"v_min", -0.5},
        {"v_max", 1.5},
        {"points", 401},
    };
    j["gradcheck"] = {{"tolerance", 1e-5}, {"h", 1e-5}, {"samples", 4}};
    return j;
}

void merge_config(json& base, const json& overlay) {
    if (!overlay.is_object() || !base.is_object()) {
        base = overlay;
        return;
    }
    for (auto it = overlay.begin(); it != overlay.end(); ++it) {
        if (base.contains(it.key()) && base[it.key()].is_object() && it.value().is_object()) {
            merge_config(base[it.key()], it.value());
        } else {
            base[it.key()] = it.value();
        }
    }
}

void apply_override(json& config, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("--set expects key=value, got '" + kv + "'");
    }
    std::string pointer = "/" + kv.substr(0, eq);
    for (auto& c : pointer) {
        if (c == '.') c = '/';
    }
    const std::string raw = kv.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;  // plain string
    }
    config[json::json_pointer(pointer)] = value;
}

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> sets;
    std::string out_dir = "out";
    std::string data_path;
    std::string model_kind;
    std::int64_t seed = -1;
    int workers = 1;
};

json resolve_config(const CommonOpts& opts) {
    json config = default_config();
    if (!opts.config_path.empty()) {
        std::ifstream in(opts.config_path);
        if (!in) throw ConfigError("cannot open config file: " + opts.config_path);
        json file_cfg;
        try {
            in >> file_cfg;
        } catch (const json::exception& e) {
            throw ConfigError("config parse error: " + std::string(e.what()));
        }
        merge_config(config, file_cfg);
    }
    for (const auto& kv : opts.sets) apply_override(config, kv);
    if (!opts.model_kind.empty()) {
        config["model"]["kind"] = opts.model_kind;
    }
    if (!opts.data_path.empty()) {
        config["data"]["kind"] = "csv";
        config["data"]["path"] = opts.data_path;
    }
    if (opts.seed >= 0) {
        const auto seed = static_cast<std::uint64_t>(opts.seed);
        config["model"]["seed"] = seed;
        config["train"]["seed"] = seed;
        config["data"]["seed"] = seed;
    }
    return config;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FileNotFound("cannot write: " + path);
    out << text;
}

// Echo the fully-resolved configuration before doing any work, so a rerun
// from the echoed file reproduces the run.
void echo_config(const json& config, const std::string& out_dir) {
    fs::create_directories(out_dir);
    write_text(out_dir + "/effective_config.json", config.dump(2) + "\n");
}

RawTable load_table(const json& data_cfg) {
    const std::string kind = data_cfg.value("kind", "synthetic");
    if (kind == "csv") {
        const std::string path = data_cfg.value("path", "");
        if (path.empty()) throw ConfigError("data.kind=csv requires data.path");
        return load_csv(path);
    }
    if (kind == "synthetic") {
        const json s = data_cfg.value("synthetic", json::object());
        return synthetic_dataset(s.value("kind", "linear"), s.value("rows", 2000),
                                 s.value("features", 8), s.value("noise", 1.33),
                                 s.value("seed", 0ull));
    }
    throw ConfigError("data.kind must be 'csv' or 'synthetic'");
}

std::array<double, 3> fractions_of(const json& data_cfg) {
    auto f = data_cfg.value("fractions", std::vector<double>{0.7, 0.2, 0.1});
    if (f.size() != 3) throw BadFractions("data.fractions must have three entries");
    return {f[0], f[1], f[2]};
}

Dataset load_dataset(const json& data_cfg) {
    RawTable table = load_table(data_cfg);
    if (table.rejected_rows > 0) {
        std::cerr << "warning: rejected " << table.rejected_rows << " malformed row(s)";
        if (!table.rejected_lines.empty()) {
            std::cerr << " (first at line " << table.rejected_lines.front() << ")";
        }
        std::cerr << "\n";
    }
    Dataset dataset = Dataset::prepare(std::move(table), fractions_of(data_cfg),
                                       data_cfg.value("seed", 0ull));
    if (dataset.standardizer.had_zero_variance) {
        std::cerr << "warning: zero-variance column(s) standardized with std = 1\n";
    }
    return dataset;
}

int cmd_train(const CommonOpts& opts) {
    const json config = resolve_config(opts);
    echo_config(config, opts.out_dir);
    const Dataset data = load_dataset(config.at("data"));
    const auto model = make_model(config.at("model"));
    const TrainConfig train_cfg = train_config_from_json(config.at("train"));

    std::vector<double> best_params;
    const RunRecord record = train_model(*model, data, train_cfg, &best_params);

    Checkpoint ckpt;
    ckpt.model_config = model->config_json();
    ckpt.params = best_params;
    ckpt.standardizer = data.standardizer;
    ckpt.seed = train_cfg.seed;
    save_checkpoint(opts.out_dir + "/checkpoint.json", ckpt);
    write_loss_curve_csv(opts.out_dir + "/loss_curve.csv", record);
    write_text(opts.out_dir + "/run_record.json", record.to_json().dump(2) + "\n");

    std::cout << "model=" << model->kind() << " params=" << record.param_count
              << " epochs=" << record.stopped_epoch << " best_epoch=" << record.best_epoch
              << " diverged=" << (record.diverged ? "yes" : "no");
    if (record.diverged && record.diverged_step >= 0) {
        std::cout << " (step " << record.diverged_step << ")";
    }
    std::cout << " test_rmse=" << format_double(record.test.rmse)
              << " test_rmse_raw=" << format_double(record.test.rmse_raw)
              << " seconds=" << format_double(record.wall_seconds) << "\n";
    return 0;
}

int cmd_evaluate(const CommonOpts& opts, const std::string& checkpoint_path,
                 const std::string& split_name) {
    json config = resolve_config(opts);
    config["evaluate"] = {{"checkpoint", checkpoint_path}, {"split", split_name}};
    echo_config(config, opts.out_dir);

    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    const auto model = make_model(ckpt.model_config);
    if (!ckpt.standardizer) {
        throw ConfigError("checkpoint has no standardizer; cannot evaluate raw tables");
    }
    RawTable table = load_table(config.at("data"));
    if (static_cast<int>(table.cols) != model->input_dim()) {
        throw DimMismatch("checkpoint expects " + std::to_string(model->input_dim()) +
                          " features, dataset has " + std::to_string(table.cols));
    }
    const SplitIndices splits =
        split(table.rows, fractions_of(config.at("data")), config.at("data").value("seed", 0ull));
    const std::vector<std::size_t>* idx = nullptr;
    if (split_name == "train") idx = &splits.train;
    else if (split_name == "val") idx = &splits.val;
    else if (split_name == "test") idx = &splits.test;
    else throw ConfigError("--split must be train, val, or test");

    const Standardizer& std_ = *ckpt.standardizer;
    const std::size_t n = table.cols;
    std::vector<double> x(idx->size() * n);
    std::vector<double> y(idx->size());
    for (std::size_t i = 0; i < idx->size(); ++i) {
        std_.transform_features(table.row((*idx)[i]), {x.data() + i * n, n});
        y[i] = std_.transform_target(table.targets[(*idx)[i]]);
    }
    const Metrics m = evaluate_rows(*model, ckpt.params, x, y,
                                    static_cast<int>(idx->size()), std_.target_std);

    json out;
    out["split"] = split_name;
    out["rows"] = idx->size();
    out["mse"] = m.mse;
    out["rmse"] = m.rmse;
    out["rmse_raw"] = m.rmse_raw;
    out["diverged"] = m.diverged;
    write_text(opts.out_dir + "/metrics.json", out.dump(2) + "\n");
    std::cout << "split=" << split_name << " rows=" << idx->size()
              << " mse=" << format_double(m.mse) << " rmse=" << format_double(m.rmse)
              << " rmse_raw=" << format_double(m.rmse_raw) << "\n";
    return 0;
}

GridSpace space_from_json(const json& j) {
    GridSpace s;
    s.dt = j.at("dt").get<std::vector<double>>();
    s.t_end = j.at("t_end").get<std::vector<double>>();
    s.batch_size = j.at("batch_size").get<std::vector<int>>();
    s.lr = j.at("lr").get<std::vector<double>>();
    return s;
}

// The shipped default search space (configs/fhn_grid.json matches this).
json default_space() {
    json j;
    j["dt"] = {1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 500.0};
    j["t_end"] = {10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0, 10000.0};
    j["batch_size"] = {32, 64, 128, 256};
    j["lr"] = {1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1};
    return j;
}

int cmd_grid_search(const CommonOpts& opts, const std::string& space_path, long budget) {
    json config = resolve_config(opts);
    json space_json = default_space();
    if (!space_path.empty()) {
        std::ifstream in(space_path);
        if (!in) throw ConfigError("cannot open space file: " + space_path);
        try {
            in >> space_json;
        } catch (const json::exception& e) {
            throw ConfigError("space file parse error: " + std::string(e.what()));
        }
    }
    config["grid"] = {{"space", space_json}, {"budget", budget}, {"workers", opts.workers}};
    echo_config(config, opts.out_dir);

    if (config.at("model").value("kind", "fhn") != std::string("fhn")) {
        throw ConfigError("grid-search sweeps the fhn model");
    }
    const Dataset data = load_dataset(config.at("data"));
    const auto base_model =
        dynamic_cast<const FhnNetModel&>(*make_model(config.at("model"))).config();
    const TrainConfig base_train = train_config_from_json(config.at("train"));

    const GridResult result = grid_search(base_model, space_from_json(space_json), data,
                                          base_train, opts.workers, budget);
    write_grid_csv(opts.out_dir + "/grid_results.csv", result);
    if (result.skipped > 0) {
        std::cerr << "skipped " << result.skipped
                  << " cell(s) with a non-integral step count\n";
    }
    if (result.skipped_budget > 0) {
        std::cerr << "skipped " << result.skipped_budget << " cell(s) beyond the budget\n";
    }
    if (!result.ranking.empty()) {
        json best;
        best["model"] = result.best_model_config;
        best["train"] = result.best_train_config;
        const GridCell& top = result.cells[result.ranking.front()];
        best["best_val_mse"] = top.best_val_mse;
        best["test_rmse"] = top.test_rmse;
        write_text(opts.out_dir + "/best_config.json", best.dump(2) + "\n");
        std::cout << "cells=" << result.cells.size() << " trained=" << result.ranking.size()
                  << " skipped=" << (result.skipped + result.skipped_budget)
                  << " best: dt=" << format_double(top.dt)
                  << " t_end=" << format_double(top.t_end) << " batch=" << top.batch_size
                  << " lr=" << format_double(top.lr)
                  << " val_mse=" << format_double(top.best_val_mse) << "\n";
    } else {
        std::cout << "no trainable cells (all skipped)\n";
    }
    return 0;
}

int cmd_simulate(const CommonOpts& opts) {
    const json config = resolve_config(opts);
    echo_config(config, opts.out_dir);
    const json sim = config.at("simulate");
    const FhnParams params = sim.at("fhn").get<FhnParams>();
    params.validate();
    const IntegrationGrid grid(sim.value("t_start", 0.0), sim.value("t_end", 1000.0),
                               sim.value("dt", 0.01));
    const auto initial = sim.at("initial").get<std::vector<std::vector<double>>>();
    if (initial.empty()) throw ConfigError("simulate.initial must list initial states");

    for (std::size_t s = 0; s < initial.size(); ++s) {
        const auto& state0 = initial[s];
        if (state0.size() < 2 || state0.size() % 2 != 0) {
            throw ConfigError("simulate: initial states must have even length >= 2");
        }
        const int k = static_cast<int>(state0.size() / 2);
        const FhnField field(params, k);
        const Trajectory traj = integrate(state0, field, grid);
        std::string path = opts.out_dir + "/trajectory_" + std::to_string(s) + ".csv";
        std::ofstream out(path, std::ios::binary);
        if (!out) throw FileNotFound("cannot write: " + path);
        out << "t";
        for (int i = 1; i <= k; ++i) out << ",v_" << i;
        for (int i = 1; i <= k; ++i) out << ",w_" << i;
        out << "\n";
        for (std::size_t row = 0; row < traj.times.size(); ++row) {
            out << format_double(traj.times[row]);
            for (double v : traj.states[row]) out << ',' << format_double(v);
            out << '\n';
        }
        std::cout << "wrote " << path << " (" << traj.times.size() << " states)\n";
    }

    const double v_min = sim.value("v_min", -0.5);
    const double v_max = sim.value("v_max", 1.5);
    const int points = sim.value("points", 401);
    {
        std::ofstream out(opts.out_dir + "/v_nullcline.csv", std::ios::binary);
        out << "v,w\n";
        for (auto [v, w] : v_nullcline(params, v_min, v_max, points)) {
            out << format_double(v) << ',' << format_double(w) << '\n';
        }
    }
    if (params.g > 0.0) {
        std::ofstream out(opts.out_dir + "/w_nullcline.csv", std::ios::binary);
        out << "v,w\n";
        for (auto [v, w] : w_nullcline(params, v_min, v_max, points)) {
            out << format_double(v) << ',' << format_double(w) << '\n';
        }
    } else {
        std::cout << "g = 0: w-nullcline undefined, skipped\n";
    }
    return 0;
}

int cmd_gradcheck(const CommonOpts& opts) {
    const json config = resolve_config(opts);
    echo_config(config, opts.out_dir);
    const json gc = config.at("gradcheck");
    const double tolerance = gc.value("tolerance", 1e-5);
    const double h = gc.value("h", 1e-5);
    const int samples = gc.value("samples", 4);

    const auto model = make_model(config.at("model"));
    const auto rows = gradient_check(*model, samples, h,
                                     config.at("model").value("seed", 0ull));
    double worst = 0.0;
    std::cout << "view                      max_rel_error\n";
    for (const auto& row : rows) {
        std::printf("%-25s %.3e\n", row.view.c_str(), row.max_rel_error);
        worst = std::max(worst, row.max_rel_error);
    }
    std::cout << "max " << format_double(worst) << " tolerance "
              << format_double(tolerance) << "\n";
    return worst < tolerance ? 0 : 3;
}

int dispatch(const std::vector<std::string>& args) {
    CLI::App app{"FitzHugh-Nagumo dynamical-layer networks: train, evaluate, "
                 "grid-search, simulate, gradcheck"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string checkpoint_path;
    std::string split_name = "test";
    std::string space_path;
    long budget = 0;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", opts.config_path, "JSON config file");
        cmd->add_option("--set", opts.sets, "dotted-key override, e.g. model.dt=5");
        cmd->add_option("--out", opts.out_dir, "output directory");
        cmd->add_option("--data", opts.data_path, "dataset CSV path");
        cmd->add_option("--model", opts.model_kind, "model kind: fhn | node | mlp");
        cmd->add_option("--seed", opts.seed, "master seed (model, train, data)");
        cmd->add_option("--workers", opts.workers, "concurrent grid workers");
    };

    CLI::App* train_cmd = app.add_subcommand("train", "train a model");
    add_common(train_cmd);
    CLI::App* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint");
    add_common(eval_cmd);
    eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint JSON")->required();
    eval_cmd->add_option("--split", split_name, "train | val | test");
    CLI::App* grid_cmd = app.add_subcommand("grid-search", "hyperparameter sweep");
    add_common(grid_cmd);
    grid_cmd->add_option("--space", space_path, "JSON file with value lists");
    grid_cmd->add_option("--budget", budget, "max cells to train (0 = all)");
    CLI::App* sim_cmd = app.add_subcommand("simulate", "integrate FHN trajectories");
    add_common(sim_cmd);
    CLI::App* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient check");
    add_common(gc_cmd);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (train_cmd->parsed()) return cmd_train(opts);
    if (eval_cmd->parsed()) return cmd_evaluate(opts, checkpoint_path, split_name);
    if (grid_cmd->parsed()) return cmd_grid_search(opts, space_path, budget);
    if (sim_cmd->parsed()) return cmd_simulate(opts);
    if (gc_cmd->parsed()) return cmd_gradcheck(opts);
    return 1;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    try {
        return dispatch(args);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const BadFractions& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const EmptySpace& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const NonMonotonicTimes& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const NonFinite& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const FileNotFound& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const SchemaMismatch& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const DimMismatch& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const Leakage& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
}

int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace dynnet::cli
