#include "dynnet/train.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

#include "dynnet/rng.hpp"

namespace dynnet {

using nlohmann::json;

Adam::Adam(std::size_t n_params, AdamConfig config)
    : config_(config), m_(n_params, 0.0), v_(n_params, 0.0) {
    if (!(config.lr >= 0.0)) throw ConfigError("adam: lr must be >= 0");
}

void Adam::step(std::span<double> params, std::span<const double> grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
        throw ShapeError("adam: parameter/gradient size mismatch");
    }
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * grads[i];
        v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grads[i] * grads[i];
        const double m_hat = m_[i] / c1;
        const double v_hat = v_[i] / c2;
        params[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
}

EarlyStopper::EarlyStopper(int patience, double min_delta)
    : patience_(patience), min_delta_(min_delta) {
    if (patience < 1) throw ConfigError("early stopping: patience must be >= 1");
    if (min_delta < 0.0) throw ConfigError("early stopping: min_delta must be >= 0");
}

bool EarlyStopper::feed(double val_loss) {
    ++epochs_;
    const bool improved = val_loss < best_ - min_delta_;
    counter_ = improved ? 0 : counter_ + 1;
    if (val_loss < best_) {
        best_ = val_loss;
        best_epoch_ = epochs_;
    }
    return counter_ >= patience_;
}

void TrainConfig::validate() const {
    if (max_epochs < 0) throw ConfigError("train: max_epochs must be >= 0");
    if (patience < 1) throw ConfigError("train: patience must be >= 1");
    if (min_delta < 0.0) throw ConfigError("train: min_delta must be >= 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(lr >= 0.0)) throw ConfigError("train: lr must be >= 0");
}

Metrics evaluate_rows(const Model& model, std::span<const double> params,
                      std::span<const double> x_std, std::span<const double> y_std,
                      int rows, double target_std) {
    const int out = model.output_dim();
    Metrics m;
    try {
        const auto pred = model.predict(params, x_std, rows);
        double acc = 0.0;
        for (int i = 0; i < rows; ++i) {
            double sample = 0.0;
            for (int j = 0; j < out; ++j) {
                const double d =
                    pred[static_cast<std::size_t>(i) * out + j] -
                    y_std[static_cast<std::size_t>(i) * out + j];
                sample += d * d;
            }
            acc += sample / out;
        }
        m.mse = acc / rows;
        if (!std::isfinite(m.mse)) {
            m.diverged = true;
            m.mse = std::numeric_limits<double>::infinity();
        }
    } catch (const NonFinite& e) {
        m.diverged = true;
        m.diverged_step = e.step;
        m.mse = std::numeric_limits<double>::infinity();
    }
    m.rmse = std::sqrt(m.mse);
    m.rmse_raw = m.rmse * target_std;
    return m;
}

Metrics evaluate_split(const Model& model, std::span<const double> params,
                       const Dataset& data, SplitKind split) {
    if (model.input_dim() != static_cast<int>(data.cols())) {
        throw DimMismatch("evaluate: model input dim does not match dataset");
    }
    if (model.output_dim() != 1) {
        throw DimMismatch("evaluate: table datasets carry a single target");
    }
    const std::vector<std::size_t>* idx = nullptr;
    switch (split) {
        case SplitKind::Train: idx = &data.splits.train; break;
        case SplitKind::Val: idx = &data.splits.val; break;
        case SplitKind::Test: idx = &data.splits.test; break;
    }
    const std::size_t n = data.cols();
    std::vector<double> x(idx->size() * n);
    std::vector<double> y(idx->size());
    for (std::size_t i = 0; i < idx->size(); ++i) {
        auto row = data.x_row((*idx)[i]);
        std::copy(row.begin(), row.end(), x.begin() + i * n);
        y[i] = data.y((*idx)[i]);
    }
    return evaluate_rows(model, params, x, y, static_cast<int>(idx->size()),
                         data.standardizer.target_std);
}

RunRecord train_model(const Model& model, const Dataset& data, const TrainConfig& config,
                      std::vector<double>* best_params_out) {
    config.validate();
    if (model.input_dim() != static_cast<int>(data.cols())) {
        throw DimMismatch("train: model input dim does not match dataset");
    }
    if (model.output_dim() != 1) {
        throw DimMismatch("train: table datasets carry a single target");
    }
    const auto t0 = std::chrono::steady_clock::now();

    RunRecord record;
    record.param_count = model.param_count();
    record.seed = config.seed;
    record.config["model"] = model.config_json();
    record.config["train"] = train_config_to_json(config);

    std::vector<double> params = model.init_params();
    std::vector<double> best_params = params;
    double best_val = std::numeric_limits<double>::infinity();

    Adam adam(params.size(), AdamConfig{.lr = config.lr});
    EarlyStopper stopper(config.patience, config.min_delta);
    Rng rng(config.seed);
    std::vector<std::size_t> order = data.splits.train;
    const std::size_t n = data.cols();
    const int batch_size = config.batch_size;
    std::vector<double> bx(static_cast<std::size_t>(batch_size) * n);
    std::vector<double> by(batch_size);

    for (int epoch = 1; epoch <= config.max_epochs && !record.diverged; ++epoch) {
        if (config.shuffle) rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size() && !record.diverged;
             start += batch_size) {
            const int b = static_cast<int>(
                std::min<std::size_t>(batch_size, order.size() - start));
            for (int i = 0; i < b; ++i) {
                auto row = data.x_row(order[start + i]);
                std::copy(row.begin(), row.end(), bx.begin() + static_cast<std::size_t>(i) * n);
                by[i] = data.y(order[start + i]);
            }
            try {
                Tape tape;
                const auto ids = model.register_params(tape, params);
                const NodeId loss = model.batch_loss(
                    tape, ids, {bx.data(), static_cast<std::size_t>(b) * n},
                    {by.data(), static_cast<std::size_t>(b)}, b);
                const double loss_value = tape.scalar_value(loss);
                if (!std::isfinite(loss_value)) {
                    record.diverged = true;
                    break;
                }
                tape.backward(loss);
                const auto grads = model.collect_grads(tape, ids);
                adam.step(params, grads);
                loss_sum += loss_value * b;
                seen += b;
            } catch (const NonFinite& e) {
                record.diverged = true;
                record.diverged_step = e.step;
            }
        }
        if (record.diverged) {
            record.train_loss.push_back(std::numeric_limits<double>::infinity());
            record.val_loss.push_back(std::numeric_limits<double>::infinity());
            record.stopped_epoch = epoch;
            break;
        }
        record.train_loss.push_back(loss_sum / static_cast<double>(seen));
        const Metrics val = evaluate_split(model, params, data, SplitKind::Val);
        record.val_loss.push_back(val.mse);
        record.stopped_epoch = epoch;
        if (val.diverged) {
            record.diverged = true;
            record.diverged_step = val.diverged_step;
            break;
        }
        if (val.mse < best_val) {
            best_val = val.mse;
            record.best_epoch = epoch;
            best_params = params;
        }
        if (stopper.feed(val.mse)) break;
    }

    record.test = evaluate_split(model, best_params, data, SplitKind::Test);
    record.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (best_params_out) *best_params_out = std::move(best_params);
    return record;
}

json RunRecord::to_json() const {
    json j;
    j["train_loss"] = train_loss;
    j["val_loss"] = val_loss;
    j["best_epoch"] = best_epoch;
    j["stopped_epoch"] = stopped_epoch;
    j["test_mse"] = test.mse;
    j["test_rmse"] = test.rmse;
    j["test_rmse_raw"] = test.rmse_raw;
    j["wall_seconds"] = wall_seconds;
    j["param_count"] = param_count;
    j["seed"] = seed;
    j["diverged"] = diverged;
    j["diverged_step"] = diverged_step;
    j["config"] = config;
    return j;
}

GridResult grid_search(const FhnNetConfig& base_model, const GridSpace& space,
                       const Dataset& data, const TrainConfig& base_train, int workers,
                       long budget) {
    if (space.dt.empty() || space.t_end.empty() || space.batch_size.empty() ||
        space.lr.empty()) {
        throw EmptySpace("grid_search: every hyperparameter list must be non-empty");
    }
    GridResult result;
    std::vector<std::size_t> trainable;
    for (double dt : space.dt) {
        for (double t_end : space.t_end) {
            for (int batch : space.batch_size) {
                for (double lr : space.lr) {
                    GridCell cell;
                    cell.dt = dt;
                    cell.t_end = t_end;
                    cell.batch_size = batch;
                    cell.lr = lr;
                    if (!IntegrationGrid::divides(base_model.t_start, t_end, dt)) {
                        cell.status = "skipped";
                        ++result.skipped;
                    } else {
                        cell.steps = IntegrationGrid(base_model.t_start, t_end, dt).steps;
                        cell.status = "pending";
                        trainable.push_back(result.cells.size());
                    }
                    result.cells.push_back(cell);
                }
            }
        }
    }
    if (budget > 0 && static_cast<long>(trainable.size()) > budget) {
        for (std::size_t i = budget; i < trainable.size(); ++i) {
            result.cells[trainable[i]].status = "skipped";
            ++result.skipped_budget;
        }
        trainable.resize(budget);
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t slot = next.fetch_add(1);
            if (slot >= trainable.size()) return;
            GridCell& cell = result.cells[trainable[slot]];
            FhnNetConfig model_cfg = base_model;
            model_cfg.dt = cell.dt;
            model_cfg.t_end = cell.t_end;
            TrainConfig train_cfg = base_train;
            train_cfg.batch_size = cell.batch_size;
            train_cfg.lr = cell.lr;
            try {
                const FhnNetModel model(model_cfg);
                const RunRecord record = train_model(model, data, train_cfg);
                cell.diverged = record.diverged;
                cell.status = record.diverged ? "diverged" : "ok";
                cell.epochs = record.stopped_epoch;
                cell.seconds = record.wall_seconds;
                cell.test_rmse = record.test.rmse;
                double best = std::numeric_limits<double>::infinity();
                for (double v : record.val_loss) best = std::min(best, v);
                cell.best_val_mse = best;
            } catch (const std::exception& e) {
                // a failed cell is recorded, never aborts the sweep
                std::fprintf(stderr, "grid cell (dt=%g, t_end=%g) failed: %s\n", cell.dt,
                             cell.t_end, e.what());
                cell.status = "error";
                cell.diverged = true;
            }
        }
    };
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    result.ranking = trainable;
    std::stable_sort(result.ranking.begin(), result.ranking.end(),
                     [&](std::size_t a, std::size_t b) {
                         return result.cells[a].best_val_mse < result.cells[b].best_val_mse;
                     });
    if (!result.ranking.empty()) {
        const GridCell& best = result.cells[result.ranking.front()];
        FhnNetConfig cfg = base_model;
        cfg.dt = best.dt;
        cfg.t_end = best.t_end;
        result.best_model_config = FhnNetModel(cfg).config_json();
        TrainConfig tc = base_train;
        tc.batch_size = best.batch_size;
        tc.lr = best.lr;
        result.best_train_config = train_config_to_json(tc);
    }
    return result;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_loss_curve_csv(const std::string& path, const RunRecord& record) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FileNotFound("cannot write loss curve: " + path);
    out << "epoch,train_loss,val_loss\n";
    for (std::size_t i = 0; i < record.train_loss.size(); ++i) {
        out << (i + 1) << ',' << format_double(record.train_loss[i]) << ','
            << format_double(record.val_loss[i]) << '\n';
    }
}

void write_grid_csv(const std::string& path, const GridResult& result) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FileNotFound("cannot write grid results: " + path);
    out << "dt,t_end,batch_size,lr,steps,status,best_val_mse,test_rmse,epochs,diverged,"
           "seconds\n";
    for (const auto& c : result.cells) {
        out << format_double(c.dt) << ',' << format_double(c.t_end) << ',' << c.batch_size
            << ',' << format_double(c.lr) << ',';
        if (c.status == "skipped") {
            out << ",skipped,,,,,\n";
            continue;
        }
        out << c.steps << ',' << c.status << ',' << format_double(c.best_val_mse) << ','
            << format_double(c.test_rmse) << ',' << c.epochs << ','
            << (c.diverged ? 1 : 0) << ',' << format_double(c.seconds) << '\n';
    }
}

json train_config_to_json(const TrainConfig& c) {
    json j;
    j["max_epochs"] = c.max_epochs;
    j["patience"] = c.patience;
    j["min_delta"] = c.min_delta;
    j["batch_size"] = c.batch_size;
    j["lr"] = c.lr;
    j["seed"] = c.seed;
    j["shuffle"] = c.shuffle;
    return j;
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.min_delta = j.value("min_delta", c.min_delta);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.seed = j.value("seed", c.seed);
    c.shuffle = j.value("shuffle", c.shuffle);
    return c;
}

}  // namespace dynnet
