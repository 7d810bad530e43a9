#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dynnet/data.hpp"
#include "dynnet/model.hpp"

namespace dynnet {

struct AdamConfig {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction. Moment arrays mirror the flat parameter vector.
class Adam {
  public:
    Adam(std::size_t n_params, AdamConfig config);
    void step(std::span<double> params, std::span<const double> grads);
    long t() const { return t_; }
    std::span<const double> first_moment() const { return m_; }
    std::span<const double> second_moment() const { return v_; }

  private:
    AdamConfig config_;
    std::vector<double> m_, v_;
    long t_ = 0;
};

// Validation-loss early stopping. An epoch improves when its loss is below
// best - min_delta, where best is the running minimum; the patience counter
// resets on improvement and stopping triggers after `patience` consecutive
// non-improving epochs.
class EarlyStopper {
  public:
    EarlyStopper(int patience, double min_delta);
    bool feed(double val_loss);  // true: stop after this epoch
    double best() const { return best_; }
    int best_epoch() const { return best_epoch_; }
    int epochs_seen() const { return epochs_; }

  private:
    int patience_;
    double min_delta_;
    double best_ = std::numeric_limits<double>::infinity();
    int best_epoch_ = 0;
    int counter_ = 0;
    int epochs_ = 0;
};

struct TrainConfig {
    int max_epochs = 100;
    int patience = 10;
    double min_delta = 5e-2;
    int batch_size = 32;
    double lr = 5e-4;
    std::uint64_t seed = 0;
    bool shuffle = true;

    void validate() const;
};

struct Metrics {
    double mse = std::numeric_limits<double>::quiet_NaN();
    double rmse = std::numeric_limits<double>::quiet_NaN();
    double rmse_raw = std::numeric_limits<double>::quiet_NaN();  // target units
    bool diverged = false;
    long diverged_step = -1;
};

struct RunRecord {
    std::vector<double> train_loss;  // per epoch
    std::vector<double> val_loss;    // per epoch
    int best_epoch = 0;              // 0 = initial parameters
    int stopped_epoch = 0;
    Metrics test;
    double wall_seconds = 0.0;
    std::size_t param_count = 0;
    std::uint64_t seed = 0;
    bool diverged = false;
    long diverged_step = -1;
    nlohmann::json config;

    nlohmann::json to_json() const;
};

enum class SplitKind { Train, Val, Test };

Metrics evaluate_rows(const Model& model, std::span<const double> params,
                      std::span<const double> x_std, std::span<const double> y_std,
                      int rows, double target_std);

Metrics evaluate_split(const Model& model, std::span<const double> params,
                       const Dataset& data, SplitKind split);

// Mini-batch training with per-epoch validation and early stopping. Returns
// the record and, via `best_params`, the best-validation checkpoint weights.
// Divergence (non-finite loss or an Euler blow-up) is a recorded outcome, not
// an exception: the run is marked diverged with loss +inf.
RunRecord train_model(const Model& model, const Dataset& data, const TrainConfig& config,
                      std::vector<double>* best_params = nullptr);

// ---- grid search -----------------------------------------------------------

struct GridSpace {
    std::vector<double> dt;
    std::vector<double> t_end;
    std::vector<int> batch_size;
    std::vector<double> lr;
};

struct GridCell {
    double dt = 0.0;
    double t_end = 0.0;
    int batch_size = 0;
    double lr = 0.0;
    long steps = 0;
    std::string status;  // ok | diverged | skipped
    double best_val_mse = std::numeric_limits<double>::infinity();
    double test_rmse = std::numeric_limits<double>::quiet_NaN();
    int epochs = 0;
    bool diverged = false;
    double seconds = 0.0;
};

struct GridResult {
    std::vector<GridCell> cells;       // enumeration order: dt, t_end, batch, lr
    std::vector<std::size_t> ranking;  // trained cells, best validation MSE first
    long skipped = 0;         // non-integral step count
    long skipped_budget = 0;  // dropped by the cell budget
    nlohmann::json best_model_config;
    nlohmann::json best_train_config;
};

// Trains one FhnNet per cell with a shared seed. Cells whose (t_end - t_start)
// is not a whole multiple of dt are skipped and logged. Diverged cells rank
// last. `workers` > 1 trains cells concurrently; the merge is deterministic.
GridResult grid_search(const FhnNetConfig& base_model, const GridSpace& space,
                       const Dataset& data, const TrainConfig& base_train, int workers = 1,
                       long budget = 0);

// ---- CSV emission ------------------------------------------------------------

std::string format_double(double v);  // %.17g, locale-independent

void write_loss_curve_csv(const std::string& path, const RunRecord& record);
void write_grid_csv(const std::string& path, const GridResult& result);

nlohmann::json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace dynnet
