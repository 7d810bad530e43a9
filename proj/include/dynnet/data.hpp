#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "dynnet/errors.hpp"

namespace dynnet {

// The canonical California Housing CSV header (features + target).
extern const std::array<const char*, 9> kCaliforniaHousingHeader;

struct RawTable {
    std::vector<std::string> feature_names;
    std::string target_name;
    std::vector<double> features;  // rows x cols, row-major
    std::vector<double> targets;   // rows
    std::size_t rows = 0;
    std::size_t cols = 0;
    long rejected_rows = 0;
    std::vector<long> rejected_lines;  // 1-based line numbers, capped

    std::span<const double> row(std::size_t i) const {
        return {features.data() + i * cols, cols};
    }
};

// Parses a CSV whose header matches the California Housing schema. Rows with
// the wrong field count or unparsable numbers are rejected and counted, with
// their line numbers recorded.
RawTable load_csv(const std::string& path);

// Same parser with a caller-provided schema (last column is the target).
RawTable load_csv(const std::string& path, std::span<const std::string> schema);

struct SplitIndices {
    std::vector<std::size_t> train, val, test;
    std::uint64_t seed = 0;
};

// Seeded uniform shuffle, then contiguous slices. Validation and test sizes
// are floor(N * fraction); the remainder goes to train.
SplitIndices split(std::size_t n_rows, std::array<double, 3> fractions, std::uint64_t seed);

// Per-feature z-score statistics (population standard deviation), fitted on
// the training split only. Zero-variance columns fall back to std = 1.
struct Standardizer {
    std::vector<double> feature_mean, feature_std;
    double target_mean = 0.0, target_std = 1.0;
    std::vector<std::size_t> fitted_on;  // sorted training indices
    bool had_zero_variance = false;

    void transform_features(std::span<const double> in, std::span<double> out) const;
    void inverse_features(std::span<const double> in, std::span<double> out) const;
    double transform_target(double y) const { return (y - target_mean) / target_std; }
    double inverse_target(double y) const { return y * target_std + target_mean; }
};

Standardizer fit_standardizer(const RawTable& table, std::span<const std::size_t> indices);

// Throws Leakage unless the standardizer was fitted on exactly the training
// indices of the split.
void verify_fit_on_train(const Standardizer& standardizer, const SplitIndices& split);

// Immutable, fully prepared dataset: split + standardizer (fitted on train)
// + standardized copies of all rows. Safe to share across threads.
struct Dataset {
    RawTable table;
    SplitIndices splits;
    Standardizer standardizer;
    std::vector<double> x_std;  // rows x cols, standardized features
    std::vector<double> y_std;  // standardized targets

    static Dataset prepare(RawTable table, std::array<double, 3> fractions,
                           std::uint64_t seed);

    std::size_t rows() const { return table.rows; }
    std::size_t cols() const { return table.cols; }
    std::span<const double> x_row(std::size_t i) const {
        return {x_std.data() + i * table.cols, table.cols};
    }
    double y(std::size_t i) const { return y_std[i]; }
};

// Deterministic synthetic tables for tests and offline runs.
//   linear: y = w . x + noise * eps, x ~ N(0,1), w ~ U(-1,1), eps ~ N(0,1)
//   fhn:    y = v(T) of an FHN unit started at (0.6 * x_0, 0), RK4-integrated,
//           plus noise * eps
struct LinearSynthetic {
    RawTable table;
    std::vector<double> weights;
};
LinearSynthetic synthetic_linear(std::size_t n_rows, std::size_t n_features, double noise,
                                 std::uint64_t seed);

RawTable synthetic_dataset(const std::string& kind, std::size_t n_rows,
                           std::size_t n_features, double noise, std::uint64_t seed);

}  // namespace dynnet
