#include "dynnet/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dynnet/dynamics.hpp"
#include "dynnet/rng.hpp"

namespace dynnet {

const std::array<const char*, 9> kCaliforniaHousingHeader = {
    "MedInc",     "HouseAge", "AveRooms", "AveBedrms",   "Population",
    "AveOccup",   "Latitude", "Longitude", "MedHouseVal",
};

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

std::string strip(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& raw, double& out) {
    const std::string s = strip(raw);
    if (s.empty()) return false;
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end && std::isfinite(out);
}

constexpr std::size_t kMaxRecordedRejects = 32;

}  // namespace

RawTable load_csv(const std::string& path, std::span<const std::string> schema) {
    std::ifstream in(path);
    if (!in) {
        throw FileNotFound("cannot open CSV: " + path);
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw SchemaMismatch("empty CSV: " + path);
    }
    const auto header = split_fields(line);
    if (header.size() != schema.size()) {
        throw SchemaMismatch("CSV header has " + std::to_string(header.size()) +
                             " columns, expected " + std::to_string(schema.size()));
    }
    for (std::size_t i = 0; i < schema.size(); ++i) {
        if (strip(header[i]) != schema[i]) {
            throw SchemaMismatch("CSV header column " + std::to_string(i + 1) + " is '" +
                                 strip(header[i]) + "', expected '" + schema[i] + "'");
        }
    }
    RawTable table;
    table.cols = schema.size() - 1;
    table.feature_names.assign(schema.begin(), schema.end() - 1);
    table.target_name = schema.back();

    long line_no = 1;
    std::vector<double> row(schema.size());
    while (std::getline(in, line)) {
        ++line_no;
        if (strip(line).empty()) continue;
        const auto fields = split_fields(line);
        bool ok = fields.size() == schema.size();
        for (std::size_t i = 0; ok && i < fields.size(); ++i) {
            ok = parse_double(fields[i], row[i]);
        }
        if (!ok) {
            ++table.rejected_rows;
            if (table.rejected_lines.size() < kMaxRecordedRejects) {
                table.rejected_lines.push_back(line_no);
            }
            continue;
        }
        table.features.insert(table.features.end(), row.begin(), row.end() - 1);
        table.targets.push_back(row.back());
        ++table.rows;
    }
    if (table.rows == 0) {
        throw SchemaMismatch("CSV has a header but no valid data rows: " + path);
    }
    return table;
}

RawTable load_csv(const std::string& path) {
    std::vector<std::string> schema(kCaliforniaHousingHeader.begin(),
                                    kCaliforniaHousingHeader.end());
    return load_csv(path, schema);
}

SplitIndices split(std::size_t n_rows, std::array<double, 3> fractions, std::uint64_t seed) {
    const double total = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(total - 1.0) > 1e-9 || fractions[0] < 0.0 || fractions[1] < 0.0 ||
        fractions[2] < 0.0) {
        throw BadFractions("split: fractions must be non-negative and sum to 1");
    }
    if (n_rows == 0) {
        throw BadFractions("split: empty table");
    }
    std::vector<std::size_t> order(n_rows);
    for (std::size_t i = 0; i < n_rows; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);

    const std::size_t n_val = static_cast<std::size_t>(
        std::floor(fractions[1] * static_cast<double>(n_rows)));
    const std::size_t n_test = static_cast<std::size_t>(
        std::floor(fractions[2] * static_cast<double>(n_rows)));
    const std::size_t n_train = n_rows - n_val - n_test;  // remainder goes to train

    SplitIndices out;
    out.seed = seed;
    out.train.assign(order.begin(), order.begin() + n_train);
    out.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
    out.test.assign(order.begin() + n_train + n_val, order.end());
    return out;
}

Standardizer fit_standardizer(const RawTable& table, std::span<const std::size_t> indices) {
    if (indices.empty()) {
        throw BadFractions("fit_standardizer: no rows to fit on");
    }
    const std::size_t cols = table.cols;
    Standardizer s;
    s.feature_mean.assign(cols, 0.0);
    s.feature_std.assign(cols, 0.0);
    const double n = static_cast<double>(indices.size());
    for (std::size_t idx : indices) {
        auto row = table.row(idx);
        for (std::size_t j = 0; j < cols; ++j) s.feature_mean[j] += row[j];
        s.target_mean += table.targets[idx];
    }
    for (std::size_t j = 0; j < cols; ++j) s.feature_mean[j] /= n;
    s.target_mean /= n;
    double tvar = 0.0;
    for (std::size_t idx : indices) {
        auto row = table.row(idx);
        for (std::size_t j = 0; j < cols; ++j) {
            const double d = row[j] - s.feature_mean[j];
            s.feature_std[j] += d * d;
        }
        const double dt = table.targets[idx] - s.target_mean;
        tvar += dt * dt;
    }
    for (std::size_t j = 0; j < cols; ++j) {
        s.feature_std[j] = std::sqrt(s.feature_std[j] / n);
        if (s.feature_std[j] <= 0.0) {  // zero-variance guard
            s.feature_std[j] = 1.0;
            s.had_zero_variance = true;
        }
    }
    s.target_std = std::sqrt(tvar / n);
    if (s.target_std <= 0.0) {
        s.target_std = 1.0;
        s.had_zero_variance = true;
    }
    s.fitted_on.assign(indices.begin(), indices.end());
    std::sort(s.fitted_on.begin(), s.fitted_on.end());
    return s;
}

void Standardizer::transform_features(std::span<const double> in,
                                      std::span<double> out) const {
    if (in.size() != feature_mean.size() || out.size() != in.size()) {
        throw DimMismatch("standardizer: feature count mismatch");
    }
    for (std::size_t j = 0; j < in.size(); ++j) {
        out[j] = (in[j] - feature_mean[j]) / feature_std[j];
    }
}

void Standardizer::inverse_features(std::span<const double> in, std::span<double> out) const {
    if (in.size() != feature_mean.size() || out.size() != in.size()) {
        throw DimMismatch("standardizer: feature count mismatch");
    }
    for (std::size_t j = 0; j < in.size(); ++j) {
        out[j] = in[j] * feature_std[j] + feature_mean[j];
    }
}

void verify_fit_on_train(const Standardizer& standardizer, const SplitIndices& split) {
    std::vector<std::size_t> train(split.train.begin(), split.train.end());
    std::sort(train.begin(), train.end());
    if (standardizer.fitted_on != train) {
        throw Leakage("standardizer was not fitted on exactly the training split");
    }
}

Dataset Dataset::prepare(RawTable table, std::array<double, 3> fractions,
                         std::uint64_t seed) {
    Dataset d;
    d.splits = split(table.rows, fractions, seed);
    d.standardizer = fit_standardizer(table, d.splits.train);
    d.x_std.resize(table.features.size());
    d.y_std.resize(table.targets.size());
    for (std::size_t i = 0; i < table.rows; ++i) {
        d.standardizer.transform_features(
            table.row(i), {d.x_std.data() + i * table.cols, table.cols});
        d.y_std[i] = d.standardizer.transform_target(table.targets[i]);
    }
    d.table = std::move(table);
    return d;
}

LinearSynthetic synthetic_linear(std::size_t n_rows, std::size_t n_features, double noise,
                                 std::uint64_t seed) {
    if (n_rows < 1 || n_features < 1) {
        throw ConfigError("synthetic_linear: rows and features must be >= 1");
    }
    Rng rng(seed);
    LinearSynthetic out;
    out.weights.resize(n_features);
    for (double& w : out.weights) w = rng.uniform(-1.0, 1.0);
    RawTable& t = out.table;
    t.rows = n_rows;
    t.cols = n_features;
    t.features.resize(n_rows * n_features);
    t.targets.resize(n_rows);
    for (std::size_t j = 0; j < n_features; ++j) {
        t.feature_names.push_back("x" + std::to_string(j + 1));
    }
    t.target_name = "y";
    for (std::size_t i = 0; i < n_rows; ++i) {
        double y = 0.0;
        for (std::size_t j = 0; j < n_features; ++j) {
            const double x = rng.normal();
            t.features[i * n_features + j] = x;
            y += out.weights[j] * x;
        }
        t.targets[i] = y + noise * rng.normal();
    }
    return out;
}

namespace {

RawTable synthetic_fhn(std::size_t n_rows, std::size_t n_features, double noise,
                       std::uint64_t seed) {
    Rng rng(seed);
    RawTable t;
    t.rows = n_rows;
    t.cols = n_features;
    t.features.resize(n_rows * n_features);
    t.targets.resize(n_rows);
    for (std::size_t j = 0; j < n_features; ++j) {
        t.feature_names.push_back("x" + std::to_string(j + 1));
    }
    t.target_name = "y";
    const FhnParams params;
    const FhnField field(params, 1);
    for (std::size_t i = 0; i < n_rows; ++i) {
        for (std::size_t j = 0; j < n_features; ++j) {
            t.features[i * n_features + j] = rng.normal();
        }
        const double v0 = 0.6 * t.features[i * n_features];
        const double state0[2] = {v0, 0.0};
        const auto end = reference_solve(state0, field, 20.0, 0.01);
        t.targets[i] = end[0] + noise * rng.normal();
    }
    return t;
}

}  // namespace

RawTable synthetic_dataset(const std::string& kind, std::size_t n_rows,
                           std::size_t n_features, double noise, std::uint64_t seed) {
    if (kind == "linear") {
        return synthetic_linear(n_rows, n_features, noise, seed).table;
    }
    if (kind == "fhn") {
        return synthetic_fhn(n_rows, n_features, noise, seed);
    }
    throw ConfigError("synthetic_dataset: unknown kind '" + kind + "'");
}

}  // namespace dynnet
