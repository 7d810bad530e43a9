#include "dynnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dynnet/rng.hpp"

namespace dynnet {

using nlohmann::json;

std::size_t Model::param_count() const {
    std::size_t n = 0;
    for (const auto& v : layout()) n += v.size();
    return n;
}

std::vector<NodeId> Model::register_params(Tape& tape,
                                           std::span<const double> params) const {
    if (params.size() != param_count()) {
        throw ShapeError("register_params: flat vector has wrong length");
    }
    std::vector<NodeId> ids;
    ids.reserve(layout().size());
    for (const auto& v : layout()) {
        ids.push_back(tape.parameter(params.subspan(v.offset, v.size()), v.shape));
    }
    return ids;
}

std::vector<NodeId> Model::split_theta(Tape& tape, NodeId theta) const {
    std::vector<NodeId> ids;
    ids.reserve(layout().size());
    for (const auto& v : layout()) {
        NodeId s = tape.slice(theta, static_cast<int>(v.offset), static_cast<int>(v.size()));
        ids.push_back(v.shape.cols == 1 ? s : tape.reshape(s, v.shape));
    }
    return ids;
}

std::vector<double> Model::collect_grads(const Tape& tape,
                                         const std::vector<NodeId>& params) const {
    std::vector<double> grads;
    grads.reserve(param_count());
    for (NodeId id : params) {
        auto g = tape.grad(id);
        grads.insert(grads.end(), g.begin(), g.end());
    }
    return grads;
}

namespace {

void fill_uniform(Rng& rng, std::span<double> w, int fan_in) {
    const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& x : w) x = rng.uniform(-s, s);
}

NodeId mean_of_sample_losses(Tape& tape, const std::vector<NodeId>& losses) {
    NodeId acc = losses[0];
    for (std::size_t i = 1; i < losses.size(); ++i) acc = tape.add(acc, losses[i]);
    return tape.scale(acc, 1.0 / static_cast<double>(losses.size()));
}

}  // namespace

// ---- FhnNetModel ---------------------------------------------------------------

void FhnNetConfig::validate() const {
    if (input_dim < 1 || fhn_units < 1 || output_dim < 1) {
        throw ConfigError("fhn net: dims must be >= 1");
    }
    fhn.validate();
    (void)grid();  // throws on a bad (t_start, t_end, dt) combination
}

std::size_t fhn_param_count(const FhnNetConfig& c) {
    const std::size_t k2 = static_cast<std::size_t>(2 * c.fhn_units);
    std::size_t n = k2 * c.input_dim + k2;            // hidden affine
    if (c.use_layer_norm) n += 2 * k2;                // gain + bias
    n += static_cast<std::size_t>(c.output_dim) * k2 + c.output_dim;  // output affine
    return n;
}

FhnNetModel::FhnNetModel(FhnNetConfig config) : config_(config) {
    config_.validate();
    const int k2 = 2 * config_.fhn_units;
    std::size_t off = 0;
    auto push = [&](const std::string& name, Shape shape) {
        layout_.push_back({name, off, shape});
        off += static_cast<std::size_t>(shape.size());
    };
    push("w_hidden", Shape{k2, config_.input_dim});
    push("b_hidden", Shape{k2, 1});
    if (config_.use_layer_norm) {
        push("ln_gain", Shape{k2, 1});
        push("ln_bias", Shape{k2, 1});
    }
    push("w_out", Shape{config_.output_dim, k2});
    push("b_out", Shape{config_.output_dim, 1});
}

std::vector<double> FhnNetModel::init_params() const {
    std::vector<double> params(param_count(), 0.0);
    Rng rng(config_.seed);
    const int k2 = 2 * config_.fhn_units;
    for (const auto& v : layout()) {
        std::span<double> dst(params.data() + v.offset, v.size());
        if (v.name == "w_hidden") {
            fill_uniform(rng, dst, config_.input_dim);
        } else if (v.name == "w_out") {
            fill_uniform(rng, dst, k2);
        } else if (v.name == "ln_gain") {
            std::fill(dst.begin(), dst.end(), 1.0);
        }  // biases and ln_bias stay zero
    }
    return params;
}

NodeId FhnNetModel::forward_sample(Tape& tape, const std::vector<NodeId>& params,
                                   std::span<const double> x, Trajectory* capture,
                                   const TapeField* field_override) const {
    if (static_cast<int>(x.size()) != config_.input_dim) {
        throw ShapeError("fhn forward: input length mismatch");
    }
    for (double v : x) {
        if (!std::isfinite(v)) throw NonFiniteInput("fhn forward: non-finite input");
    }
    std::size_t p = 0;
    DynamicLayer layer;
    layer.weight = params[p++];
    layer.bias = params[p++];
    layer.use_layer_norm = config_.use_layer_norm;
    if (config_.use_layer_norm) {
        layer.ln_gain = params[p++];
        layer.ln_bias = params[p++];
    }
    layer.use_silu = config_.use_silu;
    layer.field = field_override ? *field_override : make_fhn_tape_field(config_.fhn);
    layer.exit_time = config_.t_end;
    layer.dt = config_.dt;
    NodeId out_w = params[p++];
    NodeId out_b = params[p++];
    NodeId input = tape.constant(x);
    return compose_layers(tape, input, {&layer, 1}, out_w, out_b, capture, config_.t_start);
}

std::vector<NodeId> FhnNetModel::forward_batch(Tape& tape, const std::vector<NodeId>& params,
                                               std::span<const double> x, int batch) const {
    const int n = config_.input_dim;
    const int k = config_.fhn_units;
    std::size_t p = 0;
    const NodeId w_h = params[p++];
    const NodeId b_h = params[p++];
    NodeId ln_gain = -1, ln_bias = -1;
    if (config_.use_layer_norm) {
        ln_gain = params[p++];
        ln_bias = params[p++];
    }
    const NodeId w_out = params[p++];
    const NodeId b_out = params[p++];

    // per-sample pre-dynamical map
    std::vector<NodeId> v0s, w0s;
    v0s.reserve(batch);
    w0s.reserve(batch);
    for (int i = 0; i < batch; ++i) {
        NodeId xi = tape.constant(x.subspan(static_cast<std::size_t>(i) * n, n));
        NodeId z = tape.affine(w_h, b_h, xi);
        if (config_.use_layer_norm) z = tape.layer_norm(z, ln_gain, ln_bias, kLayerNormEps);
        if (config_.use_silu) z = tape.silu(z);
        v0s.push_back(tape.slice(z, 0, k));
        w0s.push_back(tape.slice(z, k, k));
    }
    // one Euler chain over the lane-stacked states
    NodeId v = v0s[0];
    NodeId w = w0s[0];
    for (int i = 1; i < batch; ++i) {
        v = tape.concat(v, v0s[i]);
        w = tape.concat(w, w0s[i]);
    }
    const auto grid = config_.grid();
    auto [v_end, w_end] = euler_block_fhn(tape, v, w, config_.fhn, grid.steps, grid.dt,
                                          nullptr, grid.t_start);
    std::vector<NodeId> outputs;
    outputs.reserve(batch);
    for (int i = 0; i < batch; ++i) {
        NodeId hi = tape.concat(tape.slice(v_end, i * k, k), tape.slice(w_end, i * k, k));
        outputs.push_back(tape.affine(w_out, b_out, hi));
    }
    return outputs;
}

NodeId FhnNetModel::batch_loss(Tape& tape, const std::vector<NodeId>& params,
                               std::span<const double> x, std::span<const double> y,
                               int batch) const {
    const auto outputs = forward_batch(tape, params, x, batch);
    const int out = config_.output_dim;
    std::vector<NodeId> losses;
    losses.reserve(batch);
    for (int i = 0; i < batch; ++i) {
        losses.push_back(
            tape.mse_loss(outputs[i], y.subspan(static_cast<std::size_t>(i) * out, out)));
    }
    return mean_of_sample_losses(tape, losses);
}

std::vector<double> FhnNetModel::predict(std::span<const double> params,
                                         std::span<const double> x, int rows) const {
    const int n = config_.input_dim;
    const int out = config_.output_dim;
    std::vector<double> result(static_cast<std::size_t>(rows) * out);
    constexpr int kChunk = 256;
    for (int begin = 0; begin < rows; begin += kChunk) {
        const int chunk = std::min(kChunk, rows - begin);
        Tape tape;
        auto ids = register_params(tape, params);
        auto outputs = forward_batch(
            tape, ids, x.subspan(static_cast<std::size_t>(begin) * n,
                                 static_cast<std::size_t>(chunk) * n),
            chunk);
        for (int i = 0; i < chunk; ++i) {
            auto v = tape.value(outputs[i]);
            std::copy(v.begin(), v.end(),
                      result.begin() + static_cast<std::size_t>(begin + i) * out);
        }
    }
    return result;
}

json FhnNetModel::config_json() const {
    json j;
    j["kind"] = "fhn";
    j["input_dim"] = config_.input_dim;
    j["fhn_units"] = config_.fhn_units;
    j["output_dim"] = config_.output_dim;
    j["t_start"] = config_.t_start;
    j["t_end"] = config_.t_end;
    j["dt"] = config_.dt;
    j["use_layer_norm"] = config_.use_layer_norm;
    j["use_silu"] = config_.use_silu;
    j["fhn"] = config_.fhn;
    j["seed"] = config_.seed;
    return j;
}

// ---- compose_layers --------------------------------------------------------------

NodeId compose_layers(Tape& tape, NodeId input, std::span<const DynamicLayer> layers,
                      NodeId out_weight, NodeId out_bias, Trajectory* capture,
                      double t_start) {
    if (layers.empty()) {
        throw ConfigError("compose_layers: at least one layer required");
    }
    double prev_exit = t_start;
    for (const auto& layer : layers) {
        if (!(layer.exit_time > prev_exit)) {
            throw NonMonotonicTimes("compose_layers: exit times must be strictly increasing");
        }
        prev_exit = layer.exit_time;
    }
    NodeId state = input;
    prev_exit = t_start;
    for (const auto& layer : layers) {
        const IntegrationGrid grid(prev_exit, layer.exit_time, layer.dt);
        NodeId z = tape.affine(layer.weight, layer.bias, state);
        if (layer.use_layer_norm) {
            z = tape.layer_norm(z, layer.ln_gain, layer.ln_bias, kLayerNormEps);
        }
        if (layer.use_silu) z = tape.silu(z);
        state = euler_block_tape(tape, z, layer.field, grid.steps, grid.dt, grid.t_start,
                                 capture);
        prev_exit = layer.exit_time;
    }
    return tape.affine(out_weight, out_bias, state);
}

// ---- NodeNetModel ----------------------------------------------------------------

void NodeNetConfig::validate() const {
    if (input_dim < 1 || hidden_dim < 1 || output_dim < 1) {
        throw ConfigError("node net: dims must be >= 1");
    }
    if (field_layers < 1) {
        throw ConfigError("node net: field needs at least one layer");
    }
    (void)grid();
}

std::size_t node_param_count(const NodeNetConfig& c) {
    const std::size_t h = static_cast<std::size_t>(c.hidden_dim);
    const std::size_t aug = h + 1;
    std::size_t n = h * c.input_dim + h;                       // lift
    n += static_cast<std::size_t>(c.field_layers - 1) * (aug * aug + aug);
    n += aug * h + h;                                          // last field layer
    n += static_cast<std::size_t>(c.output_dim) * h + c.output_dim;  // projection
    return n;
}

NodeNetModel::NodeNetModel(NodeNetConfig config) : config_(config) {
    config_.validate();
    const int h = config_.hidden_dim;
    const int aug = h + 1;
    std::size_t off = 0;
    auto push = [&](const std::string& name, Shape shape) {
        layout_.push_back({name, off, shape});
        off += static_cast<std::size_t>(shape.size());
    };
    push("w_lift", Shape{h, config_.input_dim});
    push("b_lift", Shape{h, 1});
    for (int l = 1; l < config_.field_layers; ++l) {
        push("field_w" + std::to_string(l), Shape{aug, aug});
        push("field_b" + std::to_string(l), Shape{aug, 1});
    }
    push("field_w" + std::to_string(config_.field_layers), Shape{h, aug});
    push("field_b" + std::to_string(config_.field_layers), Shape{h, 1});
    push("w_out", Shape{config_.output_dim, h});
    push("b_out", Shape{config_.output_dim, 1});
}

std::vector<double> NodeNetModel::init_params() const {
    std::vector<double> params(param_count(), 0.0);
    Rng rng(config_.seed);
    for (const auto& v : layout()) {
        const bool is_weight = v.name == "w_lift" || v.name == "w_out" ||
                               v.name.rfind("field_w", 0) == 0;
        if (!is_weight) continue;
        std::span<double> dst(params.data() + v.offset, v.size());
        fill_uniform(rng, dst, v.shape.cols);
    }
    return params;
}

TapeField NodeNetModel::make_field(const std::vector<NodeId>& params) const {
    const int layers = config_.field_layers;
    std::vector<NodeId> ws, bs;
    std::size_t p = 2;  // skip lift
    for (int l = 0; l < layers; ++l) {
        ws.push_back(params[p++]);
        bs.push_back(params[p++]);
    }
    return [ws, bs, layers](Tape& tape, NodeId state, double t) -> NodeId {
        NodeId z = tape.concat(state, tape.scalar_constant(t));
        for (int l = 0; l < layers - 1; ++l) {
            z = tape.tanh(tape.affine(ws[l], bs[l], z));
        }
        return tape.affine(ws[layers - 1], bs[layers - 1], z);
    };
}

NodeId NodeNetModel::forward_sample(Tape& tape, const std::vector<NodeId>& params,
                                    std::span<const double> x) const {
    if (static_cast<int>(x.size()) != config_.input_dim) {
        throw ShapeError("node forward: input length mismatch");
    }
    const auto field = make_field(params);
    const auto grid = config_.grid();
    NodeId xi = tape.constant(x);
    NodeId state = tape.affine(params[0], params[1], xi);
    state = euler_block_tape(tape, state, field, grid.steps, grid.dt, grid.t_start);
    const std::size_t last = layout_.size();
    return tape.affine(params[last - 2], params[last - 1], state);
}

NodeId NodeNetModel::batch_loss(Tape& tape, const std::vector<NodeId>& params,
                                std::span<const double> x, std::span<const double> y,
                                int batch) const {
    const int n = config_.input_dim;
    const int out = config_.output_dim;
    std::vector<NodeId> losses;
    losses.reserve(batch);
    for (int i = 0; i < batch; ++i) {
        NodeId yhat =
            forward_sample(tape, params, x.subspan(static_cast<std::size_t>(i) * n, n));
        losses.push_back(
            tape.mse_loss(yhat, y.subspan(static_cast<std::size_t>(i) * out, out)));
    }
    return mean_of_sample_losses(tape, losses);
}

std::vector<double> NodeNetModel::predict(std::span<const double> params,
                                          std::span<const double> x, int rows) const {
    const int n = config_.input_dim;
    const int out = config_.output_dim;
    std::vector<double> result(static_cast<std::size_t>(rows) * out);
    for (int i = 0; i < rows; ++i) {
        Tape tape;
        auto ids = register_params(tape, params);
        NodeId yhat =
            forward_sample(tape, ids, x.subspan(static_cast<std::size_t>(i) * n, n));
        auto v = tape.value(yhat);
        std::copy(v.begin(), v.end(), result.begin() + static_cast<std::size_t>(i) * out);
    }
    return result;
}

json NodeNetModel::config_json() const {
    json j;
    j["kind"] = "node";
    j["input_dim"] = config_.input_dim;
    j["hidden_dim"] = config_.hidden_dim;
    j["field_layers"] = config_.field_layers;
    j["output_dim"] = config_.output_dim;
    j["t_start"] = config_.t_start;
    j["t_end"] = config_.t_end;
    j["dt"] = config_.dt;
    j["seed"] = config_.seed;
    return j;
}

// ---- MlpModel ----------------------------------------------------------------------

void MlpConfig::validate() const {
    if (input_dim < 1 || hidden_dim < 1 || output_dim < 1) {
        throw ConfigError("mlp: dims must be >= 1");
    }
}

std::size_t mlp_param_count(const MlpConfig& c) {
    const std::size_t h = static_cast<std::size_t>(c.hidden_dim);
    std::size_t n = h * c.input_dim + h;
    if (c.use_layer_norm) n += 2 * h;
    n += static_cast<std::size_t>(c.output_dim) * h + c.output_dim;
    return n;
}

MlpModel::MlpModel(MlpConfig config) : config_(config) {
    config_.validate();
    const int h = config_.hidden_dim;
    std::size_t off = 0;
    auto push = [&](const std::string& name, Shape shape) {
        layout_.push_back({name, off, shape});
        off += static_cast<std::size_t>(shape.size());
    };
    push("w_hidden", Shape{h, config_.input_dim});
    push("b_hidden", Shape{h, 1});
    if (config_.use_layer_norm) {
        push("ln_gain", Shape{h, 1});
        push("ln_bias", Shape{h, 1});
    }
    push("w_out", Shape{config_.output_dim, h});
    push("b_out", Shape{config_.output_dim, 1});
}

std::vector<double> MlpModel::init_params() const {
    std::vector<double> params(param_count(), 0.0);
    Rng rng(config_.seed);
    for (const auto& v : layout()) {
        std::span<double> dst(params.data() + v.offset, v.size());
        if (v.name == "w_hidden") {
            fill_uniform(rng, dst, config_.input_dim);
        } else if (v.name == "w_out") {
            fill_uniform(rng, dst, config_.hidden_dim);
        } else if (v.name == "ln_gain") {
            std::fill(dst.begin(), dst.end(), 1.0);
        }
    }
    return params;
}

NodeId MlpModel::forward_sample(Tape& tape, const std::vector<NodeId>& params,
                                std::span<const double> x) const {
    if (static_cast<int>(x.size()) != config_.input_dim) {
        throw ShapeError("mlp forward: input length mismatch");
    }
    std::size_t p = 0;
    const NodeId w1 = params[p++];
    const NodeId b1 = params[p++];
    NodeId z = tape.affine(w1, b1, tape.constant(x));
    if (config_.use_layer_norm) {
        const NodeId gain = params[p++];
        const NodeId bias = params[p++];
        z = tape.layer_norm(z, gain, bias, kLayerNormEps);
    }
    if (config_.use_silu) z = tape.silu(z);
    return tape.affine(params[p], params[p + 1], z);
}

NodeId MlpModel::batch_loss(Tape& tape, const std::vector<NodeId>& params,
                            std::span<const double> x, std::span<const double> y,
                            int batch) const {
    const int n = config_.input_dim;
    const int out = config_.output_dim;
    std::vector<NodeId> losses;
    losses.reserve(batch);
    for (int i = 0; i < batch; ++i) {
        NodeId yhat =
            forward_sample(tape, params, x.subspan(static_cast<std::size_t>(i) * n, n));
        losses.push_back(
            tape.mse_loss(yhat, y.subspan(static_cast<std::size_t>(i) * out, out)));
    }
    return mean_of_sample_losses(tape, losses);
}

std::vector<double> MlpModel::predict(std::span<const double> params,
                                      std::span<const double> x, int rows) const {
    const int n = config_.input_dim;
    const int out = config_.output_dim;
    std::vector<double> result(static_cast<std::size_t>(rows) * out);
    for (int i = 0; i < rows; ++i) {
        Tape tape;
        auto ids = register_params(tape, params);
        NodeId yhat =
            forward_sample(tape, ids, x.subspan(static_cast<std::size_t>(i) * n, n));
        auto v = tape.value(yhat);
        std::copy(v.begin(), v.end(), result.begin() + static_cast<std::size_t>(i) * out);
    }
    return result;
}

json MlpModel::config_json() const {
    json j;
    j["kind"] = "mlp";
    j["input_dim"] = config_.input_dim;
    j["hidden_dim"] = config_.hidden_dim;
    j["output_dim"] = config_.output_dim;
    j["use_layer_norm"] = config_.use_layer_norm;
    j["use_silu"] = config_.use_silu;
    j["seed"] = config_.seed;
    return j;
}

// ---- factory / checkpoints -----------------------------------------------------------

void to_json(json& j, const FhnParams& p) {
    j = json{{"a", p.a}, {"b", p.b}, {"g", p.g}, {"I", p.I}};
}

void from_json(const json& j, FhnParams& p) {
    p.a = j.value("a", 0.25);
    p.b = j.value("b", 0.002);
    p.g = j.value("g", 2.5);
    p.I = j.value("I", 0.0);
}

std::unique_ptr<Model> make_model(const json& cfg) {
    const std::string kind = cfg.value("kind", "fhn");
    if (kind == "fhn") {
        FhnNetConfig c;
        c.input_dim = cfg.value("input_dim", c.input_dim);
        c.fhn_units = cfg.value("fhn_units", c.fhn_units);
        c.output_dim = cfg.value("output_dim", c.output_dim);
        c.t_start = cfg.value("t_start", c.t_start);
        c.t_end = cfg.value("t_end", c.t_end);
        c.dt = cfg.value("dt", c.dt);
        c.use_layer_norm = cfg.value("use_layer_norm", c.use_layer_norm);
        c.use_silu = cfg.value("use_silu", c.use_silu);
        if (cfg.contains("fhn")) c.fhn = cfg.at("fhn").get<FhnParams>();
        c.seed = cfg.value("seed", c.seed);
        return std::make_unique<FhnNetModel>(c);
    }
    if (kind == "node") {
        NodeNetConfig c;
        c.input_dim = cfg.value("input_dim", c.input_dim);
        c.hidden_dim = cfg.value("hidden_dim", c.hidden_dim);
        c.field_layers = cfg.value("field_layers", c.field_layers);
        c.output_dim = cfg.value("output_dim", c.output_dim);
        c.t_start = cfg.value("t_start", c.t_start);
        c.t_end = cfg.value("t_end", c.t_end);
        c.dt = cfg.value("dt", c.dt);
        c.seed = cfg.value("seed", c.seed);
        return std::make_unique<NodeNetModel>(c);
    }
    if (kind == "mlp") {
        MlpConfig c;
        c.input_dim = cfg.value("input_dim", c.input_dim);
        c.hidden_dim = cfg.value("hidden_dim", c.hidden_dim);
        c.output_dim = cfg.value("output_dim", c.output_dim);
        c.use_layer_norm = cfg.value("use_layer_norm", c.use_layer_norm);
        c.use_silu = cfg.value("use_silu", c.use_silu);
        c.seed = cfg.value("seed", c.seed);
        return std::make_unique<MlpModel>(c);
    }
    throw ConfigError("make_model: unknown kind '" + kind + "'");
}

namespace {

json standardizer_to_json(const Standardizer& s) {
    json j;
    j["feature_mean"] = s.feature_mean;
    j["feature_std"] = s.feature_std;
    j["target_mean"] = s.target_mean;
    j["target_std"] = s.target_std;
    return j;
}

Standardizer standardizer_from_json(const json& j) {
    Standardizer s;
    s.feature_mean = j.at("feature_mean").get<std::vector<double>>();
    s.feature_std = j.at("feature_std").get<std::vector<double>>();
    s.target_mean = j.at("target_mean").get<double>();
    s.target_std = j.at("target_std").get<double>();
    return s;
}

}  // namespace

std::string checkpoint_to_string(const Checkpoint& checkpoint) {
    json j;
    j["format_version"] = 1;
    j["model"] = checkpoint.model_config;
    j["params"] = checkpoint.params;
    if (checkpoint.standardizer) {
        j["standardizer"] = standardizer_to_json(*checkpoint.standardizer);
    }
    j["seed"] = checkpoint.seed;
    return j.dump(2) + "\n";
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FileNotFound("cannot write checkpoint: " + path);
    out << checkpoint_to_string(checkpoint);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileNotFound("cannot read checkpoint: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(std::string("checkpoint parse: ") + e.what(), 0);
    }
    if (j.value("format_version", 0) != 1) {
        throw ConfigError("checkpoint: unsupported format_version");
    }
    Checkpoint c;
    c.model_config = j.at("model");
    c.params = j.at("params").get<std::vector<double>>();
    if (j.contains("standardizer")) {
        c.standardizer = standardizer_from_json(j.at("standardizer"));
    }
    c.seed = j.value("seed", 0ull);
    const auto model = make_model(c.model_config);
    if (c.params.size() != model->param_count()) {
        throw DimMismatch("checkpoint: parameter count does not match model config");
    }
    return c;
}

std::vector<GradCheckRow> gradient_check(const Model& model, int n_samples, double h,
                                         std::uint64_t seed) {
    Rng rng(seed);
    const int n = model.input_dim();
    const int out = model.output_dim();
    std::vector<double> x(static_cast<std::size_t>(n_samples) * n);
    std::vector<double> y(static_cast<std::size_t>(n_samples) * out);
    for (double& v : x) v = rng.normal();
    for (double& v : y) v = rng.normal();
    const std::vector<double> theta0 = model.init_params();

    LossBuilder build = [&](Tape& tape, NodeId theta) -> NodeId {
        auto params = model.split_theta(tape, theta);
        return model.batch_loss(tape, params, x, y, n_samples);
    };
    const auto errors = finite_difference_errors(build, theta0, h);

    std::vector<GradCheckRow> rows;
    for (const auto& view : model.layout()) {
        double worst = 0.0;
        for (std::size_t i = 0; i < view.size(); ++i) {
            worst = std::max(worst, errors[view.offset + i]);
        }
        rows.push_back({view.name, worst});
    }
    return rows;
}

}  // namespace dynnet
