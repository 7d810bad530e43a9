#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dynnet/data.hpp"
#include "dynnet/dynamics.hpp"
#include "dynnet/tape.hpp"

namespace dynnet {

inline constexpr double kLayerNormEps = 1e-5;

// One named slice of the flat trainable parameter vector.
struct ParamView {
    std::string name;
    std::size_t offset = 0;
    Shape shape;
    std::size_t size() const { return static_cast<std::size_t>(shape.size()); }
};

// A trainable model: a parameter layout plus graph builders. The flat
// parameter vector is ordered exactly as layout() lists it.
class Model {
  public:
    virtual ~Model() = default;

    virtual std::string kind() const = 0;
    virtual int input_dim() const = 0;
    virtual int output_dim() const = 0;
    virtual const std::vector<ParamView>& layout() const = 0;
    virtual std::vector<double> init_params() const = 0;  // seeded from the config

    // Mean per-sample MSE over the batch. x is batch*input_dim row-major,
    // y is batch*output_dim. Throws NonFinite if the dynamics blow up.
    virtual NodeId batch_loss(Tape& tape, const std::vector<NodeId>& params,
                              std::span<const double> x, std::span<const double> y,
                              int batch) const = 0;

    virtual std::vector<double> predict(std::span<const double> params,
                                        std::span<const double> x, int rows) const = 0;

    virtual nlohmann::json config_json() const = 0;  // includes "kind"

    std::size_t param_count() const;
    // One tape parameter node per view, in layout order.
    std::vector<NodeId> register_params(Tape& tape, std::span<const double> params) const;
    // Same views carved out of a single flat parameter node.
    std::vector<NodeId> split_theta(Tape& tape, NodeId theta) const;
    // Gradients in layout order, flattened; valid after backward().
    std::vector<double> collect_grads(const Tape& tape,
                                      const std::vector<NodeId>& params) const;
};

// ---- FHN-driven network -----------------------------------------------------
//
// Forward pass: h0 = phi(W_h x + b_h) with phi = LayerNorm then SiLU (both
// toggleable), h0 split into (v, w), evolved by the unrolled Euler block over
// the grid, then read out by an affine output layer.
struct FhnNetConfig {
    int input_dim = 8;
    int fhn_units = 1;  // K; hidden width is 2K
    int output_dim = 1;
    double t_start = 0.0;
    double t_end = 500.0;
    double dt = 20.0;
    bool use_layer_norm = true;
    bool use_silu = true;
    FhnParams fhn;
    std::uint64_t seed = 0;

    IntegrationGrid grid() const { return IntegrationGrid(t_start, t_end, dt); }
    void validate() const;
};

std::size_t fhn_param_count(const FhnNetConfig& config);

class FhnNetModel final : public Model {
  public:
    explicit FhnNetModel(FhnNetConfig config);

    std::string kind() const override { return "fhn"; }
    int input_dim() const override { return config_.input_dim; }
    int output_dim() const override { return config_.output_dim; }
    const std::vector<ParamView>& layout() const override { return layout_; }
    std::vector<double> init_params() const override;
    NodeId batch_loss(Tape& tape, const std::vector<NodeId>& params,
                      std::span<const double> x, std::span<const double> y,
                      int batch) const override;
    std::vector<double> predict(std::span<const double> params, std::span<const double> x,
                                int rows) const override;
    nlohmann::json config_json() const override;

    const FhnNetConfig& config() const { return config_; }

    // Single-sample forward (the inspection path). `capture` receives the
    // hidden trajectory on request; `field_override` swaps the FHN flow for
    // another vector field of the same width.
    NodeId forward_sample(Tape& tape, const std::vector<NodeId>& params,
                          std::span<const double> x, Trajectory* capture = nullptr,
                          const TapeField* field_override = nullptr) const;

    // Per-sample output nodes for a whole batch sharing one Euler chain.
    std::vector<NodeId> forward_batch(Tape& tape, const std::vector<NodeId>& params,
                                      std::span<const double> x, int batch) const;

  private:
    FhnNetConfig config_;
    std::vector<ParamView> layout_;
};

// ---- multi-layer composition -------------------------------------------------
//
// Layer k+1 integrates its own field over [exit_{k}, exit_{k+1}] starting from
// the affine image of the previous layer's exit state. Exit times must be
// strictly increasing. With one layer this is exactly the FhnNet forward pass.
struct DynamicLayer {
    NodeId weight = -1;  // {state_dim, prev_dim}
    NodeId bias = -1;    // {state_dim}
    bool use_layer_norm = false;
    NodeId ln_gain = -1;
    NodeId ln_bias = -1;
    bool use_silu = false;
    TapeField field;
    double exit_time = 0.0;
    double dt = 0.0;
};

NodeId compose_layers(Tape& tape, NodeId input, std::span<const DynamicLayer> layers,
                      NodeId out_weight, NodeId out_bias, Trajectory* capture = nullptr,
                      double t_start = 0.0);

// ---- NODE baseline -----------------------------------------------------------
//
// Affine lift into the hidden state, a learned vector field integrated by the
// same unrolled Euler block (gradients flow through the solver; no adjoint),
// then an affine projection. The field is a tanh MLP on [state, t]: layers
// 1..L-1 keep the augmented width h+1, the last maps back to h.
struct NodeNetConfig {
    int input_dim = 8;
    int hidden_dim = 15;
    int field_layers = 2;
    int output_dim = 1;
    double t_start = 0.0;
    double t_end = 12.5;
    double dt = 0.5;
    std::uint64_t seed = 0;

    IntegrationGrid grid() const { return IntegrationGrid(t_start, t_end, dt); }
    void validate() const;
};

std::size_t node_param_count(const NodeNetConfig& config);

class NodeNetModel final : public Model {
  public:
    explicit NodeNetModel(NodeNetConfig config);

    std::string kind() const override { return "node"; }
    int input_dim() const override { return config_.input_dim; }
    int output_dim() const override { return config_.output_dim; }
    const std::vector<ParamView>& layout() const override { return layout_; }
    std::vector<double> init_params() const override;
    NodeId batch_loss(Tape& tape, const std::vector<NodeId>& params,
                      std::span<const double> x, std::span<const double> y,
                      int batch) const override;
    std::vector<double> predict(std::span<const double> params, std::span<const double> x,
                                int rows) const override;
    nlohmann::json config_json() const override;

    const NodeNetConfig& config() const { return config_; }

    NodeId forward_sample(Tape& tape, const std::vector<NodeId>& params,
                          std::span<const double> x) const;

  private:
    TapeField make_field(const std::vector<NodeId>& params) const;

    NodeNetConfig config_;
    std::vector<ParamView> layout_;
};

// ---- iso-parameter MLP -------------------------------------------------------
//
// One SiLU hidden layer; optional per-unit gain/bias (the LayerNorm affine)
// so the 25-parameter budget of the default FhnNet can be matched exactly.
struct MlpConfig {
    int input_dim = 8;
    int hidden_dim = 2;
    int output_dim = 1;
    bool use_layer_norm = true;
    bool use_silu = true;
    std::uint64_t seed = 0;

    void validate() const;
};

std::size_t mlp_param_count(const MlpConfig& config);

class MlpModel final : public Model {
  public:
    explicit MlpModel(MlpConfig config);

    std::string kind() const override { return "mlp"; }
    int input_dim() const override { return config_.input_dim; }
    int output_dim() const override { return config_.output_dim; }
    const std::vector<ParamView>& layout() const override { return layout_; }
    std::vector<double> init_params() const override;
    NodeId batch_loss(Tape& tape, const std::vector<NodeId>& params,
                      std::span<const double> x, std::span<const double> y,
                      int batch) const override;
    std::vector<double> predict(std::span<const double> params, std::span<const double> x,
                                int rows) const override;
    nlohmann::json config_json() const override;

    const MlpConfig& config() const { return config_; }

    NodeId forward_sample(Tape& tape, const std::vector<NodeId>& params,
                          std::span<const double> x) const;

  private:
    MlpConfig config_;
    std::vector<ParamView> layout_;
};

// ---- factory / checkpoints ----------------------------------------------------

std::unique_ptr<Model> make_model(const nlohmann::json& model_config);

struct Checkpoint {
    nlohmann::json model_config;
    std::vector<double> params;
    std::optional<Standardizer> standardizer;
    std::uint64_t seed = 0;
};

std::string checkpoint_to_string(const Checkpoint& checkpoint);
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

// Per-view finite-difference report on a fixed synthetic batch.
struct GradCheckRow {
    std::string view;
    double max_rel_error = 0.0;
};
std::vector<GradCheckRow> gradient_check(const Model& model, int n_samples, double h,
                                         std::uint64_t seed);

void to_json(nlohmann::json& j, const FhnParams& p);
void from_json(const nlohmann::json& j, FhnParams& p);

}  // namespace dynnet
