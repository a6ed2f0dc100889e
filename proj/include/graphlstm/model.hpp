#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "graphlstm/autodiff.hpp"
#include "graphlstm/dataset.hpp"
#include "graphlstm/graph.hpp"
#include "graphlstm/graphlstm.hpp"
#include "graphlstm/sage.hpp"

namespace glstm {

struct ModelConfig {
    std::size_t input_features = 1;  // K_X
    std::size_t edge_features = 1;   // K_W
    std::size_t hidden = 32;         // SAGE stack width
    std::size_t lstm_hidden = 32;    // H
    std::size_t mlp_hidden = 32;
    std::size_t stack_depth = 3;     // n
    std::size_t neighbors = 3;       // k
    double dropout = 0.2;
    std::size_t window = 21;         // L
    std::size_t horizon = 7;         // M
    bool skip = true;

    void validate() const;
    /// Width entering the second SAGE stack.
    std::size_t stack2_input_width() const { return skip ? lstm_hidden + hidden : lstm_hidden; }

    bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Parameter-count change in the second stack's first layer caused by the skip connection:
/// 2 x (stack-1 output width) x (stack-2 layer-1 output width).
std::size_t skip_first_layer_delta(const ModelConfig& config);

/// SAGE stack -> GraphLSTM -> [h_L | stack-1 output at step L] -> SAGE stack -> MLP head.
class Model {
public:
    /// Fresh parameters: weights uniform in +-1/sqrt(fan_in), biases zero.
    static Model create(const ModelConfig& config, std::uint64_t seed);

    /// Rebuilds the layout for `config` and adopts `params`, which must match it by name and shape.
    static Model from_params(const ModelConfig& config, ad::ParamStore params);

    const ModelConfig& config() const noexcept { return config_; }
    const ad::ParamStore& params() const noexcept { return params_; }
    ad::ParamStore& params() noexcept { return params_; }

    std::size_t parameter_count() const { return params_.scalar_count(); }
    /// Scalar count of the second stack's first layer (weight and bias).
    std::size_t stack2_first_layer_count() const;

    /// Normalized predictions, shape [N]. `window` is [L x N x K_X] in normalized units.
    ad::Var forward(ad::Tape& tape, BoundParams params, const ad::Tensor& window, const Graph& graph,
                    const PassContext& ctx) const;

    /// Evaluation-mode forward without gradient tracking.
    std::vector<double> predict(const ad::Tensor& window, const Graph& graph) const;

private:
    Model() = default;
    void build_layout(ad::ParamStore& store, Rng& rng);

    ModelConfig config_;
    ad::ParamStore params_;
    EdgeScorer scorer_;
    SageStack stack1_;
    GraphLstm lstm_;
    SageStack stack2_;
    MlpHead head_;
};

/// Case-unit forecast: normalize the window, run the model in evaluation mode,
/// denormalize, and clamp at zero.
std::vector<double> predict_cases(const Model& model, const ad::Tensor& window_cases, const Graph& graph,
                                  const Normalizer& normalizer);

}  // namespace glstm
