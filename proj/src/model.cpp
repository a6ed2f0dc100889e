#include "graphlstm/model.hpp"

#include <algorithm>
#include <cmath>

#include "graphlstm/errors.hpp"

namespace glstm {

void ModelConfig::validate() const {
    auto positive = [](std::size_t v, const char* name) {
        if (v < 1) throw DataError(std::string("model config: ") + name + " must be at least 1");
    };
    positive(input_features, "input_features");
    positive(hidden, "hidden");
    positive(lstm_hidden, "lstm_hidden");
    positive(mlp_hidden, "mlp_hidden");
    positive(stack_depth, "stack_depth");
    positive(neighbors, "neighbors");
    positive(window, "window");
    positive(horizon, "horizon");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw DataError("model config: dropout must lie in [0, 1)");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"input_features", c.input_features}, {"edge_features", c.edge_features}, {"hidden", c.hidden},
         {"lstm_hidden", c.lstm_hidden},       {"mlp_hidden", c.mlp_hidden},       {"stack_depth", c.stack_depth},
         {"neighbors", c.neighbors},           {"dropout", c.dropout},             {"window", c.window},
         {"horizon", c.horizon},               {"skip", c.skip}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    ModelConfig d;
    c.input_features = j.value("input_features", d.input_features);
    c.edge_features = j.value("edge_features", d.edge_features);
    c.hidden = j.value("hidden", d.hidden);
    c.lstm_hidden = j.value("lstm_hidden", d.lstm_hidden);
    c.mlp_hidden = j.value("mlp_hidden", d.mlp_hidden);
    c.stack_depth = j.value("stack_depth", d.stack_depth);
    c.neighbors = j.value("neighbors", d.neighbors);
    c.dropout = j.value("dropout", d.dropout);
    c.window = j.value("window", d.window);
    c.horizon = j.value("horizon", d.horizon);
    c.skip = j.value("skip", d.skip);
}

std::size_t skip_first_layer_delta(const ModelConfig& config) { return 2 * config.hidden * config.hidden; }

// ---------------------------------------------------------------------------

void Model::build_layout(ad::ParamStore& store, Rng& rng) {
    scorer_ = EdgeScorer::create(store, "edge_scorer", config_.edge_features, rng);
    stack1_ = SageStack::create(store, "stack1", config_.input_features, config_.hidden, config_.stack_depth,
                                config_.dropout, rng);
    lstm_ = GraphLstm::create(store, "lstm", config_.hidden, config_.lstm_hidden, rng);
    stack2_ = SageStack::create(store, "stack2", config_.stack2_input_width(), config_.hidden, config_.stack_depth,
                                config_.dropout, rng);
    head_ = MlpHead::create(store, "head", config_.hidden, config_.mlp_hidden, rng);
}

Model Model::create(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Model m;
    m.config_ = config;
    Rng rng(seed);
    m.build_layout(m.params_, rng);
    return m;
}

Model Model::from_params(const ModelConfig& config, ad::ParamStore params) {
    Model m = create(config, 0);
    for (std::size_t i = 0; i < m.params_.size(); ++i) {
        const std::string& name = m.params_.name(i);
        const auto found = params.find(name);
        if (!found) throw DataError("parameter '" + name + "' missing for this model configuration");
        if (params[*found].shape() != m.params_[i].shape()) {
            throw DataError("parameter '" + name + "' has shape " + ad::to_string(params[*found].shape()) +
                            ", configuration needs " + ad::to_string(m.params_[i].shape()));
        }
        m.params_[i] = params[*found];
    }
    if (params.size() != m.params_.size()) throw DataError("parameter set has entries this configuration does not use");
    return m;
}

std::size_t Model::stack2_first_layer_count() const {
    const SageLayer& l = stack2_.layers.front();
    return params_[l.weight].size() + params_[l.bias].size();
}

namespace {

ad::Var checked(ad::Var v, const char* layer) {
    for (double x : v.value().values()) {
        if (!std::isfinite(x)) throw NumericError(std::string("non-finite activation in ") + layer);
    }
    return v;
}

}  // namespace

ad::Var Model::forward(ad::Tape& tape, BoundParams params, const ad::Tensor& window, const Graph& graph,
                       const PassContext& ctx) const {
    const std::size_t N = graph.node_count();
    const std::size_t L = config_.window, K = config_.input_features;
    if (window.shape() != ad::Shape{L, N, K}) {
        throw DimensionError("model window " + ad::to_string(window.shape()) + ", expected " +
                             ad::to_string(ad::Shape{L, N, K}));
    }
    if (params.size() != params_.size()) throw DimensionError("bound parameter count does not match the model");

    ad::Var edge_weights = checked(scorer_.score_edges(tape, params, graph), "edge_scorer");

    std::vector<ad::Var> spatial;
    spatial.reserve(L);
    for (std::size_t l = 0; l < L; ++l) {
        ad::Tensor x_t({N, K});
        std::copy_n(window.values().begin() + static_cast<std::ptrdiff_t>(l * N * K), N * K, x_t.values().begin());
        spatial.push_back(checked(stack1_.forward(params, tape.constant(std::move(x_t)), graph, edge_weights, ctx), "stack1"));
    }

    ad::Var h_last = checked(lstm_.forward(params, spatial, graph, edge_weights).back(), "lstm");
    ad::Var merged = config_.skip ? ad::concat_cols(h_last, spatial.back()) : h_last;
    ad::Var h2 = checked(stack2_.forward(params, merged, graph, edge_weights, ctx), "stack2");
    ad::Var out = checked(head_.forward(params, h2), "head");
    return ad::reshape(out, {N});
}

std::vector<double> Model::predict(const ad::Tensor& window, const Graph& graph) const {
    ad::Tape tape;
    std::vector<ad::Var> bound;
    bound.reserve(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) bound.push_back(tape.constant(params_[i]));
    const ad::Var out = forward(tape, bound, window, graph, PassContext{});
    const auto values = out.value().values();
    return {values.begin(), values.end()};
}

std::vector<double> predict_cases(const Model& model, const ad::Tensor& window_cases, const Graph& graph,
                                  const Normalizer& normalizer) {
    if (!normalizer.fitted()) throw std::logic_error("predict_cases needs a fitted normalizer");
    const std::vector<double> raw = model.predict(normalizer.normalize_window(window_cases), graph);
    std::vector<double> cases = normalizer.denormalize(raw);
    for (double& c : cases) c = std::max(0.0, c);
    return cases;
}

}  // namespace glstm
