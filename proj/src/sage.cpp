#include "graphlstm/sage.hpp"

#include <cmath>

#include "graphlstm/errors.hpp"

namespace glstm {

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

ad::Tensor init_weight(std::size_t rows, std::size_t cols, Rng& rng) {
    ad::Tensor w({rows, cols});
    const double bound = rows ? 1.0 / std::sqrt(static_cast<double>(rows)) : 0.0;
    for (double& v : w.values()) v = (2.0 * uniform01(rng) - 1.0) * bound;
    return w;
}

// ---------------------------------------------------------------------------

EdgeScorer EdgeScorer::create(ad::ParamStore& store, const std::string& prefix, std::size_t feature_count,
                              Rng& rng) {
    EdgeScorer s;
    s.feature_count = feature_count;
    s.weight = store.add(prefix + ".weight", init_weight(feature_count, 1, rng));
    s.bias = store.add(prefix + ".bias", ad::Tensor::zeros({1}));
    return s;
}

ad::Var EdgeScorer::score_edges(ad::Tape& tape, BoundParams params, const Graph& graph) const {
    if (graph.edge_feature_count() != feature_count) {
        throw DimensionError("edge scorer expects " + std::to_string(feature_count) + " edge features, graph has " +
                             std::to_string(graph.edge_feature_count()));
    }
    ad::Tensor feats({graph.edge_count(), feature_count});
    for (std::size_t e = 0; e < graph.edge_count(); ++e) {
        const auto& f = graph.edges()[e].features;
        for (std::size_t j = 0; j < feature_count; ++j) feats(e, j) = f[j];
    }
    ad::Var x = tape.constant(std::move(feats));
    return ad::sigmoid(ad::add_bias(ad::matmul(x, params[weight]), params[bias]));
}

double edge_scalar(std::span<const double> features, std::span<const double> weight, double bias) {
    if (features.size() != weight.size()) {
        throw DimensionError("edge_scalar: " + std::to_string(features.size()) + " features for " +
                             std::to_string(weight.size()) + " weights");
    }
    double z = bias;
    for (std::size_t i = 0; i < features.size(); ++i) z += weight[i] * features[i];
    return ad::sigmoid(z);
}

// ---------------------------------------------------------------------------

ad::Var aggregate_neighbors(ad::Var h, const Graph& graph, ad::Var edge_weights) {
    ad::Tape& tape = *h.tape();
    tape.check_owned(edge_weights, "aggregate_neighbors");
    const ad::Tensor& H = h.value();
    const ad::Tensor& w = edge_weights.value();
    if (H.rank() != 2 || H.rows() != graph.node_count()) {
        throw DimensionError("aggregate_neighbors: embedding " + ad::to_string(H.shape()) + " for " +
                             std::to_string(graph.node_count()) + " nodes");
    }
    if (w.size() != graph.edge_count()) {
        throw DimensionError("aggregate_neighbors: " + std::to_string(w.size()) + " edge weights for " +
                             std::to_string(graph.edge_count()) + " edges");
    }
    const std::size_t n = H.rows(), d = H.cols();
    ad::Tensor out({n, d});
    for (std::size_t v = 0; v < n; ++v) {
        const auto& in = graph.incoming(v);
        if (in.empty()) continue;
        const double inv_deg = 1.0 / static_cast<double>(in.size());
        for (std::size_t e : in) {
            const std::size_t u = graph.edges()[e].src;
            const double coef = w[e] * inv_deg;
            for (std::size_t c = 0; c < d; ++c) out[v * d + c] += coef * H[u * d + c];
        }
    }
    const std::size_t ih = h.id(), iw = edge_weights.id();
    const Graph* g = &graph;
    return tape.record(std::move(out), {ih, iw}, [ih, iw, g, n, d](const ad::Tape& t, const ad::Tensor& grad, ad::GradSink& sink) {
        const ad::Tensor& Hv = t.value(ih);
        const ad::Tensor& wv = t.value(iw);
        const bool want_h = sink.wants(ih), want_w = sink.wants(iw);
        for (std::size_t v = 0; v < n; ++v) {
            const auto& in = g->incoming(v);
            if (in.empty()) continue;
            const double inv_deg = 1.0 / static_cast<double>(in.size());
            for (std::size_t e : in) {
                const std::size_t u = g->edges()[e].src;
                if (want_h) {
                    ad::Tensor& gh = sink.at(ih);
                    const double coef = wv[e] * inv_deg;
                    for (std::size_t c = 0; c < d; ++c) gh[u * d + c] += coef * grad[v * d + c];
                }
                if (want_w) {
                    double dot = 0.0;
                    for (std::size_t c = 0; c < d; ++c) dot += grad[v * d + c] * Hv[u * d + c];
                    sink.at(iw)[e] += dot * inv_deg;
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------

SageLayer SageLayer::create(ad::ParamStore& store, const std::string& prefix, std::size_t in_width,
                            std::size_t out_width, Rng& rng) {
    SageLayer layer;
    layer.in_width = in_width;
    layer.out_width = out_width;
    layer.weight = store.add(prefix + ".weight", init_weight(2 * in_width, out_width, rng));
    layer.bias = store.add(prefix + ".bias", ad::Tensor::zeros({out_width}));
    return layer;
}

ad::Var SageLayer::affine(BoundParams params, ad::Var h, const Graph& graph, ad::Var edge_weights) const {
    const ad::Shape& s = h.shape();
    if (s.size() != 2 || s[1] != in_width) {
        throw DimensionError("sage layer expects width " + std::to_string(in_width) + ", got " + ad::to_string(s));
    }
    ad::Var z = ad::concat_cols(h, aggregate_neighbors(h, graph, edge_weights));
    return ad::add_bias(ad::matmul(z, params[weight]), params[bias]);
}

ad::Var SageLayer::forward(BoundParams params, ad::Var h, const Graph& graph, ad::Var edge_weights) const {
    return ad::sigmoid(affine(params, h, graph, edge_weights));
}

// ---------------------------------------------------------------------------

ad::Var node_dropout(ad::Var h, double p, Rng* rng, bool training) {
    if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout rate must lie in [0, 1)");
    if (!training || p == 0.0) return h;
    if (!rng) throw std::invalid_argument("node_dropout: training with p > 0 needs an rng");
    const ad::Tensor& H = h.value();
    const std::size_t n = H.rows(), d = H.cols();
    ad::Tensor mask({n, d});
    const double keep_scale = 1.0 / (1.0 - p);
    for (std::size_t v = 0; v < n; ++v) {
        const double m = uniform01(*rng) < p ? 0.0 : keep_scale;
        for (std::size_t c = 0; c < d; ++c) mask[v * d + c] = m;
    }
    return ad::mul(h, h.tape()->constant(std::move(mask)));
}

// ---------------------------------------------------------------------------

SageStack SageStack::create(ad::ParamStore& store, const std::string& prefix, std::size_t in_width,
                            std::size_t hidden, std::size_t depth, double dropout, Rng& rng) {
    if (depth < 1) throw std::invalid_argument("sage stack depth must be at least 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout rate must lie in [0, 1)");
    SageStack stack;
    stack.in_width = in_width;
    stack.dropout = dropout;
    for (std::size_t i = 0; i < depth; ++i) {
        const std::size_t width = i == 0 ? in_width : hidden + in_width;
        stack.layers.push_back(SageLayer::create(store, prefix + ".layer" + std::to_string(i), width, hidden, rng));
    }
    return stack;
}

ad::Var SageStack::forward(BoundParams params, ad::Var h0, const Graph& graph, ad::Var edge_weights,
                           const PassContext& ctx) const {
    ad::Var h = layers.front().forward(params, h0, graph, edge_weights);
    for (std::size_t i = 1; i < layers.size(); ++i) {
        h = node_dropout(h, dropout, ctx.rng, ctx.training);
        h = layers[i].forward(params, ad::concat_cols(h, h0), graph, edge_weights);
    }
    return h;
}

// ---------------------------------------------------------------------------

MlpHead MlpHead::create(ad::ParamStore& store, const std::string& prefix, std::size_t in_width, std::size_t hidden,
                        Rng& rng) {
    MlpHead head;
    head.in_width = in_width;
    head.hidden = hidden;
    head.w1 = store.add(prefix + ".fc1.weight", init_weight(in_width, hidden, rng));
    head.b1 = store.add(prefix + ".fc1.bias", ad::Tensor::zeros({hidden}));
    head.w2 = store.add(prefix + ".fc2.weight", init_weight(hidden, 1, rng));
    head.b2 = store.add(prefix + ".fc2.bias", ad::Tensor::zeros({1}));
    return head;
}

ad::Var MlpHead::forward(BoundParams params, ad::Var h) const {
    const ad::Shape& s = h.shape();
    if (s.size() != 2 || s[1] != in_width) {
        throw DimensionError("mlp head expects width " + std::to_string(in_width) + ", got " + ad::to_string(s));
    }
    ad::Var hidden_act = ad::relu(ad::add_bias(ad::matmul(h, params[w1]), params[b1]));
    return ad::add_bias(ad::matmul(hidden_act, params[w2]), params[b2]);
}

}  // namespace glstm
