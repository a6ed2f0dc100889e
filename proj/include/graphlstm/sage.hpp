#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "graphlstm/autodiff.hpp"
#include "graphlstm/graph.hpp"

namespace glstm {

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) from the top 53 bits; independent of the standard library's distributions.
double uniform01(Rng& rng);

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] where fan_in is the row count.
ad::Tensor init_weight(std::size_t rows, std::size_t cols, Rng& rng);

/// Parameters are referenced by index into a ParamStore; forward passes take the
/// store bound onto a tape (`ParamStore::bind`), indexed the same way.
using BoundParams = std::span<const ad::Var>;

/// Single-layer perceptron mapping an edge's feature vector to a scalar weight in (0, 1).
struct EdgeScorer {
    std::size_t weight = 0;  // [K_W x 1]
    std::size_t bias = 0;    // [1]
    std::size_t feature_count = 0;

    static EdgeScorer create(ad::ParamStore& store, const std::string& prefix, std::size_t feature_count, Rng& rng);

    /// One scalar per graph edge, shape [E x 1].
    ad::Var score_edges(ad::Tape& tape, BoundParams params, const Graph& graph) const;
};

/// sigmoid(w . features + b)
double edge_scalar(std::span<const double> features, std::span<const double> weight, double bias);

/// Row v = (1/|N(v)|) * sum over incoming edges e=(u->v) of weight_e * H[u]. Nodes
/// without incoming edges get a zero row.
ad::Var aggregate_neighbors(ad::Var h, const Graph& graph, ad::Var edge_weights);

/// GraphSAGE layer: sigmoid([H | agg(H)] W + b).
struct SageLayer {
    std::size_t weight = 0;  // [2*in x out]
    std::size_t bias = 0;    // [out]
    std::size_t in_width = 0;
    std::size_t out_width = 0;

    static SageLayer create(ad::ParamStore& store, const std::string& prefix, std::size_t in_width,
                            std::size_t out_width, Rng& rng);

    /// [H | agg(H)] W + b, without the output nonlinearity.
    ad::Var affine(BoundParams params, ad::Var h, const Graph& graph, ad::Var edge_weights) const;
    ad::Var forward(BoundParams params, ad::Var h, const Graph& graph, ad::Var edge_weights) const;
};

/// Training-time node dropout: each row is zeroed with probability p and survivors are
/// scaled by 1/(1-p). Returns `h` itself when not training or when p == 0.
ad::Var node_dropout(ad::Var h, double p, Rng* rng, bool training);

/// Randomness and mode for one forward pass.
struct PassContext {
    bool training = false;
    Rng* rng = nullptr;  // required when training with dropout > 0
};

/// Stack of SAGE layers. Layer 1 reads the stack input; every later layer reads the
/// previous output concatenated with the stack input. Dropout sits between layers.
struct SageStack {
    std::vector<SageLayer> layers;
    std::size_t in_width = 0;
    double dropout = 0.0;

    static SageStack create(ad::ParamStore& store, const std::string& prefix, std::size_t in_width,
                            std::size_t hidden, std::size_t depth, double dropout, Rng& rng);

    std::size_t out_width() const { return layers.back().out_width; }

    ad::Var forward(BoundParams params, ad::Var h0, const Graph& graph, ad::Var edge_weights,
                    const PassContext& ctx) const;
};

/// relu(H W1 + b1) W2 + b2 with a single linear output column.
struct MlpHead {
    std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0;
    std::size_t in_width = 0;
    std::size_t hidden = 0;

    static MlpHead create(ad::ParamStore& store, const std::string& prefix, std::size_t in_width,
                          std::size_t hidden, Rng& rng);

    ad::Var forward(BoundParams params, ad::Var h) const;
};

}  // namespace glstm
