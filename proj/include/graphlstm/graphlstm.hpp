#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "graphlstm/autodiff.hpp"
#include "graphlstm/graph.hpp"
#include "graphlstm/sage.hpp"

namespace glstm {

struct GraphLstmState {
    ad::Var h;  // [N x H]
    ad::Var c;  // [N x H]
};

/// LSTM cell whose four gate transforms are edge-weighted GraphSAGE convolutions over the
/// per-node concatenation [x_t | h_{t-1}]:
///
///   i = sigmoid(S_i(z)), f = sigmoid(S_f(z)), g = tanh(S_g(z)), o = sigmoid(S_o(z))
///   c_t = f * c_{t-1} + i * g,  h_t = o * tanh(c_t)
///
/// where S_* is a SAGE layer's affine part (its own sigmoid is not applied).
struct GraphLstm {
    SageLayer input_gate;
    SageLayer forget_gate;
    SageLayer cell_gate;
    SageLayer output_gate;
    std::size_t in_width = 0;
    std::size_t hidden = 0;

    static GraphLstm create(ad::ParamStore& store, const std::string& prefix, std::size_t in_width,
                            std::size_t hidden, Rng& rng);

    GraphLstmState zero_state(ad::Tape& tape, std::size_t node_count) const;

    GraphLstmState cell(BoundParams params, ad::Var x, const GraphLstmState& state, const Graph& graph,
                        ad::Var edge_weights) const;

    /// Runs the recurrence from a zero state; returns every step's hidden output.
    std::vector<ad::Var> forward(BoundParams params, std::span<const ad::Var> sequence, const Graph& graph,
                                 ad::Var edge_weights) const;
};

}  // namespace glstm
