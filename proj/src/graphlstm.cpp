#include "graphlstm/graphlstm.hpp"

#include "graphlstm/errors.hpp"

namespace glstm {

GraphLstm GraphLstm::create(ad::ParamStore& store, const std::string& prefix, std::size_t in_width,
                            std::size_t hidden, Rng& rng) {
    GraphLstm cell;
    cell.in_width = in_width;
    cell.hidden = hidden;
    const std::size_t z_width = in_width + hidden;
    cell.input_gate = SageLayer::create(store, prefix + ".input", z_width, hidden, rng);
    cell.forget_gate = SageLayer::create(store, prefix + ".forget", z_width, hidden, rng);
    cell.cell_gate = SageLayer::create(store, prefix + ".cell", z_width, hidden, rng);
    cell.output_gate = SageLayer::create(store, prefix + ".output", z_width, hidden, rng);
    return cell;
}

GraphLstmState GraphLstm::zero_state(ad::Tape& tape, std::size_t node_count) const {
    return {tape.constant(ad::Tensor::zeros({node_count, hidden})), tape.constant(ad::Tensor::zeros({node_count, hidden}))};
}

GraphLstmState GraphLstm::cell(BoundParams params, ad::Var x, const GraphLstmState& state, const Graph& graph,
                               ad::Var edge_weights) const {
    const ad::Shape& xs = x.shape();
    if (xs.size() != 2 || xs[0] != graph.node_count() || xs[1] != in_width) {
        throw DimensionError("graph lstm input " + ad::to_string(xs) + ", expected [" +
                             std::to_string(graph.node_count()) + "x" + std::to_string(in_width) + "]");
    }
    if (state.h.shape() != ad::Shape{graph.node_count(), hidden} || state.c.shape() != state.h.shape()) {
        throw DimensionError("graph lstm state shape " + ad::to_string(state.h.shape()) + " / " +
                             ad::to_string(state.c.shape()));
    }
    // The neighbor aggregate of z is shared by all four gates.
    ad::Var z = ad::concat_cols(x, state.h);
    ad::Var za = ad::concat_cols(z, aggregate_neighbors(z, graph, edge_weights));
    auto gate = [&](const SageLayer& layer) {
        return ad::add_bias(ad::matmul(za, params[layer.weight]), params[layer.bias]);
    };
    ad::Var i = ad::sigmoid(gate(input_gate));
    ad::Var f = ad::sigmoid(gate(forget_gate));
    ad::Var g = ad::tanh(gate(cell_gate));
    ad::Var o = ad::sigmoid(gate(output_gate));
    ad::Var c = ad::add(ad::mul(f, state.c), ad::mul(i, g));
    ad::Var h = ad::mul(o, ad::tanh(c));
    return {h, c};
}

std::vector<ad::Var> GraphLstm::forward(BoundParams params, std::span<const ad::Var> sequence, const Graph& graph,
                                        ad::Var edge_weights) const {
    if (sequence.empty()) throw DimensionError("graph lstm needs a non-empty sequence");
    GraphLstmState state = zero_state(*sequence.front().tape(), graph.node_count());
    std::vector<ad::Var> outputs;
    outputs.reserve(sequence.size());
    for (const ad::Var& x : sequence) {
        state = cell(params, x, state, graph, edge_weights);
        outputs.push_back(state.h);
    }
    return outputs;
}

}  // namespace glstm
