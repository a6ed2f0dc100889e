#pragma once

#include "graphlstm/synthetic.hpp"
#include "graphlstm/train.hpp"

namespace glstm::fixtures {

struct Problem {
    Graph graph;
    PreparedData data;
};

/// Synthetic diffusion series on a k-NN graph with SCI edge features, windowed for `config`.
inline Problem synthetic_problem(const SyntheticSpec& spec, SplitLengths split, const ModelConfig& config) {
    const SyntheticData syn = make_synthetic_diffusion(spec);
    Problem p;
    p.graph = attach_edge_features(build_knn_graph(syn.metas, {spec.k, false}), syn.sci);
    DatasetOptions opt;
    opt.split = split;
    p.data = prepare_data(build_dataset(syn.cumulative, opt), config);
    return p;
}

}  // namespace glstm::fixtures
