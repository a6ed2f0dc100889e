#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "graphlstm/dataset.hpp"
#include "graphlstm/graph.hpp"

namespace glstm {

/// Linear spatio-temporal dynamics on a k-NN graph of random European-ish centroids:
///
///   x_{t+1,v} = x_{t,v} + relax * (drive_v(t) - x_{t,v})
///             + diffusion * (mean_{u in N(v)} x_{t,u} - x_{t,v}) + noise
///   drive_v(t) = level_v * (1 + amplitude * sin(2 pi t / period + phase_v))
///
/// Phases vary smoothly with longitude so the network-wide total oscillates too.
struct SyntheticSpec {
    std::size_t nodes = 20;
    std::size_t days = 200;
    std::size_t k = 3;
    std::uint64_t seed = 7;
    double period = 28.0;
    double amplitude = 0.6;
    double phase_spread = 1.5;  // radians across the longitude range
    double relax = 0.3;
    double diffusion = 0.2;
    double noise = 0.02;        // relative to level_v
};

struct SyntheticData {
    std::vector<NodeMeta> metas;
    SciTable sci;
    CumulativeCases cumulative;               // days + 1 entries, starting at zero
    std::vector<std::vector<double>> daily;   // [node][day]
};

SyntheticData make_synthetic_diffusion(const SyntheticSpec& spec);

void write_node_csv(std::ostream& out, const std::vector<NodeMeta>& metas);
/// Writes every unordered pair of `metas` with its score from `sci`.
void write_sci_csv(std::ostream& out, const std::vector<NodeMeta>& metas, const SciTable& sci);

}  // namespace glstm
