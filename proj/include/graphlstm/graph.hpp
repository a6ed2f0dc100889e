#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace glstm {

struct LatLon {
    double lat = 0.0;  // degrees, [-90, 90]
    double lon = 0.0;  // degrees, (-180, 180]
};

struct NodeMeta {
    std::string name;
    std::int64_t population = 0;
    LatLon centroid;
};

/// Directed edge `src -> dst`; `dst` aggregates from `src`.
struct Edge {
    std::size_t src = 0;
    std::size_t dst = 0;
    std::vector<double> features;
};

/// Static spatial graph. Immutable once built; safe to share across threads.
class Graph {
public:
    Graph() = default;
    Graph(std::vector<std::string> names, std::vector<Edge> edges, std::size_t edge_feature_count);

    std::size_t node_count() const noexcept { return names_.size(); }
    std::size_t edge_count() const noexcept { return edges_.size(); }
    std::size_t edge_feature_count() const noexcept { return edge_feature_count_; }

    const std::vector<std::string>& names() const noexcept { return names_; }
    const std::vector<Edge>& edges() const noexcept { return edges_; }

    /// Edge ids arriving at `v`, in neighbor order.
    const std::vector<std::size_t>& incoming(std::size_t v) const { return incoming_.at(v); }

    /// Source ids of the edges arriving at `v`.
    std::vector<std::size_t> neighbors(std::size_t v) const;

    /// Copy with a new feature vector per edge (same edge order).
    Graph with_edge_features(std::vector<std::vector<double>> features) const;

private:
    std::vector<std::string> names_;
    std::vector<Edge> edges_;
    std::vector<std::vector<std::size_t>> incoming_;
    std::size_t edge_feature_count_ = 0;
};

constexpr double kEarthRadiusKm = 6371.0;

/// Great-circle distance on a sphere of radius 6371 km (haversine).
double geodesic_km(LatLon a, LatLon b);

struct KnnOptions {
    std::size_t k = 3;
    bool symmetrize = false;
};

/// Each node receives edges from its k geodesically nearest nodes (ties broken by name).
/// k is capped at N-1. Edges carry no features until `attach_edge_features`.
Graph build_knn_graph(const std::vector<NodeMeta>& metas, KnnOptions options = {});

/// Social-connectivity scores keyed by unordered country pair.
class SciTable {
public:
    void insert(const std::string& a, const std::string& b, double score);
    const double* find(const std::string& a, const std::string& b) const;
    std::size_t size() const noexcept { return scores_.size(); }

private:
    static std::pair<std::string, std::string> key(const std::string& a, const std::string& b);
    std::map<std::pair<std::string, std::string>, double> scores_;
};

/// Sets each edge's single feature to sci(u, v) divided by the largest score over the
/// graph's edges. Throws DataError listing every edge whose pair is missing.
Graph attach_edge_features(const Graph& graph, const SciTable& table);

// File formats ---------------------------------------------------------------

/// `name,population,lat,lon`
std::vector<NodeMeta> read_node_metadata(const std::filesystem::path& path);
std::vector<NodeMeta> parse_node_metadata(std::istream& in);

/// `country_a,country_b,sci`; duplicate unordered pairs are rejected.
SciTable read_sci_table(const std::filesystem::path& path);
SciTable parse_sci_table(std::istream& in);

/// `{"nodes": [...], "edges": [{"src", "dst", "features"}]}`
nlohmann::json graph_to_json(const Graph& graph);

}  // namespace glstm
