#include "graphlstm/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <unordered_set>

#include "graphlstm/csv.hpp"
#include "graphlstm/errors.hpp"

namespace glstm {

namespace {

constexpr std::int64_t kMinPopulation = 100'000;

void check_coordinates(LatLon p) {
    if (!(p.lat >= -90.0 && p.lat <= 90.0) || !(p.lon > -180.0 && p.lon <= 180.0)) {
        std::ostringstream os;
        os << "coordinates out of range: (" << p.lat << ", " << p.lon << ")";
        throw DataError(os.str());
    }
}

void validate_metas(const std::vector<NodeMeta>& metas) {
    std::unordered_set<std::string> seen;
    for (const NodeMeta& m : metas) {
        if (!seen.insert(m.name).second) throw DataError("duplicate node name: " + m.name);
        if (m.population <= kMinPopulation) {
            throw DataError("node " + m.name + " has population " + std::to_string(m.population) +
                            "; at least 100,001 required");
        }
        check_coordinates(m.centroid);
    }
}

}  // namespace

Graph::Graph(std::vector<std::string> names, std::vector<Edge> edges, std::size_t edge_feature_count)
    : names_(std::move(names)), edges_(std::move(edges)), incoming_(names_.size()),
      edge_feature_count_(edge_feature_count) {
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (std::size_t e = 0; e < edges_.size(); ++e) {
        const Edge& edge = edges_[e];
        if (edge.src >= names_.size() || edge.dst >= names_.size()) throw DataError("edge endpoint out of range");
        if (edge.src == edge.dst) throw DataError("self-loop on node " + names_[edge.src]);
        if (!seen.emplace(edge.src, edge.dst).second) {
            throw DataError("duplicate edge " + names_[edge.src] + " -> " + names_[edge.dst]);
        }
        if (edge.features.size() != edge_feature_count_) {
            throw DataError("edge " + names_[edge.src] + " -> " + names_[edge.dst] + " has " +
                            std::to_string(edge.features.size()) + " features, expected " +
                            std::to_string(edge_feature_count_));
        }
        incoming_[edge.dst].push_back(e);
    }
}

std::vector<std::size_t> Graph::neighbors(std::size_t v) const {
    std::vector<std::size_t> out;
    for (std::size_t e : incoming_.at(v)) out.push_back(edges_[e].src);
    return out;
}

Graph Graph::with_edge_features(std::vector<std::vector<double>> features) const {
    if (features.size() != edges_.size()) throw DataError("feature count does not match edge count");
    const std::size_t width = features.empty() ? 0 : features.front().size();
    std::vector<Edge> edges = edges_;
    for (std::size_t e = 0; e < edges.size(); ++e) edges[e].features = std::move(features[e]);
    return Graph(names_, std::move(edges), width);
}

double geodesic_km(LatLon a, LatLon b) {
    check_coordinates(a);
    check_coordinates(b);
    constexpr double rad = std::numbers::pi / 180.0;
    const double phi1 = a.lat * rad, phi2 = b.lat * rad;
    const double dphi = (b.lat - a.lat) * rad;
    const double dlambda = (b.lon - a.lon) * rad;
    const double s1 = std::sin(dphi / 2.0), s2 = std::sin(dlambda / 2.0);
    const double h = std::clamp(s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2, 0.0, 1.0);
    return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

Graph build_knn_graph(const std::vector<NodeMeta>& metas, KnnOptions options) {
    if (metas.size() < 2) throw DataError("a graph needs at least 2 nodes");
    if (options.k < 1) throw DataError("k must be at least 1");
    validate_metas(metas);

    const std::size_t n = metas.size();
    const std::size_t k = std::min(options.k, n - 1);

    std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) dist[i][j] = dist[j][i] = geodesic_km(metas[i].centroid, metas[j].centroid);

    auto closer = [&](std::size_t v) {
        return [&, v](std::size_t a, std::size_t b) {
            if (dist[v][a] != dist[v][b]) return dist[v][a] < dist[v][b];
            return metas[a].name < metas[b].name;
        };
    };

    std::vector<std::vector<std::size_t>> sources(n);
    for (std::size_t v = 0; v < n; ++v) {
        std::vector<std::size_t> others;
        for (std::size_t u = 0; u < n; ++u)
            if (u != v) others.push_back(u);
        std::partial_sort(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(k), others.end(), closer(v));
        sources[v].assign(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(k));
    }

    if (options.symmetrize) {
        std::vector<std::vector<std::size_t>> extended = sources;
        for (std::size_t v = 0; v < n; ++v) {
            for (std::size_t u : sources[v]) {
                auto& back = extended[u];
                if (std::find(back.begin(), back.end(), v) == back.end()) back.push_back(v);
            }
        }
        for (std::size_t v = 0; v < n; ++v) std::sort(extended[v].begin(), extended[v].end(), closer(v));
        sources = std::move(extended);
    }

    std::vector<std::string> names;
    names.reserve(n);
    for (const NodeMeta& m : metas) names.push_back(m.name);
    std::vector<Edge> edges;
    for (std::size_t v = 0; v < n; ++v)
        for (std::size_t u : sources[v]) edges.push_back(Edge{u, v, {}});
    return Graph(std::move(names), std::move(edges), 0);
}

std::pair<std::string, std::string> SciTable::key(const std::string& a, const std::string& b) {
    return a < b ? std::pair{a, b} : std::pair{b, a};
}

void SciTable::insert(const std::string& a, const std::string& b, double score) {
    if (a == b) throw DataError("SCI pair with identical countries: " + a);
    if (!std::isfinite(score) || score <= 0.0) {
        throw DataError("SCI score for " + a + "/" + b + " must be positive and finite");
    }
    if (!scores_.emplace(key(a, b), score).second) throw DataError("duplicate SCI pair: " + a + "/" + b);
}

const double* SciTable::find(const std::string& a, const std::string& b) const {
    const auto it = scores_.find(key(a, b));
    return it == scores_.end() ? nullptr : &it->second;
}

Graph attach_edge_features(const Graph& graph, const SciTable& table) {
    const auto& names = graph.names();
    std::vector<double> raw;
    std::vector<std::string> missing;
    for (const Edge& e : graph.edges()) {
        const double* score = table.find(names[e.src], names[e.dst]);
        if (!score) {
            missing.push_back(names[e.src] + "/" + names[e.dst]);
            raw.push_back(0.0);
        } else {
            raw.push_back(*score);
        }
    }
    if (!missing.empty()) {
        std::string msg = "missing SCI pairs:";
        for (const auto& m : missing) msg += " " + m;
        throw DataError(msg);
    }
    const double max_score = raw.empty() ? 1.0 : *std::max_element(raw.begin(), raw.end());
    std::vector<std::vector<double>> features;
    features.reserve(raw.size());
    for (double s : raw) features.push_back({s / max_score});
    return graph.with_edge_features(std::move(features));
}

std::vector<NodeMeta> parse_node_metadata(std::istream& in) {
    const auto rows = csv::read(in);
    if (rows.empty() || rows[0] != csv::Row{"name", "population", "lat", "lon"}) {
        throw DataError("node metadata header must be name,population,lat,lon");
    }
    std::vector<NodeMeta> metas;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() != 4) throw DataError("node metadata row " + std::to_string(r + 1) + " needs 4 fields");
        NodeMeta m;
        m.name = row[0];
        m.population = csv::parse_int(row[1], "population of " + row[0]);
        m.centroid.lat = csv::parse_double(row[2], "lat of " + row[0]);
        m.centroid.lon = csv::parse_double(row[3], "lon of " + row[0]);
        metas.push_back(std::move(m));
    }
    validate_metas(metas);
    return metas;
}

std::vector<NodeMeta> read_node_metadata(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open node metadata " + path.string());
    return parse_node_metadata(in);
}

SciTable parse_sci_table(std::istream& in) {
    const auto rows = csv::read(in);
    if (rows.empty() || rows[0] != csv::Row{"country_a", "country_b", "sci"}) {
        throw DataError("SCI header must be country_a,country_b,sci");
    }
    SciTable table;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() != 3) throw DataError("SCI row " + std::to_string(r + 1) + " needs 3 fields");
        table.insert(row[0], row[1], csv::parse_double(row[2], "sci of " + row[0] + "/" + row[1]));
    }
    return table;
}

SciTable read_sci_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open SCI table " + path.string());
    return parse_sci_table(in);
}

nlohmann::json graph_to_json(const Graph& graph) {
    nlohmann::json edges = nlohmann::json::array();
    for (const Edge& e : graph.edges()) {
        edges.push_back({{"src", graph.names()[e.src]}, {"dst", graph.names()[e.dst]}, {"features", e.features}});
    }
    return {{"nodes", graph.names()}, {"edges", std::move(edges)}};
}

}  // namespace glstm
