#include "graphlstm/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <random>

#include "graphlstm/csv.hpp"
#include "graphlstm/sage.hpp"

namespace glstm {

SyntheticData make_synthetic_diffusion(const SyntheticSpec& spec) {
    Rng rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    SyntheticData out;

    for (std::size_t v = 0; v < spec.nodes; ++v) {
        NodeMeta m;
        char name[16];
        std::snprintf(name, sizeof name, "Node%02zu", v);
        m.name = name;
        m.population = 1'000'000 + static_cast<std::int64_t>(uniform01(rng) * 50'000'000);
        m.centroid = {36.0 + 30.0 * uniform01(rng), -10.0 + 40.0 * uniform01(rng)};
        out.metas.push_back(std::move(m));
    }
    for (std::size_t a = 0; a < spec.nodes; ++a)
        for (std::size_t b = a + 1; b < spec.nodes; ++b) {
            const double km = geodesic_km(out.metas[a].centroid, out.metas[b].centroid);
            out.sci.insert(out.metas[a].name, out.metas[b].name, 1000.0 / (1.0 + km / 100.0));
        }

    const Graph graph = build_knn_graph(out.metas, {spec.k, false});
    std::vector<double> level(spec.nodes), phase(spec.nodes);
    for (std::size_t v = 0; v < spec.nodes; ++v) {
        level[v] = 50.0 + 100.0 * uniform01(rng);
        phase[v] = spec.phase_spread * (out.metas[v].centroid.lon + 10.0) / 40.0;
    }

    std::vector<double> x = level;
    out.daily.assign(spec.nodes, std::vector<double>(spec.days));
    for (std::size_t t = 0; t < spec.days; ++t) {
        std::vector<double> next(spec.nodes);
        for (std::size_t v = 0; v < spec.nodes; ++v) {
            const double drive =
                level[v] * (1.0 + spec.amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / spec.period + phase[v]));
            double neigh = 0.0;
            const auto sources = graph.neighbors(v);
            for (std::size_t u : sources) neigh += x[u];
            neigh /= static_cast<double>(sources.size());
            const double step = spec.relax * (drive - x[v]) + spec.diffusion * (neigh - x[v]) +
                                spec.noise * level[v] * gauss(rng);
            next[v] = std::max(0.0, x[v] + step);
        }
        x = std::move(next);
        for (std::size_t v = 0; v < spec.nodes; ++v) out.daily[v][t] = x[v];
    }

    const Date start = make_date(2020, 1, 1);
    for (std::size_t t = 0; t <= spec.days; ++t) out.cumulative.dates.push_back(start + std::chrono::days{static_cast<int>(t)});
    for (std::size_t v = 0; v < spec.nodes; ++v) {
        out.cumulative.countries.push_back(out.metas[v].name);
        std::vector<double> cum(spec.days + 1, 0.0);
        for (std::size_t t = 0; t < spec.days; ++t) cum[t + 1] = cum[t] + out.daily[v][t];
        out.cumulative.series.push_back(std::move(cum));
    }
    return out;
}

void write_node_csv(std::ostream& out, const std::vector<NodeMeta>& metas) {
    out << "name,population,lat,lon\n";
    char buf[64];
    for (const NodeMeta& m : metas) {
        std::snprintf(buf, sizeof buf, ",%lld,%.17g,%.17g\n", static_cast<long long>(m.population), m.centroid.lat,
                      m.centroid.lon);
        out << csv::escape(m.name) << buf;
    }
}

void write_sci_csv(std::ostream& out, const std::vector<NodeMeta>& metas, const SciTable& sci) {
    out << "country_a,country_b,sci\n";
    char buf[32];
    for (std::size_t a = 0; a < metas.size(); ++a)
        for (std::size_t b = a + 1; b < metas.size(); ++b) {
            const double* s = sci.find(metas[a].name, metas[b].name);
            if (!s) continue;
            std::snprintf(buf, sizeof buf, "%.17g", *s);
            out << csv::escape(metas[a].name) << ',' << csv::escape(metas[b].name) << ',' << buf << '\n';
        }
}

}  // namespace glstm
