// graphlstm: build graphs, train, evaluate, predict and run the skip ablation from one JSON config.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "graphlstm/dataset.hpp"
#include "graphlstm/errors.hpp"
#include "graphlstm/graph.hpp"
#include "graphlstm/metrics.hpp"
#include "graphlstm/model.hpp"
#include "graphlstm/synthetic.hpp"
#include "graphlstm/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace glstm;

namespace {

// ---------------------------------------------------------------------------
// Run configuration

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string cases, nodes, sci;
    std::optional<std::size_t> epochs;
};

struct RunConfig {
    fs::path cases, nodes, sci, out = "out";
    std::vector<std::string> countries;  // empty: every row of the node file
    DatasetOptions data;
    WindowPlacement placement = WindowPlacement::horizon;
    KnnOptions graph;
    ModelConfig model;
    bool model_given = false;
    TrainConfig train;
    json effective;  // recorded in run.json
};

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

RunConfig load_config(const Overrides& o) {
    json doc = json::object();
    fs::path base = fs::current_path();
    if (!o.config.empty()) {
        std::ifstream in(o.config);
        if (!in) throw DataError("cannot open config " + o.config);
        try {
            doc = json::parse(in);
        } catch (const json::parse_error& e) {
            throw DataError("config " + o.config + " is not valid JSON: " + e.what());
        }
        base = fs::absolute(o.config).parent_path();
    }
    auto resolve = [&](const std::string& p) { return p.empty() ? fs::path() : fs::path(p).is_absolute() ? fs::path(p) : base / p; };
    auto flag_path = [](const std::string& p) { return fs::absolute(p); };

    RunConfig rc;
    try {
        const json paths = doc.value("paths", json::object());
        rc.cases = resolve(get_or<std::string>(paths, "cases", ""));
        rc.nodes = resolve(get_or<std::string>(paths, "nodes", ""));
        rc.sci = resolve(get_or<std::string>(paths, "sci", ""));
        rc.out = resolve(get_or<std::string>(paths, "out", "out"));

        const json data = doc.value("data", json::object());
        rc.countries = get_or<std::vector<std::string>>(data, "countries", {});
        if (data.contains("start")) rc.data.start = parse_iso_date(data.at("start").get<std::string>());
        if (data.contains("end")) rc.data.end = parse_iso_date(data.at("end").get<std::string>());
        if (data.contains("split")) {
            const auto s = data.at("split").get<std::vector<std::size_t>>();
            if (s.size() != 3) throw DataError("data.split must list train, validation and test lengths");
            rc.data.split = {s[0], s[1], s[2]};
        }
        rc.data.smoothing = get_or<std::size_t>(data, "smoothing", 7);
        rc.placement = parse_window_placement(get_or<std::string>(data, "window_placement", "horizon"));

        const json graph = doc.value("graph", json::object());
        rc.graph.k = get_or<std::size_t>(graph, "k", 3);
        rc.graph.symmetrize = get_or<bool>(graph, "symmetrize", false);

        rc.model_given = doc.contains("model");
        rc.model = doc.value("model", json::object()).get<ModelConfig>();
        rc.model.neighbors = rc.graph.k;
        rc.train = doc.value("train", json::object()).get<TrainConfig>();
    } catch (const json::exception& e) {
        throw DataError(std::string("invalid config: ") + e.what());
    }

    if (!o.cases.empty()) rc.cases = flag_path(o.cases);
    if (!o.nodes.empty()) rc.nodes = flag_path(o.nodes);
    if (!o.sci.empty()) rc.sci = flag_path(o.sci);
    if (!o.out.empty()) rc.out = flag_path(o.out);
    if (o.seed) rc.train.seed = *o.seed;
    if (o.epochs) rc.train.max_epochs = *o.epochs;
    rc.model.validate();
    rc.train.validate();

    rc.effective = {
        {"paths", {{"cases", rc.cases.string()}, {"nodes", rc.nodes.string()}, {"sci", rc.sci.string()}, {"out", rc.out.string()}}},
        {"data",
         {{"countries", rc.countries},
          {"start", rc.data.start ? json(format_date(*rc.data.start)) : json(nullptr)},
          {"end", rc.data.end ? json(format_date(*rc.data.end)) : json(nullptr)},
          {"split", {rc.data.split.train, rc.data.split.validation, rc.data.split.test}},
          {"smoothing", rc.data.smoothing},
          {"window_placement", to_string(rc.placement)}}},
        {"graph", {{"k", rc.graph.k}, {"symmetrize", rc.graph.symmetrize}}},
        {"model", rc.model},
        {"train", rc.train}};
    return rc;
}

void require_file(const fs::path& p, const char* what) {
    if (p.empty()) throw UsageError(std::string("no ") + what + " path given (config paths." + what + " or --" + what + ")");
    if (!fs::is_regular_file(p)) throw DataError(std::string(what) + " file not found: " + p.string());
}

fs::path prepare_out(const RunConfig& rc) {
    std::error_code ec;
    fs::create_directories(rc.out, ec);
    if (ec) throw DataError("cannot create output directory " + rc.out.string() + ": " + ec.message());
    return rc.out;
}

std::ofstream open_out(const fs::path& p, bool binary = false) {
    std::ofstream f(p, binary ? std::ios::binary : std::ios::out);
    if (!f) throw DataError("cannot write " + p.string());
    return f;
}

// ---------------------------------------------------------------------------
// Shared loading

std::vector<NodeMeta> load_metas(const RunConfig& rc) {
    require_file(rc.nodes, "nodes");
    std::vector<NodeMeta> all = read_node_metadata(rc.nodes);
    if (rc.countries.empty()) return all;
    std::vector<NodeMeta> picked;
    for (const std::string& c : rc.countries) {
        auto it = std::find_if(all.begin(), all.end(), [&](const NodeMeta& m) { return m.name == c; });
        if (it == all.end()) throw DataError("country '" + c + "' missing from node metadata " + rc.nodes.string());
        picked.push_back(*it);
    }
    return picked;
}

Graph load_graph(const RunConfig& rc, const std::vector<NodeMeta>& metas) {
    require_file(rc.sci, "sci");
    return attach_edge_features(build_knn_graph(metas, rc.graph), read_sci_table(rc.sci));
}

std::vector<std::string> names_of(const std::vector<NodeMeta>& metas) {
    std::vector<std::string> names;
    for (const NodeMeta& m : metas) names.push_back(m.name);
    return names;
}

TimeSeriesDataset load_dataset(const RunConfig& rc, const std::vector<std::string>& countries) {
    require_file(rc.cases, "cases");
    return build_dataset(read_cases(rc.cases, countries), rc.data);
}

struct Loaded {
    Graph graph;
    PreparedData data;
};

Loaded load_all(const RunConfig& rc, const ModelConfig& model, bool with_graph = true) {
    const auto metas = load_metas(rc);
    Loaded l;
    if (with_graph) l.graph = load_graph(rc, metas);
    l.data = prepare_data(load_dataset(rc, names_of(metas)), model, rc.placement);
    return l;
}

std::string timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return buf;
}

void write_manifest(const fs::path& out, const std::string& command, const RunConfig& rc, const json& extra) {
    json j = {{"command", command}, {"created_at", timestamp()}, {"config", rc.effective}};
    for (const auto& [k, v] : extra.items()) j[k] = v;
    open_out(out / "run.json") << j.dump(2) << '\n';
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

void print_table(const EvalReport& r) {
    std::cout << "split " << to_string(r.split) << ", " << r.dates.size() << " days, per-person mode "
              << to_string(r.mode) << '\n';
    std::cout << "forecaster  per-person  per-country\n";
    if (r.model) std::cout << "model       " << fmt(r.model->per_person) << "      " << fmt(r.model->per_country) << '\n';
    std::cout << "lag         " << fmt(r.lag.per_person) << "      " << fmt(r.lag.per_country) << '\n';
    if (const auto ratio = r.model_to_lag_ratio()) std::cout << "model/lag per-person ratio " << fmt(*ratio) << '\n';
}

void write_report(const fs::path& out, const EvalReport& r) {
    open_out(out / "report.json") << report_to_json(r).dump(2) << '\n';
    auto daily = open_out(out / "daily.csv");
    write_daily_csv(daily, r);
    auto missed = open_out(out / "missed.csv");
    write_missed_csv(missed, r);
    auto table = open_out(out / "table.csv");
    write_table_csv(table, r);
}

// ---------------------------------------------------------------------------
// Commands

int cmd_build_graph(const RunConfig& rc) {
    const auto metas = load_metas(rc);
    const Graph g = load_graph(rc, metas);
    const fs::path out = prepare_out(rc);
    open_out(out / "graph.json") << graph_to_json(g).dump(2) << '\n';

    std::vector<std::size_t> out_degree(g.node_count(), 0);
    for (const Edge& e : g.edges()) ++out_degree[e.src];
    std::map<std::size_t, std::size_t> in_hist, out_hist;
    for (std::size_t v = 0; v < g.node_count(); ++v) {
        ++in_hist[g.incoming(v).size()];
        ++out_hist[out_degree[v]];
    }
    std::cout << "nodes " << g.node_count() << "\nedges " << g.edge_count() << '\n';
    std::cout << "in-degree histogram:";
    for (const auto& [d, n] : in_hist) std::cout << ' ' << d << ':' << n;
    std::cout << "\nout-degree histogram:";
    for (const auto& [d, n] : out_hist) std::cout << ' ' << d << ':' << n;
    std::cout << "\nwrote " << (out / "graph.json").string() << '\n';
    return 0;
}

int cmd_train(const RunConfig& rc) {
    const Loaded l = load_all(rc, rc.model);
    const fs::path out = prepare_out(rc);
    const Model initial = Model::create(rc.model, rc.train.seed);
    std::cout << "nodes " << l.graph.node_count() << ", samples " << l.data.samples.size() << ", parameters "
              << initial.parameter_count() << '\n';
    const TrainResult r = train(initial, l.data, l.graph, rc.train, [](const EpochRecord& e) {
        std::cout << "epoch " << e.epoch << " train " << fmt(e.train_loss) << " val " << fmt(e.val_loss) << '\n';
    });
    save_checkpoint(out / "checkpoint.gckpt", r.best);
    auto hist = open_out(out / "history.csv");
    write_history_csv(hist, r.history);
    write_manifest(out, "train", rc,
                   {{"best_epoch", r.best.best_epoch},
                    {"best_val_per_person_mase", r.best.best_val_loss},
                    {"initial_val_per_person_mase", r.initial_val_loss},
                    {"skipped_training_samples", r.skipped_samples}});
    std::cout << "best epoch " << r.best.best_epoch << ", validation per-person MASE " << fmt(r.best.best_val_loss)
              << " (untrained " << fmt(r.initial_val_loss) << ")\n";
    return 0;
}

int cmd_evaluate(const RunConfig& rc, const std::string& checkpoint, const std::string& split_name, bool lag_only) {
    const Split split = parse_split(split_name);
    const fs::path out = prepare_out(rc);
    EvalReport report;
    if (lag_only) {
        const Loaded l = load_all(rc, rc.model, false);  // the lag baseline never reads the graph
        report = evaluate(nullptr, l.data.normalizer, l.data.samples, l.data.dataset.nodes(), l.graph, split,
                          rc.train.loss_mode);
        report.meta["lag_only"] = true;
    } else {
        const fs::path path = checkpoint.empty() ? rc.out / "checkpoint.gckpt" : fs::path(checkpoint);
        const Checkpoint ckpt = load_checkpoint(path);
        ModelConfig expected = rc.model;
        expected.neighbors = ckpt.model_config.neighbors;
        if (rc.model_given && !(expected == ckpt.model_config)) {
            throw DataError("model section of the config does not match checkpoint " + path.string());
        }
        const Loaded l = load_all(rc, ckpt.model_config);
        report = evaluate(ckpt, l.data, l.graph, split);
        report.meta["checkpoint"] = path.string();
    }
    write_report(out, report);
    write_manifest(out, "evaluate", rc, {{"split", to_string(split)}, {"lag_only", lag_only}});
    print_table(report);
    return 0;
}

int cmd_predict(const RunConfig& rc, const std::string& checkpoint) {
    const fs::path path = checkpoint.empty() ? rc.out / "checkpoint.gckpt" : fs::path(checkpoint);
    const Checkpoint ckpt = load_checkpoint(path);
    const auto metas = load_metas(rc);
    const Graph graph = load_graph(rc, metas);
    const TimeSeriesDataset ds = load_dataset(rc, names_of(metas));
    if (ckpt.nodes != ds.nodes()) throw DataError("checkpoint node list does not match the dataset");

    const ModelConfig& mc = ckpt.model_config;
    const std::size_t L = mc.window, N = ds.node_count(), K = ds.feature_count(), T = ds.day_count();
    if (T < L) throw DataError("dataset has fewer days than the input window");
    ad::Tensor window({L, N, K});
    for (std::size_t l = 0; l < L; ++l)
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t k = 0; k < K; ++k) window[(l * N + n) * K + k] = ds.at(k, n, T - L + l);

    const Model model = ckpt.model();
    const auto pred = predict_cases(model, window, graph, ckpt.normalizer);
    const auto lag = lag_baseline(window);
    const Date last = ds.dates().back();
    const Date target = last + std::chrono::days{target_gap(mc.horizon, ckpt.placement)};

    const fs::path out = prepare_out(rc);
    auto csv = open_out(out / "predictions.csv");
    csv << "node,last_input_date,target_date,predicted_cases,lag_cases\n";
    char buf[64];
    for (std::size_t n = 0; n < N; ++n) {
        csv << ds.nodes()[n] << ',' << format_date(last) << ',' << format_date(target);
        std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", pred[n], lag[n]);
        csv << buf;
    }
    write_manifest(out, "predict", rc, {{"checkpoint", path.string()}, {"target_date", format_date(target)}});
    std::cout << "forecast for " << format_date(target) << " written to " << (out / "predictions.csv").string() << '\n';
    return 0;
}

int cmd_ablate(const RunConfig& rc) {
    const Loaded l = load_all(rc, rc.model);
    const fs::path out = prepare_out(rc);
    const AblationResult a = ablate_skip(l.data, l.graph, rc.model, rc.train, [](const EpochRecord& e) {
        std::cout << "epoch " << e.epoch << " val " << fmt(e.val_loss) << '\n';
    });
    auto csv = open_out(out / "ablation.csv");
    write_ablation_csv(csv, a);
    write_manifest(out, "ablate", rc,
                   {{"skip_first_layer_delta", skip_first_layer_delta(rc.model)},
                    {"with_skip", report_to_json(a.with_skip.test)},
                    {"without_skip", report_to_json(a.without_skip.test)}});
    std::cout << "variant   params  test per-person  test per-country\n";
    for (const AblationArm* arm : {&a.with_skip, &a.without_skip}) {
        std::cout << (arm->skip ? "skip      " : "no-skip   ") << arm->parameter_count << "  "
                  << fmt(arm->test.model->per_person) << "           " << fmt(arm->test.model->per_country) << '\n';
    }
    return 0;
}

struct SynthOptions {
    std::size_t nodes = 5;
    std::size_t days = 60;
    std::size_t k = 3;
    std::uint64_t seed = 7;
};

int cmd_make_synthetic(const Overrides& o, const SynthOptions& so) {
    SyntheticSpec spec;
    spec.nodes = so.nodes;
    spec.days = so.days;
    spec.k = so.k;
    spec.seed = so.seed;
    const SyntheticData syn = make_synthetic_diffusion(spec);
    const fs::path out = o.out.empty() ? fs::path("synthetic") : fs::path(o.out);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw DataError("cannot create " + out.string());
    auto cases = open_out(out / "cases.csv");
    write_jhu_csv(cases, syn.cumulative);
    auto nodes = open_out(out / "nodes.csv");
    write_node_csv(nodes, syn.metas);
    auto sci = open_out(out / "sci.csv");
    write_sci_csv(sci, syn.metas, syn.sci);

    const std::size_t test = so.days * 15 / 100, val = so.days * 15 / 100;
    const json config = {{"paths", {{"cases", "cases.csv"}, {"nodes", "nodes.csv"}, {"sci", "sci.csv"}, {"out", "run"}}},
                         {"data", {{"split", {so.days - val - test, val, test}}}},
                         {"graph", {{"k", so.k}, {"symmetrize", false}}},
                         {"train", TrainConfig{}}};
    open_out(out / "config.json") << config.dump(2) << '\n';
    std::cout << "wrote synthetic fixture (" << so.nodes << " nodes, " << so.days << " days) to " << out.string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Graph-LSTM spatio-temporal case forecaster"};
    app.require_subcommand(1);
    app.fallthrough();
    Overrides o;
    app.add_option("--config", o.config, "JSON run configuration");
    app.add_option("--seed", o.seed, "override train.seed");
    app.add_option("--out", o.out, "override paths.out");
    app.add_option("--cases", o.cases, "override paths.cases");
    app.add_option("--nodes", o.nodes, "override paths.nodes");
    app.add_option("--sci", o.sci, "override paths.sci");
    app.add_option("--epochs", o.epochs, "override train.max_epochs");

    auto* build = app.add_subcommand("build-graph", "build the k-NN graph and write graph.json");
    auto* train_cmd = app.add_subcommand("train", "train and write checkpoint.gckpt and history.csv");

    auto* eval = app.add_subcommand("evaluate", "score a checkpoint and the lag baseline on a split");
    std::string checkpoint, split = "test";
    bool lag_only = false;
    eval->add_option("--checkpoint", checkpoint, "checkpoint path (default <out>/checkpoint.gckpt)");
    eval->add_option("--split", split, "train, validation or test")->capture_default_str();
    eval->add_flag("--lag-only", lag_only, "score only the lag baseline");

    auto* predict = app.add_subcommand("predict", "forecast from the last window of the dataset");
    predict->add_option("--checkpoint", checkpoint, "checkpoint path (default <out>/checkpoint.gckpt)");

    auto* ablate = app.add_subcommand("ablate", "train with and without the skip connection");

    auto* synth = app.add_subcommand("make-synthetic", "write a synthetic diffusion fixture and config");
    SynthOptions so;
    synth->add_option("--node-count", so.nodes, "number of nodes")->capture_default_str();
    synth->add_option("--days", so.days, "number of days")->capture_default_str();
    synth->add_option("--k", so.k, "neighbours per node")->capture_default_str();
    synth->add_option("--data-seed", so.seed, "generator seed")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (synth->parsed()) return cmd_make_synthetic(o, so);
        const RunConfig rc = load_config(o);
        if (build->parsed()) return cmd_build_graph(rc);
        if (train_cmd->parsed()) return cmd_train(rc);
        if (eval->parsed()) return cmd_evaluate(rc, checkpoint, split, lag_only);
        if (predict->parsed()) return cmd_predict(rc, checkpoint);
        if (ablate->parsed()) return cmd_ablate(rc);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const DimensionError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
