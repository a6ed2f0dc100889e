#include "graphlstm/train.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "graphlstm/errors.hpp"

namespace glstm {

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw DataError("learning rate must be finite and >= 0");
    if (patience < 1) throw DataError("patience must be at least 1");
    if (max_epochs < 1) throw DataError("max_epochs must be at least 1");
    if (!(clip_norm > 0.0)) throw DataError("clip_norm must be positive");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"learning_rate", c.learning_rate}, {"max_epochs", c.max_epochs}, {"patience", c.patience},
         {"clip_norm", c.clip_norm},         {"seed", c.seed},             {"loss_mode", to_string(c.loss_mode)}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    TrainConfig d;
    c.learning_rate = j.value("learning_rate", d.learning_rate);
    c.max_epochs = j.value("max_epochs", d.max_epochs);
    c.patience = j.value("patience", d.patience);
    c.clip_norm = j.value("clip_norm", d.clip_norm);
    c.seed = j.value("seed", d.seed);
    c.loss_mode = parse_loss_mode(j.value("loss_mode", std::string(to_string(d.loss_mode))));
}

// ---------------------------------------------------------------------------
// Optimization

double clip_gradients(std::vector<ad::Tensor>& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& g : grads)
        for (double v : g.values()) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double factor = max_norm / norm;
        for (auto& g : grads)
            for (double& v : g.values()) v *= factor;
    }
    return norm;
}

void Adam::step(ad::ParamStore& params, const std::vector<ad::Tensor>& grads, double learning_rate) {
    if (grads.size() != params.size()) throw DimensionError("adam: gradient count does not match parameter count");
    if (m_.empty()) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_.push_back(ad::Tensor::zeros(params[i].shape()));
            v_.push_back(ad::Tensor::zeros(params[i].shape()));
        }
    }
    ++steps_;
    const double correction1 = 1.0 - std::pow(kBeta1, static_cast<double>(steps_));
    const double correction2 = 1.0 - std::pow(kBeta2, static_cast<double>(steps_));
    for (std::size_t p = 0; p < params.size(); ++p) {
        ad::Tensor& w = params[p];
        const ad::Tensor& g = grads[p];
        if (g.shape() != w.shape()) {
            throw DimensionError("adam: gradient " + ad::to_string(g.shape()) + " for parameter " + params.name(p) +
                                 " " + ad::to_string(w.shape()));
        }
        ad::Tensor& m = m_[p];
        ad::Tensor& v = v_[p];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
            v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            w[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + kEpsilon);
        }
    }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'G', 'C', 'K', 'P', 'T', '0', '1', '\n'};

void put_u64(std::ostream& out, std::uint64_t v) {
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(bytes, 8);
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw DataError("checkpoint truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return v;
}

}  // namespace

void save_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
    nlohmann::json tensors = nlohmann::json::array();
    std::size_t offset = 0;
    for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
        tensors.push_back({{"name", ckpt.params.name(i)}, {"shape", ckpt.params[i].shape()}, {"offset", offset}});
        offset += ckpt.params[i].size();
    }
    nlohmann::json history = nlohmann::json::array();
    for (const EpochRecord& r : ckpt.history) {
        history.push_back({{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_loss", r.val_loss}});
    }
    const nlohmann::json manifest = {
        {"format", "gckpt"},
        {"version", 1},
        {"model_config", ckpt.model_config},
        {"train_config", ckpt.train_config},
        {"window_placement", to_string(ckpt.placement)},
        {"nodes", ckpt.nodes},
        {"history", std::move(history)},
        {"best_epoch", ckpt.best_epoch},
        {"best_val_loss", ckpt.best_val_loss},
        {"tensors", std::move(tensors)},
        {"normalizer", {{"offset", offset}, {"count", ckpt.normalizer.scales().size()}}},
    };
    const std::string text = manifest.dump();
    out.write(kMagic, sizeof kMagic);
    put_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    auto put_doubles = [&](std::span<const double> values) {
        for (double v : values) put_u64(out, std::bit_cast<std::uint64_t>(v));
    };
    for (std::size_t i = 0; i < ckpt.params.size(); ++i) put_doubles(ckpt.params[i].values());
    put_doubles(ckpt.normalizer.scales());
    if (!out) throw DataError("failed writing checkpoint");
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot create checkpoint " + path.string());
    save_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(std::istream& in) {
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw DataError("not a .gckpt checkpoint");
    const std::uint64_t manifest_size = get_u64(in);
    std::string text(manifest_size, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(manifest_size))) throw DataError("checkpoint truncated");

    Checkpoint ckpt;
    try {
        const nlohmann::json m = nlohmann::json::parse(text);
        if (m.at("format") != "gckpt" || m.at("version") != 1) throw DataError("unsupported checkpoint version");
        ckpt.model_config = m.at("model_config").get<ModelConfig>();
        ckpt.train_config = m.at("train_config").get<TrainConfig>();
        ckpt.placement = parse_window_placement(m.at("window_placement").get<std::string>());
        ckpt.nodes = m.at("nodes").get<std::vector<std::string>>();
        for (const auto& r : m.at("history")) {
            ckpt.history.push_back({r.at("epoch").get<std::size_t>(), r.at("train_loss").get<double>(),
                                    r.at("val_loss").get<double>(), 0.0});
        }
        ckpt.best_epoch = m.at("best_epoch").get<std::size_t>();
        ckpt.best_val_loss = m.at("best_val_loss").get<double>();

        auto read_doubles = [&](std::size_t count) {
            std::vector<double> values(count);
            for (double& v : values) v = std::bit_cast<double>(get_u64(in));
            return values;
        };
        for (const auto& t : m.at("tensors")) {
            ad::Shape shape = t.at("shape").get<ad::Shape>();
            const std::size_t count = ad::element_count(shape);
            ckpt.params.add(t.at("name").get<std::string>(), ad::Tensor(std::move(shape), read_doubles(count)));
        }
        const std::size_t scale_count = m.at("normalizer").at("count").get<std::size_t>();
        if (scale_count) ckpt.normalizer = Normalizer(read_doubles(scale_count));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed checkpoint manifest: ") + e.what());
    }
    if (in.peek() != std::char_traits<char>::eof()) throw DataError("trailing bytes after checkpoint payload");
    return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    return load_checkpoint(in);
}

// ---------------------------------------------------------------------------
// Data preparation and evaluation

PreparedData prepare_data(TimeSeriesDataset dataset, const ModelConfig& config, WindowPlacement placement) {
    config.validate();
    if (dataset.feature_count() != config.input_features) {
        throw DataError("dataset has " + std::to_string(dataset.feature_count()) + " features, model expects " +
                        std::to_string(config.input_features));
    }
    PreparedData data;
    data.samples = make_windows(dataset, config.window, config.horizon, placement);
    data.normalizer = Normalizer::fit(dataset);
    data.placement = placement;
    data.dataset = std::move(dataset);
    return data;
}

EvalReport evaluate(const Model* model, const Normalizer& normalizer, const std::vector<Sample>& samples,
                    const std::vector<std::string>& nodes, const Graph& graph, Split split, LossMode mode) {
    const auto selected = samples_in(samples, split);
    if (selected.empty()) throw DataError(std::string("no samples in the ") + to_string(split) + " split");
    EvalReport report;
    report.split = split;
    report.mode = mode;
    report.nodes = nodes;
    std::vector<std::vector<double>> actual, lag, pred;
    for (const Sample* s : selected) {
        report.dates.push_back(s->target_date);
        actual.push_back(s->target);
        lag.push_back(lag_baseline(s->input));
        if (model) pred.push_back(predict_cases(*model, s->input, graph, normalizer));
    }
    report.lag = summarize(lag, actual, mode);
    if (model) report.model = summarize(pred, actual, mode);
    return report;
}

EvalReport evaluate(const Checkpoint& ckpt, const PreparedData& data, const Graph& graph, Split split) {
    if (ckpt.nodes != data.dataset.nodes()) throw DataError("checkpoint node list does not match the dataset");
    if (ckpt.placement != data.placement) throw DataError("checkpoint window placement does not match the data");
    const Model model = ckpt.model();
    EvalReport report = evaluate(&model, ckpt.normalizer, data.samples, data.dataset.nodes(), graph, split,
                                 ckpt.train_config.loss_mode);
    report.meta["best_epoch"] = ckpt.best_epoch;
    report.meta["train_config"] = ckpt.train_config;
    report.meta["model_config"] = ckpt.model_config;
    return report;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct TrainItem {
    std::size_t day;
    ad::Tensor input;
    std::vector<double> target;
};

double validation_loss(const Model& model, const PreparedData& data, const Graph& graph, LossMode mode) {
    return evaluate(&model, data.normalizer, data.samples, data.dataset.nodes(), graph, Split::validation, mode)
        .model->per_person;
}

}  // namespace

TrainResult train(const Model& initial, const PreparedData& data, const Graph& graph, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
    config.validate();
    if (graph.node_count() != data.dataset.node_count()) throw DataError("graph and dataset node counts differ");

    TrainResult result;
    std::vector<TrainItem> items;
    for (const Sample* s : samples_in(data.samples, Split::train)) {
        std::vector<double> target = data.normalizer.normalize(s->target);
        double total = 0.0;
        for (double v : target) total += v;
        if (!(total > 0.0)) {
            ++result.skipped_samples;
            continue;
        }
        items.push_back({s->target_day, data.normalizer.normalize_window(s->input), std::move(target)});
    }
    if (items.empty()) throw DataError("no usable training samples");

    Model model = initial;
    Adam optimizer;
    Rng dropout_rng(config.seed ^ 0x9E3779B97F4A7C15ULL);
    const PassContext ctx{true, &dropout_rng};

    result.initial_val_loss = validation_loss(model, data, graph, config.loss_mode);
    result.best.model_config = model.config();
    result.best.train_config = config;
    result.best.placement = data.placement;
    result.best.normalizer = data.normalizer;
    result.best.nodes = data.dataset.nodes();
    result.best.params = model.params();

    const auto started = std::chrono::steady_clock::now();
    std::optional<double> best;
    std::size_t stale = 0;
    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        double loss_sum = 0.0;
        for (const TrainItem& item : items) {
            ad::Tape tape;
            const std::vector<ad::Var> bound = model.params().bind(tape);
            ad::Var pred = model.forward(tape, bound, item.input, graph, ctx);
            ad::Var loss = per_person_loss(pred, item.target, config.loss_mode);
            const double value = loss.value().item();
            if (!std::isfinite(value)) {
                throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", target day " +
                                   std::to_string(item.day));
            }
            loss_sum += value;
            const ad::Gradients grads = tape.backward(loss);
            std::vector<ad::Tensor> g;
            g.reserve(bound.size());
            for (const ad::Var& v : bound) g.push_back(grads[v]);
            clip_gradients(g, config.clip_norm);
            optimizer.step(model.params(), g, config.learning_rate);
        }

        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = loss_sum / static_cast<double>(items.size());
        record.val_loss = validation_loss(model, data, graph, config.loss_mode);
        record.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        if (!std::isfinite(record.val_loss)) throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
        result.history.push_back(record);
        if (on_epoch) on_epoch(record);

        if (!best || record.val_loss < *best) {
            best = record.val_loss;
            stale = 0;
            result.best.params = model.params();
            result.best.best_epoch = epoch;
            result.best.best_val_loss = record.val_loss;
        } else if (++stale >= config.patience) {
            break;
        }
    }
    result.best.history = result.history;
    for (EpochRecord& r : result.best.history) r.elapsed_s = 0.0;
    return result;
}

void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history) {
    out << "epoch,train_loss,val_loss,elapsed_s\n";
    char buf[128];
    for (const EpochRecord& r : history) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.3f\n", r.epoch, r.train_loss, r.val_loss, r.elapsed_s);
        out << buf;
    }
}

// ---------------------------------------------------------------------------
// Ablation

AblationResult ablate_skip(const PreparedData& data, const Graph& graph, const ModelConfig& config,
                           const TrainConfig& train_config, const EpochCallback& on_epoch) {
    AblationResult out;
    out.seed = train_config.seed;
    auto run = [&](bool skip) {
        ModelConfig c = config;
        c.skip = skip;
        const Model model = Model::create(c, train_config.seed);
        AblationArm arm;
        arm.skip = skip;
        arm.parameter_count = model.parameter_count();
        arm.stack2_first_layer_count = model.stack2_first_layer_count();
        arm.result = train(model, data, graph, train_config, on_epoch);
        arm.test = evaluate(arm.result.best, data, graph, Split::test);
        return arm;
    };
    out.with_skip = run(true);
    out.without_skip = run(false);
    return out;
}

void write_ablation_csv(std::ostream& out, const AblationResult& result) {
    out << "variant,skip,seed,parameter_count,stack2_first_layer_params,best_epoch,best_val_mase,"
           "test_per_person_mase,test_per_country_mase\n";
    char buf[256];
    for (const AblationArm* arm : {&result.with_skip, &result.without_skip}) {
        std::snprintf(buf, sizeof buf, "%s,%d,%llu,%zu,%zu,%zu,%.17g,%.17g,%.17g\n", arm->skip ? "skip" : "no-skip",
                      arm->skip ? 1 : 0, static_cast<unsigned long long>(result.seed), arm->parameter_count,
                      arm->stack2_first_layer_count, arm->result.best.best_epoch, arm->result.best.best_val_loss,
                      arm->test.model->per_person, arm->test.model->per_country);
        out << buf;
    }
}

}  // namespace glstm
