#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphlstm/autodiff.hpp"
#include "graphlstm/dataset.hpp"
#include "graphlstm/graph.hpp"
#include "graphlstm/metrics.hpp"
#include "graphlstm/model.hpp"

namespace glstm {

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t max_epochs = 200;
    std::size_t patience = 10;
    double clip_norm = 5.0;
    std::uint64_t seed = 42;
    LossMode loss_mode = LossMode::verbatim;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Rescales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_gradients(std::vector<ad::Tensor>& grads, double max_norm);

/// Adaptive-moment optimizer (beta1 0.9, beta2 0.999, eps 1e-8) with bias correction.
class Adam {
public:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEpsilon = 1e-8;

    void step(ad::ParamStore& params, const std::vector<ad::Tensor>& grads, double learning_rate);

    std::size_t steps() const noexcept { return steps_; }
    const std::vector<ad::Tensor>& first_moment() const noexcept { return m_; }
    const std::vector<ad::Tensor>& second_moment() const noexcept { return v_; }

private:
    std::vector<ad::Tensor> m_;
    std::vector<ad::Tensor> v_;
    std::size_t steps_ = 0;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double elapsed_s = 0.0;  // wall clock; not stored in checkpoints
};

/// Everything needed to reproduce predictions and the stored validation loss.
struct Checkpoint {
    ModelConfig model_config;
    TrainConfig train_config;
    WindowPlacement placement = WindowPlacement::horizon;
    ad::ParamStore params;
    Normalizer normalizer;
    std::vector<std::string> nodes;
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    double best_val_loss = 0.0;

    Model model() const { return Model::from_params(model_config, params); }
};

/// Container layout: the 8 bytes "GCKPT01\n", a little-endian u64 manifest length, the JSON
/// manifest, then every tensor as little-endian IEEE-754 doubles in manifest order.
void save_checkpoint(std::ostream& out, const Checkpoint& ckpt);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Samples with windows sized for a model, plus the normalizer fitted on the training split.
struct PreparedData {
    TimeSeriesDataset dataset;
    std::vector<Sample> samples;
    Normalizer normalizer;
    WindowPlacement placement = WindowPlacement::horizon;
};

PreparedData prepare_data(TimeSeriesDataset dataset, const ModelConfig& config,
                          WindowPlacement placement = WindowPlacement::horizon);

/// Model (when given) and lag baseline on every sample of `split`, in case units.
EvalReport evaluate(const Model* model, const Normalizer& normalizer, const std::vector<Sample>& samples,
                    const std::vector<std::string>& nodes, const Graph& graph, Split split,
                    LossMode mode = LossMode::verbatim);

EvalReport evaluate(const Checkpoint& ckpt, const PreparedData& data, const Graph& graph, Split split);

struct TrainResult {
    Checkpoint best;
    std::vector<EpochRecord> history;
    double initial_val_loss = 0.0;  // untrained parameters
    std::size_t skipped_samples = 0;  // training targets summing to zero
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Per-sample updates in chronological order; keeps the parameters with the lowest
/// validation per-person MASE and stops after `patience` epochs without improvement.
TrainResult train(const Model& initial, const PreparedData& data, const Graph& graph, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// `epoch,train_loss,val_loss,elapsed_s`
void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history);

struct AblationArm {
    bool skip = true;
    std::size_t parameter_count = 0;
    std::size_t stack2_first_layer_count = 0;
    TrainResult result;
    EvalReport test;
};

struct AblationResult {
    AblationArm with_skip;
    AblationArm without_skip;
    std::uint64_t seed = 0;
};

/// Trains the skip and no-skip variants from the same seed and data.
AblationResult ablate_skip(const PreparedData& data, const Graph& graph, const ModelConfig& config,
                           const TrainConfig& train_config, const EpochCallback& on_epoch = {});

/// `variant,skip,seed,parameter_count,stack2_first_layer_params,best_epoch,best_val_mase,test_per_person_mase,test_per_country_mase`
void write_ablation_csv(std::ostream& out, const AblationResult& result);

}  // namespace glstm
