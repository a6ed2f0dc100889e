#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "graphlstm/errors.hpp"
#include "graphlstm/train.hpp"
#include "synthetic_problem.hpp"
#include "test_helpers.hpp"

using namespace glstm;
using ad::Tensor;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.hidden = 4;
    c.lstm_hidden = 4;
    c.mlp_hidden = 4;
    c.stack_depth = 2;
    c.window = 5;
    c.horizon = 2;
    c.dropout = 0.1;
    return c;
}

TrainConfig tiny_train(std::size_t epochs = 3) {
    TrainConfig t;
    t.learning_rate = 5e-3;
    t.max_epochs = epochs;
    t.patience = 2;
    t.seed = 3;
    return t;
}

const fixtures::Problem& problem() {
    static const fixtures::Problem p = [] {
        SyntheticSpec spec;
        spec.nodes = 5;
        spec.days = 40;
        return fixtures::synthetic_problem(spec, {26, 7, 7}, tiny_config());
    }();
    return p;
}

std::string serialize(const Checkpoint& c) {
    std::ostringstream out;
    save_checkpoint(out, c);
    return out.str();
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
    ad::ParamStore s;
    s.add("w", Tensor::vector({1.5, -2.0}));
    const ad::ParamStore before = s;
    Adam adam;
    for (int i = 0; i < 3; ++i) adam.step(s, {Tensor::zeros({2})}, 0.1);
    EXPECT_EQ(s, before);
}

TEST(Adam, FirstStepMovesByLearningRateAgainstGradientSign) {
    ad::ParamStore s;
    s.add("w", Tensor::vector({0.0, 0.0, 0.0}));
    Adam adam;
    adam.step(s, {Tensor::vector({3.0, -0.01, 250.0})}, 0.01);
    EXPECT_NEAR(s[0][0], -0.01, 1e-9);
    EXPECT_NEAR(s[0][1], 0.01, 1e-7);
    EXPECT_NEAR(s[0][2], -0.01, 1e-9);
}

TEST(Adam, TwoStepOracle) {
    // Reference values computed independently with the textbook update, w0=1, lr=0.1.
    ad::ParamStore s;
    s.add("w", Tensor::scalar(1.0));
    Adam adam;
    adam.step(s, {Tensor::scalar(0.5)}, 0.1);
    EXPECT_NEAR(s[0].item(), 0.900000002, 1e-12);
    EXPECT_NEAR(adam.first_moment()[0].item(), 0.05, 1e-15);
    EXPECT_NEAR(adam.second_moment()[0].item(), 0.00025, 1e-15);
    adam.step(s, {Tensor::scalar(-0.2)}, 0.1);
    EXPECT_NEAR(s[0].item(), 0.8654394181165108, 1e-12);
    EXPECT_NEAR(adam.first_moment()[0].item(), 0.025, 1e-15);
    EXPECT_NEAR(adam.second_moment()[0].item(), 0.00028975, 1e-15);
    EXPECT_EQ(adam.steps(), 2u);
}

TEST(ClipGradients, GlobalNormBound) {
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Tensor> g = {fixtures::random_tensor({3, 2}, rng, -10, 10), fixtures::random_tensor({4}, rng, -10, 10)};
        const std::vector<Tensor> original = g;
        const double before = clip_gradients(g, 5.0);
        double sq = 0.0;
        for (const auto& t : g)
            for (double v : t.values()) sq += v * v;
        EXPECT_LE(std::sqrt(sq), 5.0 + 1e-12);
        if (before <= 5.0) {
            EXPECT_EQ(g, original);
        } else {
            EXPECT_NEAR(std::sqrt(sq), 5.0, 1e-12);
            EXPECT_NEAR(g[0][0] / original[0][0], 5.0 / before, 1e-12);  // direction kept
        }
    }
}

TEST(TrainConfig, ValidationAndJson) {
    TrainConfig t = tiny_train();
    const nlohmann::json j = t;
    EXPECT_EQ(j.get<TrainConfig>(), t);
    t.learning_rate = -1;
    EXPECT_THROW(t.validate(), DataError);
    t = tiny_train();
    t.patience = 0;
    EXPECT_THROW(t.validate(), DataError);
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
    const Model m = Model::create(tiny_config(), 4);
    TrainConfig t = tiny_train(2);
    t.learning_rate = 0.0;
    const TrainResult r = train(m, problem().data, problem().graph, t);
    EXPECT_EQ(r.best.params, m.params());
    EXPECT_EQ(r.history.size(), 2u);
    EXPECT_EQ(r.history[0].val_loss, r.initial_val_loss);
}

TEST(Train, SeededRunsAreByteIdentical) {
    const Model m = Model::create(tiny_config(), 5);
    const TrainResult a = train(m, problem().data, problem().graph, tiny_train());
    const TrainResult b = train(m, problem().data, problem().graph, tiny_train());
    EXPECT_EQ(serialize(a.best), serialize(b.best));
    ASSERT_EQ(a.history.size(), b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
        EXPECT_EQ(a.history[i].val_loss, b.history[i].val_loss);
    }
}

TEST(Train, BestCheckpointIsHistoryMinimum) {
    const Model m = Model::create(tiny_config(), 6);
    const TrainResult r = train(m, problem().data, problem().graph, tiny_train(6));
    ASSERT_FALSE(r.history.empty());
    auto best = std::min_element(r.history.begin(), r.history.end(),
                                 [](const EpochRecord& x, const EpochRecord& y) { return x.val_loss < y.val_loss; });
    EXPECT_EQ(r.best.best_epoch, best->epoch);
    EXPECT_EQ(r.best.best_val_loss, best->val_loss);
    for (const EpochRecord& e : r.best.history) EXPECT_EQ(e.elapsed_s, 0.0);
}

TEST(Train, EarlyStoppingRespectsPatience) {
    const Model m = Model::create(tiny_config(), 7);
    TrainConfig t = tiny_train(50);
    t.learning_rate = 0.0;  // validation never improves after epoch 1
    t.patience = 3;
    const TrainResult r = train(m, problem().data, problem().graph, t);
    EXPECT_EQ(r.history.size(), 4u);
    EXPECT_EQ(r.best.best_epoch, 1u);
}

TEST(Train, RejectsMismatchedGraph) {
    const Model m = Model::create(tiny_config(), 8);
    EXPECT_THROW(train(m, problem().data, fixtures::cycle_graph(3), tiny_train()), DataError);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
    const Model m = Model::create(tiny_config(), 9);
    const TrainResult r = train(m, problem().data, problem().graph, tiny_train(2));
    const std::string first = serialize(r.best);
    std::istringstream in(first);
    const Checkpoint loaded = load_checkpoint(in);
    EXPECT_EQ(serialize(loaded), first);
    EXPECT_EQ(loaded.params, r.best.params);
    EXPECT_EQ(loaded.normalizer, r.best.normalizer);
    EXPECT_EQ(loaded.model_config, r.best.model_config);
    EXPECT_EQ(loaded.train_config, r.best.train_config);
}

TEST(Checkpoint, EvaluateReproducesStoredValidationLoss) {
    const Model m = Model::create(tiny_config(), 10);
    const TrainResult r = train(m, problem().data, problem().graph, tiny_train(3));
    std::istringstream in(serialize(r.best));
    const Checkpoint loaded = load_checkpoint(in);
    const EvalReport rep = evaluate(loaded, problem().data, problem().graph, Split::validation);
    EXPECT_NEAR(rep.model->per_person, r.best.best_val_loss, 1e-9);
}

TEST(Checkpoint, RejectsCorruptInput) {
    const Model m = Model::create(tiny_config(), 11);
    const TrainResult r = train(m, problem().data, problem().graph, tiny_train(1));
    const std::string bytes = serialize(r.best);
    std::istringstream bad_magic("XCKPT01\n" + bytes.substr(8));
    EXPECT_THROW(load_checkpoint(bad_magic), DataError);
    std::istringstream truncated(bytes.substr(0, bytes.size() - 5));
    EXPECT_THROW(load_checkpoint(truncated), DataError);
    std::istringstream trailing(bytes + "x");
    EXPECT_THROW(load_checkpoint(trailing), DataError);
}

TEST(Evaluate, LagOnlyAndSplitChecks) {
    const auto& p = problem();
    const EvalReport lag = evaluate(nullptr, p.data.normalizer, p.data.samples, p.data.dataset.nodes(), p.graph, Split::test);
    EXPECT_FALSE(lag.model.has_value());
    EXPECT_EQ(lag.dates.size(), 7u);
    EXPECT_GE(lag.lag.per_person, 0.0);

    Checkpoint c = train(Model::create(tiny_config(), 12), p.data, p.graph, tiny_train(1)).best;
    c.nodes[0] = "elsewhere";
    EXPECT_THROW(evaluate(c, p.data, p.graph, Split::test), DataError);
}

TEST(History, CsvHeader) {
    std::ostringstream out;
    write_history_csv(out, {{1, 0.5, 0.25, 1.0}});
    EXPECT_EQ(out.str(), "epoch,train_loss,val_loss,elapsed_s\n1,0.5,0.25,1.000\n");
}

TEST(Ablation, BothArmsFromSameSeedWithAuditedDelta) {
    const auto& p = problem();
    const AblationResult a = ablate_skip(p.data, p.graph, tiny_config(), tiny_train(2));
    EXPECT_TRUE(a.with_skip.skip);
    EXPECT_FALSE(a.without_skip.skip);
    EXPECT_EQ(a.with_skip.stack2_first_layer_count - a.without_skip.stack2_first_layer_count,
              skip_first_layer_delta(tiny_config()));
    EXPECT_EQ(a.with_skip.parameter_count - a.without_skip.parameter_count,
              tiny_config().stack_depth * skip_first_layer_delta(tiny_config()));
    std::ostringstream out;
    write_ablation_csv(out, a);
    std::istringstream lines(out.str());
    std::string header, row1, row2;
    std::getline(lines, header);
    std::getline(lines, row1);
    std::getline(lines, row2);
    EXPECT_EQ(header.rfind("variant,skip,seed,", 0), 0u);
    EXPECT_EQ(row1.rfind("skip,1,3,", 0), 0u);
    EXPECT_EQ(row2.rfind("no-skip,0,3,", 0), 0u);
}
