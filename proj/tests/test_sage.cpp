#include <gtest/gtest.h>

#include <cmath>

#include "graphlstm/errors.hpp"
#include "graphlstm/sage.hpp"
#include "test_helpers.hpp"

using namespace glstm;
using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Oracle: dense D^-1 (E o A) H with plain loops.
std::vector<double> dense_aggregate(const Graph& g, const std::vector<double>& w, const Tensor& h) {
    const std::size_t n = g.node_count(), d = h.cols();
    std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
    std::vector<double> deg(n, 0.0);
    for (const Edge& e : g.edges()) deg[e.dst] += 1.0;
    for (std::size_t e = 0; e < g.edge_count(); ++e) {
        const Edge& edge = g.edges()[e];
        m[edge.dst][edge.src] += w[e] / deg[edge.dst];
    }
    std::vector<double> out(n * d, 0.0);
    for (std::size_t v = 0; v < n; ++v)
        for (std::size_t u = 0; u < n; ++u)
            for (std::size_t c = 0; c < d; ++c) out[v * d + c] += m[v][u] * h(u, c);
    return out;
}

}  // namespace

TEST(EdgeScalar, Examples) {
    const std::vector<double> f = {0.3, 0.9};
    EXPECT_EQ(edge_scalar(f, std::vector<double>{0.0, 0.0}, 0.0), 0.5);
    EXPECT_EQ(edge_scalar(std::vector<double>{0.0}, std::vector<double>{1.0}, 0.0), 0.5);
    EXPECT_NEAR(edge_scalar(std::vector<double>{1.0}, std::vector<double>{2.0}, -1.0), 0.7310585786300049, 1e-15);
    EXPECT_THROW(edge_scalar(f, std::vector<double>{1.0}, 0.0), DimensionError);
}

TEST(EdgeScalar, TapeScorerMatchesPlainEvaluation) {
    Rng rng(3);
    const Graph g = fixtures::random_graph(6, rng, 3, 2);
    ad::ParamStore store;
    const EdgeScorer scorer = EdgeScorer::create(store, "s", 2, rng);
    store[scorer.bias][0] = 0.3;
    Tape tape;
    const auto p = store.bind(tape);
    const Var w = scorer.score_edges(tape, p, g);
    ASSERT_EQ(w.shape(), (ad::Shape{g.edge_count(), 1}));
    for (std::size_t e = 0; e < g.edge_count(); ++e) {
        EXPECT_DOUBLE_EQ(w.value()[e], edge_scalar(g.edges()[e].features, store[scorer.weight].values(), 0.3));
    }
}

TEST(Aggregate, SingleNeighborUnitWeightCopiesRow) {
    const Graph g(std::vector<std::string>{"a", "b"}, {{0, 1, {1.0}}}, 1);
    Tape tape;
    Var h = tape.constant(Tensor::matrix({{3, -1, 2}, {9, 9, 9}}));
    Var out = aggregate_neighbors(h, g, tape.constant(Tensor::vector({1.0})));
    EXPECT_EQ(out.value(), Tensor::matrix({{0, 0, 0}, {3, -1, 2}}));  // node a has no in-edges
}

TEST(Aggregate, WeightedMeanOfTwoNeighbors) {
    const Graph g(std::vector<std::string>{"a", "b", "c"}, {{0, 2, {1.0}}, {1, 2, {1.0}}}, 1);
    Tape tape;
    Var h = tape.constant(Tensor::matrix({{2, 0}, {0, 4}, {0, 0}}));
    Var out = aggregate_neighbors(h, g, tape.constant(Tensor::vector({0.5, 1.0})));
    EXPECT_EQ(out.value()(2, 0), 0.5);
    EXPECT_EQ(out.value()(2, 1), 2.0);
}

TEST(Aggregate, MatchesDenseOracleOnRandomGraphs) {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + trial % 10;
        const Graph g = fixtures::random_graph(n, rng, 4);
        const Tensor h = fixtures::random_tensor({n, 1 + static_cast<std::size_t>(trial % 4)}, rng, -5, 5);
        std::vector<double> w(g.edge_count());
        for (double& x : w) x = uniform01(rng);
        Tape tape;
        const Var out = aggregate_neighbors(tape.constant(h), g, tape.constant(Tensor::vector(w)));
        const auto expected = dense_aggregate(g, w, h);
        for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(out.value()[i], expected[i], 1e-12);
    }
}

TEST(Aggregate, RowCountMismatchThrows) {
    const Graph g(std::vector<std::string>{"a", "b"}, {{0, 1, {1.0}}}, 1);
    Tape tape;
    EXPECT_THROW(aggregate_neighbors(tape.constant(Tensor::zeros({3, 2})), g, tape.constant(Tensor::vector({1.0}))),
                 DimensionError);
}

TEST(SageLayer, ZeroParametersGiveOneHalf) {
    Rng rng(1);
    const Graph g = fixtures::random_graph(5, rng);
    ad::ParamStore store;
    const SageLayer layer = SageLayer::create(store, "l", 3, 4, rng);
    store[layer.weight].fill(0.0);
    Tape tape;
    const auto p = store.bind(tape);
    const Var out = layer.forward(p, tape.constant(fixtures::random_tensor({5, 3}, rng)), g,
                                  tape.constant(Tensor::full({g.edge_count()}, 0.7)));
    EXPECT_EQ(out.value(), Tensor::full({5, 4}, 0.5));
}

TEST(SageLayer, OutputsInOpenUnitInterval) {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const Graph g = fixtures::random_graph(6, rng);
        ad::ParamStore store;
        const SageLayer layer = SageLayer::create(store, "l", 2, 3, rng);
        Tape tape;
        const auto p = store.bind(tape);
        const Var out = layer.forward(p, tape.constant(fixtures::random_tensor({6, 2}, rng, -3, 3)), g,
                                      tape.constant(fixtures::random_tensor({g.edge_count()}, rng, 0, 1)));
        for (double v : out.value().values()) {
            EXPECT_GT(v, 0.0);
            EXPECT_LT(v, 1.0);
        }
    }
}

TEST(SageLayer, TwoNodePathHandEvaluation) {
    const Graph g(std::vector<std::string>{"a", "b"}, {{0, 1, {1.0}}}, 1);
    ad::ParamStore store;
    Rng rng(0);
    const SageLayer layer = SageLayer::create(store, "l", 1, 1, rng);
    store[layer.weight] = Tensor::matrix({{0.3}, {-0.7}});
    store[layer.bias] = Tensor::vector({0.1});
    Tape tape;
    const auto p = store.bind(tape);
    const Var out = layer.forward(p, tape.constant(Tensor::matrix({{1}, {2}})), g, tape.constant(Tensor::vector({0.5})));
    EXPECT_NEAR(out.value()[0], logistic(0.3 * 1 + 0.1), 1e-15);                // no neighbors
    EXPECT_NEAR(out.value()[1], logistic(0.3 * 2 - 0.7 * 0.5 * 1 + 0.1), 1e-15);  // neighbor a, e = 0.5
}

TEST(SageLayer, WidthMismatchThrows) {
    Rng rng(0);
    const Graph g = fixtures::random_graph(3, rng);
    ad::ParamStore store;
    const SageLayer layer = SageLayer::create(store, "l", 2, 2, rng);
    Tape tape;
    const auto p = store.bind(tape);
    EXPECT_THROW(layer.forward(p, tape.constant(Tensor::zeros({3, 3})), g,
                               tape.constant(Tensor::zeros({g.edge_count()}))),
                 DimensionError);
}

TEST(SageLayer, PermutationEquivariantExactly) {
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 3 + trial % 6;
        const Graph g = fixtures::random_graph(n, rng, 3, 1);
        ad::ParamStore store;
        const EdgeScorer scorer = EdgeScorer::create(store, "s", 1, rng);
        const SageLayer layer = SageLayer::create(store, "l", 2, 3, rng);
        const Tensor h = fixtures::random_tensor({n, 2}, rng);
        const auto perm = fixtures::random_permutation(n, rng);
        const Graph pg = fixtures::permute_graph(g, perm);

        auto run = [&](const Graph& graph, const Tensor& input) {
            Tape tape;
            const auto p = store.bind(tape);
            return layer.forward(p, tape.constant(input), graph, scorer.score_edges(tape, p, graph)).value();
        };
        EXPECT_EQ(run(pg, fixtures::permute_nodes(h, perm, 0)), fixtures::permute_nodes(run(g, h), perm, 0));
    }
}

TEST(NodeDropout, IdentityCases) {
    Rng rng(4);
    Tape tape;
    Var h = tape.constant(fixtures::random_tensor({5, 3}, rng));
    EXPECT_EQ(node_dropout(h, 0.0, &rng, true).id(), h.id());
    EXPECT_EQ(node_dropout(h, 0.7, &rng, false).id(), h.id());
    EXPECT_EQ(node_dropout(h, 0.7, nullptr, false).value(), h.value());
    EXPECT_THROW(node_dropout(h, 1.0, &rng, true), std::invalid_argument);
    EXPECT_THROW(node_dropout(h, -0.1, &rng, true), std::invalid_argument);
}

TEST(NodeDropout, MonteCarloSurvivalAndExpectation) {
    Rng rng(99);
    const std::size_t trials = 10'000;
    const Tensor input = Tensor::matrix({{1.0, -2.0}, {3.0, 0.5}});
    std::size_t survivors = 0, rows = 0;
    std::vector<double> mean(input.size(), 0.0);
    for (std::size_t t = 0; t < trials; ++t) {
        Tape tape;
        const Tensor out = node_dropout(tape.constant(input), 0.5, &rng, true).value();
        for (std::size_t r = 0; r < 2; ++r) {
            ++rows;
            const bool alive = out(r, 0) != 0.0;
            survivors += alive;
            // whole rows are dropped together
            EXPECT_EQ(alive, out(r, 1) != 0.0);
        }
        for (std::size_t i = 0; i < out.size(); ++i) mean[i] += out[i] / static_cast<double>(trials);
    }
    EXPECT_NEAR(static_cast<double>(survivors) / static_cast<double>(rows), 0.5, 0.02);
    for (std::size_t i = 0; i < input.size(); ++i) EXPECT_NEAR(mean[i], input[i], 0.05 * std::fabs(input[i]) + 0.05);
}

TEST(SageStack, SingleLayerReadsStackInput) {
    Rng rng(5);
    const Graph g = fixtures::random_graph(4, rng, 2, 1);
    ad::ParamStore store;
    const EdgeScorer scorer = EdgeScorer::create(store, "s", 1, rng);
    const SageStack stack = SageStack::create(store, "st", 2, 3, 1, 0.0, rng);
    ASSERT_EQ(stack.layers.size(), 1u);
    const Tensor h0 = fixtures::random_tensor({4, 2}, rng);
    Tape tape;
    const auto p = store.bind(tape);
    Var w = scorer.score_edges(tape, p, g);
    Var x = tape.constant(h0);
    const Tensor via_stack = stack.forward(p, x, g, w, {}).value();
    EXPECT_EQ(via_stack, stack.layers[0].forward(p, x, g, w).value());
}

TEST(SageStack, LaterLayersConcatenateStackInput) {
    Rng rng(6);
    ad::ParamStore store;
    const SageStack stack = SageStack::create(store, "st", 2, 5, 3, 0.2, rng);
    EXPECT_EQ(stack.layers[0].in_width, 2u);
    EXPECT_EQ(stack.layers[1].in_width, 7u);
    EXPECT_EQ(stack.layers[2].in_width, 7u);
    EXPECT_EQ(store[stack.layers[1].weight].shape(), (ad::Shape{14, 5}));
    EXPECT_EQ(stack.out_width(), 5u);
}

TEST(SageStack, ZeroParametersGiveOneHalf) {
    Rng rng(7);
    const Graph g = fixtures::random_graph(5, rng);
    ad::ParamStore store;
    const EdgeScorer scorer = EdgeScorer::create(store, "s", 1, rng);
    const SageStack stack = SageStack::create(store, "st", 3, 4, 3, 0.0, rng);
    for (std::size_t i = 0; i < store.size(); ++i) store[i].fill(0.0);
    Tape tape;
    const auto p = store.bind(tape);
    const Var out = stack.forward(p, tape.constant(fixtures::random_tensor({5, 3}, rng, -9, 9)), g,
                                  scorer.score_edges(tape, p, g), {});
    EXPECT_EQ(out.value(), Tensor::full({5, 4}, 0.5));
}

TEST(SageStack, WidthMismatchThrows) {
    Rng rng(8);
    const Graph g = fixtures::random_graph(3, rng);
    ad::ParamStore store;
    const EdgeScorer scorer = EdgeScorer::create(store, "s", 1, rng);
    const SageStack stack = SageStack::create(store, "st", 2, 4, 2, 0.0, rng);
    Tape tape;
    const auto p = store.bind(tape);
    EXPECT_THROW(stack.forward(p, tape.constant(Tensor::zeros({3, 5})), g, scorer.score_edges(tape, p, g), {}),
                 DimensionError);
}

TEST(GradientFidelity, EdgeScorerSageLayerAndStack) {
    Rng rng(31);
    const Graph g = fixtures::random_graph(5, rng, 3, 1, false);
    const Tensor h0 = fixtures::random_tensor({5, 3}, rng);

    ad::ParamStore store;
    const EdgeScorer scorer = EdgeScorer::create(store, "s", 1, rng);
    const SageLayer layer = SageLayer::create(store, "l", 3, 4, rng);
    const SageStack stack = SageStack::create(store, "st", 3, 4, 3, 0.0, rng);
    fixtures::randomize(store, rng);

    auto layer_loss = [&](Tape& t, std::span<const Var> p) {
        return ad::sum(layer.forward(p, t.constant(h0), g, scorer.score_edges(t, p, g)));
    };
    auto stack_loss = [&](Tape& t, std::span<const Var> p) {
        return ad::sum(ad::mul(stack.forward(p, t.constant(h0), g, scorer.score_edges(t, p, g), {}),
                               stack.forward(p, t.constant(h0), g, scorer.score_edges(t, p, g), {})));
    };
    auto scorer_loss = [&](Tape& t, std::span<const Var> p) {
        return ad::sum(ad::mul(scorer.score_edges(t, p, g), scorer.score_edges(t, p, g)));
    };
    EXPECT_LT(ad::grad_check_params(scorer_loss, store), 1e-4);
    EXPECT_LT(ad::grad_check_params(layer_loss, store), 1e-4);
    EXPECT_LT(ad::grad_check_params(stack_loss, store), 1e-4);

    // Gradient w.r.t. the layer input as well.
    auto input_loss = [&](Tape& t, Var x) {
        const auto p = store.bind(t);
        return ad::sum(stack.forward(p, x, g, scorer.score_edges(t, p, g), {}));
    };
    EXPECT_LT(ad::grad_check(input_loss, h0), 1e-4);
}

TEST(MlpHead, ZeroParametersGiveZero) {
    Rng rng(9);
    ad::ParamStore store;
    const MlpHead head = MlpHead::create(store, "h", 3, 4, rng);
    for (std::size_t i = 0; i < store.size(); ++i) store[i].fill(0.0);
    Tape tape;
    const auto p = store.bind(tape);
    EXPECT_EQ(head.forward(p, tape.constant(fixtures::random_tensor({3, 3}, rng))).value(), Tensor::zeros({3, 1}));
}

TEST(MlpHead, IdentityOnPositiveInputs) {
    Rng rng(9);
    ad::ParamStore store;
    const MlpHead head = MlpHead::create(store, "h", 1, 1, rng);
    store[head.w1] = Tensor::matrix({{1}});
    store[head.w2] = Tensor::matrix({{1}});
    Tape tape;
    const auto p = store.bind(tape);
    const Tensor x = Tensor::matrix({{0.25}, {3.0}});
    EXPECT_EQ(head.forward(p, tape.constant(x)).value(), x);
}

TEST(MlpHead, MatchesHandMatrixEvaluation) {
    Rng rng(10);
    ad::ParamStore store;
    const MlpHead head = MlpHead::create(store, "h", 2, 3, rng);
    fixtures::randomize(store, rng);
    const Tensor x = fixtures::random_tensor({3, 2}, rng);
    Tape tape;
    const auto p = store.bind(tape);
    const Tensor out = head.forward(p, tape.constant(x)).value();
    const Tensor &w1 = store[head.w1], &b1 = store[head.b1], &w2 = store[head.w2], &b2 = store[head.b2];
    for (std::size_t r = 0; r < 3; ++r) {
        double y = b2[0];
        for (std::size_t j = 0; j < 3; ++j) {
            double a = b1[j];
            for (std::size_t i = 0; i < 2; ++i) a += x(r, i) * w1(i, j);
            y += std::max(0.0, a) * w2(j, 0);
        }
        EXPECT_NEAR(out[r], y, 1e-14);
    }
    EXPECT_THROW(head.forward(p, tape.constant(Tensor::zeros({3, 3}))), DimensionError);
}
