#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <vector>

#include "treecnn/training.hpp"

using namespace treecnn;

namespace {

EmbeddingChannel grown_channel(std::size_t dim, std::uint64_t oov_seed,
                               const std::vector<std::string>& words) {
    EmbeddingChannel ch(dim, oov_seed);
    for (const auto& w : words) ch.lookup(w);
    return ch;
}

ModelConfig small_config(ModelKind kind) {
    ModelConfig cfg;
    cfg.kind = kind;
    cfg.memory_size = 3;
    cfg.filters = {{2, 3}, {1, 5}};
    return cfg;
}

SentimentModel zero_model(ModelKind kind) {
    std::vector<EmbeddingChannel> channels;
    channels.push_back(grown_channel(4, 11, {"a", "b", "c", "d"}));
    return SentimentModel(small_config(kind), std::move(channels));
}

DatasetSplit make_split(const std::string& name, const std::vector<const char*>& texts) {
    DatasetSplit split;
    split.name = name;
    for (const char* text : texts) split.trees.push_back(parse_sexpr(text));
    return split;
}

bool snapshots_equal(const ModelSnapshot& a, const ModelSnapshot& b) {
    if (a.dense.size() != b.dense.size() || a.tables.size() != b.tables.size()) return false;
    for (std::size_t t = 0; t < a.dense.size(); ++t)
        if (a.dense[t] != b.dense[t]) return false;
    for (std::size_t c = 0; c < a.tables.size(); ++c)
        if (a.tables[c].rows != b.tables[c].rows || a.tables[c].data != b.tables[c].data)
            return false;
    return true;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("config validation") {
    TrainConfig good;
    CHECK_NOTHROW(good.validate());

    TrainConfig bad = good;
    bad.model_lr = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = good;
    bad.word_lr = -0.1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = good;
    bad.l2 = -1e-6;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = good;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = good;
    bad.epochs = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = good;
    bad.conv_input_dropout = 1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = good;
    bad.output_dropout = -0.2;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("adagrad scalar step") {
    SentimentModel model = zero_model(ModelKind::CnnTreeLstm);
    std::vector<ParamRef> refs = model.params();
    REQUIRE(refs[6].name == "tree/leaf_Wo");

    ModelGrads grads = model.make_grads();
    grads.dense[6][0] = 3.0;
    AdaGradState state = AdaGradState::for_model(model);

    adagrad_step(model, grads, state, 0.1);
    // theta -= 0.1 * 3 / (sqrt(9) + 1e-8)
    CHECK(refs[6].data[0] == doctest::Approx(-0.09999999966666669).epsilon(1e-15));
    CHECK(state.dense[6][0] == 9.0);
    // Every other scalar is untouched.
    CHECK(refs[6].data[1] == 0.0);
    CHECK(refs[0].data[0] == 0.0);

    // A second identical step moves less: the accumulator has grown.
    const double after_one = refs[6].data[0];
    adagrad_step(model, grads, state, 0.1);
    const double second_move = after_one - refs[6].data[0];
    CHECK(second_move > 0.0);
    CHECK(second_move < 0.1);
    CHECK(second_move == doctest::Approx(0.3 / std::sqrt(18.0)).epsilon(1e-9));
    CHECK(state.dense[6][0] == 18.0);

    // Zero gradient is a no-op even with a zero accumulator.
    SentimentModel idle = zero_model(ModelKind::CnnTreeLstm);
    ModelGrads none = idle.make_grads();
    AdaGradState idle_state = AdaGradState::for_model(idle);
    adagrad_step(idle, none, idle_state, 0.1);
    for (const ParamRef& ref : idle.params())
        for (std::size_t i = 0; i < ref.size(); ++i) CHECK(ref.data[i] == 0.0);
}

TEST_CASE("adagrad embedding step uses the word rate") {
    SentimentModel model = zero_model(ModelKind::CnnTreeLstm);
    EmbeddingChannel& ch = model.embedder().channels[0];
    ch.learning_rate = 0.1;
    for (auto& v : ch.table.data) v = 0.0;

    ModelGrads grads = model.make_grads();
    Vector g(ch.dim);
    g[0] = 3.0;
    grads.embedding[0].accumulate(1, g);
    AdaGradState state = AdaGradState::for_model(model);
    adagrad_step(model, grads, state, 0.5);  // model rate must not leak into the table

    CHECK(ch.table.at(1, 0) == doctest::Approx(-0.09999999966666669).epsilon(1e-15));
    CHECK(state.embedding[0].at(1, 0) == 9.0);
    CHECK(ch.table.at(1, 1) == 0.0);
    CHECK(ch.table.at(0, 0) == 0.0);
}

TEST_CASE("non-finite gradients are rejected by name") {
    SentimentModel model = zero_model(ModelKind::CnnTreeLstm);
    ModelGrads grads = model.make_grads();
    grads.dense[0][0] = std::numeric_limits<double>::quiet_NaN();
    AdaGradState state = AdaGradState::for_model(model);
    CHECK_THROWS_WITH_AS(adagrad_step(model, grads, state, 0.1),
                         "non-finite gradient in tensor conv/0/W", NumericError);
}

TEST_CASE("l2 touches weight matrices only") {
    SentimentModel model = zero_model(ModelKind::CnnTreeLstm);
    std::vector<ParamRef> refs = model.params();
    refs[0].data[0] = 2.0;  // conv/0/W
    refs[1].data[0] = 5.0;  // conv/0/b
    ModelGrads grads = model.make_grads();

    apply_l2(model, grads, 0.0);
    CHECK(grads.dense[0][0] == 0.0);

    apply_l2(model, grads, 1e-4);
    CHECK(grads.dense[0][0] == doctest::Approx(2e-4).epsilon(1e-12));
    CHECK(grads.dense[1][0] == 0.0);
    CHECK(grads.embedding[0].rows.empty());
}

TEST_CASE("snapshot and restore round-trip") {
    SentimentModel model = zero_model(ModelKind::CnnTreeLstm);
    SeededRng rng(5);
    model.init_params(rng);
    ModelSnapshot before = snapshot_model(model);

    for (const ParamRef& ref : model.params())
        for (std::size_t i = 0; i < ref.size(); ++i) ref.data[i] += 1.0;
    for (auto& v : model.embedder().channels[0].table.data) v *= 2.0;
    CHECK_FALSE(snapshots_equal(before, snapshot_model(model)));

    restore_model(model, before);
    CHECK(snapshots_equal(before, snapshot_model(model)));

    // A snapshot from a differently shaped model cannot be restored.
    std::vector<EmbeddingChannel> channels;
    channels.push_back(grown_channel(4, 11, {"a"}));
    ModelConfig other = small_config(ModelKind::CnnTreeLstm);
    other.filters = {{1, 3}};
    SentimentModel small(other, std::move(channels));
    CHECK_THROWS_AS(restore_model(small, before), ShapeError);
}

TEST_CASE("closing the vocabulary freezes table shapes") {
    SentimentModel model = zero_model(ModelKind::CnnTreeLstm);
    CHECK(model.embedder().channels[0].vocab.size() == 4);
    DatasetSplit train = make_split("train", {"(2 (1 a) (3 new1))"});
    DatasetSplit dev = make_split("dev", {"(2 new2)"});
    close_vocabulary(model, {&train, &dev, nullptr});
    EmbeddingChannel& ch = model.embedder().channels[0];
    CHECK(ch.vocab.size() == 6);
    CHECK(ch.table.rows == 6);
    ch.lookup("new2");
    CHECK(ch.vocab.size() == 6);
}

TEST_CASE("evaluation counts labeled roots only and breaks ties low") {
    SentimentModel model = zero_model(ModelKind::CnnTreeLstm);  // always predicts class 0
    DatasetSplit split = make_split(
        "dev", {"(0 (1 a) (2 b))", "(0 c)", "(3 (2 a) (2 d))", "(_ (0 a) (1 b))"});
    CHECK(evaluate(model, split) == doctest::Approx(2.0 / 3.0));

    DatasetSplit unlabeled = make_split("dev", {"(_ (0 a) (1 b))"});
    CHECK(evaluate(model, unlabeled) == 0.0);
    DatasetSplit empty;
    CHECK(evaluate(model, empty) == 0.0);

    SentimentModel seq = zero_model(ModelKind::CnnLstm);
    CHECK(evaluate(seq, split) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("update count is epochs times ceil(n over batch)") {
    DatasetSplit train_split = make_split("train", {"(2 a)", "(1 b)", "(3 c)", "(0 d)",
                                                    "(4 a)", "(2 b)", "(1 c)"});
    DatasetSplit dev = make_split("dev", {"(2 a)"});
    SentimentModel model = zero_model(ModelKind::CnnTreeLstm);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 3;
    TrainResult result = train(model, train_split, dev, dev, cfg);
    CHECK(result.updates == 6);  // 2 * ceil(7 / 3)
    CHECK(result.epochs.size() == 2);

    SentimentModel wide = zero_model(ModelKind::CnnTreeLstm);
    cfg.epochs = 1;
    cfg.batch_size = 25;
    CHECK(train(wide, train_split, dev, dev, cfg).updates == 1);
}

TEST_CASE("sequential training enumerates labeled phrases") {
    // Two fully labeled 3-node trees contribute six phrases.
    DatasetSplit train_split = make_split("train", {"(2 (1 a) (3 b))", "(4 (0 c) (2 d))"});
    DatasetSplit dev = make_split("dev", {"(2 (1 a) (3 b))"});
    SentimentModel model = zero_model(ModelKind::CnnLstm);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 4;
    TrainResult result = train(model, train_split, dev, dev, cfg);
    CHECK(result.updates == 2);  // ceil(6 / 4)

    DatasetSplit bare = make_split("train", {"(_ (_ a) (_ b))"});
    SentimentModel next = zero_model(ModelKind::CnnLstm);
    CHECK_THROWS_AS(train(next, bare, dev, dev, cfg), DataError);
}

TEST_CASE("empty training split is an error") {
    DatasetSplit empty;
    empty.name = "train";
    DatasetSplit dev = make_split("dev", {"(2 a)"});
    SentimentModel model = zero_model(ModelKind::CnnTreeLstm);
    TrainConfig cfg;
    CHECK_THROWS_AS(train(model, empty, dev, dev, cfg), DataError);
}

TEST_CASE("train matches a hand-rolled epoch") {
    auto build = [] {
        std::vector<EmbeddingChannel> channels;
        channels.push_back(EmbeddingChannel(5, 77));
        ModelConfig cfg;
        cfg.kind = ModelKind::CnnTreeLstm;
        cfg.memory_size = 3;
        cfg.filters = {{2, 3}};
        return SentimentModel(cfg, std::move(channels));
    };
    DatasetSplit train_split =
        make_split("train", {"(2 (1 a) (3 b))", "(4 (0 c) (2 d))", "(1 (2 a) (0 c))"});
    DatasetSplit dev_split = make_split("dev", {"(2 (1 a) (3 b))"});

    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 2;
    cfg.l2 = 1e-4;
    cfg.seed = 42;

    SentimentModel trained = build();
    TrainResult result = train(trained, train_split, dev_split, dev_split, cfg);

    // Replay the documented loop: word-rate override, vocabulary closure,
    // seeded init, one shuffle, sum-per-batch gradients, L2 then one
    // optimizer step per batch.
    SentimentModel manual = build();
    for (EmbeddingChannel& ch : manual.embedder().channels) ch.learning_rate = cfg.word_lr;
    close_vocabulary(manual, {&train_split, &dev_split, &dev_split});
    SeededRng rng(cfg.seed);
    manual.init_params(rng);
    AdaGradState state = AdaGradState::for_model(manual);

    std::vector<std::size_t> order{0, 1, 2};
    rng.shuffle(order);
    ModelGrads batch = manual.make_grads();
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        batch.clear();
        const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
        for (std::size_t k = start; k < stop; ++k) {
            loss_sum += manual.tree_loss_grad(train_split.trees[order[k]], RunMode::Train, rng,
                                              &batch);
        }
        apply_l2(manual, batch, cfg.l2);
        adagrad_step(manual, batch, state, cfg.model_lr);
        ++steps;
    }

    CHECK(result.updates == steps);
    CHECK(result.epochs.size() == 1);
    CHECK(result.epochs[0].train_loss == doctest::Approx(loss_sum / 3.0).epsilon(1e-15));
    CHECK(snapshots_equal(snapshot_model(trained), snapshot_model(manual)));
    CHECK(trained.embedder().channels[0].learning_rate == cfg.word_lr);
}

TEST_CASE("training is seed-deterministic") {
    DatasetSplit train_split =
        make_split("train", {"(2 (1 a) (3 b))", "(4 (0 c) (2 d))", "(1 (2 a) (0 c))"});
    DatasetSplit dev_split = make_split("dev", {"(2 (1 a) (3 b))", "(0 c)"});
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 2;

    std::ostringstream log_a, log_b;
    SentimentModel a = zero_model(ModelKind::CnnTreeLstm);
    SentimentModel b = zero_model(ModelKind::CnnTreeLstm);
    TrainResult ra = train(a, train_split, dev_split, dev_split, cfg, &log_a);
    TrainResult rb = train(b, train_split, dev_split, dev_split, cfg, &log_b);

    CHECK(log_a.str() == log_b.str());
    CHECK(ra.best_epoch == rb.best_epoch);
    CHECK(ra.best_dev == rb.best_dev);
    CHECK(ra.test_accuracy == rb.test_accuracy);
    REQUIRE(ra.epochs.size() == rb.epochs.size());
    for (std::size_t e = 0; e < ra.epochs.size(); ++e) {
        CHECK(ra.epochs[e].train_loss == rb.epochs[e].train_loss);
        CHECK(ra.epochs[e].dev_accuracy == rb.epochs[e].dev_accuracy);
    }
    CHECK(snapshots_equal(snapshot_model(a), snapshot_model(b)));

    SentimentModel c = zero_model(ModelKind::CnnTreeLstm);
    TrainConfig other = cfg;
    other.seed = cfg.seed + 1;
    train(c, train_split, dev_split, dev_split, other);
    CHECK_FALSE(snapshots_equal(snapshot_model(a), snapshot_model(c)));
}

TEST_CASE("the model is left at the best-dev epoch") {
    DatasetSplit train_split =
        make_split("train", {"(2 (1 a) (3 b))", "(4 (0 c) (2 d))", "(1 (2 a) (0 c))"});
    DatasetSplit dev_split = make_split("dev", {"(2 (1 a) (3 b))", "(0 c)"});
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 2;

    SentimentModel model = zero_model(ModelKind::CnnTreeLstm);
    TrainResult result = train(model, train_split, dev_split, dev_split, cfg);
    REQUIRE(result.best_epoch >= 1);
    REQUIRE(result.best_epoch <= 4);
    CHECK(result.best_dev == result.epochs[result.best_epoch - 1].dev_accuracy);
    for (const EpochLog& entry : result.epochs) CHECK(entry.dev_accuracy <= result.best_dev);
    // The restored parameters reproduce the recorded dev accuracy.
    CHECK(evaluate(model, dev_split) == result.best_dev);
}

TEST_CASE("non-finite loss reports epoch and batch") {
    SentimentModel model = zero_model(ModelKind::CnnTreeLstm);
    // Identity activation lets a poisoned embedding row reach the loss.
    model.conv_bank().activation = Activation::Identity;
    EmbeddingChannel& ch = model.embedder().channels[0];
    const std::size_t row = *ch.vocab.find("a");
    ch.table.at(row, 0) = std::numeric_limits<double>::quiet_NaN();

    DatasetSplit train_split = make_split("train", {"(2 (1 a) (3 b))"});
    DatasetSplit dev_split = make_split("dev", {"(2 b)"});
    TrainConfig cfg;
    CHECK_THROWS_WITH_AS(train(model, train_split, dev_split, dev_split, cfg),
                         "non-finite loss at epoch 1, batch 1", NumericError);
}

// Small embeddings leave conv preactivations near the rectifier's kink and
// dead region, where finite differences are unreliable; a positive bias
// moves every filter onto the live side so the comparison is meaningful.
void lift_conv_biases(SentimentModel& model) {
    for (const ParamRef& ref : model.params()) {
        if (ref.name.rfind("conv/", 0) == 0 && ref.name.back() == 'b') *ref.data = 0.5;
    }
}

TEST_CASE("gradient check on the full model") {
    std::vector<EmbeddingChannel> channels;
    channels.push_back(grown_channel(4, 19, {"a", "b"}));
    ModelConfig cfg = small_config(ModelKind::CnnTreeLstm);
    SentimentModel model(cfg, std::move(channels));
    SeededRng rng(2024);
    model.init_params(rng);
    lift_conv_biases(model);

    SentimentTree tree = parse_sexpr("(3 (1 a) (0 b))");
    GradCheckResult clean = gradient_check(model, tree);
    CHECK(clean.checked > 0);
    CHECK(clean.max_rel_error < 1e-4);

    GradCheckResult fault = gradient_check(model, tree, 1e-5, RunMode::Eval, 7, "tree/Ws");
    CHECK(fault.max_rel_error > 1e-2);
    CHECK_THROWS_AS(gradient_check(model, tree, 1e-5, RunMode::Eval, 7, "no/such"),
                    ConfigError);

    // Train mode: the frozen mask stream keeps the probes consistent.
    GradCheckResult masked = gradient_check(model, tree, 1e-5, RunMode::Train, 7);
    CHECK(masked.max_rel_error < 1e-4);

    std::vector<EmbeddingChannel> ch2;
    ch2.push_back(grown_channel(4, 23, {"a", "b"}));
    SentimentModel seq(small_config(ModelKind::CnnLstm), std::move(ch2));
    SeededRng rng2(2025);
    seq.init_params(rng2);
    lift_conv_biases(seq);
    Phrase phrase{{"a", "b"}, 2};
    GradCheckResult pclean = gradient_check_phrase(seq, phrase);
    CHECK(pclean.checked > 0);
    CHECK(pclean.max_rel_error < 1e-4);
    GradCheckResult pfault = gradient_check_phrase(seq, phrase, 1e-5, RunMode::Eval, 7,
                                                   "seq/Ws");
    CHECK(pfault.max_rel_error > 1e-2);
}

TEST_CASE("run statistics") {
    RunReport report = aggregate_runs({0.1, 0.2, 0.3, 0.4, 0.5}, {1.0, 2.0, 3.0, 4.0, 5.0});
    CHECK(report.mean == doctest::Approx(3.0));
    CHECK(report.max == 5.0);
    CHECK(report.stddev == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));

    RunReport typical =
        aggregate_runs({0, 0, 0, 0, 0}, {88.9, 88.7, 88.9, 88.8, 88.8});
    CHECK(typical.mean == doctest::Approx(88.82).epsilon(1e-12));
    CHECK(typical.stddev == doctest::Approx(0.07483314773548065).epsilon(1e-9));
    CHECK(typical.max == 88.9);

    RunReport single = aggregate_runs({0.5}, {0.5});
    CHECK(single.stddev == 0.0);
    CHECK(single.mean == 0.5);

    CHECK_THROWS_AS(aggregate_runs({}, {}), ConfigError);
    CHECK_THROWS_AS(aggregate_runs({0.1}, {0.1, 0.2}), ConfigError);
}

TEST_CASE("a small model overfits a small treebank") {
    std::vector<EmbeddingChannel> channels;
    channels.push_back(grown_channel(6, 101, {}));
    ModelConfig mc;
    mc.kind = ModelKind::CnnTreeLstm;
    mc.memory_size = 8;
    mc.filters = {{6, 3}};
    mc.conv_input_dropout = 0.0;
    mc.conv_output_dropout = 0.0;
    mc.output_dropout = 0.0;
    SentimentModel model(mc, std::move(channels));

    DatasetSplit train_split = make_split(
        "train", {"(0 (0 awful) (0 mess))", "(1 (1 fairly) (1 dull))", "(2 (2 plain) (2 fine))",
                  "(3 (3 quite) (3 good))", "(4 (4 truly) (4 great))"});
    TrainConfig cfg;
    cfg.epochs = 60;
    cfg.batch_size = 2;
    cfg.model_lr = 0.05;
    cfg.l2 = 0.0;
    cfg.conv_input_dropout = 0.0;
    cfg.conv_output_dropout = 0.0;
    cfg.output_dropout = 0.0;
    TrainResult result = train(model, train_split, train_split, train_split, cfg);
    CHECK(result.best_dev == 1.0);
    CHECK(result.test_accuracy == 1.0);
}

TEST_CASE("the run protocol aggregates its own runs") {
    DatasetSplit train_split =
        make_split("train", {"(2 (1 a) (3 b))", "(4 (0 c) (2 d))", "(1 (2 a) (0 c))"});
    DatasetSplit dev_split = make_split("dev", {"(2 (1 a) (3 b))", "(0 c)"});
    ModelConfig mc = small_config(ModelKind::CnnTreeLstm);
    std::vector<EmbeddingChannel> channels;
    channels.push_back(grown_channel(4, 29, {"a", "b", "c", "d"}));
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 2;

    std::ostringstream log;
    RunReport report =
        run_protocol(mc, channels, train_split, dev_split, dev_split, cfg, 2, &log);
    REQUIRE(report.dev_accuracies.size() == 2);
    REQUIRE(report.test_accuracies.size() == 2);
    const double mean =
        (report.test_accuracies[0] + report.test_accuracies[1]) / 2.0;
    CHECK(report.mean == doctest::Approx(mean).epsilon(1e-15));
    CHECK(report.max == std::max(report.test_accuracies[0], report.test_accuracies[1]));
    CHECK(log.str().find("run 1/2") != std::string::npos);
    CHECK(log.str().find("run 2/2") != std::string::npos);

    CHECK_THROWS_AS(run_protocol(mc, channels, train_split, dev_split, dev_split, cfg, 0),
                    ConfigError);
}

}  // TEST_SUITE
