#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "treecnn/model.hpp"

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

SentimentModel small_model(ModelKind kind, std::uint64_t seed) {
    std::vector<EmbeddingChannel> channels;
    channels.push_back(grown_channel(4, 11, {"a", "b", "c", "d"}));
    SentimentModel model(small_config(kind), std::move(channels));
    SeededRng rng(seed);
    model.init_params(rng);
    return model;
}

std::size_t conv_parameter_subtotal(SentimentModel& model) {
    std::size_t total = 0;
    for (const ParamRef& ref : model.params())
        if (ref.name.rfind("conv/", 0) == 0) total += ref.size();
    return total;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("params names, shapes, flags") {
    SentimentModel tree = small_model(ModelKind::CnnTreeLstm, 1);
    std::vector<ParamRef> refs = tree.params();
    REQUIRE(refs.size() == 26);  // 3 filters * (W, b) + 20 tree tensors
    const char* expected[] = {
        "conv/0/W", "conv/0/b", "conv/1/W", "conv/1/b", "conv/2/W", "conv/2/b",
        "tree/leaf_Wo", "tree/leaf_Wc", "tree/leaf_ao", "tree/leaf_ac",
        "tree/U_i_l", "tree/U_i_r", "tree/U_fl_l", "tree/U_fl_r",
        "tree/U_fr_l", "tree/U_fr_r", "tree/U_o_l", "tree/U_o_r",
        "tree/U_u_l", "tree/U_u_r", "tree/b_i", "tree/b_f", "tree/b_o", "tree/b_u",
        "tree/Ws", "tree/bs"};
    for (std::size_t i = 0; i < refs.size(); ++i) CHECK(refs[i].name == expected[i]);
    // Weight matrices carry L2; biases and leaf offsets do not.
    for (const ParamRef& ref : refs) {
        const bool bias_like = ref.name == "tree/bs" || ref.name == "tree/leaf_ao" ||
                               ref.name == "tree/leaf_ac";
        if (ref.name.rfind("conv/", 0) == 0) {
            CHECK(ref.regularize == (ref.name.back() == 'W'));
        } else if (bias_like || ref.name.find("/b_") != std::string::npos) {
            CHECK_FALSE(ref.regularize);
        } else {
            CHECK(ref.regularize);
        }
    }
    // conv/0/W is d x window = 4 x 3; the bias is a 1x1 view.
    CHECK(refs[0].rows == 4);
    CHECK(refs[0].cols == 3);
    CHECK(refs[1].size() == 1);
    CHECK(refs[4].cols == 5);

    SentimentModel seq = small_model(ModelKind::CnnLstm, 1);
    std::vector<ParamRef> seq_refs = seq.params();
    REQUIRE(seq_refs.size() == 6 + 14);
    CHECK(seq_refs[6].name == "seq/W_w");
    CHECK(seq_refs[19].name == "seq/bs");
    // LSTM input weights are r x m = 3 x 3 (three filters feed the unit).
    CHECK(seq_refs[6].rows == 3);
    CHECK(seq_refs[6].cols == 3);
}

TEST_CASE("convolution parameter count at full scale") {
    std::vector<EmbeddingChannel> channels;
    channels.push_back(grown_channel(300, 21, {"a", "b"}));
    ModelConfig cfg;
    cfg.kind = ModelKind::CnnTreeLstm;
    cfg.memory_size = 150;
    cfg.filters = {{100, 3}, {100, 5}};
    SentimentModel model(cfg, std::move(channels));
    // 100 * (300*3 + 1) + 100 * (300*5 + 1)
    CHECK(conv_parameter_subtotal(model) == 240200);
}

TEST_CASE("second channel adds exactly 240000 parameters") {
    auto build = [](ModelKind kind, std::size_t n_channels) {
        std::vector<EmbeddingChannel> channels;
        for (std::size_t c = 0; c < n_channels; ++c)
            channels.push_back(grown_channel(300, 31 + c, {"a", "b"}));
        ModelConfig cfg;
        cfg.kind = kind;
        cfg.memory_size = kind == ModelKind::CnnTreeLstm ? 150 : 168;
        cfg.filters = {{100, 3}, {100, 5}};
        SentimentModel model(cfg, std::move(channels));
        return trainable_parameter_count(model);
    };
    // Only the conv weights widen with the input: 100*300*3 + 100*300*5.
    CHECK(build(ModelKind::CnnTreeLstm, 2) - build(ModelKind::CnnTreeLstm, 1) == 240000);
    CHECK(build(ModelKind::CnnLstm, 2) - build(ModelKind::CnnLstm, 1) == 240000);
}

TEST_CASE("gradient layout matches parameter layout") {
    SentimentModel model = small_model(ModelKind::CnnTreeLstm, 3);
    std::vector<ParamRef> refs = model.params();
    ModelGrads grads = model.make_grads();
    REQUIRE(grads.dense.size() == refs.size());
    for (std::size_t t = 0; t < refs.size(); ++t) CHECK(grads.dense[t].size() == refs[t].size());
    CHECK(grads.embedding.size() == 1);
}

TEST_CASE("loss accumulation is additive") {
    SentimentModel model = small_model(ModelKind::CnnTreeLstm, 5);
    SentimentTree tree = parse_sexpr("(3 (1 a) (4 (2 b) (0 c)))");
    ModelGrads once = model.make_grads();
    ModelGrads twice = model.make_grads();
    SeededRng r1(0), r2(0), r3(0);
    const double loss = model.tree_loss_grad(tree, RunMode::Eval, r1, &once);
    const double again = model.tree_loss_grad(tree, RunMode::Eval, r2, &twice);
    model.tree_loss_grad(tree, RunMode::Eval, r3, &twice);
    CHECK(loss == again);
    for (std::size_t t = 0; t < once.dense.size(); ++t)
        for (std::size_t i = 0; i < once.dense[t].size(); ++i)
            CHECK(twice.dense[t][i] == doctest::Approx(2.0 * once.dense[t][i]).epsilon(1e-12));
    for (const auto& [row, grad] : once.embedding[0].rows) {
        const Vector& doubled = twice.embedding[0].rows.at(row);
        for (std::size_t k = 0; k < grad.size(); ++k)
            CHECK(doubled[k] == doctest::Approx(2.0 * grad[k]).epsilon(1e-12));
    }
}

TEST_CASE("zero model: uniform head, ties break low, loss is labeled * ln z") {
    std::vector<EmbeddingChannel> channels;
    channels.push_back(grown_channel(4, 41, {"a", "b", "c"}));
    SentimentModel model(small_config(ModelKind::CnnTreeLstm), std::move(channels));
    // No init_params: every dense tensor stays zero.
    SentimentTree tree = parse_sexpr("(3 (1 a) (4 (2 b) (0 c)))");
    Vector probs = model.predict_probs_tree(tree);
    for (std::size_t k = 0; k < 5; ++k) CHECK(probs[k] == doctest::Approx(0.2));
    CHECK(model.predict_root(tree) == 0);

    SeededRng rng(0);
    const double loss = model.tree_loss_grad(tree, RunMode::Eval, rng, nullptr);
    CHECK(loss == doctest::Approx(5.0 * std::log(5.0)).epsilon(1e-9));

    std::vector<EmbeddingChannel> ch2;
    ch2.push_back(grown_channel(4, 43, {"a", "b"}));
    SentimentModel seq(small_config(ModelKind::CnnLstm), std::move(ch2));
    CHECK(seq.predict_tokens({"a", "b"}) == 0);
    SeededRng rng2(0);
    CHECK(seq.phrase_loss_grad({"a", "b"}, 2, RunMode::Eval, rng2, nullptr) ==
          doctest::Approx(std::log(5.0)).epsilon(1e-9));
}

TEST_CASE("sample kind must match model kind") {
    SentimentModel tree_model = small_model(ModelKind::CnnTreeLstm, 7);
    SentimentModel seq_model = small_model(ModelKind::CnnLstm, 7);
    SentimentTree tree = parse_sexpr("(3 (1 a) (0 b))");
    SeededRng rng(0);
    CHECK_THROWS_AS(tree_model.phrase_loss_grad({"a"}, 0, RunMode::Eval, rng, nullptr),
                    ConfigError);
    CHECK_THROWS_AS(seq_model.tree_loss_grad(tree, RunMode::Eval, rng, nullptr), ConfigError);
    CHECK_THROWS_AS(seq_model.phrase_loss_grad({"a"}, 9, RunMode::Eval, rng, nullptr),
                    DataError);
    CHECK_THROWS_AS(seq_model.phrase_loss_grad({"a"}, -1, RunMode::Eval, rng, nullptr),
                    DataError);
}

TEST_CASE("init is seed-deterministic and opens forget gates") {
    SentimentModel a = small_model(ModelKind::CnnTreeLstm, 99);
    SentimentModel b = small_model(ModelKind::CnnTreeLstm, 99);
    SentimentModel c = small_model(ModelKind::CnnTreeLstm, 100);
    std::vector<ParamRef> ra = a.params(), rb = b.params(), rc = c.params();
    bool any_differs = false;
    for (std::size_t t = 0; t < ra.size(); ++t) {
        for (std::size_t i = 0; i < ra[t].size(); ++i) {
            CHECK(ra[t].data[i] == rb[t].data[i]);
            if (ra[t].data[i] != rc[t].data[i]) any_differs = true;
        }
        if (ra[t].name == "tree/b_f") {
            for (std::size_t i = 0; i < ra[t].size(); ++i) CHECK(ra[t].data[i] == 1.0);
        }
        if (ra[t].name == "tree/bs") {
            for (std::size_t i = 0; i < ra[t].size(); ++i) CHECK(ra[t].data[i] == 0.0);
        }
    }
    CHECK(any_differs);

    SentimentModel s = small_model(ModelKind::CnnLstm, 1);
    for (const ParamRef& ref : s.params()) {
        if (ref.name == "seq/b_f")
            for (std::size_t i = 0; i < ref.size(); ++i) CHECK(ref.data[i] == 1.0);
    }
}

TEST_CASE("construction rejects bad configs") {
    auto channels = [] {
        std::vector<EmbeddingChannel> out;
        out.push_back(grown_channel(4, 51, {"a"}));
        return out;
    };
    CHECK_THROWS_AS(SentimentModel(small_config(ModelKind::CnnTreeLstm), {}), ConfigError);

    ModelConfig no_mem = small_config(ModelKind::CnnTreeLstm);
    no_mem.memory_size = 0;
    CHECK_THROWS_AS(SentimentModel(no_mem, channels()), ConfigError);

    ModelConfig no_filters = small_config(ModelKind::CnnTreeLstm);
    no_filters.filters.clear();
    CHECK_THROWS_AS(SentimentModel(no_filters, channels()), ConfigError);

    ModelConfig zero_count = small_config(ModelKind::CnnTreeLstm);
    zero_count.filters = {{0, 3}};
    CHECK_THROWS_AS(SentimentModel(zero_count, channels()), ConfigError);

    ModelConfig even_window = small_config(ModelKind::CnnTreeLstm);
    even_window.filters = {{2, 4}};
    CHECK_THROWS_AS(SentimentModel(even_window, channels()), ConfigError);
}

TEST_CASE("kind and setting names round-trip") {
    CHECK(model_kind_from_name(model_kind_name(ModelKind::CnnTreeLstm)) ==
          ModelKind::CnnTreeLstm);
    CHECK(model_kind_from_name(model_kind_name(ModelKind::CnnLstm)) == ModelKind::CnnLstm);
    CHECK(setting_from_name(setting_name(TaskSetting::FineGrained)) == TaskSetting::FineGrained);
    CHECK(setting_from_name(setting_name(TaskSetting::Binary)) == TaskSetting::Binary);
    CHECK_THROWS_AS(model_kind_from_name("transformer"), ConfigError);
    CHECK_THROWS_AS(setting_from_name("ternary"), ConfigError);
    CHECK(class_count(TaskSetting::FineGrained) == 5);
    CHECK(class_count(TaskSetting::Binary) == 2);
}

TEST_CASE("binary setting uses two classes end to end") {
    std::vector<EmbeddingChannel> channels;
    channels.push_back(grown_channel(4, 61, {"a", "b"}));
    ModelConfig cfg = small_config(ModelKind::CnnTreeLstm);
    cfg.setting = TaskSetting::Binary;
    SentimentModel model(cfg, std::move(channels));
    CHECK(model.classes() == 2);
    SentimentTree tree = parse_sexpr("(1 (0 a) (1 b))");
    Vector probs = model.predict_probs_tree(tree);
    REQUIRE(probs.size() == 2);
    SeededRng rng(0);
    const double loss = model.tree_loss_grad(tree, RunMode::Eval, rng, nullptr);
    CHECK(loss == doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-9));
}

}  // TEST_SUITE
