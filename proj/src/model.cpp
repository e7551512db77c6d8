#include "treecnn/model.hpp"

#include <cmath>
#include <sstream>

namespace treecnn {

namespace {

void append_ref(std::vector<ParamRef>& out, const std::string& name, Matrix& m,
                bool regularize) {
    out.push_back({name, m.data.data(), m.rows, m.cols, regularize});
}

void append_ref(std::vector<ParamRef>& out, const std::string& name, Vector& v,
                bool regularize) {
    out.push_back({name, v.data.data(), v.size(), 1, regularize});
}

void append_ref(std::vector<ParamRef>& out, const std::string& name, double& s,
                bool regularize) {
    out.push_back({name, &s, 1, 1, regularize});
}

// Gradient tensors enumerated in exactly the order of SentimentModel::params().
void append_grad(std::vector<std::vector<double>*>& out, Matrix& m) { out.push_back(&m.data); }
void append_grad(std::vector<std::vector<double>*>& out, Vector& v) { out.push_back(&v.data); }

}  // namespace

void ModelGrads::add_scaled(const ModelGrads& other, double factor) {
    if (dense.size() != other.dense.size() || embedding.size() != other.embedding.size()) {
        throw ShapeError("ModelGrads::add_scaled: mismatched gradient layout");
    }
    for (std::size_t t = 0; t < dense.size(); ++t) {
        if (dense[t].size() != other.dense[t].size()) {
            throw ShapeError("ModelGrads::add_scaled: mismatched tensor size");
        }
        for (std::size_t i = 0; i < dense[t].size(); ++i) {
            dense[t][i] += factor * other.dense[t][i];
        }
    }
    for (std::size_t c = 0; c < embedding.size(); ++c) {
        SparseRowGrads scaled = other.embedding[c];
        scaled.scale(factor);
        embedding[c].merge(scaled);
    }
}

void ModelGrads::clear() {
    for (auto& tensor : dense) std::fill(tensor.begin(), tensor.end(), 0.0);
    for (auto& channel : embedding) channel.rows.clear();
}

SentimentModel::SentimentModel(ModelConfig config, std::vector<EmbeddingChannel> channels)
    : config_(config) {
    if (channels.empty()) throw ConfigError("model needs at least one embedding channel");
    if (config_.filters.empty()) throw ConfigError("model needs at least one filter group");
    if (config_.memory_size == 0) throw ConfigError("memory size must be positive");
    embedder_.channels = std::move(channels);
    const std::size_t d = embedder_.total_dim();
    for (const FilterSpec& spec : config_.filters) {
        if (spec.count == 0) throw ConfigError("filter group count must be positive");
        for (std::size_t k = 0; k < spec.count; ++k) {
            bank_.filters.emplace_back(d, spec.window);
        }
    }
    bank_.input_dropout = config_.conv_input_dropout;
    bank_.output_dropout = config_.conv_output_dropout;
    const std::size_t m = bank_.size();
    tree_ = TreeLstmParams(m, config_.memory_size, classes());
    seq_ = LstmParams(m, config_.memory_size, classes());
}

std::vector<ParamRef> SentimentModel::params() {
    std::vector<ParamRef> out;
    for (std::size_t v = 0; v < bank_.filters.size(); ++v) {
        std::ostringstream base;
        base << "conv/" << v;
        append_ref(out, base.str() + "/W", bank_.filters[v].weights, true);
        append_ref(out, base.str() + "/b", bank_.filters[v].bias, false);
    }
    if (config_.kind == ModelKind::CnnTreeLstm) {
        append_ref(out, "tree/leaf_Wo", tree_.leaf_Wo, true);
        append_ref(out, "tree/leaf_Wc", tree_.leaf_Wc, true);
        append_ref(out, "tree/leaf_ao", tree_.leaf_ao, false);
        append_ref(out, "tree/leaf_ac", tree_.leaf_ac, false);
        append_ref(out, "tree/U_i_l", tree_.U_i_l, true);
        append_ref(out, "tree/U_i_r", tree_.U_i_r, true);
        append_ref(out, "tree/U_fl_l", tree_.U_fl_l, true);
        append_ref(out, "tree/U_fl_r", tree_.U_fl_r, true);
        append_ref(out, "tree/U_fr_l", tree_.U_fr_l, true);
        append_ref(out, "tree/U_fr_r", tree_.U_fr_r, true);
        append_ref(out, "tree/U_o_l", tree_.U_o_l, true);
        append_ref(out, "tree/U_o_r", tree_.U_o_r, true);
        append_ref(out, "tree/U_u_l", tree_.U_u_l, true);
        append_ref(out, "tree/U_u_r", tree_.U_u_r, true);
        append_ref(out, "tree/b_i", tree_.b_i, false);
        append_ref(out, "tree/b_f", tree_.b_f, false);
        append_ref(out, "tree/b_o", tree_.b_o, false);
        append_ref(out, "tree/b_u", tree_.b_u, false);
        append_ref(out, "tree/Ws", tree_.Ws, true);
        append_ref(out, "tree/bs", tree_.bs, false);
    } else {
        append_ref(out, "seq/W_w", seq_.W_w, true);
        append_ref(out, "seq/W_f", seq_.W_f, true);
        append_ref(out, "seq/W_o", seq_.W_o, true);
        append_ref(out, "seq/W_u", seq_.W_u, true);
        append_ref(out, "seq/U_w", seq_.U_w, true);
        append_ref(out, "seq/U_f", seq_.U_f, true);
        append_ref(out, "seq/U_o", seq_.U_o, true);
        append_ref(out, "seq/U_u", seq_.U_u, true);
        append_ref(out, "seq/b_w", seq_.b_w, false);
        append_ref(out, "seq/b_f", seq_.b_f, false);
        append_ref(out, "seq/b_o", seq_.b_o, false);
        append_ref(out, "seq/b_u", seq_.b_u, false);
        append_ref(out, "seq/Ws", seq_.Ws, true);
        append_ref(out, "seq/bs", seq_.bs, false);
    }
    return out;
}

void SentimentModel::init_params(SeededRng& rng) {
    for (ParamRef& ref : params()) {
        if (ref.regularize) {
            // Conv filters collapse to a scalar response, so their fan-out
            // is one; every other matrix uses the usual fan sum.
            const bool conv = ref.name.rfind("conv/", 0) == 0;
            const double fan =
                conv ? static_cast<double>(ref.rows * ref.cols + 1)
                     : static_cast<double>(ref.rows + ref.cols);
            const double bound = std::sqrt(6.0 / fan);
            for (std::size_t i = 0; i < ref.size(); ++i) {
                ref.data[i] = rng.uniform(-bound, bound);
            }
        } else {
            // Forget-gate biases start open so early memory flows through.
            const bool forget = ref.name == "tree/b_f" || ref.name == "seq/b_f";
            const double fill = forget ? 1.0 : 0.0;
            for (std::size_t i = 0; i < ref.size(); ++i) ref.data[i] = fill;
        }
    }
}

ModelGrads SentimentModel::make_grads() const {
    ModelGrads out;
    auto& self = const_cast<SentimentModel&>(*this);
    for (const ParamRef& ref : self.params()) {
        out.dense.emplace_back(ref.size(), 0.0);
    }
    out.embedding.resize(embedder_.channels.size());
    return out;
}

Matrix SentimentModel::forward_features(const std::vector<std::string>& tokens, RunMode mode,
                                        SeededRng& rng, ConvCache* conv_cache,
                                        EmbedCache* embed_cache) {
    Matrix x = embed_sentence(embedder_, tokens, embed_cache);
    return conv_forward(bank_, x, mode, rng, conv_cache);
}

void SentimentModel::scatter_embedding_grads(const EmbedCache& cache, const Matrix& d_x,
                                             ModelGrads& grads) {
    std::size_t offset = 0;
    for (std::size_t c = 0; c < embedder_.channels.size(); ++c) {
        const std::size_t dim = embedder_.channels[c].dim;
        for (std::size_t t = 0; t < cache.rows[c].size(); ++t) {
            Vector slice(dim);
            for (std::size_t k = 0; k < dim; ++k) slice[k] = d_x.at(offset + k, t);
            grads.embedding[c].accumulate(cache.rows[c][t], slice);
        }
        offset += dim;
    }
}

namespace {

// Dense gradient tensors in params() order for each composition head.
std::vector<std::vector<double>*> grad_slots(ConvGrads& cg, TreeLstmGrads* tg, LstmGrads* sg) {
    std::vector<std::vector<double>*> out;
    for (std::size_t v = 0; v < cg.d_weights.size(); ++v) {
        append_grad(out, cg.d_weights[v]);
        out.push_back(nullptr);  // scalar bias handled separately
    }
    if (tg != nullptr) {
        append_grad(out, tg->leaf_Wo);
        append_grad(out, tg->leaf_Wc);
        append_grad(out, tg->leaf_ao);
        append_grad(out, tg->leaf_ac);
        append_grad(out, tg->U_i_l);
        append_grad(out, tg->U_i_r);
        append_grad(out, tg->U_fl_l);
        append_grad(out, tg->U_fl_r);
        append_grad(out, tg->U_fr_l);
        append_grad(out, tg->U_fr_r);
        append_grad(out, tg->U_o_l);
        append_grad(out, tg->U_o_r);
        append_grad(out, tg->U_u_l);
        append_grad(out, tg->U_u_r);
        append_grad(out, tg->b_i);
        append_grad(out, tg->b_f);
        append_grad(out, tg->b_o);
        append_grad(out, tg->b_u);
        append_grad(out, tg->Ws);
        append_grad(out, tg->bs);
    } else {
        append_grad(out, sg->W_w);
        append_grad(out, sg->W_f);
        append_grad(out, sg->W_o);
        append_grad(out, sg->W_u);
        append_grad(out, sg->U_w);
        append_grad(out, sg->U_f);
        append_grad(out, sg->U_o);
        append_grad(out, sg->U_u);
        append_grad(out, sg->b_w);
        append_grad(out, sg->b_f);
        append_grad(out, sg->b_o);
        append_grad(out, sg->b_u);
        append_grad(out, sg->Ws);
        append_grad(out, sg->bs);
    }
    return out;
}

void add_dense_grads(ModelGrads& grads, ConvGrads& cg, TreeLstmGrads* tg, LstmGrads* sg) {
    std::vector<std::vector<double>*> slots = grad_slots(cg, tg, sg);
    if (slots.size() != grads.dense.size()) {
        throw ShapeError("gradient layout does not match parameter layout");
    }
    for (std::size_t t = 0; t < slots.size(); ++t) {
        if (slots[t] == nullptr) {
            // The conv bias slots alternate with the weight slots.
            grads.dense[t][0] += cg.d_bias[t / 2];
            continue;
        }
        if (slots[t]->size() != grads.dense[t].size()) {
            throw ShapeError("gradient tensor size does not match parameter tensor");
        }
        for (std::size_t i = 0; i < slots[t]->size(); ++i) {
            grads.dense[t][i] += (*slots[t])[i];
        }
    }
}

}  // namespace

double SentimentModel::tree_loss_grad(const SentimentTree& tree, RunMode mode, SeededRng& rng,
                                      ModelGrads* grads) {
    if (config_.kind != ModelKind::CnnTreeLstm) {
        throw ConfigError("tree samples require the tree-structured model");
    }
    EmbedCache embed_cache;
    ConvCache conv_cache;
    const std::vector<std::string> tokens = leaf_tokens(tree);
    Matrix p_mat = forward_features(tokens, mode, rng, &conv_cache, &embed_cache);
    TreeForwardResult fwd = tree_forward(tree_, tree, p_mat, mode, rng, config_.output_dropout);
    if (grads != nullptr) {
        TreeLstmGrads tg(tree_);
        Matrix d_p;
        tree_backward(tree_, fwd, p_mat, tg, d_p);
        ConvGrads cg(bank_);
        Matrix d_x = conv_backward(bank_, conv_cache, d_p, cg);
        add_dense_grads(*grads, cg, &tg, nullptr);
        scatter_embedding_grads(embed_cache, d_x, *grads);
    }
    return fwd.loss;
}

double SentimentModel::phrase_loss_grad(const std::vector<std::string>& tokens, int label,
                                        RunMode mode, SeededRng& rng, ModelGrads* grads) {
    if (config_.kind != ModelKind::CnnLstm) {
        throw ConfigError("phrase samples require the sequential model");
    }
    if (label < 0 || static_cast<std::size_t>(label) >= classes()) {
        std::ostringstream msg;
        msg << "phrase label " << label << " outside 0.." << classes() - 1;
        throw DataError(msg.str());
    }
    EmbedCache embed_cache;
    ConvCache conv_cache;
    SeqCache seq_cache;
    Matrix p_mat = forward_features(tokens, mode, rng, &conv_cache, &embed_cache);
    Vector probs = seq_forward(seq_, p_mat, mode, rng, config_.output_dropout, &seq_cache);
    const double loss = -std::log(probs[static_cast<std::size_t>(label)]);
    if (grads != nullptr) {
        LstmGrads sg(seq_);
        Matrix d_p;
        seq_backward(seq_, seq_cache, label, sg, d_p);
        ConvGrads cg(bank_);
        Matrix d_x = conv_backward(bank_, conv_cache, d_p, cg);
        add_dense_grads(*grads, cg, nullptr, &sg);
        scatter_embedding_grads(embed_cache, d_x, *grads);
    }
    return loss;
}

Vector SentimentModel::predict_probs_tree(const SentimentTree& tree) {
    SeededRng unused(0);
    EmbedCache embed_cache;
    const std::vector<std::string> tokens = leaf_tokens(tree);
    Matrix p_mat = forward_features(tokens, RunMode::Eval, unused, nullptr, &embed_cache);
    TreeForwardResult fwd =
        tree_forward(tree_, tree, p_mat, RunMode::Eval, unused, config_.output_dropout);
    return fwd.root->probs;
}

Vector SentimentModel::predict_probs_tokens(const std::vector<std::string>& tokens) {
    SeededRng unused(0);
    Matrix p_mat = forward_features(tokens, RunMode::Eval, unused, nullptr, nullptr);
    return seq_forward(seq_, p_mat, RunMode::Eval, unused, config_.output_dropout);
}

std::size_t SentimentModel::predict_root(const SentimentTree& tree) {
    return argmax(predict_probs_tree(tree));
}

std::size_t SentimentModel::predict_tokens(const std::vector<std::string>& tokens) {
    return argmax(predict_probs_tokens(tokens));
}

std::size_t trainable_parameter_count(SentimentModel& model) {
    std::size_t total = 0;
    for (const ParamRef& ref : model.params()) total += ref.size();
    return total;
}

const char* model_kind_name(ModelKind kind) {
    return kind == ModelKind::CnnTreeLstm ? "cnn-tree-lstm" : "cnn-lstm";
}

ModelKind model_kind_from_name(const std::string& name) {
    if (name == "cnn-tree-lstm") return ModelKind::CnnTreeLstm;
    if (name == "cnn-lstm") return ModelKind::CnnLstm;
    throw ConfigError("unknown model kind '" + name +
                      "' (expected cnn-tree-lstm or cnn-lstm)");
}

const char* setting_name(TaskSetting setting) {
    return setting == TaskSetting::FineGrained ? "fine" : "binary";
}

TaskSetting setting_from_name(const std::string& name) {
    if (name == "fine") return TaskSetting::FineGrained;
    if (name == "binary") return TaskSetting::Binary;
    throw ConfigError("unknown task setting '" + name + "' (expected fine or binary)");
}

}  // namespace treecnn
