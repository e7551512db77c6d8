#pragma once

#include <string>
#include <vector>

#include "treecnn/convolution.hpp"
#include "treecnn/embedding.hpp"
#include "treecnn/seqlstm.hpp"
#include "treecnn/treebank.hpp"
#include "treecnn/treelstm.hpp"

namespace treecnn {

enum class ModelKind { CnnTreeLstm, CnnLstm };

struct FilterSpec {
    std::size_t count = 0;
    std::size_t window = 0;
};

struct ModelConfig {
    ModelKind kind = ModelKind::CnnTreeLstm;
    TaskSetting setting = TaskSetting::FineGrained;
    std::size_t memory_size = 150;  // 168 is the usual CNN-LSTM choice
    std::vector<FilterSpec> filters = {{100, 3}, {100, 5}};
    double conv_input_dropout = 0.5;
    double conv_output_dropout = 0.2;
    double output_dropout = 0.5;
};

// Named view over one dense trainable tensor.
struct ParamRef {
    std::string name;
    double* data = nullptr;
    std::size_t rows = 0;
    std::size_t cols = 0;
    bool regularize = false;  // weight matrices only; biases excluded from L2

    std::size_t size() const { return rows * cols; }
};

// Gradients for every dense tensor (aligned with SentimentModel::params())
// plus sparse per-channel embedding gradients.
struct ModelGrads {
    std::vector<std::vector<double>> dense;
    std::vector<SparseRowGrads> embedding;

    void add_scaled(const ModelGrads& other, double factor);
    void clear();
};

// A full classifier: multi-channel embedding, convolution bank, and either
// the tree-structured or the sequential composition on top.
class SentimentModel {
  public:
    SentimentModel(ModelConfig config, std::vector<EmbeddingChannel> channels);

    const ModelConfig& config() const { return config_; }
    ModelKind kind() const { return config_.kind; }
    std::size_t classes() const { return class_count(config_.setting); }

    MultiChannelEmbedder& embedder() { return embedder_; }
    const MultiChannelEmbedder& embedder() const { return embedder_; }
    ConvFilterBank& conv_bank() { return bank_; }
    const ConvFilterBank& conv_bank() const { return bank_; }
    TreeLstmParams& tree_params() { return tree_; }
    LstmParams& seq_params() { return seq_; }
    const TreeLstmParams& tree_params() const { return tree_; }
    const LstmParams& seq_params() const { return seq_; }

    // Seeded uniform fan-based init for matrices, forget biases at 1,
    // everything else at 0. Embedding tables are left as loaded.
    void init_params(SeededRng& rng);

    ModelGrads make_grads() const;

    // Forward and backward for one training sample; adds into grads.
    // Returns the sample loss.
    double tree_loss_grad(const SentimentTree& tree, RunMode mode, SeededRng& rng,
                          ModelGrads* grads);
    double phrase_loss_grad(const std::vector<std::string>& tokens, int label, RunMode mode,
                            SeededRng& rng, ModelGrads* grads);

    // Eval-mode class prediction for a sentence.
    std::size_t predict_root(const SentimentTree& tree);
    std::size_t predict_tokens(const std::vector<std::string>& tokens);
    Vector predict_probs_tree(const SentimentTree& tree);
    Vector predict_probs_tokens(const std::vector<std::string>& tokens);

    // Dense trainable tensors in a fixed enumeration order. Embedding
    // tables are excluded here; they train through the sparse path.
    std::vector<ParamRef> params();

  private:
    ModelConfig config_;
    MultiChannelEmbedder embedder_;
    ConvFilterBank bank_;
    TreeLstmParams tree_;
    LstmParams seq_;

    Matrix forward_features(const std::vector<std::string>& tokens, RunMode mode,
                            SeededRng& rng, ConvCache* conv_cache, EmbedCache* embed_cache);
    void scatter_embedding_grads(const EmbedCache& cache, const Matrix& d_x,
                                 ModelGrads& grads);
};

std::size_t trainable_parameter_count(SentimentModel& model);

const char* model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(const std::string& name);
const char* setting_name(TaskSetting setting);
TaskSetting setting_from_name(const std::string& name);

}  // namespace treecnn
