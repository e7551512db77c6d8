#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "treecnn/model.hpp"

namespace treecnn {

// Optimizer and loop hyperparameters. Dropout rates live here as well so a
// run is described by one bundle; the model copies them at construction.
struct TrainConfig {
    double model_lr = 0.01;
    double word_lr = 0.1;
    double l2 = 1e-4;
    std::size_t batch_size = 25;
    std::size_t epochs = 60;
    std::uint64_t seed = 42;
    double conv_input_dropout = 0.5;
    double conv_output_dropout = 0.2;
    double output_dropout = 0.5;

    void validate() const;  // ConfigError on out-of-range values
};

// Per-tensor squared-gradient accumulators, aligned with model.params();
// embedding channels keep a table-shaped accumulator each.
struct AdaGradState {
    double epsilon = 1e-8;
    std::vector<std::vector<double>> dense;
    std::vector<Matrix> embedding;

    static AdaGradState for_model(SentimentModel& model);
};

// G += g^2; theta -= lr * g / (sqrt(G) + eps). The embedding side runs per
// touched row with each channel's own learning rate.
void adagrad_step(SentimentModel& model, const ModelGrads& grads, AdaGradState& state,
                  double model_lr);

// grad += lambda * theta for weight matrices only; biases and embedding
// tables are exempt.
void apply_l2(SentimentModel& model, ModelGrads& grads, double lambda);

struct EpochLog {
    double train_loss = 0.0;  // mean per sample
    double dev_accuracy = 0.0;
};

struct TrainResult {
    std::vector<EpochLog> epochs;
    double best_dev = 0.0;
    std::size_t best_epoch = 0;  // 1-based; 0 when no epoch ran
    double test_accuracy = 0.0;  // of the best-dev parameters
    std::size_t updates = 0;     // optimizer steps taken: epochs * ceil(n / batch)
};

// Copy of every trainable tensor, embedding tables included.
struct ModelSnapshot {
    std::vector<std::vector<double>> dense;
    std::vector<Matrix> tables;
};

ModelSnapshot snapshot_model(SentimentModel& model);
void restore_model(SentimentModel& model, const ModelSnapshot& snapshot);

// Touches every token of every split so out-of-vocabulary rows exist before
// training starts and table shapes stay fixed from then on.
void close_vocabulary(SentimentModel& model, const std::vector<const DatasetSplit*>& splits);

// Fraction of trees whose root argmax matches the gold root label; ties
// resolve to the lowest class index. Unlabeled roots are excluded.
double evaluate(SentimentModel& model, const DatasetSplit& split);

// Seeded init, per-epoch shuffle, gradient sums over batches with one
// optimizer step per batch, dev selection, test at the best-dev epoch.
// The sequential model trains on every labeled phrase; the tree model on
// whole sentences. Leaves the model at the best-dev parameters.
TrainResult train(SentimentModel& model, const DatasetSplit& train_split,
                  const DatasetSplit& dev_split, const DatasetSplit& test_split,
                  const TrainConfig& config, std::ostream* log = nullptr);

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_tensor;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
};

// Central differences over every trainable scalar (dense tensors plus the
// trainable embedding rows the sample touches) against the analytic
// gradient. Train mode re-seeds the mask stream before every evaluation so
// all passes see identical dropout. fault_tensor, when nonempty, flips the
// sign of that tensor's analytic gradient — a self-test hook that must make
// the check fail.
GradCheckResult gradient_check(SentimentModel& model, const SentimentTree& tree,
                               double epsilon = 1e-5, RunMode mode = RunMode::Eval,
                               std::uint64_t mask_seed = 7, const std::string& fault_tensor = "");
GradCheckResult gradient_check_phrase(SentimentModel& model, const Phrase& phrase,
                                      double epsilon = 1e-5, RunMode mode = RunMode::Eval,
                                      std::uint64_t mask_seed = 7,
                                      const std::string& fault_tensor = "");

struct RunReport {
    std::vector<double> dev_accuracies;
    std::vector<double> test_accuracies;
    double mean = 0.0;  // of test accuracies
    double stddev = 0.0;  // population
    double max = 0.0;
};

// Aggregation alone, so the statistics are testable without training.
RunReport aggregate_runs(const std::vector<double>& dev, const std::vector<double>& test);

// Trains n_runs fresh models with seeds seed, seed+1, ... and aggregates.
RunReport run_protocol(const ModelConfig& model_config,
                       const std::vector<EmbeddingChannel>& channels,
                       const DatasetSplit& train_split, const DatasetSplit& dev_split,
                       const DatasetSplit& test_split, const TrainConfig& config,
                       std::size_t n_runs = 5, std::ostream* log = nullptr);

}  // namespace treecnn
