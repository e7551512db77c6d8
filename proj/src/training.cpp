#include "treecnn/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace treecnn {

namespace {

void check_rate(double value, const char* name) {
    if (!(value >= 0.0 && value < 1.0)) {
        std::ostringstream msg;
        msg << name << " must lie in [0, 1), got " << value;
        throw ConfigError(msg.str());
    }
}

}  // namespace

void TrainConfig::validate() const {
    if (!(model_lr > 0.0)) throw ConfigError("model learning rate must be positive");
    if (!(word_lr > 0.0)) throw ConfigError("word learning rate must be positive");
    if (!(l2 >= 0.0)) throw ConfigError("l2 strength must be nonnegative");
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
    if (epochs < 1) throw ConfigError("epoch count must be at least 1");
    check_rate(conv_input_dropout, "conv input dropout");
    check_rate(conv_output_dropout, "conv output dropout");
    check_rate(output_dropout, "output dropout");
}

AdaGradState AdaGradState::for_model(SentimentModel& model) {
    AdaGradState state;
    for (const ParamRef& ref : model.params()) {
        state.dense.emplace_back(ref.size(), 0.0);
    }
    for (const EmbeddingChannel& ch : model.embedder().channels) {
        state.embedding.emplace_back(ch.table.rows, ch.dim);
    }
    return state;
}

void adagrad_step(SentimentModel& model, const ModelGrads& grads, AdaGradState& state,
                  double model_lr) {
    std::vector<ParamRef> refs = model.params();
    if (refs.size() != grads.dense.size() || refs.size() != state.dense.size()) {
        throw ShapeError("adagrad_step: gradient/state layout mismatch");
    }
    for (std::size_t t = 0; t < refs.size(); ++t) {
        double* theta = refs[t].data;
        const std::vector<double>& g = grads.dense[t];
        std::vector<double>& acc = state.dense[t];
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!std::isfinite(g[i])) {
                throw NumericError("non-finite gradient in tensor " + refs[t].name);
            }
            acc[i] += g[i] * g[i];
            theta[i] -= model_lr * g[i] / (std::sqrt(acc[i]) + state.epsilon);
        }
    }
    for (std::size_t c = 0; c < model.embedder().channels.size(); ++c) {
        apply_embedding_gradient(model.embedder().channels[c], grads.embedding[c],
                                 state.embedding[c], state.epsilon);
    }
}

void apply_l2(SentimentModel& model, ModelGrads& grads, double lambda) {
    if (lambda == 0.0) return;
    std::vector<ParamRef> refs = model.params();
    for (std::size_t t = 0; t < refs.size(); ++t) {
        if (!refs[t].regularize) continue;
        for (std::size_t i = 0; i < refs[t].size(); ++i) {
            grads.dense[t][i] += lambda * refs[t].data[i];
        }
    }
}

ModelSnapshot snapshot_model(SentimentModel& model) {
    ModelSnapshot snap;
    for (const ParamRef& ref : model.params()) {
        snap.dense.emplace_back(ref.data, ref.data + ref.size());
    }
    for (const EmbeddingChannel& ch : model.embedder().channels) {
        snap.tables.push_back(ch.table);
    }
    return snap;
}

void restore_model(SentimentModel& model, const ModelSnapshot& snapshot) {
    std::vector<ParamRef> refs = model.params();
    if (refs.size() != snapshot.dense.size() ||
        model.embedder().channels.size() != snapshot.tables.size()) {
        throw ShapeError("restore_model: snapshot layout mismatch");
    }
    for (std::size_t t = 0; t < refs.size(); ++t) {
        if (refs[t].size() != snapshot.dense[t].size()) {
            throw ShapeError("restore_model: tensor size mismatch at " + refs[t].name);
        }
        std::copy(snapshot.dense[t].begin(), snapshot.dense[t].end(), refs[t].data);
    }
    for (std::size_t c = 0; c < snapshot.tables.size(); ++c) {
        EmbeddingChannel& ch = model.embedder().channels[c];
        if (snapshot.tables[c].cols != ch.dim) {
            throw ShapeError("restore_model: embedding width mismatch");
        }
        ch.table = snapshot.tables[c];
    }
}

void close_vocabulary(SentimentModel& model, const std::vector<const DatasetSplit*>& splits) {
    for (const DatasetSplit* split : splits) {
        if (split == nullptr) continue;
        for (const SentimentTree& tree : split->trees) {
            for (const std::string& token : leaf_tokens(tree)) {
                for (EmbeddingChannel& ch : model.embedder().channels) {
                    ch.lookup(token);
                }
            }
        }
    }
}

double evaluate(SentimentModel& model, const DatasetSplit& split) {
    std::size_t labeled = 0;
    std::size_t correct = 0;
    for (const SentimentTree& tree : split.trees) {
        if (!tree.label) continue;
        ++labeled;
        const std::size_t predicted = model.kind() == ModelKind::CnnTreeLstm
                                          ? model.predict_root(tree)
                                          : model.predict_tokens(leaf_tokens(tree));
        if (predicted == static_cast<std::size_t>(*tree.label)) ++correct;
    }
    if (labeled == 0) return 0.0;
    return static_cast<double>(correct) / static_cast<double>(labeled);
}

TrainResult train(SentimentModel& model, const DatasetSplit& train_split,
                  const DatasetSplit& dev_split, const DatasetSplit& test_split,
                  const TrainConfig& config, std::ostream* log) {
    config.validate();
    if (train_split.trees.empty()) {
        throw DataError("empty training split: " + train_split.name);
    }
    for (EmbeddingChannel& ch : model.embedder().channels) {
        ch.learning_rate = config.word_lr;
    }
    close_vocabulary(model, {&train_split, &dev_split, &test_split});

    SeededRng rng(config.seed);
    model.init_params(rng);
    AdaGradState state = AdaGradState::for_model(model);

    const bool tree_kind = model.kind() == ModelKind::CnnTreeLstm;
    std::vector<const SentimentTree*> sentences;
    std::vector<Phrase> phrases;
    if (tree_kind) {
        for (const SentimentTree& tree : train_split.trees) sentences.push_back(&tree);
    } else {
        for (const SentimentTree& tree : train_split.trees) {
            for (Phrase& phrase : extract_phrases(tree)) phrases.push_back(std::move(phrase));
        }
        if (phrases.empty()) {
            throw DataError("no labeled phrases in training split: " + train_split.name);
        }
    }
    const std::size_t n = tree_kind ? sentences.size() : phrases.size();

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    ModelGrads batch_grads = model.make_grads();
    ModelSnapshot best;
    TrainResult result;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            ++batch_index;
            batch_grads.clear();
            const std::size_t stop = std::min(n, start + config.batch_size);
            for (std::size_t k = start; k < stop; ++k) {
                const std::size_t idx = order[k];
                const double loss =
                    tree_kind ? model.tree_loss_grad(*sentences[idx], RunMode::Train, rng,
                                                     &batch_grads)
                              : model.phrase_loss_grad(phrases[idx].tokens, phrases[idx].label,
                                                       RunMode::Train, rng, &batch_grads);
                if (!std::isfinite(loss)) {
                    std::ostringstream msg;
                    msg << "non-finite loss at epoch " << epoch << ", batch " << batch_index;
                    throw NumericError(msg.str());
                }
                loss_sum += loss;
            }
            apply_l2(model, batch_grads, config.l2);
            try {
                adagrad_step(model, batch_grads, state, config.model_lr);
            } catch (const NumericError& err) {
                std::ostringstream msg;
                msg << err.what() << " at epoch " << epoch << ", batch " << batch_index;
                throw NumericError(msg.str());
            }
            ++result.updates;
        }
        EpochLog entry;
        entry.train_loss = loss_sum / static_cast<double>(n);
        entry.dev_accuracy = evaluate(model, dev_split);
        result.epochs.push_back(entry);
        if (log != nullptr) {
            std::ostringstream line;
            line << "epoch " << epoch << " train-loss " << entry.train_loss << " dev-acc "
                 << entry.dev_accuracy << "\n";
            *log << line.str() << std::flush;
        }
        if (result.best_epoch == 0 || entry.dev_accuracy > result.best_dev) {
            result.best_dev = entry.dev_accuracy;
            result.best_epoch = epoch;
            best = snapshot_model(model);
        }
    }

    restore_model(model, best);
    result.test_accuracy = evaluate(model, test_split);
    return result;
}

namespace {

struct CheckSample {
    const SentimentTree* tree = nullptr;
    const Phrase* phrase = nullptr;
};

double sample_loss(SentimentModel& model, const CheckSample& sample, RunMode mode,
                   std::uint64_t mask_seed, ModelGrads* grads) {
    // A fresh stream per evaluation keeps train-mode dropout masks identical
    // across the analytic pass and every finite-difference probe.
    SeededRng rng(mask_seed);
    if (sample.tree != nullptr) {
        return model.tree_loss_grad(*sample.tree, mode, rng, grads);
    }
    return model.phrase_loss_grad(sample.phrase->tokens, sample.phrase->label, mode, rng,
                                  grads);
}

GradCheckResult check_gradients(SentimentModel& model, const CheckSample& sample,
                                double epsilon, RunMode mode, std::uint64_t mask_seed,
                                const std::string& fault_tensor) {
    ModelGrads analytic = model.make_grads();
    sample_loss(model, sample, mode, mask_seed, &analytic);

    std::vector<ParamRef> refs = model.params();
    if (!fault_tensor.empty()) {
        bool found = false;
        for (std::size_t t = 0; t < refs.size(); ++t) {
            if (refs[t].name != fault_tensor) continue;
            for (double& g : analytic.dense[t]) g = -g;
            found = true;
        }
        if (!found) throw ConfigError("unknown tensor for fault injection: " + fault_tensor);
    }

    GradCheckResult result;
    auto record = [&](double a, double numeric, const std::string& name, std::size_t index) {
        const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
        const double rel = std::fabs(a - numeric) / denom;
        ++result.checked;
        if (rel > result.max_rel_error) {
            result.max_rel_error = rel;
            result.worst_tensor = name;
            result.worst_index = index;
        }
    };
    auto probe = [&](double* slot) {
        const double saved = *slot;
        *slot = saved + epsilon;
        const double up = sample_loss(model, sample, mode, mask_seed, nullptr);
        *slot = saved - epsilon;
        const double down = sample_loss(model, sample, mode, mask_seed, nullptr);
        *slot = saved;
        return (up - down) / (2.0 * epsilon);
    };

    for (std::size_t t = 0; t < refs.size(); ++t) {
        for (std::size_t i = 0; i < refs[t].size(); ++i) {
            record(analytic.dense[t][i], probe(refs[t].data + i), refs[t].name, i);
        }
    }
    for (std::size_t c = 0; c < model.embedder().channels.size(); ++c) {
        EmbeddingChannel& ch = model.embedder().channels[c];
        if (!ch.trainable) continue;
        std::ostringstream name;
        name << "embedding/" << c;
        for (const auto& [row, grad] : analytic.embedding[c].rows) {
            for (std::size_t k = 0; k < ch.dim; ++k) {
                record(grad[k], probe(&ch.table.at(row, k)), name.str(), row * ch.dim + k);
            }
        }
    }
    return result;
}

}  // namespace

GradCheckResult gradient_check(SentimentModel& model, const SentimentTree& tree, double epsilon,
                               RunMode mode, std::uint64_t mask_seed,
                               const std::string& fault_tensor) {
    CheckSample sample;
    sample.tree = &tree;
    return check_gradients(model, sample, epsilon, mode, mask_seed, fault_tensor);
}

GradCheckResult gradient_check_phrase(SentimentModel& model, const Phrase& phrase,
                                      double epsilon, RunMode mode, std::uint64_t mask_seed,
                                      const std::string& fault_tensor) {
    CheckSample sample;
    sample.phrase = &phrase;
    return check_gradients(model, sample, epsilon, mode, mask_seed, fault_tensor);
}

RunReport aggregate_runs(const std::vector<double>& dev, const std::vector<double>& test) {
    if (test.empty() || dev.size() != test.size()) {
        throw ConfigError("aggregate_runs needs matching, nonempty accuracy lists");
    }
    RunReport report;
    report.dev_accuracies = dev;
    report.test_accuracies = test;
    const double n = static_cast<double>(test.size());
    report.mean = std::accumulate(test.begin(), test.end(), 0.0) / n;
    double sq = 0.0;
    for (double value : test) sq += (value - report.mean) * (value - report.mean);
    report.stddev = std::sqrt(sq / n);
    report.max = *std::max_element(test.begin(), test.end());
    return report;
}

RunReport run_protocol(const ModelConfig& model_config,
                       const std::vector<EmbeddingChannel>& channels,
                       const DatasetSplit& train_split, const DatasetSplit& dev_split,
                       const DatasetSplit& test_split, const TrainConfig& config,
                       std::size_t n_runs, std::ostream* log) {
    if (n_runs < 1) throw ConfigError("run protocol needs at least one run");
    std::vector<double> dev;
    std::vector<double> test;
    for (std::size_t run = 0; run < n_runs; ++run) {
        SentimentModel model(model_config, channels);
        TrainConfig run_config = config;
        run_config.seed = config.seed + run;
        if (log != nullptr) {
            *log << "run " << run + 1 << "/" << n_runs << " seed " << run_config.seed << "\n";
        }
        TrainResult result = train(model, train_split, dev_split, test_split, run_config, log);
        dev.push_back(result.best_dev);
        test.push_back(result.test_accuracy);
    }
    return aggregate_runs(dev, test);
}

}  // namespace treecnn
