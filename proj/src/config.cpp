#include "treecnn/config.hpp"

#include <fstream>
#include <sstream>

#include "treecnn/checkpoint.hpp"

namespace treecnn {

namespace {

std::string trim(const std::string& text) {
    std::size_t begin = text.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    std::size_t end = text.find_last_not_of(" \t\r");
    return text.substr(begin, end - begin + 1);
}

double parse_double(const std::string& value, const std::string& key,
                    const std::string& context) {
    try {
        std::size_t used = 0;
        const double out = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return out;
    } catch (const std::exception&) {
        throw ConfigError(context + ": bad number for '" + key + "': " + value);
    }
}

std::uint64_t parse_u64(const std::string& value, const std::string& key,
                        const std::string& context) {
    try {
        std::size_t used = 0;
        const std::uint64_t out = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return out;
    } catch (const std::exception&) {
        throw ConfigError(context + ": bad integer for '" + key + "': " + value);
    }
}

}  // namespace

RunConfig parse_run_config(std::istream& in, const std::string& context) {
    RunConfig config;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos) {
            std::ostringstream msg;
            msg << context << ":" << line_no << ": expected 'key = value', got '" << stripped
                << "'";
            throw ConfigError(msg.str());
        }
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty() || value.empty()) {
            std::ostringstream msg;
            msg << context << ":" << line_no << ": empty key or value";
            throw ConfigError(msg.str());
        }

        if (key == "model") {
            config.model.kind = model_kind_from_name(value);
        } else if (key == "setting") {
            config.model.setting = setting_from_name(value);
        } else if (key == "memory_size") {
            config.model.memory_size = parse_u64(value, key, context);
        } else if (key == "filters") {
            config.model.filters = parse_filters(value);
        } else if (key == "train") {
            config.train_path = value;
        } else if (key == "dev") {
            config.dev_path = value;
        } else if (key == "test") {
            config.test_path = value;
        } else if (key == "channel") {
            ChannelSpec spec;
            if (value.rfind("random:", 0) == 0) {
                spec.random = true;
                spec.dim = parse_u64(value.substr(7), key, context);
                if (spec.dim == 0) throw ConfigError(context + ": channel dim must be > 0");
            } else {
                spec.path = value;
            }
            config.channels.push_back(std::move(spec));
        } else if (key == "model_lr") {
            config.train.model_lr = parse_double(value, key, context);
        } else if (key == "word_lr") {
            config.train.word_lr = parse_double(value, key, context);
        } else if (key == "l2") {
            config.train.l2 = parse_double(value, key, context);
        } else if (key == "batch_size") {
            config.train.batch_size = parse_u64(value, key, context);
        } else if (key == "epochs") {
            config.train.epochs = parse_u64(value, key, context);
        } else if (key == "seed") {
            config.train.seed = parse_u64(value, key, context);
        } else if (key == "conv_input_dropout") {
            config.train.conv_input_dropout = parse_double(value, key, context);
        } else if (key == "conv_output_dropout") {
            config.train.conv_output_dropout = parse_double(value, key, context);
        } else if (key == "output_dropout") {
            config.train.output_dropout = parse_double(value, key, context);
        } else if (key == "checkpoint") {
            config.checkpoint_prefix = value;
        } else {
            std::ostringstream msg;
            msg << context << ":" << line_no << ": unknown key '" << key << "'";
            throw ConfigError(msg.str());
        }
    }
    // The model carries the dropout rates used by its forward passes.
    config.model.conv_input_dropout = config.train.conv_input_dropout;
    config.model.conv_output_dropout = config.train.conv_output_dropout;
    config.model.output_dropout = config.train.output_dropout;
    if (config.channels.empty()) {
        throw ConfigError(context + ": at least one 'channel' entry is required");
    }
    config.train.validate();
    return config;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    return parse_run_config(in, path);
}

std::vector<EmbeddingChannel> build_channels(const RunConfig& config) {
    std::vector<EmbeddingChannel> channels;
    for (std::size_t c = 0; c < config.channels.size(); ++c) {
        const ChannelSpec& spec = config.channels[c];
        EmbeddingChannel channel =
            spec.random ? EmbeddingChannel(spec.dim, 0) : load_glove_text(spec.path);
        // Distinct, reproducible out-of-vocabulary streams per channel.
        channel.set_oov_seed(config.train.seed ^
                             (0x9e3779b97f4a7c15ull * (static_cast<std::uint64_t>(c) + 1)));
        channel.learning_rate = config.train.word_lr;
        channels.push_back(std::move(channel));
    }
    return channels;
}

DatasetSplit load_configured_split(const std::string& path, const std::string& name,
                                   TaskSetting setting) {
    DatasetSplit split = load_split(path, name);
    if (setting == TaskSetting::Binary) {
        DatasetSplit binary;
        binary.name = split.name;
        for (const SentimentTree& tree : split.trees) {
            if (auto converted = to_binary(tree)) {
                binary.trees.push_back(std::move(*converted));
            }
        }
        return binary;
    }
    return split;
}

}  // namespace treecnn
