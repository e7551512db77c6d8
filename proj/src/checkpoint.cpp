#include "treecnn/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace treecnn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[] = "CTLSTM1\n";
constexpr std::size_t kMagicLen = 8;

void put_u64(std::ostream& out, std::uint64_t value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

void put_string(std::ostream& out, const std::string& text) {
    put_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::uint64_t get_u64(std::istream& in, const std::string& path) {
    std::uint64_t value = 0;
    if (!in.read(reinterpret_cast<char*>(&value), sizeof value)) {
        throw DataError("truncated checkpoint: " + path);
    }
    return value;
}

std::string get_string(std::istream& in, const std::string& path) {
    const std::uint64_t len = get_u64(in, path);
    if (len > (1ull << 32)) throw DataError("corrupt length field in checkpoint: " + path);
    std::string text(static_cast<std::size_t>(len), '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(len))) {
        throw DataError("truncated checkpoint: " + path);
    }
    return text;
}

std::map<std::string, std::string> parse_manifest(const std::string& text,
                                                  const std::string& path) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::size_t eq = line.find(" = ");
        if (eq == std::string::npos) {
            throw DataError("malformed manifest line in " + path + ": " + line);
        }
        out[line.substr(0, eq)] = line.substr(eq + 3);
    }
    return out;
}

const std::string& manifest_get(const std::map<std::string, std::string>& manifest,
                                const std::string& key, const std::string& path) {
    const auto it = manifest.find(key);
    if (it == manifest.end()) {
        throw DataError("checkpoint " + path + " is missing manifest key '" + key + "'");
    }
    return it->second;
}

std::uint64_t manifest_u64(const std::map<std::string, std::string>& manifest,
                           const std::string& key, const std::string& path) {
    const std::string& raw = manifest_get(manifest, key, path);
    try {
        return std::stoull(raw);
    } catch (const std::exception&) {
        throw DataError("checkpoint " + path + ": bad integer for '" + key + "': " + raw);
    }
}

double manifest_f64(const std::map<std::string, std::string>& manifest, const std::string& key,
                    const std::string& path) {
    const std::string& raw = manifest_get(manifest, key, path);
    try {
        return std::stod(raw);
    } catch (const std::exception&) {
        throw DataError("checkpoint " + path + ": bad number for '" + key + "': " + raw);
    }
}

// Shortest representation that parses back to the same double.
std::string fmt_double(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    double parsed = std::stod(buf);
    if (parsed == value) {
        for (int digits = 1; digits < 17; ++digits) {
            char probe[32];
            std::snprintf(probe, sizeof probe, "%.*g", digits, value);
            if (std::stod(probe) == value) return probe;
        }
    }
    return buf;
}

}  // namespace

std::string format_filters(const std::vector<FilterSpec>& filters) {
    std::ostringstream out;
    for (std::size_t i = 0; i < filters.size(); ++i) {
        if (i > 0) out << ",";
        out << filters[i].count << "x" << filters[i].window;
    }
    return out.str();
}

std::vector<FilterSpec> parse_filters(const std::string& text) {
    std::vector<FilterSpec> out;
    std::istringstream in(text);
    std::string part;
    while (std::getline(in, part, ',')) {
        const std::size_t x = part.find('x');
        if (x == std::string::npos || x == 0 || x + 1 >= part.size()) {
            throw ConfigError("bad filter group '" + part + "' (expected <count>x<window>)");
        }
        try {
            const unsigned long count = std::stoul(part.substr(0, x));
            const unsigned long window = std::stoul(part.substr(x + 1));
            out.push_back({count, window});
        } catch (const std::exception&) {
            throw ConfigError("bad filter group '" + part + "' (expected <count>x<window>)");
        }
    }
    if (out.empty()) throw ConfigError("filter list is empty: '" + text + "'");
    return out;
}

void save_checkpoint(SentimentModel& model, const std::string& path,
                     const std::map<std::string, std::string>& echo) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out.write(kMagic, kMagicLen);

    std::ostringstream manifest;
    manifest << "model = " << model_kind_name(model.kind()) << "\n";
    manifest << "setting = " << setting_name(model.config().setting) << "\n";
    manifest << "memory_size = " << model.config().memory_size << "\n";
    manifest << "filters = " << format_filters(model.config().filters) << "\n";
    manifest << "conv_input_dropout = " << fmt_double(model.config().conv_input_dropout)
             << "\n";
    manifest << "conv_output_dropout = " << fmt_double(model.config().conv_output_dropout)
             << "\n";
    manifest << "output_dropout = " << fmt_double(model.config().output_dropout) << "\n";
    const auto& channels = model.embedder().channels;
    manifest << "channels = " << channels.size() << "\n";
    for (std::size_t c = 0; c < channels.size(); ++c) {
        manifest << "channel." << c << ".dim = " << channels[c].dim << "\n";
        manifest << "channel." << c << ".trainable = " << (channels[c].trainable ? 1 : 0)
                 << "\n";
        manifest << "channel." << c << ".oov_seed = " << channels[c].oov_seed << "\n";
        manifest << "channel." << c << ".learning_rate = "
                 << fmt_double(channels[c].learning_rate) << "\n";
    }
    for (const auto& [key, value] : echo) {
        manifest << "echo." << key << " = " << value << "\n";
    }
    put_string(out, manifest.str());

    put_u64(out, channels.size());
    for (const EmbeddingChannel& ch : channels) {
        put_u64(out, ch.vocab.size());
        for (const std::string& word : ch.vocab.words) put_string(out, word);
    }

    std::vector<ParamRef> refs = model.params();
    put_u64(out, refs.size() + channels.size());
    for (const ParamRef& ref : refs) {
        put_string(out, ref.name);
        put_u64(out, ref.rows);
        put_u64(out, ref.cols);
        out.write(reinterpret_cast<const char*>(ref.data),
                  static_cast<std::streamsize>(ref.size() * sizeof(double)));
    }
    for (std::size_t c = 0; c < channels.size(); ++c) {
        std::ostringstream name;
        name << "embedding/" << c << "/table";
        put_string(out, name.str());
        put_u64(out, channels[c].table.rows);
        put_u64(out, channels[c].table.cols);
        out.write(reinterpret_cast<const char*>(channels[c].table.data.data()),
                  static_cast<std::streamsize>(channels[c].table.size() * sizeof(double)));
    }
    if (!out) throw DataError("short write while saving checkpoint: " + path);
}

SentimentModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    char magic[kMagicLen];
    if (!in.read(magic, kMagicLen) || std::memcmp(magic, kMagic, kMagicLen) != 0) {
        throw DataError("not a model checkpoint (bad magic): " + path);
    }
    const auto manifest = parse_manifest(get_string(in, path), path);

    ModelConfig config;
    config.kind = model_kind_from_name(manifest_get(manifest, "model", path));
    config.setting = setting_from_name(manifest_get(manifest, "setting", path));
    config.memory_size = manifest_u64(manifest, "memory_size", path);
    config.filters = parse_filters(manifest_get(manifest, "filters", path));
    config.conv_input_dropout = manifest_f64(manifest, "conv_input_dropout", path);
    config.conv_output_dropout = manifest_f64(manifest, "conv_output_dropout", path);
    config.output_dropout = manifest_f64(manifest, "output_dropout", path);

    const std::uint64_t channel_count = manifest_u64(manifest, "channels", path);
    std::vector<EmbeddingChannel> channels;
    for (std::uint64_t c = 0; c < channel_count; ++c) {
        std::ostringstream prefix;
        prefix << "channel." << c << ".";
        EmbeddingChannel ch(manifest_u64(manifest, prefix.str() + "dim", path), 0);
        ch.trainable = manifest_u64(manifest, prefix.str() + "trainable", path) != 0;
        ch.set_oov_seed(manifest_u64(manifest, prefix.str() + "oov_seed", path));
        ch.learning_rate = manifest_f64(manifest, prefix.str() + "learning_rate", path);
        channels.push_back(std::move(ch));
    }

    const std::uint64_t stored_channels = get_u64(in, path);
    if (stored_channels != channel_count) {
        throw DataError("checkpoint " + path + ": channel count mismatch");
    }
    for (std::uint64_t c = 0; c < channel_count; ++c) {
        const std::uint64_t words = get_u64(in, path);
        for (std::uint64_t i = 0; i < words; ++i) {
            channels[c].vocab.add(get_string(in, path));
        }
        channels[c].table = Matrix(words, channels[c].dim);
    }

    SentimentModel model(config, std::move(channels));

    std::map<std::string, std::pair<double*, std::pair<std::size_t, std::size_t>>> expected;
    for (const ParamRef& ref : model.params()) {
        expected[ref.name] = {ref.data, {ref.rows, ref.cols}};
    }
    auto& loaded_channels = model.embedder().channels;
    for (std::size_t c = 0; c < loaded_channels.size(); ++c) {
        std::ostringstream name;
        name << "embedding/" << c << "/table";
        expected[name.str()] = {loaded_channels[c].table.data.data(),
                                {loaded_channels[c].table.rows, loaded_channels[c].dim}};
    }

    const std::uint64_t tensor_count = get_u64(in, path);
    if (tensor_count != expected.size()) {
        std::ostringstream msg;
        msg << "checkpoint " << path << ": expected " << expected.size() << " tensors, found "
            << tensor_count;
        throw DataError(msg.str());
    }
    std::set<std::string> loaded;
    for (std::uint64_t t = 0; t < tensor_count; ++t) {
        const std::string name = get_string(in, path);
        const std::uint64_t rows = get_u64(in, path);
        const std::uint64_t cols = get_u64(in, path);
        const auto it = expected.find(name);
        if (it == expected.end()) {
            throw DataError("checkpoint " + path + ": unknown tensor '" + name + "'");
        }
        if (!loaded.insert(name).second) {
            throw DataError("checkpoint " + path + ": duplicate tensor '" + name + "'");
        }
        if (rows != it->second.second.first || cols != it->second.second.second) {
            std::ostringstream msg;
            msg << "checkpoint " << path << ": tensor " << name << " has shape " << rows << "x"
                << cols << ", expected " << it->second.second.first << "x"
                << it->second.second.second;
            throw DataError(msg.str());
        }
        if (!in.read(reinterpret_cast<char*>(it->second.first),
                     static_cast<std::streamsize>(rows * cols * sizeof(double)))) {
            throw DataError("truncated checkpoint: " + path);
        }
    }
    return model;
}

std::map<std::string, std::string> read_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    char magic[kMagicLen];
    if (!in.read(magic, kMagicLen) || std::memcmp(magic, kMagic, kMagicLen) != 0) {
        throw DataError("not a model checkpoint (bad magic): " + path);
    }
    return parse_manifest(get_string(in, path), path);
}

}  // namespace treecnn
