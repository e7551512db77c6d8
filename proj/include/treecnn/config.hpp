#pragma once

#include <istream>
#include <string>
#include <vector>

#include "treecnn/model.hpp"
#include "treecnn/training.hpp"

namespace treecnn {

// Where one embedding channel comes from: a GloVe text file or a random
// table grown on demand ("random:<dim>").
struct ChannelSpec {
    bool random = false;
    std::string path;     // when loaded from file
    std::size_t dim = 0;  // when random
};

// A full run described by a flat "key = value" file. Unknown keys are
// errors so typos cannot silently fall back to defaults.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    std::string train_path, dev_path, test_path;
    std::vector<ChannelSpec> channels;
    std::string checkpoint_prefix;
};

RunConfig parse_run_config(std::istream& in, const std::string& context);
RunConfig load_run_config(const std::string& path);

// Loads/creates the channels of a run. Each channel's out-of-vocabulary
// stream is seeded from the run seed and its position so runs are
// reproducible.
std::vector<EmbeddingChannel> build_channels(const RunConfig& config);

// Reads one tree file; binary runs convert each tree and drop neutral
// roots.
DatasetSplit load_configured_split(const std::string& path, const std::string& name,
                                   TaskSetting setting);

}  // namespace treecnn
