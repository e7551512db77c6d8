#pragma once

#include <map>
#include <string>

#include "treecnn/model.hpp"

namespace treecnn {

// Binary model file:
//   "CTLSTM1\n"
//   u64 manifest length, manifest ("key = value" lines, UTF-8)
//   u64 channel count, then per channel its vocabulary
//     (u64 word count; per word u64 length + bytes)
//   u64 tensor count, then per tensor
//     (u64 name length + name, u64 rows, u64 cols, rows*cols f64)
// All integers and floats little-endian. Saving the same model twice yields
// byte-identical files.
//
// The manifest carries the model geometry (kind, setting, memory size,
// filter layout, per-channel dim/flags) plus any caller-supplied echo
// entries; loading rebuilds the model from it and validates every declared
// tensor shape.

void save_checkpoint(SentimentModel& model, const std::string& path,
                     const std::map<std::string, std::string>& echo = {});

SentimentModel load_checkpoint(const std::string& path);

// The manifest of an existing checkpoint, without building the model.
std::map<std::string, std::string> read_manifest(const std::string& path);

std::string format_filters(const std::vector<FilterSpec>& filters);
std::vector<FilterSpec> parse_filters(const std::string& text);

}  // namespace treecnn
