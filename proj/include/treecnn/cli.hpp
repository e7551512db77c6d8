#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "treecnn/corpusprep.hpp"

namespace treecnn {

// Exit codes shared by every command.
//   0 success, 1 usage/config, 2 data/parse, 3 numeric failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

// Commands print machine-readable "key=value" lines to out and progress /
// human summaries to err. They throw the errors.hpp types; run_cli maps
// those to exit codes.

int cmd_train(const std::string& config_path, std::size_t runs,
              std::optional<std::uint64_t> seed_override, std::ostream& out,
              std::ostream& err);

int cmd_eval(const std::string& checkpoint_path, const std::string& trees_path,
             const std::string& setting_override, std::ostream& out, std::ostream& err);

int cmd_param_count(const std::string& config_path, std::ostream& out, std::ostream& err);

// Checks both model kinds when kind_name is empty. Returns kExitNumeric
// when the worst relative error exceeds 1e-6; inject_fault flips one
// tensor's analytic gradient to prove the check can fail.
int cmd_gradcheck(const std::string& kind_name, bool inject_fault, std::ostream& out,
                  std::ostream& err);

int cmd_prep_amazon(const std::string& in_path, const std::string& out_path, std::ostream& out,
                    std::ostream& err);

int cmd_train_glove(const std::string& corpus_path, const std::string& out_path,
                    const GloveConfig& config, std::ostream& out, std::ostream& err);

int cmd_predict(const std::string& checkpoint_path, const std::string& input, bool token_mode,
                std::ostream& out, std::ostream& err);

// Full argv surface (without the program name). Parses flags, dispatches,
// and converts thrown errors into the exit codes above.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace treecnn
