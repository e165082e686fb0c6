#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace awda::cli {

// Exit codes shared by all subcommands.
constexpr int kOk = 0;
constexpr int kValidationError = 1;
constexpr int kRuntimeError = 2;

struct SynthOptions {
    std::string input_dir;
    std::string depth_dir;  // required for haze
    std::string output_dir;
    std::string domain;  // night | rain | haze
    std::uint64_t seed = 42;
};

// One synthesized PNG + JSON parameter sidecar per input image. Files named
// <sample>__<view>.png share one parameter draw per sample; other files are
// their own sample. Missing haze depth is reported per file and the run
// continues with a nonzero exit.
int cmd_synth(const SynthOptions& opt, std::ostream& out, std::ostream& err);

struct TrainOptions {
    std::string config_path;  // empty = defaults
    std::string output_dir;
    std::vector<std::string> overrides;  // "key=value", applied after the file
    bool has_seed_override = false;
    std::uint64_t seed = 42;
};

int cmd_train(const TrainOptions& opt, std::ostream& out, std::ostream& err);

struct EvalOptions {
    std::string predictions_path;
    std::string labels_path;
    std::string output_path;  // optional
};

int cmd_eval(const EvalOptions& opt, std::ostream& out, std::ostream& err);

int cmd_gradcheck(std::uint64_t seed, std::ostream& out);

}  // namespace awda::cli
