#pragma once

#include "pcad/training.hpp"

#include <string>

namespace pcad {

/// Binary checkpoint: magic, format version, model/train config, then the
/// flat parameter vector as raw little-endian doubles. Round-trips are
/// bit-exact.
void save_checkpoint(const std::string& path, const ModelParams& params,
                     const TrainConfig& config);

struct Checkpoint {
    ModelParams params;
    TrainConfig config;
};

Checkpoint load_checkpoint(const std::string& path);

} // namespace pcad
