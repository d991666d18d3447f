#pragma once

#include "splatroom/scene.hpp"
#include "splatroom/trainer.hpp"

#include <string>

namespace splatroom {

// Versioned little-endian binary container, magic "SPLATROOM1": pipeline
// configuration, seed configuration, cameras, seeds, surfels, optimizer
// moments and RNG state.
struct Checkpoint {
  PipelineConfig config;
  Scene scene;
  TrainState state;
};

void save_checkpoint(const std::string& path, const Scene& scene, const TrainState& state,
                     const PipelineConfig& config);
std::string serialize_checkpoint(const Scene& scene, const TrainState& state, const PipelineConfig& config);

// Throws std::runtime_error on a missing file, bad magic or truncated data.
Checkpoint load_checkpoint(const std::string& path);
Checkpoint deserialize_checkpoint(const std::string& bytes);

}  // namespace splatroom
