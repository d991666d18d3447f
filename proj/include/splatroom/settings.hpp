#pragma once

#include "splatroom/eval.hpp"
#include "splatroom/io.hpp"
#include "splatroom/meshing.hpp"
#include "splatroom/scene.hpp"
#include "splatroom/trainer.hpp"

#include <string>
#include <vector>

namespace splatroom {

// Every tunable of the command-line pipeline in one place.
struct Settings {
  SeedConfig seeds;
  PipelineConfig pipeline;
  TsdfConfig tsdf;
  EvalConfig eval;
  bool random_init = false;  // ablation: random seeds instead of voxelized points

  void validate() const;
};

// Applies `key = value` overrides. Throws IoError listing unknown keys and
// unparsable values.
void apply_settings(Settings& settings, const ConfigMap& config);

// Keys accepted by apply_settings, sorted.
std::vector<std::string> settings_keys();

// Renders the settings as a config file that apply_settings reads back.
std::string format_settings(const Settings& settings);

}  // namespace splatroom
