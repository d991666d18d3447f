#include "splatroom/settings.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <sstream>

namespace splatroom {

void Settings::validate() const {
  seeds.validate();
  pipeline.validate();
  tsdf.validate();
  eval.validate();
}

namespace {

struct Field {
  std::function<void(Settings&, const std::string&)> set;
  std::function<std::string(const Settings&)> get;
};

template <class T>
T parse_value(const std::string& text) {
  if constexpr (std::is_same_v<T, bool>) {
    if (text == "1" || text == "true" || text == "on" || text == "yes") return true;
    if (text == "0" || text == "false" || text == "off" || text == "no") return false;
    throw std::invalid_argument("expected a boolean");
  } else if constexpr (std::is_floating_point_v<T>) {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing characters");
    return v;
  } else {
    T v{};
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || end != text.data() + text.size()) throw std::invalid_argument("expected an integer");
    return v;
  }
}

template <class T>
std::string format_value(const T& v) {
  std::ostringstream out;
  if constexpr (std::is_same_v<T, bool>) {
    out << (v ? "true" : "false");
  } else {
    out.precision(17);
    out << v;
  }
  return out.str();
}

// Binds a key to a field reached through `access`.
template <class Access>
Field field(Access access) {
  using T = std::remove_reference_t<decltype(access(std::declval<Settings&>()))>;
  return {[access](Settings& s, const std::string& text) { access(s) = parse_value<T>(text); },
          [access](const Settings& s) { return format_value(access(const_cast<Settings&>(s))); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    // seeds
    t["delta"] = field([](Settings& s) -> double& { return s.seeds.delta; });
    t["epsilon"] = field([](Settings& s) -> int& { return s.seeds.epsilon; });
    t["k"] = field([](Settings& s) -> int& { return s.seeds.k; });
    t["init_seed"] = field([](Settings& s) -> std::uint64_t& { return s.seeds.rng_seed; });
    t["random_init"] = field([](Settings& s) -> bool& { return s.random_init; });
    // optimizer
    t["iters"] = field([](Settings& s) -> int& { return s.pipeline.train.total_iters; });
    t["lr_offset"] = field([](Settings& s) -> double& { return s.pipeline.train.lr_offset; });
    t["lr_offset_final"] = field([](Settings& s) -> double& { return s.pipeline.train.lr_offset_final; });
    t["lr_rotation"] = field([](Settings& s) -> double& { return s.pipeline.train.lr_rotation; });
    t["lr_scale"] = field([](Settings& s) -> double& { return s.pipeline.train.lr_scale; });
    t["lr_opacity"] = field([](Settings& s) -> double& { return s.pipeline.train.lr_opacity; });
    t["lr_color"] = field([](Settings& s) -> double& { return s.pipeline.train.lr_color; });
    t["seed"] = field([](Settings& s) -> std::uint64_t& { return s.pipeline.train.seed; });
    t["checkpoint_every"] = field([](Settings& s) -> int& { return s.pipeline.train.checkpoint_every; });
    // densification
    t["densify"] = field([](Settings& s) -> bool& { return s.pipeline.densify.enabled; });
    t["grow_window"] = field([](Settings& s) -> int& { return s.pipeline.densify.grow_window; });
    t["prune_window"] = field([](Settings& s) -> int& { return s.pipeline.densify.prune_window; });
    t["densify_interval"] = field([](Settings& s) -> int& { return s.pipeline.densify.interval; });
    t["densify_start"] = field([](Settings& s) -> int& { return s.pipeline.densify.start_iter; });
    t["densify_end"] = field([](Settings& s) -> int& { return s.pipeline.densify.end_iter; });
    t["theta_g"] = field([](Settings& s) -> double& { return s.pipeline.densify.theta_g; });
    t["theta_alpha"] = field([](Settings& s) -> double& { return s.pipeline.densify.theta_alpha; });
    t["max_level"] = field([](Settings& s) -> int& { return s.pipeline.densify.max_level; });
    // losses
    t["lambda_rgb"] = field([](Settings& s) -> double& { return s.pipeline.weights.lambda_rgb; });
    t["lambda_d"] = field([](Settings& s) -> double& { return s.pipeline.weights.lambda_d; });
    t["lambda_n"] = field([](Settings& s) -> double& { return s.pipeline.weights.lambda_n; });
    t["lambda_1"] = field([](Settings& s) -> double& { return s.pipeline.weights.lambda_1; });
    t["lambda_cos"] = field([](Settings& s) -> double& { return s.pipeline.weights.lambda_cos; });
    t["lambda_grad"] = field([](Settings& s) -> double& { return s.pipeline.weights.lambda_grad; });
    t["lambda_geo"] = field([](Settings& s) -> double& { return s.pipeline.weights.lambda_geo; });
    t["lambda_pho"] = field([](Settings& s) -> double& { return s.pipeline.weights.lambda_pho; });
    t["ssim_mix"] = field([](Settings& s) -> double& { return s.pipeline.weights.rgb_ssim_mix; });
    // multi-view
    t["mv_start"] = field([](Settings& s) -> int& { return s.pipeline.mv.start_iter; });
    t["patch_radius"] = field([](Settings& s) -> int& { return s.pipeline.mv.patch_radius; });
    t["sample_stride"] = field([](Settings& s) -> int& { return s.pipeline.mv.sample_stride; });
    t["tau_geo"] = field([](Settings& s) -> double& { return s.pipeline.mv.tau_geo; });
    t["mv_alpha"] = field([](Settings& s) -> double& { return s.pipeline.mv.alpha_threshold; });
    // rasterizer
    t["near"] = field([](Settings& s) -> double& { return s.pipeline.raster.near; });
    t["far"] = field([](Settings& s) -> double& { return s.pipeline.raster.far; });
    t["tile_size"] = field([](Settings& s) -> int& { return s.pipeline.raster.tile_size; });
    t["alpha_cutoff"] = field([](Settings& s) -> double& { return s.pipeline.raster.alpha_cutoff; });
    t["transmittance_floor"] = field([](Settings& s) -> double& { return s.pipeline.raster.transmittance_floor; });
    t["lowpass_sigma"] = field([](Settings& s) -> double& { return s.pipeline.raster.lowpass_sigma; });
    t["alpha_valid"] = field([](Settings& s) -> double& { return s.pipeline.raster.alpha_valid_threshold; });
    // meshing
    t["voxel"] = field([](Settings& s) -> double& { return s.tsdf.voxel_size; });
    t["trunc"] = field([](Settings& s) -> double& { return s.tsdf.truncation; });
    t["padding"] = field([](Settings& s) -> double& { return s.tsdf.padding; });
    t["mesh_alpha"] = field([](Settings& s) -> double& { return s.tsdf.alpha_threshold; });
    // evaluation
    t["threshold"] = field([](Settings& s) -> double& { return s.eval.threshold; });
    t["samples"] = field([](Settings& s) -> int& { return s.eval.n_samples; });
    t["eval_seed"] = field([](Settings& s) -> std::uint64_t& { return s.eval.seed; });
    return t;
  }();
  return table;
}

}  // namespace

void apply_settings(Settings& settings, const ConfigMap& config) {
  std::vector<std::string> errors;
  for (const auto& [key, value] : config) {
    const auto it = fields().find(key);
    if (it == fields().end()) {
      errors.push_back("unknown setting '" + key + "'");
      continue;
    }
    try {
      it->second.set(settings, value);
    } catch (const std::exception&) {
      errors.push_back("bad value for '" + key + "': '" + value + "'");
    }
  }
  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw IoError(msg);
  }
}

std::vector<std::string> settings_keys() {
  std::vector<std::string> keys;
  for (const auto& [key, f] : fields()) keys.push_back(key);
  return keys;
}

std::string format_settings(const Settings& settings) {
  std::string out;
  for (const auto& [key, f] : fields()) out += key + " = " + f.get(settings) + "\n";
  return out;
}

}  // namespace splatroom
