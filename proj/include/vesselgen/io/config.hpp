#pragma once

// Run configuration as JSON. Canonical form is nlohmann's compact dump
// (object keys sorted, no whitespace); digests are SHA-256 over it.

#include <openssl/evp.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "vesselgen/denoiser.hpp"
#include "vesselgen/diffusion.hpp"
#include "vesselgen/schedule.hpp"
#include "vesselgen/synthvessel.hpp"
#include "vesselgen/train.hpp"

namespace vesselgen::io {

using nlohmann::json;

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr))
    throw Error("SHA-256 computation failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xF]);
  }
  return out;
}

inline std::string canonical(const json& j) { return j.dump(); }
inline std::string digest(const json& j) { return sha256_hex(canonical(j)); }

struct ScheduleConfig {
  std::size_t steps = 100;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  NoiseSchedule build() const { return linear_schedule(steps, beta_start, beta_end); }
};

struct RunConfig {
  std::size_t resolution = 32;
  ScheduleConfig schedule;
  DenoiserConfig denoiser;
  LossConfig loss;
  TrainConfig training;
  std::optional<std::uint64_t> seed;  // mandatory before any command runs
  VesselTreeConfig vessel;
  std::size_t dataset_size = 500;
  std::string dataset_dir;
  std::string output_dir;

  std::uint64_t require_seed() const {
    if (!seed) throw ConfigError("a seed is required (set \"seed\" in the config or pass --seed)");
    return *seed;
  }

  void validate() const {
    if (resolution < 1) throw ConfigError("resolution must be positive");
    if (vessel.width != resolution || vessel.height != resolution)
      throw ConfigError("vessel generator size must equal resolution " + std::to_string(resolution));
    try {
      denoiser.validate();
      denoiser.check_input({1, 2, resolution, resolution});
      schedule.build();
      vessel.validate();
    } catch (const ParameterError& e) {
      throw ConfigError(e.what());
    }
    if (loss.c < 0.0) throw ConfigError("loss.c must be >= 0");
    if (training.batch_size < 1) throw ConfigError("training.batch_size must be >= 1");
    if (!(training.adam.learning_rate > 0.0)) throw ConfigError("training.learning_rate must be > 0");
  }
};

inline json to_json(const VesselTreeConfig& v) {
  return {{"width", v.width},
          {"height", v.height},
          {"trees_per_channel", v.trees_per_channel},
          {"disc_center_x", v.disc_center_x},
          {"disc_center_y", v.disc_center_y},
          {"disc_radius", v.disc_radius},
          {"root_width", v.root_width},
          {"width_decay", v.width_decay},
          {"bifurcation_prob", v.bifurcation_prob},
          {"branch_angle_min", v.branch_angle_min},
          {"branch_angle_max", v.branch_angle_max},
          {"max_depth", v.max_depth},
          {"step_length", v.step_length},
          {"curvature_noise", v.curvature_noise},
          {"min_branch_steps", v.min_branch_steps},
          {"max_branch_steps", v.max_branch_steps}};
}

inline json to_json(const RunConfig& c) {
  json j = {
      {"resolution", c.resolution},
      {"schedule",
       {{"steps", c.schedule.steps}, {"beta_start", c.schedule.beta_start}, {"beta_end", c.schedule.beta_end}}},
      {"denoiser",
       {{"base_channels", c.denoiser.base_channels},
        {"depth", c.denoiser.depth},
        {"time_embed_dim", c.denoiser.time_embed_dim},
        {"norm_groups", c.denoiser.norm_groups}}},
      {"loss", {{"variant", to_string(c.loss.variant)}, {"c", c.loss.c}}},
      {"training",
       {{"epochs", c.training.epochs},
        {"batch_size", c.training.batch_size},
        {"learning_rate", c.training.adam.learning_rate},
        {"beta1", c.training.adam.beta1},
        {"beta2", c.training.adam.beta2},
        {"epsilon", c.training.adam.epsilon},
        {"grad_clip", c.training.grad_clip}}},
      {"vessel", to_json(c.vessel)},
      {"dataset_size", c.dataset_size},
      {"dataset_dir", c.dataset_dir},
      {"output_dir", c.output_dir},
  };
  j["seed"] = c.seed ? json(*c.seed) : json(nullptr);
  return j;
}

namespace detail {

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

inline const json& section(const json& j, const char* key) {
  static const json empty = json::object();
  if (!j.contains(key)) return empty;
  if (!j.at(key).is_object()) throw ConfigError(std::string("config section '") + key + "' must be an object");
  return j.at(key);
}

}  // namespace detail

inline VesselTreeConfig vessel_from_json(const json& v, VesselTreeConfig out = {}) {
  using detail::read_field;
  read_field(v, "width", out.width);
  read_field(v, "height", out.height);
  read_field(v, "trees_per_channel", out.trees_per_channel);
  read_field(v, "disc_center_x", out.disc_center_x);
  read_field(v, "disc_center_y", out.disc_center_y);
  read_field(v, "disc_radius", out.disc_radius);
  read_field(v, "root_width", out.root_width);
  read_field(v, "width_decay", out.width_decay);
  read_field(v, "bifurcation_prob", out.bifurcation_prob);
  read_field(v, "branch_angle_min", out.branch_angle_min);
  read_field(v, "branch_angle_max", out.branch_angle_max);
  read_field(v, "max_depth", out.max_depth);
  read_field(v, "step_length", out.step_length);
  read_field(v, "curvature_noise", out.curvature_noise);
  read_field(v, "min_branch_steps", out.min_branch_steps);
  read_field(v, "max_branch_steps", out.max_branch_steps);
  return out;
}

/// Overlays the fields present in `j` onto `base`. Unknown keys are
/// rejected so typos do not silently fall back to defaults.
inline RunConfig config_from_json(const json& j, RunConfig base = {}) {
  using detail::read_field;
  using detail::section;
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> known{"resolution", "schedule", "denoiser", "loss",
                                           "training", "vessel", "dataset_size", "dataset_dir",
                                           "output_dir", "seed"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw ConfigError("unknown config field '" + it.key() + "'");
  RunConfig c = std::move(base);
  const bool resolution_given = j.contains("resolution");
  read_field(j, "resolution", c.resolution);
  const auto& s = section(j, "schedule");
  read_field(s, "steps", c.schedule.steps);
  read_field(s, "beta_start", c.schedule.beta_start);
  read_field(s, "beta_end", c.schedule.beta_end);
  const auto& d = section(j, "denoiser");
  read_field(d, "base_channels", c.denoiser.base_channels);
  read_field(d, "depth", c.denoiser.depth);
  read_field(d, "time_embed_dim", c.denoiser.time_embed_dim);
  read_field(d, "norm_groups", c.denoiser.norm_groups);
  const auto& l = section(j, "loss");
  if (l.contains("variant")) {
    try {
      c.loss.variant = parse_loss_variant(l.at("variant").get<std::string>());
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  }
  read_field(l, "c", c.loss.c);
  const auto& t = section(j, "training");
  read_field(t, "epochs", c.training.epochs);
  read_field(t, "batch_size", c.training.batch_size);
  read_field(t, "learning_rate", c.training.adam.learning_rate);
  read_field(t, "beta1", c.training.adam.beta1);
  read_field(t, "beta2", c.training.adam.beta2);
  read_field(t, "epsilon", c.training.adam.epsilon);
  read_field(t, "grad_clip", c.training.grad_clip);
  if (resolution_given && !j.contains("vessel")) {
    c.vessel = VesselTreeConfig::for_resolution(c.resolution);
  }
  c.vessel = vessel_from_json(section(j, "vessel"), c.vessel);
  read_field(j, "dataset_size", c.dataset_size);
  read_field(j, "dataset_dir", c.dataset_dir);
  read_field(j, "output_dir", c.output_dir);
  if (j.contains("seed") && !j.at("seed").is_null()) {
    std::uint64_t seed = 0;
    read_field(j, "seed", seed);
    c.seed = seed;
  }
  return c;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("error writing " + path.string());
}

inline RunConfig load_config(const std::filesystem::path& path) {
  return config_from_json(read_json_file(path));
}

}  // namespace vesselgen::io
