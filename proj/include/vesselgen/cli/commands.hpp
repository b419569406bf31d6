#pragma once

// Command implementations behind the `vesselgen` executable. Each command is
// a function of its config, input files and seed; the executable only parses
// flags and maps exceptions to exit codes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vesselgen/diffusion.hpp"
#include "vesselgen/io/checkpoint.hpp"
#include "vesselgen/io/config.hpp"
#include "vesselgen/io/png_mask.hpp"
#include "vesselgen/io/report.hpp"
#include "vesselgen/numerics/finite_diff.hpp"
#include "vesselgen/structmetrics.hpp"
#include "vesselgen/synthvessel.hpp"
#include "vesselgen/train.hpp"

namespace vesselgen::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using io::RunConfig;

enum ExitCode : int { ok = 0, usage_error = 1, io_error = 2, numerical_failure = 3 };

inline std::string indexed_name(const std::string& prefix, std::size_t i, const std::string& suffix) {
  std::ostringstream os;
  os << prefix << std::setw(4) << std::setfill('0') << i << suffix;
  return os.str();
}

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

inline std::vector<fs::path> png_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

// Derived seeds keep the independent random streams of one run apart.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(stream)};
  std::array<std::uint32_t, 2> words{};
  seq.generate(words.begin(), words.end());
  return (std::uint64_t(words[1]) << 32) | words[0];
}

enum Stream : std::uint64_t { data_stream = 1, train_stream = 2, sample_stream = 3 };

// ---------------------------------------------------------------------------
// synth-data

/// Writes n masks as mask_NNNN.png plus manifest.json and returns the manifest.
inline json cmd_synth_data(const RunConfig& cfg, std::size_t n, const fs::path& out_dir) {
  const auto seed = cfg.require_seed();
  cfg.vessel.validate();
  Rng rng(derive_seed(seed, data_stream));
  const auto data = generate_dataset(n, cfg.vessel, rng);
  ensure_dir(out_dir);
  const json config = {{"vessel", io::to_json(cfg.vessel)}, {"seed", seed}, {"count", n}};
  json files = json::array();
  for (std::size_t i = 0; i < n; ++i) {
    const auto name = indexed_name("mask_", i, ".png");
    io::write_mask_png(out_dir / name, data.masks[i]);
    files.push_back({{"file", name},
                     {"seed", data.seeds[i]},
                     {"foreground_fraction", data.masks[i].foreground_fraction()}});
  }
  json manifest = {{"config", config}, {"config_digest", io::digest(config)}, {"files", files}};
  io::write_json_file(out_dir / "manifest.json", manifest);
  return manifest;
}

inline std::vector<AVMask> load_mask_dir(const fs::path& dir) {
  std::vector<AVMask> masks;
  for (const auto& f : png_files(dir)) masks.push_back(io::read_mask_png(f));
  if (masks.empty()) throw IoError("no mask PNGs in " + dir.string());
  for (const auto& m : masks)
    if (m.width() != masks[0].width() || m.height() != masks[0].height())
      throw FormatError("masks in " + dir.string() + " differ in resolution");
  return masks;
}

// ---------------------------------------------------------------------------
// train

struct TrainOutcome {
  fs::path checkpoint;
  fs::path loss_csv;
  io::Checkpoint final_state;
};

inline void write_loss_csv(const fs::path& path, const std::vector<double>& history) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,mean_loss\n" << std::setprecision(17);
  for (std::size_t i = 0; i < history.size(); ++i) out << (i + 1) << ',' << history[i] << '\n';
  if (!out) throw IoError("error writing " + path.string());
}

/// Trains on the masks in cfg.dataset_dir, or continues from `resume` for
/// cfg.training.epochs further epochs. Writes checkpoint.vgc after every
/// epoch and loss_history.csv at the end. If training diverges the last good
/// checkpoint stays on disk and NumericalError propagates.
inline TrainOutcome cmd_train(const RunConfig& cfg, const fs::path& dataset_dir,
                              const fs::path& out_dir,
                              const std::optional<fs::path>& resume = std::nullopt,
                              std::ostream* log = nullptr) {
  const auto dataset = load_mask_dir(dataset_dir);
  io::Checkpoint ck;
  if (resume) {
    ck = io::load_checkpoint(*resume);
    ck.config.training.epochs = cfg.training.epochs;
  } else {
    cfg.validate();
    ck.config = cfg;
    ck.state = Trainer::initial_state(cfg.denoiser, cfg.training.adam,
                                      Rng(derive_seed(cfg.require_seed(), train_stream)));
  }
  if (dataset[0].width() != ck.config.resolution || dataset[0].height() != ck.config.resolution)
    throw ConfigError("dataset resolution " + std::to_string(dataset[0].width()) + "x" +
                      std::to_string(dataset[0].height()) + " does not match config resolution " +
                      std::to_string(ck.config.resolution));
  ensure_dir(out_dir);
  TrainOutcome outcome{out_dir / "checkpoint.vgc", out_dir / "loss_history.csv", {}};

  Trainer trainer(dataset, ck.config.denoiser, ck.config.loss, ck.config.schedule.build(),
                  ck.config.training, std::move(ck.state));
  const std::size_t start_epoch = ck.epoch;
  auto snapshot = [&](std::size_t epoch) {
    io::Checkpoint out{ck.config, epoch, trainer.state()};
    io::save_checkpoint(outcome.checkpoint, out);
    return out;
  };
  outcome.final_state = snapshot(start_epoch);
  try {
    for (std::size_t e = 1; e <= ck.config.training.epochs; ++e) {
      const double loss = trainer.run_epoch();
      if (log) *log << "epoch " << (start_epoch + e) << " loss " << loss << std::endl;
      outcome.final_state = snapshot(start_epoch + e);
    }
  } catch (const NumericalError&) {
    write_loss_csv(outcome.loss_csv, trainer.state().loss_history);
    throw;
  }
  write_loss_csv(outcome.loss_csv, outcome.final_state.state.loss_history);
  return outcome;
}

// ---------------------------------------------------------------------------
// sample

inline constexpr std::size_t sample_chunk = 16;

/// n samples from a checkpoint, drawn in chunks of sample_chunk from one
/// RNG stream seeded by `seed`.
inline Tensor sample_tensor(const io::Checkpoint& ck, std::size_t n, std::uint64_t seed) {
  const auto& cfg = ck.config;
  const auto schedule = cfg.schedule.build();
  const UNet<float> net(cfg.denoiser, ck.state.params);
  Rng rng(derive_seed(seed, sample_stream));
  std::vector<float> all;
  all.reserve(n * 2 * cfg.resolution * cfg.resolution);
  for (std::size_t start = 0; start < n; start += sample_chunk) {
    const std::size_t count = std::min(sample_chunk, n - start);
    const auto x = ddpm_sample<float>(net, schedule, rng, {count, 2, cfg.resolution, cfg.resolution});
    all.insert(all.end(), x.values().begin(), x.values().end());
  }
  if (n == 0) return Tensor();
  return Tensor({n, 2, cfg.resolution, cfg.resolution}, std::move(all));
}

struct SampleOutcome {
  std::vector<AVMask> masks;
  std::vector<fs::path> raw_files;
  std::vector<fs::path> mask_files;
};

/// Writes out_dir/raw/sample_NNNN.png (grayscale pair) and
/// out_dir/masks/sample_NNNN.png (mask convention) for each of n samples.
inline SampleOutcome cmd_sample(const fs::path& checkpoint, std::size_t n, std::uint64_t seed,
                                const fs::path& out_dir, double threshold = 0.0) {
  const auto ck = io::load_checkpoint(checkpoint);  // rejects corrupt files before any compute
  if (!(threshold > -1.0 && threshold < 1.0))
    throw ParameterError("binarization threshold must be in (-1, 1)");
  SampleOutcome out;
  if (n == 0) return out;
  const auto x = sample_tensor(ck, n, seed);
  out.masks = binarize(x, threshold);
  ensure_dir(out_dir / "raw");
  ensure_dir(out_dir / "masks");
  for (std::size_t i = 0; i < n; ++i) {
    const auto name = indexed_name("sample_", i, ".png");
    out.raw_files.push_back(out_dir / "raw" / name);
    out.mask_files.push_back(out_dir / "masks" / name);
    io::write_raw_sample_png(out.raw_files.back(), x, i);
    io::write_mask_png(out.mask_files.back(), out.masks[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// metrics

inline json aggregate_reports(const std::vector<StructReport>& reports,
                              const std::vector<AVMask>& masks, double empty_threshold) {
  json agg = {{"count", reports.size()}};
  if (reports.empty()) {
    agg["empty_sample_rate"] = nullptr;
    return agg;
  }
  auto mean_of = [&](auto field) {
    double s = 0.0;
    for (const auto& r : reports) s += double(field(r));
    return s / double(reports.size());
  };
  for (const char* ch : {"artery", "vein"}) {
    const bool artery = std::string(ch) == "artery";
    auto pick = [artery](const StructReport& r) -> const ChannelReport& { return artery ? r.artery : r.vein; };
    agg["mean"][ch] = {
        {"component_count", mean_of([&](const auto& r) { return pick(r).component_count; })},
        {"branch_point_count", mean_of([&](const auto& r) { return pick(r).branch_point_count; })},
        {"trifurcation_count", mean_of([&](const auto& r) { return pick(r).trifurcation_count; })},
        {"loop_count", mean_of([&](const auto& r) { return pick(r).loop_count; })},
        {"foreground_fraction", mean_of([&](const auto& r) { return pick(r).foreground_fraction; })}};
  }
  agg["mean"]["crossing_pixel_count"] = mean_of([](const auto& r) { return r.crossing_pixel_count; });
  double fg = 0.0;
  for (const auto& m : masks) fg += m.foreground_fraction();
  agg["mean_foreground_fraction"] = fg / double(masks.size());
  agg["empty_sample_rate"] = empty_sample_rate(masks, empty_threshold);
  return agg;
}

/// Per-file StructReport for every conformant PNG in `dir`, plus aggregate
/// means and the empty-sample rate. Non-conformant PNGs are listed under
/// "skipped" with the reason.
inline json cmd_metrics(const fs::path& dir, std::size_t window_radius = 1,
                        double empty_threshold = default_empty_threshold,
                        std::ostream* warn = nullptr) {
  json files = json::array(), skipped = json::array();
  std::vector<StructReport> reports;
  std::vector<AVMask> masks;
  for (const auto& f : png_files(dir)) {
    try {
      auto m = io::read_mask_png(f);
      reports.push_back(struct_report(m, window_radius, empty_threshold));
      files.push_back({{"file", f.filename().string()}, {"report", io::to_json(reports.back())}});
      masks.push_back(std::move(m));
    } catch (const FormatError& e) {
      if (warn) *warn << "warning: skipping " << f.filename().string() << ": " << e.what() << '\n';
      skipped.push_back({{"file", f.filename().string()}, {"reason", e.what()}});
    }
  }
  return {{"window_radius", window_radius},
          {"empty_threshold", empty_threshold},
          {"files", files},
          {"skipped", skipped},
          {"aggregate", aggregate_reports(reports, masks, empty_threshold)}};
}

// ---------------------------------------------------------------------------
// compare-loss

inline json without_loss(json cfg) {
  cfg.erase("loss");
  return cfg;
}

/// Trains one model per loss variant on a shared synthetic dataset with
/// shared seeds, samples n_samples from each and reports empty-sample rate
/// and mean foreground fraction per arm. Results go to out_dir/compare.json.
inline json cmd_compare_loss(const RunConfig& base, std::size_t n_samples, const fs::path& out_dir,
                             std::ostream* log = nullptr) {
  base.validate();
  const auto seed = base.require_seed();
  ensure_dir(out_dir);
  const auto data_dir = out_dir / "data";
  const auto manifest = cmd_synth_data(base, base.dataset_size, data_dir);
  const auto dataset = load_mask_dir(data_dir);
  double train_fg = 0.0;
  for (const auto& m : dataset) train_fg += m.foreground_fraction();
  train_fg /= double(dataset.size());
  const std::size_t steps_per_epoch =
      (dataset.size() + base.training.batch_size - 1) / base.training.batch_size;

  json arms = json::array();
  for (const auto variant : {LossVariant::simple, LossVariant::vessel}) {
    RunConfig cfg = base;
    cfg.loss.variant = variant;
    const auto arm_dir = out_dir / to_string(variant);
    if (log) *log << "== arm " << to_string(variant) << '\n';
    const auto trained = cmd_train(cfg, data_dir, arm_dir / "train", std::nullopt, log);
    const auto sampled = cmd_sample(trained.checkpoint, n_samples, seed, arm_dir / "samples");
    double fg = 0.0;
    for (const auto& m : sampled.masks) fg += m.foreground_fraction();
    const auto cfg_json = io::to_json(trained.final_state.config);
    const auto& history = trained.final_state.state.loss_history;
    arms.push_back({
        {"label", to_string(variant)},
        {"config", cfg_json},
        {"config_digest", io::digest(cfg_json)},
        {"config_digest_excluding_loss", io::digest(without_loss(cfg_json))},
        {"dataset_manifest_digest", io::digest(manifest)},
        {"training_steps", steps_per_epoch * cfg.training.epochs},
        {"final_epoch_loss", history.empty() ? json(nullptr) : json(history.back())},
        {"samples", n_samples},
        {"empty_sample_rate", n_samples ? json(empty_sample_rate(sampled.masks)) : json(nullptr)},
        {"mean_foreground_fraction", n_samples ? json(fg / double(n_samples)) : json(nullptr)},
    });
  }
  json result = {{"dataset",
                  {{"count", dataset.size()},
                   {"manifest_digest", io::digest(manifest)},
                   {"mean_foreground_fraction", train_fg}}},
                 {"empty_threshold", default_empty_threshold},
                 {"arms", arms}};
  io::write_json_file(out_dir / "compare.json", result);
  return result;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradCheckCase {
  std::string name;
  GradCheckSummary summary;
  bool passed = false;
};

/// Central-difference check of the analytic gradient of both losses on a
/// small denoiser, in double precision. A case passes when >= 95% of
/// coordinates agree to rel. err < 1e-3 and all agree to < 1e-2.
inline std::vector<GradCheckCase> run_gradcheck(std::uint64_t seed, double vessel_c = 2.0,
                                                std::size_t base_channels = 8,
                                                std::size_t resolution = 8) {
  DenoiserConfig cfg;
  cfg.base_channels = base_channels;
  cfg.depth = 1;
  cfg.time_embed_dim = 8;
  cfg.norm_groups = std::min<std::size_t>(4, base_channels);
  Rng rng(seed);
  const auto params = cast_params<double>(init_params(rng, cfg));
  const auto schedule = linear_schedule(10);

  VesselTreeConfig vcfg;
  vcfg.width = vcfg.height = resolution;
  vcfg.seed = seed;
  vcfg.disc_radius = 0.1;
  vcfg.root_width = 1.5;
  std::vector<AVMask> masks{generate_mask(vcfg)};
  vcfg.seed = seed + 1;
  masks.push_back(generate_mask(vcfg));
  const auto batch = make_batch<double>(masks_to_tensor<double>(masks), schedule, rng);

  std::vector<GradCheckCase> cases;
  for (const LossConfig loss : {LossConfig{LossVariant::simple, 0.0}, LossConfig{LossVariant::vessel, vessel_c}}) {
    auto evaluate = [&](const BasicParams<double>& p) {
      BasicRecord<double> rec;
      const UNet<double> net(cfg, p);
      return rec.value(diffusion_loss(rec, net, batch, schedule, loss)).item();
    };
    BasicRecord<double> rec;
    const UNet<double> net(cfg, params);
    const auto analytic = rec.backward(diffusion_loss(rec, net, batch, schedule, loss));
    const auto numeric = finite_diff_grad<double>(evaluate, params, 1e-5);
    GradCheckCase c;
    c.name = std::string("loss_") + to_string(loss.variant);
    c.summary = compare_gradients(analytic, numeric, 1e-3, 1e-7);
    c.passed = c.summary.fraction_tight() >= 0.95 && c.summary.max_rel_error < 1e-2;
    cases.push_back(std::move(c));
  }
  return cases;
}

}  // namespace vesselgen::cli
