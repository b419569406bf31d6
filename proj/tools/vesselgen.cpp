// vesselgen: synthetic A/V vessel masks with a diffusion model.
//
//   vesselgen synth-data   --seed 1 --n 500 --out data/
//   vesselgen train        --config run.json --data data/ --out run/
//   vesselgen sample       --checkpoint run/checkpoint.vgc --n 16 --seed 7 --out samples/
//   vesselgen metrics      --dir samples/masks
//   vesselgen compare-loss --config run.json --samples 64 --out cmp/
//   vesselgen gradcheck
//
// Exit codes: 0 success, 1 usage/config error, 2 I/O error, 3 numerical failure.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "vesselgen/cli/commands.hpp"

namespace {

using namespace vesselgen;
using io::RunConfig;
namespace fs = std::filesystem;

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> resolution, steps, base_channels, depth, epochs, batch_size, dataset_size;
  std::optional<double> beta_start, beta_end, c, learning_rate;
  std::optional<std::string> loss;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON run config")->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "random seed (required unless set in the config)");
    app->add_option("--resolution", resolution, "mask side length in pixels");
    app->add_option("--steps", steps, "diffusion steps T");
    app->add_option("--beta-start", beta_start);
    app->add_option("--beta-end", beta_end);
    app->add_option("--base-channels", base_channels);
    app->add_option("--depth", depth);
    app->add_option("--loss", loss, "simple or vessel")->check(CLI::IsMember({"simple", "vessel"}));
    app->add_option("--c", c, "vessel loss exponent weight");
    app->add_option("--epochs", epochs);
    app->add_option("--batch-size", batch_size);
    app->add_option("--lr", learning_rate);
    app->add_option("--dataset-size", dataset_size);
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config_path.empty()) cfg = io::load_config(config_path);
    if (resolution) {
      io::json j = {{"resolution", *resolution}};
      cfg = io::config_from_json(j, cfg);
    }
    if (seed) cfg.seed = seed;
    if (steps) cfg.schedule.steps = *steps;
    if (beta_start) cfg.schedule.beta_start = *beta_start;
    if (beta_end) cfg.schedule.beta_end = *beta_end;
    if (base_channels) cfg.denoiser.base_channels = *base_channels;
    if (depth) cfg.denoiser.depth = *depth;
    if (loss) cfg.loss.variant = parse_loss_variant(*loss);
    if (c) cfg.loss.c = *c;
    if (epochs) cfg.training.epochs = *epochs;
    if (batch_size) cfg.training.batch_size = *batch_size;
    if (learning_rate) cfg.training.adam.learning_rate = *learning_rate;
    if (dataset_size) cfg.dataset_size = *dataset_size;
    return cfg;
  }
};

int run(int argc, char** argv) {
  CLI::App app{"Diffusion-based generator and metrics for artery/vein vessel masks"};
  app.require_subcommand(1);

  Overrides synth_o;
  std::optional<std::size_t> synth_n;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth-data", "write procedural A/V masks and a manifest");
  synth_o.attach(synth);
  synth->add_option("--n", synth_n, "number of masks (default: dataset_size)");
  synth->add_option("--out", synth_out)->required();

  Overrides train_o;
  std::string train_data, train_out, train_resume;
  auto* train = app.add_subcommand("train", "train the noise predictor on a mask directory");
  train_o.attach(train);
  train->add_option("--data", train_data, "mask directory (default: dataset_dir from config)");
  train->add_option("--out", train_out, "output directory (default: output_dir from config)");
  train->add_option("--resume", train_resume, "continue from a checkpoint for --epochs more epochs")
      ->check(CLI::ExistingFile);

  std::string sample_ckpt, sample_out;
  std::size_t sample_n = 16;
  std::uint64_t sample_seed = 0;
  double sample_threshold = 0.0;
  auto* sample = app.add_subcommand("sample", "draw masks from a trained checkpoint");
  sample->add_option("--checkpoint", sample_ckpt)->required();
  sample->add_option("--n", sample_n);
  sample->add_option("--seed", sample_seed)->required();
  sample->add_option("--out", sample_out)->required();
  sample->add_option("--threshold", sample_threshold, "binarization threshold in [-1,1] space");

  std::string metrics_dir, metrics_out;
  std::size_t metrics_radius = 1;
  double metrics_empty = default_empty_threshold;
  auto* metrics = app.add_subcommand("metrics", "structural report for a directory of mask PNGs");
  metrics->add_option("--dir", metrics_dir)->required();
  metrics->add_option("--window-radius", metrics_radius);
  metrics->add_option("--empty-threshold", metrics_empty);
  metrics->add_option("--out", metrics_out, "write JSON here instead of stdout");

  Overrides cmp_o;
  std::size_t cmp_samples = 64;
  std::string cmp_out;
  auto* compare = app.add_subcommand("compare-loss", "train simple and vessel arms and compare samples");
  cmp_o.attach(compare);
  compare->add_option("--samples", cmp_samples, "samples per arm");
  compare->add_option("--out", cmp_out)->required();

  std::uint64_t gc_seed = 0;
  double gc_c = 2.0;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the loss gradients");
  gradcheck->add_option("--seed", gc_seed);
  gradcheck->add_option("--c", gc_c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::ok : cli::usage_error;
  }

  if (synth->parsed()) {
    const auto cfg = synth_o.resolve();
    const auto manifest = cli::cmd_synth_data(cfg, synth_n.value_or(cfg.dataset_size), synth_out);
    std::cout << "wrote " << manifest["files"].size() << " masks to " << synth_out << '\n';
  } else if (train->parsed()) {
    auto cfg = train_o.resolve();
    const fs::path data = train_data.empty() ? fs::path(cfg.dataset_dir) : fs::path(train_data);
    const fs::path out = train_out.empty() ? fs::path(cfg.output_dir) : fs::path(train_out);
    if (data.empty() || out.empty()) throw ConfigError("train needs --data and --out (or dataset_dir/output_dir in the config)");
    std::optional<fs::path> resume;
    if (!train_resume.empty()) resume = train_resume;
    const auto outcome = cli::cmd_train(cfg, data, out, resume, &std::cout);
    std::cout << "checkpoint " << outcome.checkpoint.string() << '\n';
  } else if (sample->parsed()) {
    const auto outcome = cli::cmd_sample(sample_ckpt, sample_n, sample_seed, sample_out, sample_threshold);
    std::cout << "wrote " << outcome.mask_files.size() << " samples to " << sample_out << '\n';
  } else if (metrics->parsed()) {
    const auto report = cli::cmd_metrics(metrics_dir, metrics_radius, metrics_empty, &std::cerr);
    if (metrics_out.empty()) {
      std::cout << report.dump(2) << '\n';
    } else {
      io::write_json_file(metrics_out, report);
    }
  } else if (compare->parsed()) {
    const auto result = cli::cmd_compare_loss(cmp_o.resolve(), cmp_samples, cmp_out, &std::cout);
    std::cout << result.dump(2) << '\n';
  } else if (gradcheck->parsed()) {
    bool all = true;
    for (const auto& c : cli::run_gradcheck(gc_seed, gc_c)) {
      std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.summary.coordinates
                << " coords, " << 100.0 * c.summary.fraction_tight() << "% < 1e-3, max rel err "
                << c.summary.max_rel_error << " at " << c.summary.worst << '\n';
      all = all && c.passed;
    }
    return all ? cli::ok : cli::numerical_failure;
  }
  return cli::ok;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const vesselgen::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return vesselgen::cli::numerical_failure;
  } catch (const vesselgen::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return vesselgen::cli::io_error;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return vesselgen::cli::usage_error;
  }
}
