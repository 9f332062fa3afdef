// Command-line front end: phantom generation, training, beta tuning,
// evaluation and the comparison suite.

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "rseg/harness.hpp"

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw rseg::FormatError("cannot write " + path);
  out << text;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size()) throw rseg::ConfigError("bad grid value '" + item + "'");
    grid.push_back(v);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return grid;
}

// Training flags shared by `train` and `tune-beta`. With --config, only
// flags given explicitly on the command line override the file.
struct TrainFlags {
  std::string data, config, loss = "bce", labels = "noisy";
  double beta = 1e-4, lr = 1e-3;
  int epochs = 10, warmup = 2, batch_size = 8, base_width = 16, depth = 3;
  std::uint64_t seed = 0;
  CLI::Option *loss_opt = nullptr, *beta_opt = nullptr, *epochs_opt = nullptr, *warmup_opt = nullptr,
              *labels_opt = nullptr, *seed_opt = nullptr, *batch_opt = nullptr, *lr_opt = nullptr,
              *width_opt = nullptr, *depth_opt = nullptr;

  void add(CLI::App* cmd, bool tuning) {
    cmd->add_option("--data", data, "Dataset directory")->required();
    cmd->add_option("--config", config, "key=value TrainConfig file");
    if (tuning) {
      loss_opt = cmd->add_option("--loss", loss, "bce | hybrid")->check(CLI::IsMember({"bce", "hybrid"}));
    } else {
      loss_opt = cmd->add_option("--loss", loss, "ce | bce | hybrid")->check(CLI::IsMember({"ce", "bce", "hybrid"}));
      beta_opt = cmd->add_option("--beta", beta, "Beta of the robust loss");
    }
    epochs_opt = cmd->add_option("--epochs", epochs);
    warmup_opt = cmd->add_option("--warmup", warmup, "CE warm-up epochs");
    labels_opt = cmd->add_option("--labels", labels, "clean | noisy")->check(CLI::IsMember({"clean", "noisy"}));
    seed_opt = cmd->add_option("--seed", seed);
    batch_opt = cmd->add_option("--batch-size", batch_size);
    lr_opt = cmd->add_option("--lr", lr);
    width_opt = cmd->add_option("--base-width", base_width);
    depth_opt = cmd->add_option("--depth", depth);
  }

  rseg::TrainConfig build() const {
    rseg::TrainConfig tc;
    tc.loss.kind = rseg::LossKind::BCE;
    const bool from_file = !config.empty();
    if (from_file) rseg::apply_train_config(tc, rseg::read_key_values(config));
    tc.data_dir = data;
    auto use = [&](const CLI::Option* opt) { return opt != nullptr && (!from_file || opt->count() > 0); };
    if (use(loss_opt)) tc.loss.kind = rseg::parse_loss_kind(loss);
    if (use(beta_opt)) tc.loss.beta = beta;
    if (use(epochs_opt)) tc.epochs = epochs;
    if (use(warmup_opt)) tc.warmup_epochs = warmup;
    if (use(labels_opt)) tc.label_source = rseg::parse_label_source(labels);
    if (use(seed_opt)) tc.seed = seed;
    if (use(batch_opt)) tc.batch_size = batch_size;
    if (use(lr_opt)) tc.optimizer.lr = lr;
    if (use(width_opt)) tc.network.base_width = base_width;
    if (use(depth_opt)) tc.network.depth = depth;
    return tc;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noisy-label robust head segmentation toolkit"};
  app.require_subcommand(1);

  // phantom-gen
  auto* gen = app.add_subcommand("phantom-gen", "Generate a synthetic head-phantom dataset");
  std::string gen_out, noise_preset = "default";
  std::size_t gen_count = 200;
  rseg::Index resolution = 64;
  std::uint64_t gen_seed = 0;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--count", gen_count, "Number of samples");
  gen->add_option("--resolution", resolution, "Image height and width");
  gen->add_option("--noise-preset", noise_preset, "default | none");
  gen->add_option("--seed", gen_seed);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a segmenter");
  TrainFlags train_flags;
  std::string ckpt_out, log_out;
  train_flags.add(train_cmd, false);
  train_cmd->add_option("--out", ckpt_out, "Checkpoint path")->required();
  train_cmd->add_option("--log", log_out, "Training log CSV");

  // tune-beta
  auto* tune = app.add_subcommand("tune-beta", "Select beta on the validation split");
  TrainFlags tune_flags;
  std::string grid_text = "1e-5,1e-4,1e-3,1e-2,1e-1", tune_out;
  tune_flags.add(tune, true);
  tune->add_option("--grid", grid_text, "Comma-separated beta values");
  tune->add_option("--out", tune_out, "Output CSV (beta,val_mean_dice)")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Score a checkpoint against clean labels");
  std::string eval_ckpt, eval_data, eval_split = "test", eval_out;
  eval->add_option("--ckpt", eval_ckpt)->required();
  eval->add_option("--data", eval_data)->required();
  eval->add_option("--split", eval_split)->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--out", eval_out, "Report CSV");

  // suite
  auto* suite = app.add_subcommand("suite", "Run the clean/noisy-CE/noisy-BCE comparison");
  std::string suite_cfg, suite_out;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  suite->add_option("--data-config", suite_cfg, "key=value suite config");
  suite->add_option("--seeds", seeds)->delimiter(',');
  suite->add_option("--out", suite_out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      rseg::PhantomSpec spec;
      spec.height = spec.width = resolution;
      spec.seed = gen_seed;
      const auto dataset =
          rseg::build_dataset(gen_count, spec, rseg::NoiseSpec::preset(noise_preset, gen_seed), {}, gen_seed);
      rseg::write_dataset(dataset, gen_out);
      std::cout << "wrote " << dataset.size() << " samples to " << gen_out << '\n';
    } else if (*train_cmd) {
      const rseg::TrainConfig config = train_flags.build();
      const rseg::TrainResult result = rseg::train(config, [](int epoch, const rseg::ParameterSet&) {
        std::cerr << "epoch " << epoch << " done\n";
      });
      rseg::save_checkpoint(result.params, ckpt_out);
      if (!log_out.empty()) write_text(log_out, result.log.to_csv());
      std::cout << result.log.optimizer << '\n' << result.log.to_csv();
    } else if (*tune) {
      const std::vector<double> grid = parse_grid(grid_text);
      const rseg::BetaTuning tuning = rseg::tune_beta(tune_flags.build(), grid);
      write_text(tune_out, tuning.to_csv());
      std::cout << tuning.to_csv() << "best beta " << tuning.best_beta << '\n';
    } else if (*eval) {
      const rseg::DiceReport report = rseg::evaluate(eval_ckpt, eval_data, rseg::parse_split(eval_split), "model");
      const std::vector<rseg::DiceReport> rows{report};
      if (!eval_out.empty()) write_text(eval_out, rseg::comparison_csv(rows));
      std::cout << rseg::render_comparison_table(rows);
    } else if (*suite) {
      rseg::SuiteConfig config;
      if (!suite_cfg.empty()) rseg::apply_suite_config(config, rseg::read_key_values(suite_cfg));
      const rseg::SuiteResult result = rseg::run_suite(config, seeds, suite_out);
      std::cout << result.table;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
