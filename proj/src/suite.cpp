#include <fstream>

#include "byte_io.hpp"
#include "rseg/harness.hpp"

namespace rseg {

void SuiteConfig::validate() const {
  if (count < 5) throw ConfigError("suite: count must be >= 5");
  network.validate();
  if (network.num_classes != kNumClasses || network.in_channels != 1)
    throw ConfigError("suite: the head phantom needs in_channels=1 and num_classes=9");
  if (epochs < 0 || warmup_epochs < 0 || warmup_epochs > epochs) throw ConfigError("suite: invalid epoch counts");
  if (batch_size < 1) throw ConfigError("suite: batch_size must be >= 1");
  if (!(beta > 0.0)) throw ConfigError("suite: beta must be > 0");
  for (int c : hybrid_rare_classes)
    if (c < 0 || c >= kNumClasses) throw ConfigError("suite: hybrid rare class out of range");
  (void)NoiseSpec::preset(noise_preset);
}

Dataset suite_dataset(const SuiteConfig& config, std::uint64_t seed) {
  PhantomSpec phantom;
  phantom.height = phantom.width = config.resolution;
  phantom.seed = seed;
  return build_dataset(config.count, phantom, NoiseSpec::preset(config.noise_preset, seed), SplitFractions{}, seed);
}

TrainConfig suite_train_config(const SuiteConfig& config, std::uint64_t seed, LossKind kind, LabelSource source) {
  TrainConfig tc;
  tc.network = config.network;
  tc.optimizer = config.optimizer;
  tc.epochs = config.epochs;
  tc.warmup_epochs = config.warmup_epochs;
  tc.batch_size = config.batch_size;
  tc.seed = seed;
  tc.label_source = source;
  tc.loss.kind = kind;
  tc.loss.beta = config.beta;
  tc.loss.clamp_eps = config.clamp_eps;
  if (kind == LossKind::Hybrid) tc.loss.rare_class_set = config.hybrid_rare_classes;
  return tc;
}

std::vector<DiceReport> run_suite_seed(const SuiteConfig& config, std::uint64_t seed) {
  config.validate();
  const Dataset dataset = suite_dataset(config, seed);
  const auto test_idx = dataset.indices(Split::Test);
  LabelBatch clean, noisy;
  for (std::size_t i : test_idx) {
    clean.push_back(dataset.clean_labels[i]);
    noisy.push_back(dataset.noisy_labels[i]);
  }

  std::vector<DiceReport> rows;
  rows.push_back(dice_per_class(noisy, clean, kNumClasses, std::string(kNoisyLabelsTag)));

  struct Run {
    std::string_view tag;
    LossKind kind;
    LabelSource source;
  };
  std::vector<Run> runs{{kCleanCeTag, LossKind::CE, LabelSource::Clean},
                        {kNoisyCeTag, LossKind::CE, LabelSource::Noisy},
                        {kNoisyBceTag, LossKind::BCE, LabelSource::Noisy}};
  if (config.include_hybrid) runs.push_back({kNoisyHybridTag, LossKind::Hybrid, LabelSource::Noisy});
  for (const Run& run : runs) {
    const TrainResult trained = train(suite_train_config(config, seed, run.kind, run.source), dataset);
    rows.push_back(evaluate(trained.params, dataset, Split::Test, std::string(run.tag)));
  }
  return rows;
}

SuiteResult run_suite(const SuiteConfig& config, std::span<const std::uint64_t> seeds,
                      const std::filesystem::path& out_dir) {
  config.validate();
  if (seeds.empty()) throw ConfigError("suite: no seeds given");
  std::filesystem::create_directories(out_dir);

  SuiteResult result;
  for (std::uint64_t seed : seeds) {
    std::vector<DiceReport> rows;
    try {
      rows = run_suite_seed(config, seed);
    } catch (...) {
      std::vector<DiceReport> done;
      for (std::size_t i = 0; i < result.per_seed.size(); ++i)
        for (DiceReport r : result.per_seed[i]) {
          r.model_tag = "seed" + std::to_string(result.seeds[i]) + ":" + r.model_tag;
          done.push_back(std::move(r));
        }
      std::ofstream partial(out_dir / "partial_results.csv", std::ios::trunc);
      partial << "# failed at seed " << seed << '\n';
      if (!done.empty()) partial << comparison_csv(done);
      throw;
    }
    detail::write_file(out_dir / ("seed_" + std::to_string(seed) + ".csv"), comparison_csv(rows));
    result.seeds.push_back(seed);
    result.per_seed.push_back(std::move(rows));
  }

  const std::size_t n_rows = result.per_seed.front().size();
  for (std::size_t row = 0; row < n_rows; ++row) {
    std::vector<DiceReport> column;
    for (const auto& seed_rows : result.per_seed) column.push_back(seed_rows[row]);
    result.averaged.push_back(average_reports(column, column.front().model_tag));
  }

  std::string table;
  for (std::size_t i = 0; i < result.seeds.size(); ++i)
    table += "seed " + std::to_string(result.seeds[i]) + "\n" + render_comparison_table(result.per_seed[i]) + "\n";
  table += "mean over " + std::to_string(result.seeds.size()) + " seed(s)\n" + render_comparison_table(result.averaged);
  result.table = table;
  detail::write_file(out_dir / "averaged.csv", comparison_csv(result.averaged));
  detail::write_file(out_dir / "table.txt", result.table);
  return result;
}

}  // namespace rseg
