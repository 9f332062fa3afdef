#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rseg/losses.hpp"
#include "rseg/metrics.hpp"
#include "rseg/network.hpp"
#include "rseg/phantom.hpp"

namespace rseg {

enum class LabelSource { Clean, Noisy };

std::string_view to_string(LabelSource source);
LabelSource parse_label_source(std::string_view s);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias-corrected moments, p -= lr * m_hat / (sqrt(v_hat) + eps).
class Adam {
 public:
  Adam(const ParameterSet& like, AdamConfig config);

  void step(ParameterSet& params, const ParameterSet& grads);
  long long steps() const { return t_; }

 private:
  AdamConfig config_;
  long long t_ = 0;
  std::vector<Eigen::VectorXf> m_, v_;
};

struct TrainConfig {
  std::filesystem::path data_dir;
  /// Topology; the init seed is taken from `seed` below.
  NetworkSpec network;
  LossConfig loss;
  AdamConfig optimizer;
  int epochs = 10;
  /// Epochs trained with CE before switching to loss.kind.
  int warmup_epochs = 2;
  int batch_size = 8;
  std::uint64_t seed = 0;
  LabelSource label_source = LabelSource::Noisy;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  LossKind loss_kind = LossKind::CE;
  double train_loss = 0.0;
  double val_mean_dice = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainLog {
  /// Optimizer settings used for the run, e.g. "adam lr=0.001 ...".
  std::string optimizer;
  std::vector<EpochRecord> epochs;

  /// Columns: epoch,loss_kind,train_loss,val_mean_dice.
  std::string to_csv() const;

  friend bool operator==(const TrainLog&, const TrainLog&) = default;
};

struct TrainResult {
  ParameterSet params;
  TrainLog log;
};

/// Loss kind in effect during a 1-based epoch.
LossKind loss_kind_for_epoch(const TrainConfig& config, int epoch);

using EpochCallback = std::function<void(int epoch, const ParameterSet& params)>;

/**
 * Mini-batch Adam training on the train split.
 *
 * Each epoch visits the training samples in a permutation seeded by
 * (seed, epoch), so two runs with equal configs are bit-identical. After
 * every epoch the model is scored on the clean validation labels.
 */
TrainResult train(const TrainConfig& config, const Dataset& dataset, const EpochCallback& on_epoch = {});
/// Reads the dataset from config.data_dir first.
TrainResult train(const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Argmax segmentation of the selected samples.
LabelBatch predict(const ParameterSet& params, const Dataset& dataset, std::span<const std::size_t> indices);

/// Dice of the model's argmax segmentation against the clean labels of `split`.
DiceReport evaluate(const ParameterSet& params, const Dataset& dataset, Split split, std::string model_tag = {});
DiceReport evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& data_dir, Split split,
                    std::string model_tag = {});

struct BetaTuning {
  double best_beta = 0.0;
  /// (beta, final validation mean Dice) in grid order.
  std::vector<std::pair<double, double>> table;

  /// Columns: beta,val_mean_dice.
  std::string to_csv() const;
};

/// Trains one model per beta from the same seed and keeps the best validation Dice; ties go to the smaller beta.
BetaTuning tune_beta(const TrainConfig& config, const Dataset& dataset, std::span<const double> grid);
BetaTuning tune_beta(const TrainConfig& config, std::span<const double> grid);

struct SuiteConfig {
  std::size_t count = 200;
  Index resolution = 64;
  std::string noise_preset = "default";
  NetworkSpec network;
  AdamConfig optimizer;
  int epochs = 10;
  int warmup_epochs = 2;
  int batch_size = 8;
  double beta = 1e-4;
  double clamp_eps = 1e-7;
  /// Adds a "noisy-hybrid" row trained with CE on `hybrid_rare_classes`.
  bool include_hybrid = false;
  std::vector<int> hybrid_rare_classes = {int(Tissue::Eyes)};

  void validate() const;
};

// Row tags, in table order.
inline constexpr std::string_view kNoisyLabelsTag = "noisy-labels";
inline constexpr std::string_view kCleanCeTag = "clean-ce";
inline constexpr std::string_view kNoisyCeTag = "noisy-ce";
inline constexpr std::string_view kNoisyBceTag = "noisy-bce";
inline constexpr std::string_view kNoisyHybridTag = "noisy-hybrid";

struct SuiteResult {
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<DiceReport>> per_seed;
  std::vector<DiceReport> averaged;
  std::string table;
};

/// Dataset the suite builds for one seed.
Dataset suite_dataset(const SuiteConfig& config, std::uint64_t seed);

/// Training config the suite uses for one row.
TrainConfig suite_train_config(const SuiteConfig& config, std::uint64_t seed, LossKind kind, LabelSource source);

/// Reports for one seed: noisy labels vs clean, then each trained model on the clean test split.
std::vector<DiceReport> run_suite_seed(const SuiteConfig& config, std::uint64_t seed);

/**
 * Runs every seed and writes seed_<S>.csv, averaged.csv and table.txt into
 * out_dir. If a seed fails, completed rows go to partial_results.csv and the
 * error propagates.
 */
SuiteResult run_suite(const SuiteConfig& config, std::span<const std::uint64_t> seeds,
                      const std::filesystem::path& out_dir);

// key=value configuration files. Blank lines and '#' comments are skipped;
// unknown keys are rejected.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(std::string_view text);
KeyValues read_key_values(const std::filesystem::path& path);

/// Applies TrainConfig fields named by their member names (network and optimizer fields flattened).
void apply_train_config(TrainConfig& config, const KeyValues& values);
void apply_suite_config(SuiteConfig& config, const KeyValues& values);

}  // namespace rseg
