#include "rseg/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "rseg/random.hpp"

namespace rseg {

std::string_view to_string(LabelSource source) { return source == LabelSource::Clean ? "clean" : "noisy"; }

LabelSource parse_label_source(std::string_view s) {
  if (s == "clean") return LabelSource::Clean;
  if (s == "noisy") return LabelSource::Noisy;
  throw ConfigError("unknown label source '" + std::string(s) + "' (expected clean or noisy)");
}

Adam::Adam(const ParameterSet& like, AdamConfig config) : config_(config) {
  if (!(config.lr > 0.0) || !(config.beta1 >= 0.0 && config.beta1 < 1.0) || !(config.beta2 >= 0.0 && config.beta2 < 1.0) ||
      !(config.eps > 0.0))
    throw ConfigError("adam: invalid hyper-parameters");
  for (const auto& t : like) {
    m_.push_back(Eigen::VectorXf::Zero(t.value.size()));
    v_.push_back(Eigen::VectorXf::Zero(t.value.size()));
  }
}

void Adam::step(ParameterSet& params, const ParameterSet& grads) {
  if (params.count() != m_.size() || grads.count() != m_.size()) throw ShapeError("adam: parameter count changed");
  ++t_;
  const float b1 = float(config_.beta1), b2 = float(config_.beta2);
  const float correction1 = float(1.0 - std::pow(config_.beta1, double(t_)));
  const float correction2 = float(1.0 - std::pow(config_.beta2, double(t_)));
  const float lr = float(config_.lr), eps = float(config_.eps);
  for (std::size_t i = 0; i < m_.size(); ++i) {
    const auto& g = grads[i].value.vec();
    m_[i] = b1 * m_[i] + (1.0f - b1) * g;
    v_[i] = b2 * v_[i] + (1.0f - b2) * g.cwiseProduct(g);
    params[i].value.vec().array() -=
        lr * (m_[i].array() / correction1) / ((v_[i].array() / correction2).sqrt() + eps);
  }
}

void TrainConfig::validate() const {
  network.validate();
  loss.validate();
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (warmup_epochs < 0 || warmup_epochs > epochs) throw ConfigError("train: warmup_epochs must lie in [0, epochs]");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  (void)Adam(ParameterSet{}, optimizer);
}

namespace {

std::string format_g(double v, int digits = 9) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

std::string describe(const AdamConfig& c) {
  return "adam lr=" + format_g(c.lr) + " betas=(" + format_g(c.beta1) + "," + format_g(c.beta2) + ") eps=" + format_g(c.eps);
}

LabelBatch gather(const LabelBatch& labels, std::span<const std::size_t> indices) {
  LabelBatch out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(labels.at(i));
  return out;
}

constexpr std::size_t kEvalBatch = 8;

}  // namespace

std::string TrainLog::to_csv() const {
  std::ostringstream os;
  os << "epoch,loss_kind,train_loss,val_mean_dice\n";
  for (const EpochRecord& r : epochs)
    os << r.epoch << ',' << to_string(r.loss_kind) << ',' << format_g(r.train_loss) << ','
       << format_g(r.val_mean_dice) << '\n';
  return os.str();
}

LossKind loss_kind_for_epoch(const TrainConfig& config, int epoch) {
  return epoch <= config.warmup_epochs ? LossKind::CE : config.loss.kind;
}

LabelBatch predict(const ParameterSet& params, const Dataset& dataset, std::span<const std::size_t> indices) {
  LabelBatch out;
  out.reserve(indices.size());
  for (std::size_t start = 0; start < indices.size(); start += kEvalBatch) {
    const auto chunk = indices.subspan(start, std::min(kEvalBatch, indices.size() - start));
    const Tensor probs = softmax_channels(forward(params, stack_images(dataset, chunk)));
    for (LabelMap& m : argmax_channels(probs)) out.push_back(std::move(m));
  }
  return out;
}

DiceReport evaluate(const ParameterSet& params, const Dataset& dataset, Split split, std::string model_tag) {
  const NetworkSpec& spec = params.spec();
  if (spec.num_classes != dataset.class_count)
    throw ConfigError("evaluate: network predicts " + std::to_string(spec.num_classes) + " classes, dataset has " +
                      std::to_string(dataset.class_count));
  if (spec.in_channels != 1) throw ConfigError("evaluate: datasets are single-channel");
  spec.check_resolution(dataset.height, dataset.width);
  const auto idx = dataset.indices(split);
  const LabelBatch pred = predict(params, dataset, idx);
  return dice_per_class(pred, gather(dataset.clean_labels, idx), dataset.class_count, std::move(model_tag));
}

DiceReport evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& data_dir, Split split,
                    std::string model_tag) {
  const ParameterSet params = load_checkpoint(checkpoint);
  return evaluate(params, read_dataset(data_dir), split, std::move(model_tag));
}

TrainResult train(const TrainConfig& config, const Dataset& dataset, const EpochCallback& on_epoch) {
  config.validate();
  dataset.validate();
  NetworkSpec spec = config.network;
  spec.seed = config.seed;
  if (spec.num_classes != dataset.class_count)
    throw ConfigError("train: network has " + std::to_string(spec.num_classes) + " classes, dataset has " +
                      std::to_string(dataset.class_count));
  if (spec.in_channels != 1) throw ConfigError("train: datasets are single-channel");
  spec.check_resolution(dataset.height, dataset.width);
  const std::vector<std::size_t> train_idx = dataset.indices(Split::Train);
  if (train_idx.empty()) throw ConfigError("train: dataset has no training samples");

  const LabelBatch& labels = config.label_source == LabelSource::Clean ? dataset.clean_labels : dataset.noisy_labels;
  const std::vector<double> frequencies = class_frequencies(gather(labels, train_idx), spec.num_classes);

  TrainResult result{build_and_init(spec), TrainLog{describe(config.optimizer), {}}};
  Adam adam(result.params, config.optimizer);
  const std::size_t batch = std::size_t(config.batch_size);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    LossConfig loss = config.loss;
    loss.kind = loss_kind_for_epoch(config, epoch);

    std::vector<std::size_t> order = train_idx;
    auto rng = seeded_engine({config.seed, std::uint64_t(epoch), kShuffleStream});
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::span<const std::size_t> chunk(order.data() + start, std::min(batch, order.size() - start));
      const auto cache = forward_cached(result.params, stack_images(dataset, chunk));
      const auto loss_result = compute_loss(loss, cache.logits, gather(labels, chunk), frequencies);
      if (!std::isfinite(loss_result.value))
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));
      adam.step(result.params, backward(result.params, cache, loss_result.grad_logits));
      loss_sum += loss_result.value * double(chunk.size());
    }

    const double val_dice = evaluate(result.params, dataset, Split::Val).mean_dice;
    result.log.epochs.push_back({epoch, loss.kind, loss_sum / double(order.size()), val_dice});
    if (on_epoch) on_epoch(epoch, result.params);
  }
  return result;
}

TrainResult train(const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  return train(config, read_dataset(config.data_dir), on_epoch);
}

std::string BetaTuning::to_csv() const {
  std::ostringstream os;
  os << "beta,val_mean_dice\n";
  for (const auto& [beta, dice] : table) os << format_g(beta, 17) << ',' << format_g(dice, 17) << '\n';
  return os.str();
}

BetaTuning tune_beta(const TrainConfig& config, const Dataset& dataset, std::span<const double> grid) {
  if (grid.empty()) throw ConfigError("tune_beta: empty beta grid");
  for (double b : grid)
    if (!(b > 0.0)) throw ConfigError("tune_beta: grid values must be > 0");
  BetaTuning out;
  bool have_best = false;
  double best_dice = 0.0;
  for (double beta : grid) {
    TrainConfig cfg = config;
    if (cfg.loss.kind == LossKind::CE) cfg.loss.kind = LossKind::BCE;
    cfg.loss.beta = beta;
    const TrainResult run = train(cfg, dataset);
    const double dice =
        run.log.epochs.empty() ? evaluate(run.params, dataset, Split::Val).mean_dice : run.log.epochs.back().val_mean_dice;
    out.table.emplace_back(beta, dice);
    if (!have_best || dice > best_dice || (dice == best_dice && beta < out.best_beta)) {
      have_best = true;
      best_dice = dice;
      out.best_beta = beta;
    }
  }
  return out;
}

BetaTuning tune_beta(const TrainConfig& config, std::span<const double> grid) {
  if (grid.empty()) throw ConfigError("tune_beta: empty beta grid");
  return tune_beta(config, read_dataset(config.data_dir), grid);
}

}  // namespace rseg
