#pragma once

#include <array>
#include <chrono>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "escape/core/rng.hpp"
#include "escape/corpus/records.hpp"
#include "escape/model/escape_model.hpp"
#include "escape/nn/adamw.hpp"

namespace escape::model {

/// One prepared record: tokens always, structure input when available.
struct Example {
  std::string id;
  std::vector<std::int32_t> tokens;
  std::vector<float> structure;  // image_side^2 values or empty
  corpus::LabelVector labels;
};

struct TrainOptions {
  int epochs = 100;
  int batch_size = 64;
  /// Samples per forward/backward pass inside a batch; gradients of the
  /// micro-batches are summed before the optimizer step.
  int micro_batch = 8;
  nn::AdamWOptions optimizer;
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double seconds = 0.0;
};

// Stream labels for CounterRng::fork.
inline constexpr std::uint64_t kInitStream = 1;
inline constexpr std::uint64_t kShuffleStream = 2;
inline constexpr std::uint64_t kDropoutStream = 3;

inline Batch make_batch(std::span<const Example* const> items, const ModelConfig& config) {
  Batch batch;
  batch.size = static_cast<std::int64_t>(items.size());
  const bool with_structure = uses_structure(config.mode);
  const auto image = static_cast<std::size_t>(config.image_side * config.image_side);
  for (const Example* e : items) {
    if (static_cast<std::int64_t>(e->tokens.size()) != config.seq_len)
      throw Error(ErrorCode::kBadShape, e->id + ": expected " + std::to_string(config.seq_len) + " tokens");
    batch.tokens.insert(batch.tokens.end(), e->tokens.begin(), e->tokens.end());
    if (!with_structure) continue;
    if (e->structure.size() != image)
      throw Error(ErrorCode::kMissingModality, e->id + ": structure input missing or wrong size");
    batch.structure.insert(batch.structure.end(), e->structure.begin(), e->structure.end());
  }
  return batch;
}

template <class T>
nn::Tensor<T> label_targets(std::span<const Example* const> items, std::int64_t classes) {
  nn::Tensor<T> t({static_cast<std::int64_t>(items.size()), classes});
  for (std::size_t i = 0; i < items.size(); ++i)
    for (std::int64_t c = 0; c < classes; ++c) t[i * static_cast<std::size_t>(classes) + c] = items[i]->labels[c] ? T(1) : T(0);
  return t;
}

/// Mini-batch AdamW training with BCE-on-logits loss. Batches are drawn from
/// a seeded shuffle every epoch (the final partial batch is kept) and dropout
/// is active. Returns the last epoch's mean training loss.
template <class T>
double train(EscapeModel<T>& model, nn::AdamW<T>& optimizer, const std::vector<Example>& data,
             const TrainOptions& options, std::uint64_t seed,
             const std::function<void(const EpochLog&)>& on_epoch = {}) {
  if (data.empty()) throw Error(ErrorCode::kEmptyFold, "no training examples");
  if (options.batch_size <= 0 || options.micro_batch <= 0 || options.epochs < 0)
    throw Error(ErrorCode::kUsage, "batch sizes must be positive and epochs non-negative");
  const auto& config = model.config();
  CounterRng root(seed);
  CounterRng shuffle_rng = root.fork(kShuffleStream);
  CounterRng dropout_rng = root.fork(kDropoutStream);
  std::vector<std::size_t> order(data.size());
  double last_loss = 0.0;
  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), 0);
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(options.batch_size));
      const T normalizer = static_cast<T>((end - begin) * static_cast<std::size_t>(config.num_classes));
      model.parameters().zero_grad();
      for (std::size_t mb = begin; mb < end; mb += static_cast<std::size_t>(options.micro_batch)) {
        const std::size_t mb_end = std::min(end, mb + static_cast<std::size_t>(options.micro_batch));
        std::vector<const Example*> items;
        for (std::size_t i = mb; i < mb_end; ++i) items.push_back(&data[order[i]]);
        nn::Tape<T> tape;
        const auto logits = model.forward(tape, make_batch(items, config), dropout_rng, true);
        const auto loss = nn::bce_with_logits(logits, label_targets<T>(items, config.num_classes), normalizer);
        epoch_loss += static_cast<double>(loss.value().item()) * static_cast<double>(end - begin);
        tape.backward(loss);
      }
      optimizer.step();
    }
    last_loss = epoch_loss / static_cast<double>(data.size());
    if (on_epoch)
      on_epoch({epoch, last_loss, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()});
  }
  return last_loss;
}

/// Inference logits, one row of num_classes per example, in input order.
template <class T>
std::vector<std::vector<double>> predict_logits(const EscapeModel<T>& model, const std::vector<Example>& data,
                                                int micro_batch = 8) {
  std::vector<std::vector<double>> out;
  CounterRng unused(0);
  const auto classes = static_cast<std::size_t>(model.config().num_classes);
  for (std::size_t begin = 0; begin < data.size(); begin += static_cast<std::size_t>(micro_batch)) {
    const std::size_t end = std::min(data.size(), begin + static_cast<std::size_t>(micro_batch));
    std::vector<const Example*> items;
    for (std::size_t i = begin; i < end; ++i) items.push_back(&data[i]);
    nn::Tape<T> tape;
    const auto logits = model.forward(tape, make_batch(items, model.config()), unused, false);
    for (std::size_t i = 0; i < items.size(); ++i) {
      std::vector<double> row(classes);
      for (std::size_t c = 0; c < classes; ++c) row[c] = static_cast<double>(logits.value()[i * classes + c]);
      out.push_back(std::move(row));
    }
  }
  return out;
}

}  // namespace escape::model
