#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ck/embedding.hpp"
#include "ck/ingestion.hpp"
#include "ck/model.hpp"

namespace ck {

/// Head learning rate for the frozen hash backbone.
inline constexpr double kHashLearningRate = 1e-2;
/// Learning rate for transformer sidecar backbones.
inline constexpr double kSidecarLearningRate = 1e-5;

struct TrainConfig {
  std::size_t batch_size = 16;
  double learning_rate = kHashLearningRate;
  std::size_t epochs = 3;
  double warmup_fraction = 0.10;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
};

inline constexpr double kProbabilityFloor = 1e-7;

/// -[y ln p + (1-y) ln(1-p)] with p clamped to [1e-7, 1 - 1e-7].
double bce_loss(double p_positive, int label);

/// Linear warm-up from 0 over the first warmup_fraction * total_steps steps,
/// then constant.
double lr_at(const TrainConfig& config, std::size_t step, std::size_t total_steps);

struct LossAndGradient {
  double loss = 0.0;  // mean over the batch
  ModelParams gradient;
};

/// Mean batch loss and its gradient with respect to both projections and the
/// head. Gradients reach the projections only through the retrieval softmax.
/// `indices` selects a batch; empty means every example.
LossAndGradient loss_and_gradient(const Model& model, std::span<const ExampleFeatures> features,
                                  std::span<const int> labels,
                                  std::span<const std::size_t> indices = {});

double batch_loss(const Model& model, std::span<const ExampleFeatures> features,
                  std::span<const int> labels, std::span<const std::size_t> indices = {});

/// Convenience form over labelled examples. Errors: UnknownId, UnknownTarget.
LossAndGradient gradients(const Model& model, const EmbeddingProvider& provider, const Corpus& corpus,
                          std::span<const LabeledExample> batch);

class Adam {
 public:
  Adam(const ModelParams& like, const TrainConfig& config);

  void step(ModelParams& params, const ModelParams& gradient, double learning_rate);

  std::size_t steps() const { return steps_; }
  const ModelParams& first_moment() const { return m_; }
  const ModelParams& second_moment() const { return v_; }

 private:
  double beta1_;
  double beta2_;
  double epsilon_;
  std::size_t steps_ = 0;
  ModelParams m_;
  ModelParams v_;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double validation_loss = 0.0;
  double validation_accuracy = 0.0;
  double validation_macro_f1 = 0.0;
};

struct TrainState {
  Model model;              // parameters after the last step
  ModelParams best_params;  // parameters with the best validation macro-F1
  std::size_t best_epoch = 0;
  double best_macro_f1 = -1.0;
  std::size_t step = 0;
  std::vector<EpochStats> history;

  Model best_model() const {
    Model m = model;
    m.params = best_params;
    return m;
  }
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Seeded mini-batch Adam over precomputed features. Errors: EmptyDataset,
/// LengthMismatch.
TrainState train(Model model, std::span<const ExampleFeatures> train_features,
                 std::span<const int> train_labels, std::span<const ExampleFeatures> val_features,
                 std::span<const int> val_labels, const TrainConfig& config,
                 const EpochCallback& on_epoch = {});

/// Extracts features through `provider` and trains.
TrainState train(Model model, const EmbeddingProvider& provider, const Corpus& corpus,
                 std::span<const LabeledExample> train_set,
                 std::span<const LabeledExample> validation_set, const TrainConfig& config,
                 const EpochCallback& on_epoch = {});

/// Features for labelled examples resolved against a corpus.
std::vector<ExampleFeatures> features_for(const Model& model, const EmbeddingProvider& provider,
                                          const Corpus& corpus,
                                          std::span<const LabeledExample> examples);
std::vector<int> labels_of(std::span<const LabeledExample> examples);

}  // namespace ck
