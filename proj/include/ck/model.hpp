#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ck/conversation.hpp"
#include "ck/embedding.hpp"
#include "ck/windows.hpp"

namespace ck {

/// One-hidden-layer ReLU network with a two-way softmax output.
struct HeadParams {
  Matrix hidden_w;  // h x d_in
  Vector hidden_b;  // h
  Matrix output_w;  // 2 x h
  Vector output_b;  // 2

  std::size_t input_dim() const { return static_cast<std::size_t>(hidden_w.cols()); }
  std::size_t hidden_dim() const { return static_cast<std::size_t>(hidden_w.rows()); }
};

struct ModelParams {
  ProjectionParams projection;
  HeadParams head;

  /// Visits every trainable tensor in a fixed order. The callback receives the
  /// tensor name, its rows and columns, and a mutable view over its
  /// column-major storage.
  void for_each_tensor(
      const std::function<void(std::string_view, std::size_t, std::size_t, std::span<double>)>& fn);
  void for_each_tensor(const std::function<void(std::string_view, std::size_t, std::size_t,
                                                std::span<const double>)>& fn) const;

  std::size_t parameter_count() const;
  /// Same shapes, all zeros.
  ModelParams zeros_like() const;
};

struct ModelConfig {
  KernelShape shape;
  std::size_t model_dim = 0;  // 0 means "same as the backbone"
  std::size_t hidden = 128;
  std::size_t tokens_per_comment = 64;
  std::size_t max_join_length = 512;
};

struct Model {
  ModelConfig config;
  ModelParams params;

  /// Projections start at identity plus uniform noise in [-0.01, 0.01]; the
  /// head is Xavier-uniform with zero biases.
  static Model initialize(ModelConfig config, std::size_t backbone_dim, std::uint64_t seed);

  std::size_t backbone_dim() const { return params.projection.backbone_dim(); }
  JoinOptions join_options() const {
    return JoinOptions{config.tokens_per_comment, config.max_join_length};
  }
};

/// Backbone outputs for one target: everything the trainable part consumes.
/// The backbone is frozen, so these are computed once per example.
struct ExampleFeatures {
  WindowSet windows;
  Vector target;                    // backbone(target text)
  std::vector<Vector> window_mean;  // mean backbone(member); empty when masked
  std::vector<Vector> joined;       // backbone(join(target, window)); empty when masked
  Vector fallback;                  // backbone(join(target, {})); set only when all masked
  std::size_t truncated = 0;

  bool fallback_used() const { return windows.all_masked(); }
};

ExampleFeatures extract_features(const Model& model, const EmbeddingProvider& provider,
                                 const ConversationTree& tree, std::string_view target_id);

struct FeatureRequest {
  const ConversationTree* tree;
  std::string target_id;
};

/// Batched extraction: texts are deduplicated and sent to the provider in
/// chunks of `chunk` inputs.
std::vector<ExampleFeatures> extract_features(const Model& model, const EmbeddingProvider& provider,
                                              std::span<const FeatureRequest> requests,
                                              std::size_t chunk = 256);

struct RetrievalDistribution {
  std::vector<double> probs;
  std::vector<bool> mask;
};

/// Inner product. Errors: DimensionMismatch.
double relevance(const Vector& target_emb, const Vector& window_emb);

/// Max-subtracted softmax over the unmasked entries; masked entries get exactly 0.
/// Errors: AllMasked, DimensionMismatch (scores/mask length differ).
RetrievalDistribution retrieval_distribution(std::span<const double> scores,
                                             const std::vector<bool>& mask);

/// (p(y=0), p(y=1)) for one encoder embedding. Errors: DimensionMismatch.
std::array<double, 2> classify_given_window(const HeadParams& head, const Vector& encoder_emb);

struct WindowPrediction {
  WindowKind kind;
  std::vector<std::string> member_ids;
  double retrieval = 0.0;             // p(w | x)
  std::optional<double> p_positive;   // p(y=1 | w, x); absent for empty windows
};

struct Prediction {
  double p_positive = 0.0;
  std::vector<WindowPrediction> per_window;
  bool fallback_used = false;
};

/// Intermediate values of one forward pass, kept for backpropagation.
struct ForwardPass {
  Vector target_proj;                   // W_comment * target
  std::vector<Vector> window_proj;      // W_window * mean; empty when masked
  std::vector<double> scores;           // relevance; 0 when masked
  RetrievalDistribution retrieval;      // unused on the fallback path
  std::vector<Vector> hidden_pre;       // per encoder input (one entry on fallback)
  std::vector<std::array<double, 2>> class_probs;
  double p_positive = 0.0;
  bool fallback = false;
};

ForwardPass forward(const Model& model, const ExampleFeatures& features);
Prediction predict(const Model& model, const ExampleFeatures& features);

/// p(y=1|x) = sum_w p(y=1|w,x) p(w|x) over the non-empty windows, or the
/// context-free head output when every window is empty.
/// Errors: UnknownTarget, ProviderUnavailable, DimensionMismatch.
Prediction marginal_predict(const Model& model, const EmbeddingProvider& provider,
                            const ConversationTree& tree, std::string_view target_id);

}  // namespace ck
