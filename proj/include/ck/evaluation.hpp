#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ck/conversation.hpp"
#include "ck/embedding.hpp"
#include "ck/ingestion.hpp"
#include "ck/model.hpp"

namespace ck {

struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionMatrix&) const = default;
};

/// Errors: LengthMismatch, Empty.
ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> labels);

/// F1 of the positive class. A class that is neither predicted nor present
/// scores 1; any other zero denominator contributes 0.
double f1_positive(const ConfusionMatrix& cm);
/// F1 of the negative class (roles of tp/tn and fp/fn swapped).
double f1_negative(const ConfusionMatrix& cm);

double accuracy(std::span<const int> preds, std::span<const int> labels);
double macro_f1(std::span<const int> preds, std::span<const int> labels);

inline constexpr double kDecisionThreshold = 0.5;

/// p >= threshold is a positive prediction.
std::vector<int> threshold_predictions(std::span<const double> probs,
                                       double threshold = kDecisionThreshold);

struct ExampleResult {
  std::string conversation_id;
  std::string target_id;
  int label = 0;
  double p_positive = 0.0;
  bool fallback_used = false;
};

struct EvaluationReport {
  std::size_t examples = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double loss = 0.0;  // mean binary cross-entropy
  ConfusionMatrix confusion;
  /// Mean p(w|x) per window kind over all examples (empty windows count as 0).
  std::map<WindowKind, double> retrieval;
  std::size_t fallback_count = 0;
  std::size_t truncated_tokens = 0;
  std::vector<ExampleResult> results;
};

/// Errors: Empty, LengthMismatch.
EvaluationReport evaluate(const Model& model, std::span<const ExampleFeatures> features,
                          std::span<const LabeledExample> examples,
                          double threshold = kDecisionThreshold);

/// Extracts features for `examples` (which must resolve in `corpus`) and evaluates.
/// Errors: Empty, UnknownId, UnknownTarget, ProviderUnavailable.
EvaluationReport evaluate(const Model& model, const EmbeddingProvider& provider, const Corpus& corpus,
                          std::span<const LabeledExample> examples,
                          double threshold = kDecisionThreshold);

/// {"accuracy", "macro_f1", "confusion": {...}, "retrieval": {...}, ...}.
/// Per-example probabilities are included when `with_predictions` is set.
std::string report_json(const EvaluationReport& report, bool with_predictions = false);
std::string report_table(const EvaluationReport& report);

}  // namespace ck
