#include "ck/evaluation.hpp"

#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "ck/error.hpp"
#include "ck/training.hpp"

namespace ck {
namespace {

double f1_from(std::size_t tp, std::size_t fp, std::size_t fn) {
  if (tp + fp + fn == 0) return 1.0;  // class absent and never predicted
  const double precision = (tp + fp) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double recall = (tp + fn) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> labels) {
  if (preds.size() != labels.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(preds.size()) + " predictions for " +
                                               std::to_string(labels.size()) + " labels");
  }
  if (preds.empty()) throw Error(ErrorCode::Empty, "no predictions to score");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool p = preds[i] != 0;
    const bool y = labels[i] != 0;
    if (p && y) ++cm.tp;
    else if (p && !y) ++cm.fp;
    else if (!p && y) ++cm.fn;
    else ++cm.tn;
  }
  return cm;
}

double f1_positive(const ConfusionMatrix& cm) { return f1_from(cm.tp, cm.fp, cm.fn); }
double f1_negative(const ConfusionMatrix& cm) { return f1_from(cm.tn, cm.fn, cm.fp); }

double accuracy(std::span<const int> preds, std::span<const int> labels) {
  const auto cm = confusion(preds, labels);
  return static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
}

double macro_f1(std::span<const int> preds, std::span<const int> labels) {
  const auto cm = confusion(preds, labels);
  return 0.5 * (f1_positive(cm) + f1_negative(cm));
}

std::vector<int> threshold_predictions(std::span<const double> probs, double threshold) {
  std::vector<int> out;
  out.reserve(probs.size());
  for (double p : probs) out.push_back(p >= threshold ? 1 : 0);
  return out;
}

EvaluationReport evaluate(const Model& model, std::span<const ExampleFeatures> features,
                          std::span<const LabeledExample> examples, double threshold) {
  if (features.size() != examples.size()) {
    throw Error(ErrorCode::LengthMismatch, "features and examples differ in length");
  }
  if (examples.empty()) throw Error(ErrorCode::Empty, "evaluation set is empty");

  EvaluationReport report;
  report.examples = examples.size();
  for (auto kind : window_kinds(model.config.shape.family)) report.retrieval[kind] = 0.0;

  std::vector<double> probs;
  std::vector<int> labels;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto pred = predict(model, features[i]);
    probs.push_back(pred.p_positive);
    labels.push_back(examples[i].label);
    report.loss += bce_loss(pred.p_positive, examples[i].label);
    report.truncated_tokens += features[i].truncated;
    if (pred.fallback_used) ++report.fallback_count;
    for (const auto& w : pred.per_window) report.retrieval[w.kind] += w.retrieval;
    report.results.push_back({examples[i].conversation_id, examples[i].target_id, examples[i].label,
                              pred.p_positive, pred.fallback_used});
  }
  const double n = static_cast<double>(examples.size());
  report.loss /= n;
  for (auto& [_, v] : report.retrieval) v /= n;

  const auto preds = threshold_predictions(probs, threshold);
  report.confusion = confusion(preds, labels);
  report.accuracy = accuracy(preds, labels);
  report.macro_f1 = macro_f1(preds, labels);
  return report;
}

EvaluationReport evaluate(const Model& model, const EmbeddingProvider& provider, const Corpus& corpus,
                          std::span<const LabeledExample> examples, double threshold) {
  if (examples.empty()) throw Error(ErrorCode::Empty, "evaluation set is empty");
  const auto features = features_for(model, provider, corpus, examples);
  return evaluate(model, features, examples, threshold);
}

std::string report_json(const EvaluationReport& report, bool with_predictions) {
  nlohmann::ordered_json doc;
  doc["accuracy"] = report.accuracy;
  doc["macro_f1"] = report.macro_f1;
  doc["confusion"] = {{"tp", report.confusion.tp},
                      {"fp", report.confusion.fp},
                      {"tn", report.confusion.tn},
                      {"fn", report.confusion.fn}};
  doc["retrieval"] = nlohmann::ordered_json::object();
  for (const auto& [kind, mean] : report.retrieval) doc["retrieval"][std::string(to_string(kind))] = mean;
  doc["examples"] = report.examples;
  doc["loss"] = report.loss;
  doc["fallback_count"] = report.fallback_count;
  doc["truncated_tokens"] = report.truncated_tokens;
  if (with_predictions) {
    doc["predictions"] = nlohmann::ordered_json::array();
    for (const auto& r : report.results) {
      doc["predictions"].push_back({{"conversation_id", r.conversation_id},
                                    {"target_id", r.target_id},
                                    {"label", r.label},
                                    {"p_positive", r.p_positive},
                                    {"fallback_used", r.fallback_used}});
    }
  }
  return doc.dump(2);
}

std::string report_table(const EvaluationReport& report) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "examples   %zu (fallback %zu)\n", report.examples, report.fallback_count);
  out << line;
  std::snprintf(line, sizeof line, "accuracy   %.4f\nmacro-F1   %.4f\nloss       %.4f\n", report.accuracy,
                report.macro_f1, report.loss);
  out << line;
  const auto& cm = report.confusion;
  out << "confusion        pred=1   pred=0\n";
  std::snprintf(line, sizeof line, "  label=1   %8zu %8zu\n  label=0   %8zu %8zu\n", cm.tp, cm.fn, cm.fp, cm.tn);
  out << line;
  if (!report.retrieval.empty()) {
    out << "mean retrieval probability\n";
    for (const auto& [kind, mean] : report.retrieval) {
      std::snprintf(line, sizeof line, "  %-10s %.4f\n", std::string(to_string(kind)).c_str(), mean);
      out << line;
    }
  }
  return out.str();
}

}  // namespace ck
