#include "ck/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ck/error.hpp"
#include "ck/evaluation.hpp"
#include "ck/rng.hpp"

namespace ck {

double bce_loss(double p_positive, int label) {
  const double p = std::clamp(p_positive, kProbabilityFloor, 1.0 - kProbabilityFloor);
  return label == 1 ? -std::log(p) : -std::log(1.0 - p);
}

double lr_at(const TrainConfig& config, std::size_t step, std::size_t total_steps) {
  const double warmup = config.warmup_fraction * static_cast<double>(total_steps);
  const auto s = static_cast<double>(step);
  if (warmup <= 0.0 || s >= warmup) return config.learning_rate;
  return config.learning_rate * s / warmup;
}

namespace {

// Head gradient of one example, summed over its encoder inputs (one per
// non-empty window). Each example's contribution is formed in full before it
// is added to `grad`, so the batch sum does not depend on how many windows
// each example had or on the order of the examples.
void head_backward(const HeadParams& head, const std::vector<const Vector*>& inputs,
                   const std::vector<const Vector*>& hidden_pre, const std::vector<double>& q,
                   const std::vector<double>& d_q, HeadParams& grad) {
  const auto n = static_cast<Eigen::Index>(inputs.size());
  Matrix x(head.hidden_w.cols(), n);
  Matrix hidden(head.hidden_w.rows(), n);
  Matrix d_logits(2, n);
  Matrix d_hidden(head.hidden_w.rows(), n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& pre = *hidden_pre[k];
    x.col(k) = *inputs[k];
    hidden.col(k) = pre.cwiseMax(0.0);
    // q = softmax(logits)[1]; dq/dlogit1 = q(1-q) = -dq/dlogit0.
    const double s = d_q[k] * q[k] * (1.0 - q[k]);
    d_logits.col(k) << -s, s;
    d_hidden.col(k) = head.output_w.transpose() * d_logits.col(k);
    for (Eigen::Index i = 0; i < pre.size(); ++i) {
      if (pre[i] <= 0.0) d_hidden(i, k) = 0.0;
    }
  }
  const Matrix d_output_w = d_logits * hidden.transpose();
  const Matrix d_hidden_w = d_hidden * x.transpose();
  grad.output_w += d_output_w;
  grad.output_b += d_logits.rowwise().sum();
  grad.hidden_w += d_hidden_w;
  grad.hidden_b += d_hidden.rowwise().sum();
}

// Accumulates weight * dL/dparams for one example into grad; returns the loss.
double accumulate(const Model& model, const ExampleFeatures& f, int label, double weight,
                  ModelParams& grad) {
  const auto pass = forward(model, f);
  const double p = pass.p_positive;
  const double loss = bce_loss(p, label);

  // Clamped region has zero slope.
  double d_p = 0.0;
  if (p > kProbabilityFloor && p < 1.0 - kProbabilityFloor) {
    d_p = label == 1 ? -1.0 / p : 1.0 / (1.0 - p);
  }
  d_p *= weight;
  if (d_p == 0.0) return loss;

  const auto& head = model.params.head;
  if (pass.fallback) {
    head_backward(head, {&f.fallback}, {&pass.hidden_pre[0]}, {pass.class_probs[0][1]}, {d_p}, grad.head);
    return loss;
  }

  const auto& probs = pass.retrieval.probs;
  std::vector<const Vector*> inputs, pre;
  std::vector<double> qs, d_qs;
  Vector d_target = Vector::Zero(pass.target_proj.size());
  Vector d_mean = Vector::Zero(f.target.size());
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (!f.windows.mask[k]) continue;
    const double q = pass.class_probs[k][1];
    inputs.push_back(&f.joined[k]);
    pre.push_back(&pass.hidden_pre[k]);
    qs.push_back(q);
    d_qs.push_back(d_p * probs[k]);
    // d p / d score_k = pi_k (q_k - p)
    const double d_score = d_p * probs[k] * (q - p);
    d_target += d_score * pass.window_proj[k];
    d_mean += d_score * f.window_mean[k];
  }
  head_backward(head, inputs, pre, qs, d_qs, grad.head);
  grad.projection.comment += d_target * f.target.transpose();
  grad.projection.window += pass.target_proj * d_mean.transpose();
  return loss;
}

std::vector<std::size_t> resolve(std::span<const std::size_t> indices, std::size_t n) {
  if (!indices.empty()) return {indices.begin(), indices.end()};
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  return all;
}

void check_lengths(std::size_t features, std::size_t labels) {
  if (features != labels) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(features) + " feature rows for " +
                                               std::to_string(labels) + " labels");
  }
}

}  // namespace

LossAndGradient loss_and_gradient(const Model& model, std::span<const ExampleFeatures> features,
                                  std::span<const int> labels, std::span<const std::size_t> indices) {
  check_lengths(features.size(), labels.size());
  const auto batch = resolve(indices, features.size());
  if (batch.empty()) throw Error(ErrorCode::EmptyDataset, "empty batch");
  const double weight = 1.0 / static_cast<double>(batch.size());

  LossAndGradient out{0.0, model.params.zeros_like()};
  for (auto i : batch) {
    out.loss += accumulate(model, features[i], labels[i], weight, out.gradient) * weight;
  }
  return out;
}

double batch_loss(const Model& model, std::span<const ExampleFeatures> features,
                  std::span<const int> labels, std::span<const std::size_t> indices) {
  check_lengths(features.size(), labels.size());
  const auto batch = resolve(indices, features.size());
  if (batch.empty()) throw Error(ErrorCode::EmptyDataset, "empty batch");
  double loss = 0.0;
  for (auto i : batch) loss += bce_loss(forward(model, features[i]).p_positive, labels[i]);
  return loss / static_cast<double>(batch.size());
}

std::vector<ExampleFeatures> features_for(const Model& model, const EmbeddingProvider& provider,
                                          const Corpus& corpus,
                                          std::span<const LabeledExample> examples) {
  std::vector<FeatureRequest> requests;
  requests.reserve(examples.size());
  for (const auto& ex : examples) {
    auto it = corpus.find(ex.conversation_id);
    if (it == corpus.end()) {
      throw Error(ErrorCode::UnknownId, "no conversation '" + ex.conversation_id + "'");
    }
    requests.push_back({&it->second, ex.target_id});
  }
  return extract_features(model, provider, requests);
}

std::vector<int> labels_of(std::span<const LabeledExample> examples) {
  std::vector<int> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(ex.label);
  return out;
}

LossAndGradient gradients(const Model& model, const EmbeddingProvider& provider, const Corpus& corpus,
                          std::span<const LabeledExample> batch) {
  const auto features = features_for(model, provider, corpus, batch);
  const auto labels = labels_of(batch);
  return loss_and_gradient(model, features, labels);
}

Adam::Adam(const ModelParams& like, const TrainConfig& config)
    : beta1_(config.beta1),
      beta2_(config.beta2),
      epsilon_(config.adam_epsilon),
      m_(like.zeros_like()),
      v_(like.zeros_like()) {}

void Adam::step(ModelParams& params, const ModelParams& gradient, double learning_rate) {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double correct1 = 1.0 - std::pow(beta1_, t);
  const double correct2 = 1.0 - std::pow(beta2_, t);

  std::vector<std::span<double>> p, m, v;
  std::vector<std::span<const double>> g;
  params.for_each_tensor([&](std::string_view, std::size_t, std::size_t, std::span<double> d) { p.push_back(d); });
  m_.for_each_tensor([&](std::string_view, std::size_t, std::size_t, std::span<double> d) { m.push_back(d); });
  v_.for_each_tensor([&](std::string_view, std::size_t, std::size_t, std::span<double> d) { v.push_back(d); });
  gradient.for_each_tensor(
      [&](std::string_view, std::size_t, std::size_t, std::span<const double> d) { g.push_back(d); });

  for (std::size_t t_idx = 0; t_idx < p.size(); ++t_idx) {
    if (g[t_idx].size() != p[t_idx].size()) {
      throw Error(ErrorCode::DimensionMismatch, "gradient shape differs from parameter shape");
    }
    for (std::size_t i = 0; i < p[t_idx].size(); ++i) {
      const double gi = g[t_idx][i];
      m[t_idx][i] = beta1_ * m[t_idx][i] + (1.0 - beta1_) * gi;
      v[t_idx][i] = beta2_ * v[t_idx][i] + (1.0 - beta2_) * gi * gi;
      const double m_hat = m[t_idx][i] / correct1;
      const double v_hat = v[t_idx][i] / correct2;
      p[t_idx][i] -= learning_rate * m_hat / (std::sqrt(v_hat) + epsilon_);
    }
  }
}

TrainState train(Model model, std::span<const ExampleFeatures> train_features,
                 std::span<const int> train_labels, std::span<const ExampleFeatures> val_features,
                 std::span<const int> val_labels, const TrainConfig& config,
                 const EpochCallback& on_epoch) {
  check_lengths(train_features.size(), train_labels.size());
  check_lengths(val_features.size(), val_labels.size());
  if (train_features.empty()) throw Error(ErrorCode::EmptyDataset, "training set is empty");
  if (val_features.empty()) throw Error(ErrorCode::EmptyDataset, "validation set is empty");
  if (config.batch_size == 0) throw Error(ErrorCode::InvalidConfig, "batch_size must be >= 1");
  if (!(config.learning_rate >= 0.0)) throw Error(ErrorCode::InvalidConfig, "learning_rate must be >= 0");
  if (!(config.warmup_fraction >= 0.0 && config.warmup_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "warmup_fraction must be in [0, 1)");
  }

  const std::size_t n = train_features.size();
  const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = steps_per_epoch * config.epochs;

  TrainState state;
  state.best_params = model.params;
  Adam adam(model.params, config);
  Rng rng(config.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(std::span(order));
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < n; b += config.batch_size) {
      const auto batch = std::span<const std::size_t>(order).subspan(b, std::min(config.batch_size, n - b));
      auto lg = loss_and_gradient(model, train_features, train_labels, batch);
      epoch_loss += lg.loss * static_cast<double>(batch.size());
      adam.step(model.params, lg.gradient, lr_at(config, state.step, total_steps));
      ++state.step;
    }

    std::vector<double> probs;
    probs.reserve(val_features.size());
    double val_loss = 0.0;
    for (std::size_t i = 0; i < val_features.size(); ++i) {
      probs.push_back(forward(model, val_features[i]).p_positive);
      val_loss += bce_loss(probs.back(), val_labels[i]);
    }
    const auto preds = threshold_predictions(probs);
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss / static_cast<double>(n);
    stats.validation_loss = val_loss / static_cast<double>(val_features.size());
    stats.validation_accuracy = accuracy(preds, val_labels);
    stats.validation_macro_f1 = macro_f1(preds, val_labels);
    state.history.push_back(stats);
    if (stats.validation_macro_f1 > state.best_macro_f1) {
      state.best_macro_f1 = stats.validation_macro_f1;
      state.best_epoch = epoch;
      state.best_params = model.params;
    }
    if (on_epoch) on_epoch(stats);
  }
  state.model = std::move(model);
  return state;
}

TrainState train(Model model, const EmbeddingProvider& provider, const Corpus& corpus,
                 std::span<const LabeledExample> train_set,
                 std::span<const LabeledExample> validation_set, const TrainConfig& config,
                 const EpochCallback& on_epoch) {
  if (train_set.empty()) throw Error(ErrorCode::EmptyDataset, "training set is empty");
  if (validation_set.empty()) throw Error(ErrorCode::EmptyDataset, "validation set is empty");
  const auto train_features = features_for(model, provider, corpus, train_set);
  const auto val_features = features_for(model, provider, corpus, validation_set);
  const auto train_labels = labels_of(train_set);
  const auto val_labels = labels_of(validation_set);
  return train(std::move(model), train_features, train_labels, val_features, val_labels, config, on_epoch);
}

}  // namespace ck
