#include "ck/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <limits>
#include <numeric>

#include "ck/error.hpp"
#include "ck/rng.hpp"

namespace ck {
namespace {

using TensorFn = std::function<void(std::string_view, std::size_t, std::size_t, std::span<double>)>;

std::span<double> view(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<double> view(Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

std::size_t rows(const Matrix& m) { return static_cast<std::size_t>(m.rows()); }
std::size_t cols(const Matrix& m) { return static_cast<std::size_t>(m.cols()); }

void fill_uniform(Matrix& m, Rng& rng, double limit) {
  // Row-major draw order so the stream does not depend on storage order.
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-limit, limit);
  }
}

void check_dim(std::size_t got, std::size_t expected, const char* what) {
  if (got != expected) {
    throw Error(ErrorCode::DimensionMismatch, std::string(what) + ": got " + std::to_string(got) +
                                                  ", expected " + std::to_string(expected));
  }
}

}  // namespace

void ModelParams::for_each_tensor(const TensorFn& fn) {
  fn("w_comment", rows(projection.comment), cols(projection.comment), view(projection.comment));
  fn("w_window", rows(projection.window), cols(projection.window), view(projection.window));
  fn("head.hidden_w", rows(head.hidden_w), cols(head.hidden_w), view(head.hidden_w));
  fn("head.hidden_b", static_cast<std::size_t>(head.hidden_b.size()), 1, view(head.hidden_b));
  fn("head.output_w", rows(head.output_w), cols(head.output_w), view(head.output_w));
  fn("head.output_b", static_cast<std::size_t>(head.output_b.size()), 1, view(head.output_b));
}

void ModelParams::for_each_tensor(const std::function<void(std::string_view, std::size_t, std::size_t,
                                                           std::span<const double>)>& fn) const {
  const_cast<ModelParams*>(this)->for_each_tensor(
      [&](std::string_view name, std::size_t r, std::size_t c, std::span<double> data) {
        fn(name, r, c, std::span<const double>(data));
      });
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for_each_tensor([&](std::string_view, std::size_t, std::size_t, std::span<const double> d) {
    n += d.size();
  });
  return n;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z;
  z.projection.comment = Matrix::Zero(projection.comment.rows(), projection.comment.cols());
  z.projection.window = Matrix::Zero(projection.window.rows(), projection.window.cols());
  z.head.hidden_w = Matrix::Zero(head.hidden_w.rows(), head.hidden_w.cols());
  z.head.hidden_b = Vector::Zero(head.hidden_b.size());
  z.head.output_w = Matrix::Zero(head.output_w.rows(), head.output_w.cols());
  z.head.output_b = Vector::Zero(head.output_b.size());
  return z;
}

Model Model::initialize(ModelConfig config, std::size_t backbone_dim, std::uint64_t seed) {
  if (backbone_dim == 0) throw Error(ErrorCode::InvalidConfig, "backbone dimension must be positive");
  if (config.model_dim == 0) config.model_dim = backbone_dim;
  if (config.hidden == 0) throw Error(ErrorCode::InvalidConfig, "hidden width must be positive");
  if (config.shape.window_size < 1 || config.shape.window_size > kMaxWindowSize) {
    throw Error(ErrorCode::InvalidConfig, "window size must be in [1, 10]");
  }

  const auto dm = static_cast<Eigen::Index>(config.model_dim);
  const auto db = static_cast<Eigen::Index>(backbone_dim);
  const auto h = static_cast<Eigen::Index>(config.hidden);
  Rng rng(seed);

  Model model;
  model.config = config;
  auto& p = model.params;
  p.projection.comment = Matrix::Identity(dm, db);
  p.projection.window = Matrix::Identity(dm, db);
  Matrix noise(dm, db);
  fill_uniform(noise, rng, 0.01);
  p.projection.comment += noise;
  fill_uniform(noise, rng, 0.01);
  p.projection.window += noise;

  p.head.hidden_w.resize(h, db);
  fill_uniform(p.head.hidden_w, rng, std::sqrt(6.0 / static_cast<double>(db + h)));
  p.head.hidden_b = Vector::Zero(h);
  p.head.output_w.resize(2, h);
  fill_uniform(p.head.output_w, rng, std::sqrt(6.0 / static_cast<double>(h + 2)));
  p.head.output_b = Vector::Zero(2);
  return model;
}

double relevance(const Vector& target_emb, const Vector& window_emb) {
  check_dim(static_cast<std::size_t>(window_emb.size()), static_cast<std::size_t>(target_emb.size()),
            "relevance operand dimension");
  return target_emb.dot(window_emb);
}

RetrievalDistribution retrieval_distribution(std::span<const double> scores,
                                             const std::vector<bool>& mask) {
  check_dim(mask.size(), scores.size(), "mask length");
  double max_score = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (mask[i]) {
      max_score = std::max(max_score, scores[i]);
      any = true;
    }
  }
  if (!any) throw Error(ErrorCode::AllMasked, "every window is masked");

  RetrievalDistribution dist{std::vector<double>(scores.size(), 0.0), mask};
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (mask[i]) {
      dist.probs[i] = std::exp(scores[i] - max_score);
      total += dist.probs[i];
    }
  }
  for (auto& p : dist.probs) p /= total;
  return dist;
}

namespace {

std::array<double, 2> head_forward(const HeadParams& head, const Vector& input, Vector* hidden_pre) {
  check_dim(static_cast<std::size_t>(input.size()), head.input_dim(), "head input dimension");
  Vector pre = head.hidden_w * input + head.hidden_b;
  const Vector logits = head.output_w * pre.cwiseMax(0.0) + head.output_b;
  const double m = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - m);
  const double e1 = std::exp(logits[1] - m);
  if (hidden_pre) *hidden_pre = std::move(pre);
  return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

}  // namespace

std::array<double, 2> classify_given_window(const HeadParams& head, const Vector& encoder_emb) {
  return head_forward(head, encoder_emb, nullptr);
}

ForwardPass forward(const Model& model, const ExampleFeatures& features) {
  const auto& proj = model.params.projection;
  const auto n = features.windows.windows.size();
  ForwardPass pass;
  pass.target_proj = proj.comment * features.target;
  pass.window_proj.resize(n);
  pass.scores.assign(n, 0.0);
  pass.hidden_pre.resize(n);
  pass.class_probs.assign(n, {0.0, 0.0});

  if (features.fallback_used()) {
    pass.fallback = true;
    pass.hidden_pre.resize(1);
    pass.class_probs.resize(1);
    pass.class_probs[0] = head_forward(model.params.head, features.fallback, &pass.hidden_pre[0]);
    pass.p_positive = pass.class_probs[0][1];
    return pass;
  }

  const auto& mask = features.windows.mask;
  for (std::size_t k = 0; k < n; ++k) {
    if (!mask[k]) continue;
    pass.window_proj[k] = proj.window * features.window_mean[k];
    pass.scores[k] = relevance(pass.target_proj, pass.window_proj[k]);
  }
  pass.retrieval = retrieval_distribution(pass.scores, mask);
  for (std::size_t k = 0; k < n; ++k) {
    if (!mask[k]) continue;
    pass.class_probs[k] = head_forward(model.params.head, features.joined[k], &pass.hidden_pre[k]);
    pass.p_positive += pass.retrieval.probs[k] * pass.class_probs[k][1];
  }
  return pass;
}

Prediction predict(const Model& model, const ExampleFeatures& features) {
  const auto pass = forward(model, features);
  Prediction out;
  out.p_positive = pass.p_positive;
  out.fallback_used = pass.fallback;
  const auto& windows = features.windows.windows;
  for (std::size_t k = 0; k < windows.size(); ++k) {
    WindowPrediction wp{windows[k].kind, windows[k].member_ids, 0.0, std::nullopt};
    if (!pass.fallback && features.windows.mask[k]) {
      wp.retrieval = pass.retrieval.probs[k];
      wp.p_positive = pass.class_probs[k][1];
    }
    out.per_window.push_back(std::move(wp));
  }
  return out;
}

std::vector<ExampleFeatures> extract_features(const Model& model, const EmbeddingProvider& provider,
                                              std::span<const FeatureRequest> requests,
                                              std::size_t chunk) {
  check_dim(provider.dimension(), model.backbone_dim(), "provider dimension vs model backbone");
  check_dim(model.params.head.input_dim(), provider.dimension(), "head input vs provider dimension");
  if (chunk == 0) chunk = 1;

  // Pass 1: windows, texts and joins. Inputs are deduplicated by content.
  std::map<std::string, std::size_t> text_slot;
  std::vector<std::string> texts;
  std::map<std::string, std::size_t> join_slot;
  std::vector<JoinedSequence> joins;
  auto intern_text = [&](const std::string& t) {
    auto [it, inserted] = text_slot.try_emplace(t, texts.size());
    if (inserted) texts.push_back(t);
    return it->second;
  };
  auto intern_join = [&](JoinedSequence j) {
    auto [it, inserted] = join_slot.try_emplace(j.render(), joins.size());
    if (inserted) joins.push_back(std::move(j));
    return it->second;
  };

  struct Plan {
    WindowSet windows;
    std::size_t target_slot = 0;
    std::vector<std::vector<std::size_t>> member_slots;
    std::vector<std::size_t> join_slots;
    std::optional<std::size_t> fallback_slot;
    std::size_t truncated = 0;
  };
  std::vector<Plan> plans;
  plans.reserve(requests.size());
  const auto join_opts = model.join_options();
  for (const auto& req : requests) {
    Plan plan;
    plan.windows = extract_windows(*req.tree, req.target_id, model.config.shape);
    const auto& target_text = req.tree->comment(req.target_id).text;
    plan.target_slot = intern_text(target_text);
    const auto n = plan.windows.windows.size();
    plan.member_slots.resize(n);
    plan.join_slots.assign(n, 0);
    for (std::size_t k = 0; k < n; ++k) {
      if (!plan.windows.mask[k]) continue;
      std::vector<std::string> member_texts;
      for (const auto& id : plan.windows.windows[k].member_ids) {
        member_texts.push_back(req.tree->comment(id).text);
        plan.member_slots[k].push_back(intern_text(member_texts.back()));
      }
      auto joined = join_texts(target_text, member_texts, join_opts);
      plan.truncated += joined.truncated;
      plan.join_slots[k] = intern_join(std::move(joined));
    }
    if (plan.windows.all_masked()) {
      auto joined = join_texts(target_text, {}, join_opts);
      plan.truncated += joined.truncated;
      plan.fallback_slot = intern_join(std::move(joined));
    }
    plans.push_back(std::move(plan));
  }

  // Pass 2: embed in chunks.
  const std::size_t dim = provider.dimension();
  auto validate = [&](std::vector<Vector>& got, std::size_t expected) {
    if (got.size() != expected) {
      throw Error(ErrorCode::DimensionMismatch, provider.name() + " returned " +
                                                    std::to_string(got.size()) + " vectors for " +
                                                    std::to_string(expected) + " inputs");
    }
    for (const auto& v : got) {
      check_dim(static_cast<std::size_t>(v.size()), dim, "provider vector dimension");
      if (!v.allFinite()) throw Error(ErrorCode::DimensionMismatch, "provider returned non-finite values");
    }
  };
  std::vector<Vector> text_emb;
  text_emb.reserve(texts.size());
  for (std::size_t b = 0; b < texts.size(); b += chunk) {
    const auto e = std::min(texts.size(), b + chunk);
    auto got = provider.embed_texts(std::span<const std::string>(texts).subspan(b, e - b));
    validate(got, e - b);
    for (auto& v : got) text_emb.push_back(std::move(v));
  }
  std::vector<Vector> join_emb;
  join_emb.reserve(joins.size());
  for (std::size_t b = 0; b < joins.size(); b += chunk) {
    const auto e = std::min(joins.size(), b + chunk);
    auto got = provider.embed_joined(std::span<const JoinedSequence>(joins).subspan(b, e - b));
    validate(got, e - b);
    for (auto& v : got) join_emb.push_back(std::move(v));
  }

  // Pass 3: assemble.
  std::vector<ExampleFeatures> out;
  out.reserve(plans.size());
  for (auto& plan : plans) {
    ExampleFeatures f;
    f.target = text_emb[plan.target_slot];
    const auto n = plan.windows.windows.size();
    f.window_mean.resize(n);
    f.joined.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      if (!plan.windows.mask[k]) continue;
      std::vector<Vector> members;
      for (auto slot : plan.member_slots[k]) members.push_back(text_emb[slot]);
      f.window_mean[k] = mean_of(members);
      f.joined[k] = join_emb[plan.join_slots[k]];
    }
    if (plan.fallback_slot) f.fallback = join_emb[*plan.fallback_slot];
    f.truncated = plan.truncated;
    f.windows = std::move(plan.windows);
    out.push_back(std::move(f));
  }
  return out;
}

ExampleFeatures extract_features(const Model& model, const EmbeddingProvider& provider,
                                 const ConversationTree& tree, std::string_view target_id) {
  const FeatureRequest req{&tree, std::string(target_id)};
  return std::move(extract_features(model, provider, std::span<const FeatureRequest>(&req, 1)).front());
}

Prediction marginal_predict(const Model& model, const EmbeddingProvider& provider,
                            const ConversationTree& tree, std::string_view target_id) {
  return predict(model, extract_features(model, provider, tree, target_id));
}

}  // namespace ck
