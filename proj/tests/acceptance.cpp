// Acceptance run: one PASS/FAIL/SKIP line per criterion, non-zero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ck/checkpoint.hpp"
#include "ck/cli.hpp"
#include "ck/conversation.hpp"
#include "ck/embedding.hpp"
#include "ck/evaluation.hpp"
#include "ck/ingestion.hpp"
#include "ck/model.hpp"
#include "ck/training.hpp"
#include "ck/windows.hpp"
#include "oracle.hpp"

namespace {

struct Outcome {
  enum Status { Pass, Fail, Skip } status;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

int failures = 0;

void check(const std::string& name, const std::function<Outcome()>& body) {
  const auto start = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {Outcome::Fail, std::string("exception: ") + e.what()};
  }
  const char* tag = o.status == Outcome::Pass ? "PASS" : o.status == Outcome::Fail ? "FAIL" : "SKIP";
  if (o.status == Outcome::Fail) ++failures;
  std::printf("%s  %-28s %s [%.1fs]\n", tag, name.c_str(), o.detail.c_str(), seconds_since(start));
  std::fflush(stdout);
}

void randomize(ck::ModelParams& p, std::mt19937_64& gen, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  p.for_each_tensor([&](std::string_view, std::size_t, std::size_t, std::span<double> data) {
    for (double& x : data) x = u(gen);
  });
}

std::vector<std::string> kind_names(ck::KernelFamily family) {
  std::vector<std::string> out;
  for (auto k : ck::window_kinds(family)) out.emplace_back(ck::to_string(k));
  return out;
}

Outcome window_oracle() {
  const auto start = Clock::now();
  std::mt19937_64 gen(1001);
  std::size_t compared = 0;
  for (int t = 0; t < 1000; ++t) {
    auto comments = oracle::random_tree(gen, 1 + gen() % 200, "w" + std::to_string(t));
    auto tree = ck::build_tree(comments);
    oracle::Tree slow(comments);
    for (int probe = 0; probe < 3; ++probe) {
      const auto& target = comments[gen() % comments.size()].id;
      const std::size_t L = 1 + gen() % ck::kMaxWindowSize;
      for (auto family : {ck::KernelFamily::AncSibChild, ck::KernelFamily::OneTwoHop}) {
        auto set = ck::extract_windows(tree, target, ck::KernelShape{family, L});
        auto names = kind_names(family);
        if (set.windows.size() != names.size()) return {Outcome::Fail, "wrong window count"};
        for (std::size_t k = 0; k < names.size(); ++k) {
          auto want = slow.window(names[k], target, L);
          if (set.windows[k].member_ids != want || set.mask[k] != !want.empty()) {
            return {Outcome::Fail, "tree " + std::to_string(t) + " target " + target + " " + names[k]};
          }
          ++compared;
        }
      }
    }
  }
  const double secs = seconds_since(start);
  return {secs < 30 ? Outcome::Pass : Outcome::Fail,
          std::to_string(compared) + " windows match, " + fmt("%.1fs (limit 30s)", secs)};
}

Outcome softmax_invariants() {
  std::mt19937_64 gen(1002);
  std::uniform_real_distribution<double> u(-100, 100);
  double worst_sum = 0, worst_shift = 0;
  for (int t = 0; t < 10000; ++t) {
    const std::size_t n = 1 + gen() % 8;
    std::vector<double> s(n);
    std::vector<bool> mask(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = u(gen);
      mask[i] = gen() % 3 != 0;
    }
    mask[gen() % n] = true;
    auto r = ck::retrieval_distribution(s, mask);
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (r.probs[i] < 0) return {Outcome::Fail, "negative probability"};
      if (!mask[i] && r.probs[i] != 0.0) return {Outcome::Fail, "masked entry non-zero"};
      sum += r.probs[i];
    }
    worst_sum = std::max(worst_sum, std::abs(sum - 1));
    const double c = u(gen) * 10;
    for (double& x : s) x += c;
    auto shifted = ck::retrieval_distribution(s, mask);
    for (std::size_t i = 0; i < n; ++i) worst_shift = std::max(worst_shift, std::abs(shifted.probs[i] - r.probs[i]));
  }
  const bool ok = worst_sum <= 1e-9 && worst_shift <= 1e-9;
  return {ok ? Outcome::Pass : Outcome::Fail,
          "max |sum-1| " + fmt("%.2e", worst_sum) + ", max shift drift " + fmt("%.2e", worst_shift) + " (tol 1e-9)"};
}

// Marginal prediction recomputed from plain vectors and the slow tree.
double brute_marginal(const ck::Model& model, const oracle::Tree& slow, const std::string& target,
                      std::size_t d, std::vector<double>& per_window) {
  const auto& p = model.params;
  const auto wc = oracle::to_mat(p.projection.comment);
  const auto ww = oracle::to_mat(p.projection.window);
  const oracle::Head head{oracle::to_mat(p.head.hidden_w), oracle::to_vec(p.head.hidden_b),
                          oracle::to_mat(p.head.output_w), oracle::to_vec(p.head.output_b)};
  auto text = [&](const std::string& id) { return slow.by_id.at(id).text; };
  const auto x = oracle::matvec(wc, oracle::hash_text(text(target), d));
  oracle::Vec scores;
  per_window.clear();
  for (const auto& kind : kind_names(model.config.shape.family)) {
    auto members = slow.window(kind, target, model.config.shape.window_size);
    if (members.empty()) continue;
    oracle::Vec mean(d, 0.0);
    std::vector<std::string> texts;
    for (const auto& m : members) {
      auto e = oracle::hash_text(text(m), d);
      for (std::size_t i = 0; i < d; ++i) mean[i] += e[i] / static_cast<double>(members.size());
      texts.push_back(text(m));
    }
    scores.push_back(oracle::dot(x, oracle::matvec(ww, mean)));
    per_window.push_back(head.p_positive(oracle::hash_tokens(oracle::joined_tokens(text(target), texts, 64, 512), d)));
  }
  if (scores.empty()) return head.p_positive(oracle::hash_tokens(oracle::joined_tokens(text(target), {}, 64, 512), d));
  const auto pw = oracle::softmax(scores);
  double out = 0;
  for (std::size_t k = 0; k < pw.size(); ++k) out += pw[k] * per_window[k];
  return out;
}

Outcome marginalization() {
  const std::size_t d = 8, h = 4, L = 2;
  ck::HashEmbeddingProvider hash(d);
  std::mt19937_64 gen(1003);
  double worst = 0;
  int convex_violations = 0;
  for (int t = 0; t < 100; ++t) {
    auto comments = oracle::random_tree(gen, 1 + gen() % 20);
    for (auto& c : comments) {
      for (int w = 0; w < 5; ++w) c.text += "v" + std::to_string(gen() % 30) + (w % 2 ? " " : ", ");
    }
    auto tree = ck::build_tree(comments);
    oracle::Tree slow(comments);
    ck::ModelConfig cfg;
    cfg.shape = ck::KernelShape{t % 2 ? ck::KernelFamily::OneTwoHop : ck::KernelFamily::AncSibChild, L};
    cfg.hidden = h;
    auto model = ck::Model::initialize(cfg, d, t);
    randomize(model.params, gen, 0.7);
    const auto& target = comments[gen() % comments.size()].id;
    const auto pred = ck::marginal_predict(model, hash, tree, target);
    std::vector<double> per_window;
    const double want = brute_marginal(model, slow, target, d, per_window);
    worst = std::max(worst, std::abs(pred.p_positive - want));
    if (!per_window.empty()) {
      const auto [lo, hi] = std::minmax_element(per_window.begin(), per_window.end());
      if (pred.p_positive < *lo - 1e-12 || pred.p_positive > *hi + 1e-12) ++convex_violations;
    }
  }
  const bool ok = worst <= 1e-9 && convex_violations == 0;
  return {ok ? Outcome::Pass : Outcome::Fail, "100 instances, max |diff| " + fmt("%.2e", worst) +
                                                  " (tol 1e-9), convexity violations " +
                                                  std::to_string(convex_violations)};
}

Outcome gradient_check() {
  const auto start = Clock::now();
  double worst_ratio = 0;
  std::size_t checked = 0, fallback_examples = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (auto family : {ck::KernelFamily::AncSibChild, ck::KernelFamily::OneTwoHop, ck::KernelFamily::TargetOnly}) {
      std::mt19937_64 gen(seed * 7 + static_cast<std::uint64_t>(family));
      // Include a lone-root conversation so the fallback path shows up in every family.
      auto comments = oracle::random_tree(gen, 2 + gen() % 8, "g");
      comments.push_back(oracle::make_comment("solo", std::nullopt, 0, "", "h"));
      for (auto& c : comments) {
        for (int w = 0; w < 4; ++w) c.text += "t" + std::to_string(gen() % 12) + " ";
      }
      std::vector<ck::Comment> g(comments.begin(), comments.end() - 1);
      ck::Corpus corpus;
      corpus.emplace("g", ck::build_tree(g));
      corpus.emplace("h", ck::build_tree({comments.back()}));
      ck::ModelConfig cfg;
      cfg.shape = ck::KernelShape{family, 2};
      cfg.hidden = 4;
      auto model = ck::Model::initialize(cfg, 8, seed);
      randomize(model.params, gen, 0.8);
      ck::HashEmbeddingProvider hash(8);
      std::vector<ck::ExampleFeatures> features;
      std::vector<int> labels;
      for (const auto& [id, tree] : corpus) {
        for (const auto& c : tree.comments()) {
          features.push_back(ck::extract_features(model, hash, tree, c.id));
          fallback_examples += features.back().windows.all_masked();
          labels.push_back(static_cast<int>(gen() % 2));
        }
      }
      const auto lg = ck::loss_and_gradient(model, features, labels);
      std::vector<double> analytic;
      lg.gradient.for_each_tensor([&](std::string_view, std::size_t, std::size_t, std::span<const double> data) {
        analytic.insert(analytic.end(), data.begin(), data.end());
      });
      std::vector<double*> slots;
      model.params.for_each_tensor([&](std::string_view, std::size_t, std::size_t, std::span<double> data) {
        for (double& x : data) slots.push_back(&x);
      });
      const double step = 1e-4;
      for (std::size_t i = 0; i < slots.size(); ++i) {
        const double keep = *slots[i];
        *slots[i] = keep + step;
        const double up = ck::batch_loss(model, features, labels);
        *slots[i] = keep - step;
        const double down = ck::batch_loss(model, features, labels);
        *slots[i] = keep;
        const double numeric = (up - down) / (2 * step);
        const double tol = std::max(1e-7, 1e-4 * std::max(std::abs(numeric), std::abs(analytic[i])));
        worst_ratio = std::max(worst_ratio, std::abs(analytic[i] - numeric) / tol);
        ++checked;
      }
    }
  }
  const double secs = seconds_since(start);
  const bool ok = worst_ratio <= 1.0 && fallback_examples > 0 && secs < 120;
  return {ok ? Outcome::Pass : Outcome::Fail,
          std::to_string(checked) + " partials over 20 seeds x 3 families, " + std::to_string(fallback_examples) +
              " fallback examples, worst error/tolerance " + fmt("%.3f", worst_ratio) + ", " +
              fmt("%.1fs (limit 120s)", secs)};
}

struct PlantedRun {
  double accuracy = 0;
  std::map<ck::WindowKind, double> retrieval;
};

// Separate balanced corpora for train, validation and test.
PlantedRun planted(ck::WindowKind zone, ck::KernelFamily family, std::uint64_t seed) {
  ck::SyntheticConfig sc;
  sc.signal_zone = zone;
  auto corpus = [&](std::size_t n, std::uint64_t s) {
    auto c = sc;
    c.n_trees = n;
    c.seed = s;
    return ck::gen_synthetic(c);
  };
  const auto train_c = corpus(2000, seed * 3), val_c = corpus(250, seed * 3 + 1), test_c = corpus(500, seed * 3 + 2);
  ck::HashEmbeddingProvider hash(ck::kDefaultHashDimension);
  ck::ModelConfig mc;
  mc.shape.family = family;
  auto model = ck::Model::initialize(mc, hash.dimension(), seed);
  ck::TrainConfig tc;
  tc.epochs = 10;
  tc.learning_rate = ck::kHashLearningRate;
  tc.seed = seed;
  const auto state = ck::train(model, ck::features_for(model, hash, train_c.trees, train_c.examples),
                               ck::labels_of(train_c.examples),
                               ck::features_for(model, hash, val_c.trees, val_c.examples),
                               ck::labels_of(val_c.examples), tc);
  const auto report = ck::evaluate(state.best_model(), hash, test_c.trees, test_c.examples);
  return {report.accuracy, report.retrieval};
}

PlantedRun ancestor_run;

Outcome planted_signal() {
  const auto start = Clock::now();
  ancestor_run = planted(ck::WindowKind::Ancestor, ck::KernelFamily::AncSibChild, 1);
  const auto hop = planted(ck::WindowKind::OneHop, ck::KernelFamily::OneTwoHop, 1);
  const auto base = planted(ck::WindowKind::Ancestor, ck::KernelFamily::TargetOnly, 1);
  const double secs = seconds_since(start);
  const bool ok = ancestor_run.accuracy >= 0.90 && hop.accuracy >= 0.90 && base.accuracy >= 0.45 &&
                  base.accuracy <= 0.55 && secs < 600;
  return {ok ? Outcome::Pass : Outcome::Fail,
          "anc-sib-child/ancestor " + fmt("%.3f", ancestor_run.accuracy) + " (>=0.90), one-two-hop/one_hop " +
              fmt("%.3f", hop.accuracy) + " (>=0.90), target-only " + fmt("%.3f", base.accuracy) +
              " (in [0.45,0.55]), " + fmt("%.0fs (limit 600s)", secs)};
}

Outcome specificity() {
  if (ancestor_run.retrieval.empty()) return {Outcome::Fail, "ancestor run did not complete"};
  const double anc = ancestor_run.retrieval.at(ck::WindowKind::Ancestor);
  double margin = 1;
  std::string detail = "ancestor " + fmt("%.3f", anc);
  for (const auto& [kind, mean] : ancestor_run.retrieval) {
    if (kind == ck::WindowKind::Ancestor) continue;
    margin = std::min(margin, anc - mean);
    detail += ", " + std::string(ck::to_string(kind)) + " " + fmt("%.3f", mean);
  }
  return {margin >= 0.10 ? Outcome::Pass : Outcome::Fail, detail + ", margin " + fmt("%.3f", margin) + " (>=0.10)"};
}

Outcome determinism() {
  auto run_once = [] {
    ck::SyntheticConfig sc;
    sc.n_trees = 200;
    sc.seed = 9;
    const auto syn = ck::gen_synthetic(sc);
    const auto split = ck::split_conversations(syn.trees, ck::SplitSpec{0.8, 0.1, 0.1, 9});
    auto subset = [&](const std::vector<std::string>& ids) {
      std::vector<ck::LabeledExample> out;
      for (const auto& ex : syn.examples) {
        if (std::find(ids.begin(), ids.end(), ex.conversation_id) != ids.end()) out.push_back(ex);
      }
      return out;
    };
    const auto train_set = subset(split.train), val_set = subset(split.validation), test_set = subset(split.test);
    ck::HashEmbeddingProvider hash(128);
    ck::ModelConfig mc;
    mc.hidden = 32;
    ck::TrainConfig tc;
    tc.epochs = 3;
    tc.seed = 9;
    const auto state = ck::train(ck::Model::initialize(mc, 128, 9), hash, syn.trees, train_set, val_set, tc);
    ck::Checkpoint ckpt;
    ckpt.model = state.best_model();
    ckpt.provider_name = hash.name();
    ckpt.provider_dimension = hash.dimension();
    ckpt.train = tc;
    ckpt.best_epoch = state.best_epoch;
    ckpt.history = state.history;
    const auto report = ck::evaluate(ckpt.model, hash, syn.trees, test_set);
    return std::make_pair(ck::serialize_checkpoint(ckpt), ck::report_json(report, true));
  };
  const auto a = run_once();
  const auto b = run_once();
  const bool ok = a.first == b.first && a.second == b.second;
  return {ok ? Outcome::Pass : Outcome::Fail,
          std::string("checkpoints ") + (a.first == b.first ? "identical" : "differ") + " (" +
              std::to_string(a.first.size()) + " bytes), reports " + (a.second == b.second ? "identical" : "differ")};
}

Outcome metrics_oracle() {
  std::mt19937_64 gen(1008);
  double worst = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + gen() % 200;
    std::vector<int> preds(n), labels(n);
    const unsigned skew = 1 + gen() % 6;
    for (std::size_t i = 0; i < n; ++i) {
      preds[i] = gen() % skew == 0;
      labels[i] = gen() % 2;
    }
    double agree = 0;
    for (std::size_t i = 0; i < n; ++i) agree += preds[i] == labels[i];
    worst = std::max(worst, std::abs(ck::accuracy(preds, labels) - agree / static_cast<double>(n)));
    worst = std::max(worst, std::abs(ck::macro_f1(preds, labels) - oracle::macro_f1(preds, labels)));
  }
  return {worst <= 1e-12 ? Outcome::Pass : Outcome::Fail,
          "1000 vectors, max |diff| " + fmt("%.2e", worst) + " (tol 1e-12)"};
}

Outcome corpus_statistics() {
  const char* path = std::getenv("CK_DATASET_DUMP");
  if (!path || !*path) return {Outcome::Skip, "set CK_DATASET_DUMP to the released dump to run"};
  std::ostringstream out, err;
  const int status = ck::run({"ck", "ingest", "--dump", path}, out, err);
  const bool ok = status == 0 && out.str().find("1954 conversations, 509669 comments") != std::string::npos;
  auto first_line = out.str().substr(0, out.str().find('\n'));
  return {ok ? Outcome::Pass : Outcome::Fail, "ingest: " + first_line + " (want 1954 conversations, 509669 comments)"};
}

}  // namespace

int main() {
  check("window-oracle", window_oracle);
  check("retrieval-softmax", softmax_invariants);
  check("marginalization", marginalization);
  check("gradient-check", gradient_check);
  check("planted-signal", planted_signal);
  check("shape-specificity", specificity);
  check("determinism", determinism);
  check("metrics-oracle", metrics_oracle);
  check("corpus-statistics", corpus_statistics);
  std::printf("%s (%d failed)\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
  return failures == 0 ? 0 : 1;
}
