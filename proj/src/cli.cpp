#include "ck/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>

#include <json.hpp>

#include "ck/checkpoint.hpp"
#include "ck/conversation.hpp"
#include "ck/embedding.hpp"
#include "ck/error.hpp"
#include "ck/evaluation.hpp"
#include "ck/ingestion.hpp"
#include "ck/model.hpp"
#include "ck/remote_provider.hpp"
#include "ck/training.hpp"
#include "ck/windows.hpp"

namespace ck {
namespace {

struct RunConfig {
  std::string dump;
  std::string labels;
  std::string category;
  std::string kernel = "anc-sib-child";
  std::size_t window_size = kDefaultWindowSize;
  std::string provider = "hash";
  std::string remote_url;
  std::size_t hash_dim = kDefaultHashDimension;
  std::size_t hidden = 128;
  std::string checkpoint;
  std::uint64_t seed = 0;
  std::size_t epochs = 3;
  std::optional<double> lr;
  std::size_t batch_size = 16;
  double warmup = 0.10;
  std::string out;
  std::string split = "all";
  std::string conversation;
  std::string target;
  bool json = false;

  // gen-synthetic
  std::size_t n_trees = 100;
  std::string zone = "ancestor";
  double noise = 0.0;
  std::size_t min_nodes = 8;
  std::size_t max_nodes = 30;
  double branching_bias = 0.3;
  std::string signal_token = "zqxsignal";
};

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string plural(std::size_t n, const char* word) {
  return std::to_string(n) + " " + word + (n == 1 ? "" : "s");
}

std::shared_ptr<const EmbeddingProvider> make_provider(const RunConfig& cfg,
                                                       const Checkpoint* checkpoint) {
  std::shared_ptr<const EmbeddingProvider> inner;
  if (cfg.provider == "hash") {
    const std::size_t dim = checkpoint ? checkpoint->provider_dimension : cfg.hash_dim;
    inner = std::make_shared<HashEmbeddingProvider>(dim);
  } else if (cfg.provider == "remote") {
    std::string url = cfg.remote_url;
    if (url.empty()) {
      if (const char* env = std::getenv("CK_REMOTE_URL")) url = env;
    }
    if (url.empty()) throw Error(ErrorCode::Usage, "--provider remote needs --remote-url or CK_REMOTE_URL");
    inner = std::make_shared<RemoteEmbeddingProvider>(RemoteConfig{.url = url});
  } else {
    throw Error(ErrorCode::Usage, "unknown provider '" + cfg.provider + "'");
  }
  if (checkpoint && inner->name() != checkpoint->provider_name) {
    throw Error(ErrorCode::InvalidConfig, "checkpoint was trained with provider '" + checkpoint->provider_name +
                                              "', not '" + inner->name() + "'");
  }
  return std::make_shared<CachedProvider>(std::move(inner));
}

Corpus load_corpus(const RunConfig& cfg) {
  if (cfg.dump.empty()) throw Error(ErrorCode::Usage, "--dump is required");
  return build_corpus(parse_dump(cfg.dump, true));
}

ModelConfig model_config(const RunConfig& cfg, const EmbeddingProvider& provider) {
  ModelConfig mc;
  mc.shape.family = parse_kernel_family(cfg.kernel);
  mc.shape.window_size = cfg.window_size;
  mc.hidden = cfg.hidden;
  mc.max_join_length = provider.max_length();
  return mc;
}

/// Model from --checkpoint, or a freshly initialised one from the flags.
Model load_model(const RunConfig& cfg, std::shared_ptr<const EmbeddingProvider>& provider,
                 std::optional<Checkpoint>& checkpoint) {
  if (!cfg.checkpoint.empty()) {
    checkpoint = load_checkpoint(cfg.checkpoint);
    provider = make_provider(cfg, &*checkpoint);
    return checkpoint->model;
  }
  provider = make_provider(cfg, nullptr);
  return Model::initialize(model_config(cfg, *provider), provider->dimension(), cfg.seed);
}

SplitSpec split_spec(std::uint64_t seed) { return SplitSpec{0.8, 0.1, 0.1, seed}; }

/// Labelled examples for the chosen conversations: from --labels or a
/// balanced --category dataset built inside that set.
std::vector<LabeledExample> examples_for(const RunConfig& cfg, const Corpus& corpus,
                                         const std::vector<std::string>& conversations,
                                         std::uint64_t seed) {
  const std::set<std::string> keep(conversations.begin(), conversations.end());
  if (!cfg.labels.empty()) {
    std::vector<LabeledExample> out;
    for (auto& ex : read_labels(cfg.labels)) {
      if (keep.contains(ex.conversation_id)) out.push_back(std::move(ex));
    }
    return out;
  }
  if (cfg.category.empty()) throw Error(ErrorCode::Usage, "either --labels or --category is required");
  return build_binary_dataset(select(corpus, conversations), category_from_name(cfg.category), seed);
}

std::vector<std::string> all_conversations(const Corpus& corpus) {
  std::vector<std::string> ids;
  for (const auto& [id, _] : corpus) ids.push_back(id);
  return ids;
}

int cmd_ingest(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  if (cfg.dump.empty()) throw Error(ErrorCode::Usage, "--dump is required");
  const auto dump = parse_dump(cfg.dump, false);
  std::size_t errors = dump.errors.size();
  std::map<Category, std::size_t> tags;
  std::size_t untagged = 0;
  for (const auto& e : dump.errors) err << "line " << e.line << ": " << e.reason << "\n";
  for (const auto& [id, comments] : dump.conversations) {
    try {
      (void)build_tree(comments);
    } catch (const Error& e) {
      ++errors;
      err << "conversation " << id << ": " << e.what() << "\n";
    }
    for (const auto& c : comments) {
      if (c.categories.empty()) ++untagged;
      for (auto cat : c.categories) ++tags[cat];
    }
  }
  out << plural(dump.conversations.size(), "conversation") << ", " << plural(dump.comment_count, "comment")
      << ", " << plural(errors, "error") << "\n";
  for (const auto& [cat, n] : tags) out << "  " << to_string(cat) << ": " << n << "\n";
  out << "  untagged: " << untagged << "\n";
  return errors == 0 ? 0 : 3;
}

int cmd_gen_synthetic(const RunConfig& cfg, std::ostream& out) {
  SyntheticConfig sc;
  sc.n_trees = cfg.n_trees;
  sc.min_nodes = cfg.min_nodes;
  sc.max_nodes = cfg.max_nodes;
  sc.branching_bias = cfg.branching_bias;
  sc.signal_zone = parse_window_kind(cfg.zone);
  sc.signal_token = cfg.signal_token;
  sc.label_noise = cfg.noise;
  sc.seed = cfg.seed;
  sc.window_size = cfg.window_size;

  std::filesystem::path dump_path = cfg.dump;
  std::filesystem::path labels_path = cfg.labels;
  if (!cfg.out.empty()) {
    if (dump_path.empty()) dump_path = std::filesystem::path(cfg.out) / "dump.jsonl";
    if (labels_path.empty()) labels_path = std::filesystem::path(cfg.out) / "labels.jsonl";
  }
  if (dump_path.empty() || labels_path.empty()) {
    throw Error(ErrorCode::Usage, "gen-synthetic needs --out DIR or both --dump and --labels");
  }
  const auto corpus = gen_synthetic(sc);
  write_dump(dump_path, corpus.trees);
  write_labels(labels_path, corpus.examples);
  std::size_t comments = 0;
  for (const auto& [_, t] : corpus.trees) comments += t.size();
  out << "wrote " << plural(corpus.trees.size(), "conversation") << ", " << plural(comments, "comment")
      << " to " << dump_path.string() << " and " << plural(corpus.examples.size(), "label") << " to "
      << labels_path.string() << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  const std::string ckpt_path = !cfg.checkpoint.empty() ? cfg.checkpoint : cfg.out;
  if (ckpt_path.empty()) throw Error(ErrorCode::Usage, "train needs --checkpoint (output path)");
  const auto corpus = load_corpus(cfg);
  const auto provider = make_provider(cfg, nullptr);

  const auto split = split_conversations(corpus, split_spec(cfg.seed));
  const auto train_set = examples_for(cfg, corpus, split.train, cfg.seed + 1);
  const auto val_set = examples_for(cfg, corpus, split.validation, cfg.seed + 2);
  const auto test_set = examples_for(cfg, corpus, split.test, cfg.seed + 3);
  out << "split: " << split.train.size() << "/" << split.validation.size() << "/" << split.test.size()
      << " conversations, " << train_set.size() << "/" << val_set.size() << "/" << test_set.size()
      << " examples\n";

  TrainConfig tc;
  tc.batch_size = cfg.batch_size;
  tc.epochs = cfg.epochs;
  tc.warmup_fraction = cfg.warmup;
  tc.seed = cfg.seed;
  tc.learning_rate = cfg.lr.value_or(cfg.provider == "hash" ? kHashLearningRate : kSidecarLearningRate);

  auto model = Model::initialize(model_config(cfg, *provider), provider->dimension(), cfg.seed);
  const auto state = train(model, *provider, corpus, train_set, val_set, tc, [&](const EpochStats& e) {
    char line[160];
    std::snprintf(line, sizeof line, "epoch %zu  train_loss %.4f  val_loss %.4f  val_acc %.4f  val_macro_f1 %.4f\n",
                  e.epoch, e.train_loss, e.validation_loss, e.validation_accuracy, e.validation_macro_f1);
    out << line << std::flush;
  });

  Checkpoint ckpt;
  ckpt.model = state.best_model();
  ckpt.provider_name = provider->name();
  ckpt.provider_dimension = provider->dimension();
  ckpt.train = tc;
  ckpt.best_epoch = state.best_epoch;
  ckpt.history = state.history;
  ckpt.metadata["split_seed"] = std::to_string(cfg.seed);
  ckpt.metadata["split_ratios"] = "0.8,0.1,0.1";
  if (!cfg.category.empty()) ckpt.metadata["category"] = cfg.category;
  save_checkpoint(ckpt_path, ckpt);
  out << "best epoch " << state.best_epoch << ", checkpoint written to " << ckpt_path << "\n";

  if (!test_set.empty()) {
    const auto report = evaluate(ckpt.model, *provider, corpus, test_set);
    out << "test split\n" << report_table(report);
  }
  return 0;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  if (cfg.checkpoint.empty()) throw Error(ErrorCode::Usage, "eval needs --checkpoint");
  std::shared_ptr<const EmbeddingProvider> provider;
  std::optional<Checkpoint> checkpoint;
  const auto model = load_model(cfg, provider, checkpoint);
  const auto corpus = load_corpus(cfg);

  std::uint64_t split_seed = cfg.seed;
  if (auto it = checkpoint->metadata.find("split_seed"); it != checkpoint->metadata.end()) {
    split_seed = std::stoull(it->second);
  }
  std::vector<std::string> conversations;
  std::uint64_t dataset_seed = split_seed;
  if (cfg.split == "all") {
    conversations = all_conversations(corpus);
  } else {
    const auto split = split_conversations(corpus, split_spec(split_seed));
    if (cfg.split == "train") {
      conversations = split.train;
      dataset_seed += 1;
    } else if (cfg.split == "validation") {
      conversations = split.validation;
      dataset_seed += 2;
    } else if (cfg.split == "test") {
      conversations = split.test;
      dataset_seed += 3;
    } else {
      throw Error(ErrorCode::Usage, "--split must be all, train, validation or test");
    }
  }
  const auto examples = examples_for(cfg, corpus, conversations, dataset_seed);
  const auto report = evaluate(model, *provider, corpus, examples);
  if (!cfg.out.empty()) {
    std::ofstream file(cfg.out, std::ios::binary | std::ios::trunc);
    if (!file) throw Error(ErrorCode::IoFailure, "cannot write '" + cfg.out + "'");
    file << report_json(report, true) << "\n";
  }
  out << (cfg.json ? report_json(report) + "\n" : report_table(report));
  return 0;
}

const ConversationTree& find_tree(const Corpus& corpus, const RunConfig& cfg) {
  if (cfg.target.empty()) throw Error(ErrorCode::Usage, "--target is required");
  if (!cfg.conversation.empty()) {
    auto it = corpus.find(cfg.conversation);
    if (it == corpus.end()) throw Error(ErrorCode::UnknownId, "no conversation '" + cfg.conversation + "'");
    return it->second;
  }
  if (corpus.size() == 1) return corpus.begin()->second;
  throw Error(ErrorCode::Usage, "--conversation is required when the dump holds several conversations");
}

int cmd_predict(const RunConfig& cfg, std::ostream& out) {
  std::shared_ptr<const EmbeddingProvider> provider;
  std::optional<Checkpoint> checkpoint;
  const auto model = load_model(cfg, provider, checkpoint);
  const auto corpus = load_corpus(cfg);
  const auto& tree = find_tree(corpus, cfg);
  const auto pred = marginal_predict(model, *provider, tree, cfg.target);
  nlohmann::ordered_json doc;
  doc["conversation_id"] = tree.conversation_id();
  doc["target_id"] = cfg.target;
  doc["p_positive"] = pred.p_positive;
  doc["fallback_used"] = pred.fallback_used;
  out << doc.dump() << "\n";
  return 0;
}

int cmd_explain(const RunConfig& cfg, std::ostream& out) {
  std::shared_ptr<const EmbeddingProvider> provider;
  std::optional<Checkpoint> checkpoint;
  const auto model = load_model(cfg, provider, checkpoint);
  const auto corpus = load_corpus(cfg);
  const auto& tree = find_tree(corpus, cfg);
  const auto pred = marginal_predict(model, *provider, tree, cfg.target);

  if (cfg.json) {
    nlohmann::ordered_json doc;
    doc["conversation_id"] = tree.conversation_id();
    doc["target_id"] = cfg.target;
    doc["kernel"] = std::string(to_string(model.config.shape.family));
    doc["window_size"] = model.config.shape.window_size;
    doc["windows"] = nlohmann::ordered_json::array();
    for (const auto& w : pred.per_window) {
      nlohmann::ordered_json jw;
      jw["kind"] = std::string(to_string(w.kind));
      jw["members"] = w.member_ids;
      jw["retrieval"] = w.retrieval;
      jw["p_positive"] = w.p_positive ? nlohmann::ordered_json(*w.p_positive) : nlohmann::ordered_json(nullptr);
      doc["windows"].push_back(std::move(jw));
    }
    doc["p_positive"] = pred.p_positive;
    doc["fallback_used"] = pred.fallback_used;
    out << doc.dump(2) << "\n";
    return 0;
  }

  out << "target " << cfg.target << " in " << tree.conversation_id() << " (" << to_string(model.config.shape.family)
      << ", L=" << model.config.shape.window_size << ")\n";
  char line[200];
  for (const auto& w : pred.per_window) {
    std::string members;
    for (const auto& id : w.member_ids) members += (members.empty() ? "" : ",") + id;
    std::snprintf(line, sizeof line, "  %-9s p(w|x)=%.6f  p(y=1|w,x)=%s  [%s]\n",
                  std::string(to_string(w.kind)).c_str(), w.retrieval,
                  w.p_positive ? fixed6(*w.p_positive).c_str() : "-", members.c_str());
    out << line;
  }
  out << "p(y=1|x)=" << format_double(pred.p_positive) << (pred.fallback_used ? " (context-free fallback)" : "")
      << "\n";
  return 0;
}

void add_model_flags(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--kernel", cfg.kernel, "Kernel family: anc-sib-child, one-two-hop or none")
      ->check(CLI::IsMember({"anc-sib-child", "one-two-hop", "none"}));
  cmd->add_option("--window-size", cfg.window_size, "Window cap L")->check(CLI::Range(1, 10));
  cmd->add_option("--provider", cfg.provider, "Embedding backbone")->check(CLI::IsMember({"hash", "remote"}));
  cmd->add_option("--remote-url", cfg.remote_url, "Sidecar URL (falls back to CK_REMOTE_URL)");
  cmd->add_option("--hash-dim", cfg.hash_dim, "Hash backbone dimension")->check(CLI::PositiveNumber);
  cmd->add_option("--hidden", cfg.hidden, "Head hidden width")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", cfg.seed, "Seed for every random choice");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  CLI::App app{"Conversation kernels: context-window retrieval classifiers for threaded comments", "ck"};
  app.require_subcommand(1);

  auto* ingest = app.add_subcommand("ingest", "Validate a dump and print corpus statistics");
  ingest->add_option("--dump", cfg.dump, "JSONL dump")->required();

  auto* gen = app.add_subcommand("gen-synthetic", "Write a planted-signal corpus");
  gen->add_option("--out", cfg.out, "Output directory (dump.jsonl, labels.jsonl)");
  gen->add_option("--dump", cfg.dump, "Dump output path");
  gen->add_option("--labels", cfg.labels, "Labels output path");
  gen->add_option("--n-trees", cfg.n_trees)->check(CLI::PositiveNumber);
  gen->add_option("--zone", cfg.zone, "ancestor, sibling, children, one_hop or two_hop");
  gen->add_option("--noise", cfg.noise, "Label flip probability");
  gen->add_option("--min-nodes", cfg.min_nodes);
  gen->add_option("--max-nodes", cfg.max_nodes);
  gen->add_option("--branching-bias", cfg.branching_bias);
  gen->add_option("--signal-token", cfg.signal_token);
  gen->add_option("--window-size", cfg.window_size)->check(CLI::Range(1, 10));
  gen->add_option("--seed", cfg.seed);

  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  train_cmd->add_option("--dump", cfg.dump)->required();
  train_cmd->add_option("--labels", cfg.labels, "Label sidecar file");
  train_cmd->add_option("--category", cfg.category, "Build a balanced dataset for this tag");
  train_cmd->add_option("--checkpoint", cfg.checkpoint, "Checkpoint output path");
  train_cmd->add_option("--out", cfg.out, "Checkpoint output path (alias)");
  train_cmd->add_option("--epochs", cfg.epochs);
  train_cmd->add_option("--lr", cfg.lr, "Peak learning rate (default 1e-2 hash, 1e-5 remote)");
  train_cmd->add_option("--batch-size", cfg.batch_size)->check(CLI::PositiveNumber);
  train_cmd->add_option("--warmup", cfg.warmup, "Warm-up fraction of total steps");
  add_model_flags(train_cmd, cfg);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", cfg.checkpoint)->required();
  eval->add_option("--dump", cfg.dump)->required();
  eval->add_option("--labels", cfg.labels);
  eval->add_option("--category", cfg.category);
  eval->add_option("--split", cfg.split, "all, train, validation or test");
  eval->add_option("--out", cfg.out, "Write the JSON report (with per-example probabilities) here");
  eval->add_flag("--json", cfg.json, "Print JSON instead of a table");
  eval->add_option("--provider", cfg.provider)->check(CLI::IsMember({"hash", "remote"}));
  eval->add_option("--remote-url", cfg.remote_url);

  for (auto* cmd : {app.add_subcommand("predict", "Print p(y=1|x) for one target"),
                    app.add_subcommand("explain", "Show windows, retrieval and per-window predictions")}) {
    cmd->add_option("--dump", cfg.dump)->required();
    cmd->add_option("--checkpoint", cfg.checkpoint, "Trained model (default: freshly initialised)");
    cmd->add_option("--conversation", cfg.conversation);
    cmd->add_option("--target", cfg.target)->required();
    cmd->add_flag("--json", cfg.json);
    add_model_flags(cmd, cfg);
  }

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: code=Usage exit=2 message=" << e.what() << "\n";
    return 2;
  }

  try {
    const auto* sub = app.get_subcommands().front();
    const auto& name = sub->get_name();
    if (name == "ingest") return cmd_ingest(cfg, out, err);
    if (name == "gen-synthetic") return cmd_gen_synthetic(cfg, out);
    if (name == "train") return cmd_train(cfg, out);
    if (name == "eval") return cmd_eval(cfg, out);
    if (name == "predict") return cmd_predict(cfg, out);
    if (name == "explain") return cmd_explain(cfg, out);
    throw Error(ErrorCode::Usage, "unknown subcommand " + name);
  } catch (const Error& e) {
    const int status = exit_code_for(e.code());
    err << "error: code=" << to_string(e.code()) << " exit=" << status << " message=" << e.what() << "\n";
    return status;
  } catch (const std::exception& e) {
    err << "error: code=Internal exit=5 message=" << e.what() << "\n";
    return 5;
  }
}

}  // namespace ck
