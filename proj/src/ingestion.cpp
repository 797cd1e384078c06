#include "ck/ingestion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "ck/error.hpp"
#include "ck/embedding.hpp"
#include "ck/rng.hpp"

namespace ck {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string require_string(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end()) throw Error(ErrorCode::MalformedRecord, std::string("missing field '") + key + "'");
  if (!it->is_string()) throw Error(ErrorCode::MalformedRecord, std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open '" + path.string() + "'");
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write '" + path.string() + "'");
  return out;
}

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

Comment parse_comment(const std::string& line) {
  json doc;
  try {
    doc = json::parse(line);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::MalformedRecord, "record is not a JSON object");

  Comment c;
  c.id = require_string(doc, "id");
  if (c.id.empty()) throw Error(ErrorCode::MalformedRecord, "empty id");
  c.conversation_id = require_string(doc, "conversation_id");
  c.text = require_string(doc, "text");

  if (auto it = doc.find("parent_id"); it != doc.end() && !it->is_null()) {
    if (!it->is_string()) throw Error(ErrorCode::MalformedRecord, "field 'parent_id' must be a string or null");
    c.parent_id = it->get<std::string>();
    if (*c.parent_id == c.id) throw Error(ErrorCode::MalformedRecord, "comment '" + c.id + "' is its own parent");
  }

  auto ts = doc.find("timestamp");
  if (ts == doc.end() || !ts->is_number_integer()) {
    throw Error(ErrorCode::MalformedRecord, "field 'timestamp' must be an integer");
  }
  c.timestamp = ts->get<std::int64_t>();

  if (auto it = doc.find("author"); it != doc.end() && !it->is_null()) {
    if (!it->is_string()) throw Error(ErrorCode::MalformedRecord, "field 'author' must be a string");
    c.author = it->get<std::string>();
  }

  if (auto it = doc.find("categories"); it != doc.end() && !it->is_null()) {
    if (!it->is_array()) throw Error(ErrorCode::MalformedRecord, "field 'categories' must be an array");
    for (const auto& tag : *it) {
      if (!tag.is_string()) throw Error(ErrorCode::MalformedRecord, "categories must be strings");
      if (auto cat = parse_category(tag.get<std::string>())) c.categories.insert(*cat);
    }
  }

  if (auto it = doc.find("score"); it != doc.end() && !it->is_null()) {
    if (!it->is_number_integer()) throw Error(ErrorCode::MalformedRecord, "field 'score' must be an integer or null");
    const auto s = it->get<std::int64_t>();
    if (s < 1 || s > 5) {
      throw Error(ErrorCode::MalformedRecord, "score " + std::to_string(s) + " outside [1, 5]");
    }
    c.score = static_cast<int>(s);
  }
  return c;
}

std::string format_comment(const Comment& c) {
  ordered_json doc;
  doc["id"] = c.id;
  doc["parent_id"] = c.parent_id ? ordered_json(*c.parent_id) : ordered_json(nullptr);
  doc["conversation_id"] = c.conversation_id;
  doc["timestamp"] = c.timestamp;
  doc["author"] = c.author;
  doc["text"] = c.text;
  doc["categories"] = ordered_json::array();
  for (auto cat : c.categories) doc["categories"].push_back(std::string(to_string(cat)));
  doc["score"] = c.score ? ordered_json(*c.score) : ordered_json(nullptr);
  return doc.dump();
}

ParsedDump parse_dump(const std::filesystem::path& path, bool strict) {
  auto in = open_input(path);
  ParsedDump dump;
  std::string line;
  std::size_t line_no = 0;
  std::size_t records = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (blank(line)) continue;
    ++records;
    try {
      auto c = parse_comment(line);
      dump.conversations[c.conversation_id].push_back(std::move(c));
      ++dump.comment_count;
    } catch (const Error& e) {
      const std::string reason = e.what();
      if (strict) {
        throw Error(ErrorCode::MalformedRecord, path.string() + ":" + std::to_string(line_no) + ": " + reason);
      }
      dump.errors.push_back({line_no, reason});
    }
  }
  if (in.bad()) throw Error(ErrorCode::IoFailure, "read error on '" + path.string() + "'");
  if (records == 0) throw Error(ErrorCode::EmptyDump, "'" + path.string() + "' contains no records");
  for (auto& [_, comments] : dump.conversations) {
    std::sort(comments.begin(), comments.end(),
              [](const Comment& a, const Comment& b) { return a.id < b.id; });
  }
  return dump;
}

Corpus build_corpus(const ParsedDump& dump) {
  Corpus corpus;
  for (const auto& [id, comments] : dump.conversations) {
    corpus.emplace(id, build_tree(comments));
  }
  return corpus;
}

void write_dump(const std::filesystem::path& path, const Corpus& corpus) {
  auto out = open_output(path);
  for (const auto& [_, tree] : corpus) {
    std::vector<const Comment*> ordered;
    for (const auto& c : tree.comments()) ordered.push_back(&c);
    std::sort(ordered.begin(), ordered.end(),
              [](const Comment* a, const Comment* b) { return a->id < b->id; });
    for (const auto* c : ordered) out << format_comment(*c) << '\n';
  }
  if (!out) throw Error(ErrorCode::IoFailure, "write failed on '" + path.string() + "'");
}

std::vector<LabeledExample> read_labels(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<LabeledExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    auto fail = [&](const std::string& why) {
      return Error(ErrorCode::MalformedRecord, path.string() + ":" + std::to_string(line_no) + ": " + why);
    };
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::parse_error& e) {
      throw fail(std::string("invalid JSON: ") + e.what());
    }
    LabeledExample ex;
    try {
      ex.conversation_id = require_string(doc, "conversation_id");
      ex.target_id = require_string(doc, "target_id");
    } catch (const Error& e) {
      throw fail(e.what());
    }
    auto label = doc.find("label");
    if (label == doc.end() || !label->is_number_integer() ||
        (label->get<int>() != 0 && label->get<int>() != 1)) {
      throw fail("field 'label' must be 0 or 1");
    }
    ex.label = label->get<int>();
    if (auto cat = doc.find("category"); cat != doc.end() && cat->is_string()) {
      ex.category = cat->get<std::string>();
    }
    out.push_back(std::move(ex));
  }
  if (out.empty()) throw Error(ErrorCode::EmptyDump, "'" + path.string() + "' contains no labels");
  return out;
}

void write_labels(const std::filesystem::path& path, const std::vector<LabeledExample>& examples) {
  auto out = open_output(path);
  for (const auto& ex : examples) {
    ordered_json doc;
    doc["conversation_id"] = ex.conversation_id;
    doc["target_id"] = ex.target_id;
    doc["label"] = ex.label;
    out << doc.dump() << '\n';
  }
  if (!out) throw Error(ErrorCode::IoFailure, "write failed on '" + path.string() + "'");
}

Corpus select(const Corpus& corpus, const std::vector<std::string>& conversation_ids) {
  Corpus out;
  for (const auto& id : conversation_ids) {
    auto it = corpus.find(id);
    if (it == corpus.end()) throw Error(ErrorCode::UnknownId, "no conversation '" + id + "'");
    out.emplace(id, it->second);
  }
  return out;
}

std::vector<LabeledExample> build_binary_dataset(const Corpus& corpus, Category category,
                                                 std::uint64_t seed) {
  const std::string tag(to_string(category));
  std::vector<LabeledExample> positives;
  std::vector<LabeledExample> negatives;
  for (const auto& [conv, tree] : corpus) {
    for (const auto& c : tree.comments()) {
      if (c.has_category(category)) {
        positives.push_back({conv, c.id, 1, tag});
      } else if (c.is_rated()) {
        negatives.push_back({conv, c.id, 0, tag});
      }
    }
  }
  if (positives.empty()) throw Error(ErrorCode::NoPositives, "no comments tagged '" + tag + "'");
  if (negatives.empty()) throw Error(ErrorCode::NoNegatives, "no comments carrying another tag than '" + tag + "'");

  Rng rng(seed);
  const std::size_t n = std::min(positives.size(), negatives.size());
  if (positives.size() > n) {
    rng.shuffle(std::span(positives));
    positives.resize(n);
  }
  rng.shuffle(std::span(negatives));
  negatives.resize(n);

  std::vector<LabeledExample> out = std::move(positives);
  out.insert(out.end(), std::make_move_iterator(negatives.begin()), std::make_move_iterator(negatives.end()));
  rng.shuffle(std::span(out));
  return out;
}

ConversationSplit split_conversations(const Corpus& corpus, const SplitSpec& spec) {
  const double ratios[3] = {spec.train, spec.validation, spec.test};
  for (double r : ratios) {
    if (!(r >= 0.0)) throw Error(ErrorCode::InvalidConfig, "split ratios must be non-negative");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidConfig, "split ratios must sum to 1");
  }
  const std::size_t n = corpus.size();
  if (n < 3) {
    throw Error(ErrorCode::TooFewConversations, "need at least 3 conversations, have " + std::to_string(n));
  }

  std::size_t counts[3];
  double remainders[3];
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = ratios[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainders[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i) {
      if (remainders[i] > remainders[best]) best = i;
    }
    ++counts[best];
    remainders[best] = -1.0;
    ++assigned;
  }

  std::vector<std::string> ids;
  ids.reserve(n);
  for (const auto& [id, _] : corpus) ids.push_back(id);
  Rng rng(spec.seed);
  rng.shuffle(std::span(ids));

  ConversationSplit split;
  auto begin = ids.begin();
  split.train.assign(begin, begin + static_cast<std::ptrdiff_t>(counts[0]));
  begin += static_cast<std::ptrdiff_t>(counts[0]);
  split.validation.assign(begin, begin + static_cast<std::ptrdiff_t>(counts[1]));
  begin += static_cast<std::ptrdiff_t>(counts[1]);
  split.test.assign(begin, ids.end());
  for (auto* part : {&split.train, &split.validation, &split.test}) std::sort(part->begin(), part->end());
  return split;
}

namespace {

std::vector<std::string> make_vocabulary(std::size_t size) {
  static constexpr const char* kSyllables[] = {"ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo",
                                               "be", "da", "fe", "gu", "ho", "ji", "pe", "we"};
  constexpr std::size_t kBase = std::size(kSyllables);
  std::vector<std::string> words;
  words.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    std::string w;
    std::size_t x = i + kBase;  // every word has at least two syllables
    while (x > 0) {
      w += kSyllables[x % kBase];
      x /= kBase;
    }
    words.push_back(std::move(w));
  }
  return words;
}

void validate(const SyntheticConfig& cfg) {
  auto bad = [](const std::string& why) { return Error(ErrorCode::InvalidConfig, why); };
  if (cfg.n_trees == 0) throw bad("n_trees must be positive");
  if (cfg.min_nodes < 2) throw bad("min_nodes must be at least 2");
  if (cfg.max_nodes < cfg.min_nodes) throw bad("max_nodes must be >= min_nodes");
  if (!(cfg.branching_bias >= 0.0 && cfg.branching_bias <= 1.0)) throw bad("branching_bias must be in [0, 1]");
  if (!(cfg.label_noise >= 0.0 && cfg.label_noise < 0.5)) throw bad("label_noise must be in [0, 0.5)");
  if (cfg.window_size < 1 || cfg.window_size > kMaxWindowSize) throw bad("window_size must be in [1, 10]");
  if (cfg.vocabulary < 2) throw bad("vocabulary must have at least 2 words");
  if (cfg.min_words < 1 || cfg.max_words < cfg.min_words) throw bad("word counts must satisfy 1 <= min <= max");
  const auto tokens = tokenize(cfg.signal_token);
  if (tokens.size() != 1 || tokens.front() != cfg.signal_token) {
    throw bad("signal_token must be a single alphanumeric token");
  }
}

}  // namespace

SyntheticCorpus gen_synthetic(const SyntheticConfig& cfg) {
  validate(cfg);
  const auto vocab = make_vocabulary(cfg.vocabulary);
  std::string lowered_signal = cfg.signal_token;
  std::transform(lowered_signal.begin(), lowered_signal.end(), lowered_signal.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (std::find(vocab.begin(), vocab.end(), lowered_signal) != vocab.end()) {
    throw Error(ErrorCode::InvalidConfig, "signal_token collides with the vocabulary");
  }

  // Zipf(1) word frequencies.
  std::vector<double> cdf(vocab.size());
  double acc = 0.0;
  for (std::size_t r = 0; r < vocab.size(); ++r) {
    acc += 1.0 / static_cast<double>(r + 1);
    cdf[r] = acc;
  }
  for (auto& c : cdf) c /= acc;

  Rng rng(cfg.seed);
  auto sample_text = [&]() {
    const auto n_words = cfg.min_words + rng.index(cfg.max_words - cfg.min_words + 1);
    std::string text;
    for (std::size_t w = 0; w < n_words; ++w) {
      const double u = rng.uniform();
      auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
      const auto idx = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), vocab.size() - 1);
      if (!text.empty()) text += ' ';
      text += vocab[idx];
    }
    return text;
  };

  std::vector<int> planned(cfg.n_trees, 0);
  std::fill(planned.begin(), planned.begin() + static_cast<std::ptrdiff_t>(cfg.n_trees / 2), 1);
  rng.shuffle(std::span(planned));

  const std::string digits = std::to_string(cfg.n_trees > 1 ? cfg.n_trees - 1 : 1);
  SyntheticCorpus out;
  for (std::size_t t = 0; t < cfg.n_trees; ++t) {
    std::string conv = std::to_string(t);
    conv = "syn-" + std::string(digits.size() - conv.size(), '0') + conv;

    constexpr int kMaxAttempts = 100;
    for (int attempt = 0;; ++attempt) {
      if (attempt == kMaxAttempts) {
        throw Error(ErrorCode::InvalidConfig, "could not grow a tree with a non-empty " +
                                                  std::string(to_string(cfg.signal_zone)) + " window");
      }
      const auto n = cfg.min_nodes + rng.index(cfg.max_nodes - cfg.min_nodes + 1);
      std::vector<Comment> comments(n);
      std::int64_t ts = 1'400'000'000 + static_cast<std::int64_t>(t) * 86'400;
      for (std::size_t j = 0; j < n; ++j) {
        auto& c = comments[j];
        c.id = "n" + std::to_string(j);
        c.conversation_id = conv;
        if (j > 0) {
          const auto parent = rng.bernoulli(cfg.branching_bias) ? j - 1 : rng.index(j);
          c.parent_id = "n" + std::to_string(parent);
        }
        ts += 1 + static_cast<std::int64_t>(rng.index(120));
        c.timestamp = ts;
        c.author = "user" + std::to_string(rng.index(50));
        c.text = sample_text();
      }

      auto tree = build_tree(comments);
      std::vector<std::string> eligible;
      for (const auto& c : tree.comments()) {
        if (!extract_window(tree, c.id, cfg.signal_zone, cfg.window_size).empty()) eligible.push_back(c.id);
      }
      if (eligible.empty()) continue;

      const auto target = eligible[rng.index(eligible.size())];
      int label = planned[t];
      if (label == 1) {
        const auto zone = extract_window(tree, target, cfg.signal_zone, cfg.window_size);
        const auto& carrier = zone.member_ids[rng.index(zone.member_ids.size())];
        for (auto& c : comments) {
          if (c.id == carrier) c.text += " " + cfg.signal_token;
        }
        tree = build_tree(std::move(comments));
      }
      if (cfg.label_noise > 0.0 && rng.bernoulli(cfg.label_noise)) label = 1 - label;
      out.examples.push_back({conv, target, label, "signal:" + std::string(to_string(cfg.signal_zone))});
      out.trees.emplace(conv, std::move(tree));
      break;
    }
  }
  return out;
}

}  // namespace ck
