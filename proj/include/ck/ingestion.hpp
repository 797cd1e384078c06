#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ck/conversation.hpp"
#include "ck/windows.hpp"

namespace ck {

struct LabeledExample {
  std::string conversation_id;
  std::string target_id;
  int label = 0;  // 0 or 1
  std::string category;

  bool operator==(const LabeledExample&) const = default;
};

struct DumpError {
  std::size_t line = 0;  // 1-based
  std::string reason;
};

struct ParsedDump {
  /// conversation id -> comments ordered by id
  std::map<std::string, std::vector<Comment>> conversations;
  std::vector<DumpError> errors;
  std::size_t comment_count = 0;
};

/// Reads a JSONL dump, one record per line:
///   {"id": str, "parent_id": str|null, "conversation_id": str, "timestamp": int,
///    "author": str, "text": str, "categories": [str], "score": int|null}
/// In strict mode the first bad line throws MalformedRecord; otherwise bad
/// lines are collected in `errors` and skipped. Blank lines are ignored.
/// Errors: IoFailure, EmptyDump (no records at all), MalformedRecord.
ParsedDump parse_dump(const std::filesystem::path& path, bool strict = true);

/// Parses one JSON record. Errors: MalformedRecord (line 0).
Comment parse_comment(const std::string& line);
std::string format_comment(const Comment& comment);

/// Builds every conversation's tree; the first invalid conversation throws.
Corpus build_corpus(const ParsedDump& dump);

/// Writes comments in (conversation_id, id) order.
void write_dump(const std::filesystem::path& path, const Corpus& corpus);

/// Sidecar label file: {"conversation_id": str, "target_id": str, "label": 0|1} per line.
std::vector<LabeledExample> read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, const std::vector<LabeledExample>& examples);

/// Trees whose ids are listed; unknown ids throw UnknownId.
Corpus select(const Corpus& corpus, const std::vector<std::string>& conversation_ids);

/// Balanced binary dataset for one moderation tag. Positives carry the tag;
/// negatives are drawn from comments carrying some other recognised tag
/// (untagged comments are never negatives). When negatives are scarcer than
/// positives the positives are subsampled instead, so both classes always
/// have equal size. Output order is a seeded shuffle.
/// Errors: NoPositives, NoNegatives.
std::vector<LabeledExample> build_binary_dataset(const Corpus& corpus, Category category,
                                                 std::uint64_t seed);

struct SplitSpec {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
  std::uint64_t seed = 0;
};

struct ConversationSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
};

/// Conversation-level split. Counts use largest-remainder rounding, so each
/// part is within one conversation of its exact share.
/// Errors: TooFewConversations (< 3), InvalidConfig (bad ratios).
ConversationSplit split_conversations(const Corpus& corpus, const SplitSpec& spec);

struct SyntheticConfig {
  std::size_t n_trees = 100;
  std::size_t min_nodes = 8;
  std::size_t max_nodes = 30;
  /// Probability that a new comment replies to the previous one instead of a
  /// uniformly chosen earlier comment. Higher values give deeper threads.
  double branching_bias = 0.3;
  WindowKind signal_zone = WindowKind::Ancestor;
  std::string signal_token = "zqxsignal";
  double label_noise = 0.0;
  std::uint64_t seed = 0;
  std::size_t window_size = kDefaultWindowSize;
  std::size_t vocabulary = 300;
  std::size_t min_words = 4;
  std::size_t max_words = 10;
};

struct SyntheticCorpus {
  Corpus trees;
  std::vector<LabeledExample> examples;  // one per tree, in conversation order
};

/// Planted-signal corpus: each tree has one target whose label says whether
/// the signal token was placed in a comment of the target's signal-zone
/// window. Errors: InvalidConfig.
SyntheticCorpus gen_synthetic(const SyntheticConfig& config);

}  // namespace ck
