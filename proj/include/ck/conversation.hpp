#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ck {

/// Community moderation tags. `Unknown` keeps tags this build does not
/// recognise; the literal tag "none" parses to an empty tag set.
enum class Category {
  Insightful,
  Informative,
  Interesting,
  Funny,
  OffTopic,
  Flamebait,
  Troll,
  Redundant,
  Unknown,
};

std::string_view to_string(Category category);
/// "off-topic", "Funny", "none" ... ; returns nullopt for "none" and the empty string.
std::optional<Category> parse_category(std::string_view tag);
/// Strict variant for user input: throws InvalidConfig on anything but the eight known tags.
Category category_from_name(std::string_view tag);

struct Comment {
  std::string id;
  std::optional<std::string> parent_id;
  std::string conversation_id;
  std::int64_t timestamp = 0;
  std::string author;
  std::string text;
  std::set<Category> categories;
  std::optional<int> score;

  bool has_category(Category c) const { return categories.contains(c); }
  /// True when at least one recognised moderation tag is present.
  bool is_rated() const;
};

/// Immutable rooted reply tree. Built only through `build`, which validates
/// every structural invariant. All orderings are (timestamp, id) ascending,
/// except ancestors, which run parent-first.
class ConversationTree {
 public:
  /// Errors: NoRoot, MultipleRoots, DanglingParent, CycleDetected,
  /// DuplicateId, MixedConversations.
  static ConversationTree build(std::vector<Comment> comments);

  const std::string& conversation_id() const { return conversation_id_; }
  const std::string& root_id() const { return nodes_[root_].id; }
  std::size_t size() const { return nodes_.size(); }
  bool contains(std::string_view id) const;

  const Comment& comment(std::string_view id) const;
  /// Comments in (timestamp, id) order.
  std::span<const Comment> comments() const { return nodes_; }

  std::optional<std::string> parent(std::string_view id) const;
  std::size_t depth(std::string_view id) const;

  std::vector<std::string> ancestors(std::string_view id) const;
  std::vector<std::string> siblings(std::string_view id) const;
  std::vector<std::string> children(std::string_view id) const;
  /// Nodes at undirected distance exactly k (k >= 1).
  std::vector<std::string> k_hop(std::string_view id, std::size_t k) const;

  /// id -> ordered child ids, for every node that has children.
  std::map<std::string, std::vector<std::string>> children_index() const;

 private:
  static constexpr std::size_t kNoParent = static_cast<std::size_t>(-1);

  std::size_t index_of(std::string_view id) const;
  std::vector<std::string> ids(std::span<const std::size_t> indices) const;

  std::string conversation_id_;
  std::vector<Comment> nodes_;  // sorted by (timestamp, id)
  std::vector<std::size_t> parent_;
  std::vector<std::vector<std::size_t>> children_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t root_ = 0;
};

inline ConversationTree build_tree(std::vector<Comment> comments) {
  return ConversationTree::build(std::move(comments));
}

/// Conversation id -> tree, iterated in conversation-id order.
using Corpus = std::map<std::string, ConversationTree>;

}  // namespace ck
