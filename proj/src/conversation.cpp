#include "ck/conversation.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <numeric>

#include "ck/error.hpp"

namespace ck {
namespace {

struct TagName {
  Category category;
  std::string_view name;
};

constexpr TagName kTags[] = {
    {Category::Insightful, "insightful"}, {Category::Informative, "informative"},
    {Category::Interesting, "interesting"}, {Category::Funny, "funny"},
    {Category::OffTopic, "off-topic"},    {Category::Flamebait, "flamebait"},
    {Category::Troll, "troll"},           {Category::Redundant, "redundant"},
    {Category::Unknown, "unknown"},
};

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

}  // namespace

std::string_view to_string(Category category) {
  for (const auto& tag : kTags) {
    if (tag.category == category) return tag.name;
  }
  return "unknown";
}

std::optional<Category> parse_category(std::string_view tag) {
  const std::string key = lower(tag);
  if (key.empty() || key == "none") return std::nullopt;
  if (key == "offtopic" || key == "off_topic") return Category::OffTopic;
  for (const auto& t : kTags) {
    if (t.name == key) return t.category;
  }
  return Category::Unknown;
}

Category category_from_name(std::string_view tag) {
  const auto parsed = parse_category(tag);
  if (!parsed || *parsed == Category::Unknown) {
    throw Error(ErrorCode::InvalidConfig, "unknown category '" + std::string(tag) + "'");
  }
  return *parsed;
}

bool Comment::is_rated() const {
  return std::any_of(categories.begin(), categories.end(),
                     [](Category c) { return c != Category::Unknown; });
}

ConversationTree ConversationTree::build(std::vector<Comment> comments) {
  if (comments.empty()) {
    throw Error(ErrorCode::NoRoot, "no comments given");
  }
  const std::string conversation = comments.front().conversation_id;
  for (const auto& c : comments) {
    if (c.conversation_id != conversation) {
      throw Error(ErrorCode::MixedConversations,
                  "comment '" + c.id + "' belongs to '" + c.conversation_id + "', expected '" +
                      conversation + "'");
    }
  }

  std::sort(comments.begin(), comments.end(), [](const Comment& a, const Comment& b) {
    return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.id < b.id;
  });

  ConversationTree tree;
  tree.conversation_id_ = conversation;
  tree.nodes_ = std::move(comments);
  const std::size_t n = tree.nodes_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& id = tree.nodes_[i].id;
    if (id.empty()) {
      throw Error(ErrorCode::DuplicateId, "empty comment id in conversation '" + conversation + "'");
    }
    if (!tree.index_.emplace(id, i).second) {
      throw Error(ErrorCode::DuplicateId, "duplicate comment id '" + id + "'");
    }
  }

  tree.parent_.assign(n, kNoParent);
  std::vector<std::size_t> roots;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = tree.nodes_[i];
    if (!c.parent_id) {
      roots.push_back(i);
      continue;
    }
    if (*c.parent_id == c.id) {
      throw Error(ErrorCode::CycleDetected, "comment '" + c.id + "' is its own parent");
    }
    auto it = tree.index_.find(*c.parent_id);
    if (it == tree.index_.end()) {
      throw Error(ErrorCode::DanglingParent,
                  "comment '" + c.id + "' replies to missing '" + *c.parent_id + "'");
    }
    tree.parent_[i] = it->second;
  }

  // Walk every parent chain; a chain that revisits a node on the current walk is a cycle.
  enum : unsigned char { kUnseen, kActive, kDone };
  std::vector<unsigned char> state(n, kUnseen);
  for (std::size_t start = 0; start < n; ++start) {
    std::vector<std::size_t> walk;
    std::size_t cur = start;
    while (cur != kNoParent && state[cur] == kUnseen) {
      state[cur] = kActive;
      walk.push_back(cur);
      cur = tree.parent_[cur];
    }
    if (cur != kNoParent && state[cur] == kActive) {
      std::string members;
      auto pos = std::find(walk.begin(), walk.end(), cur);
      for (auto it = pos; it != walk.end(); ++it) {
        if (!members.empty()) members += ", ";
        members += tree.nodes_[*it].id;
      }
      throw Error(ErrorCode::CycleDetected, "reply cycle through [" + members + "]");
    }
    for (auto i : walk) state[i] = kDone;
  }

  if (roots.empty()) {
    throw Error(ErrorCode::NoRoot, "conversation '" + conversation + "' has no root comment");
  }
  if (roots.size() > 1) {
    std::string names;
    for (auto r : roots) {
      if (!names.empty()) names += ", ";
      names += tree.nodes_[r].id;
    }
    throw Error(ErrorCode::MultipleRoots, "conversation '" + conversation + "' has roots [" + names + "]");
  }
  tree.root_ = roots.front();

  // Ascending index order is (timestamp, id) order, so children come out sorted.
  tree.children_.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    if (tree.parent_[i] != kNoParent) tree.children_[tree.parent_[i]].push_back(i);
  }
  return tree;
}

bool ConversationTree::contains(std::string_view id) const {
  return index_.contains(std::string(id));
}

std::size_t ConversationTree::index_of(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) {
    throw Error(ErrorCode::UnknownId,
                "no comment '" + std::string(id) + "' in conversation '" + conversation_id_ + "'");
  }
  return it->second;
}

std::vector<std::string> ConversationTree::ids(std::span<const std::size_t> indices) const {
  std::vector<std::string> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(nodes_[i].id);
  return out;
}

const Comment& ConversationTree::comment(std::string_view id) const {
  return nodes_[index_of(id)];
}

std::optional<std::string> ConversationTree::parent(std::string_view id) const {
  const auto p = parent_[index_of(id)];
  if (p == kNoParent) return std::nullopt;
  return nodes_[p].id;
}

std::size_t ConversationTree::depth(std::string_view id) const {
  std::size_t d = 0;
  for (auto cur = parent_[index_of(id)]; cur != kNoParent; cur = parent_[cur]) ++d;
  return d;
}

std::vector<std::string> ConversationTree::ancestors(std::string_view id) const {
  std::vector<std::size_t> chain;
  for (auto cur = parent_[index_of(id)]; cur != kNoParent; cur = parent_[cur]) {
    chain.push_back(cur);
  }
  return ids(chain);
}

std::vector<std::string> ConversationTree::siblings(std::string_view id) const {
  const auto self = index_of(id);
  const auto p = parent_[self];
  if (p == kNoParent) return {};
  std::vector<std::size_t> out;
  for (auto c : children_[p]) {
    if (c != self) out.push_back(c);
  }
  return ids(out);
}

std::vector<std::string> ConversationTree::children(std::string_view id) const {
  return ids(children_[index_of(id)]);
}

std::vector<std::string> ConversationTree::k_hop(std::string_view id, std::size_t k) const {
  const auto start = index_of(id);
  if (k == 0) {
    throw Error(ErrorCode::InvalidConfig, "k_hop requires k >= 1");
  }
  constexpr std::size_t kUnvisited = static_cast<std::size_t>(-1);
  std::vector<std::size_t> dist(nodes_.size(), kUnvisited);
  std::deque<std::size_t> queue{start};
  dist[start] = 0;
  std::vector<std::size_t> ring;
  while (!queue.empty()) {
    const auto u = queue.front();
    queue.pop_front();
    if (dist[u] == k) {
      ring.push_back(u);
      continue;
    }
    auto visit = [&](std::size_t v) {
      if (dist[v] == kUnvisited) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
    };
    if (parent_[u] != kNoParent) visit(parent_[u]);
    for (auto c : children_[u]) visit(c);
  }
  std::sort(ring.begin(), ring.end());
  return ids(ring);
}

std::map<std::string, std::vector<std::string>> ConversationTree::children_index() const {
  std::map<std::string, std::vector<std::string>> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!children_[i].empty()) out.emplace(nodes_[i].id, ids(children_[i]));
  }
  return out;
}

}  // namespace ck
