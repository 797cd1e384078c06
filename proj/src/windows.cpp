#include "ck/windows.hpp"

#include <algorithm>
#include <array>

#include "ck/error.hpp"

namespace ck {
namespace {

constexpr std::array kAncSibChild{WindowKind::Ancestor, WindowKind::Sibling, WindowKind::Children};
constexpr std::array kOneTwoHop{WindowKind::OneHop, WindowKind::TwoHop};

std::string normalise(std::string_view name) {
  std::string out(name);
  std::replace(out.begin(), out.end(), '_', '-');
  return out;
}

}  // namespace

std::string_view to_string(WindowKind kind) {
  switch (kind) {
    case WindowKind::Ancestor: return "ancestor";
    case WindowKind::Sibling: return "sibling";
    case WindowKind::Children: return "children";
    case WindowKind::OneHop: return "one_hop";
    case WindowKind::TwoHop: return "two_hop";
  }
  return "?";
}

std::string_view to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::AncSibChild: return "anc-sib-child";
    case KernelFamily::OneTwoHop: return "one-two-hop";
    case KernelFamily::TargetOnly: return "none";
  }
  return "?";
}

WindowKind parse_window_kind(std::string_view name) {
  const auto key = normalise(name);
  if (key == "ancestor") return WindowKind::Ancestor;
  if (key == "sibling") return WindowKind::Sibling;
  if (key == "children") return WindowKind::Children;
  if (key == "one-hop") return WindowKind::OneHop;
  if (key == "two-hop") return WindowKind::TwoHop;
  throw Error(ErrorCode::InvalidConfig, "unknown window kind '" + std::string(name) + "'");
}

KernelFamily parse_kernel_family(std::string_view name) {
  const auto key = normalise(name);
  if (key == "anc-sib-child") return KernelFamily::AncSibChild;
  if (key == "one-two-hop") return KernelFamily::OneTwoHop;
  if (key == "none" || key == "target-only") return KernelFamily::TargetOnly;
  throw Error(ErrorCode::InvalidConfig, "unknown kernel family '" + std::string(name) + "'");
}

std::span<const WindowKind> window_kinds(KernelFamily family) {
  switch (family) {
    case KernelFamily::AncSibChild: return kAncSibChild;
    case KernelFamily::OneTwoHop: return kOneTwoHop;
    case KernelFamily::TargetOnly: return {};
  }
  return {};
}

KernelFamily family_of(WindowKind kind) {
  return (kind == WindowKind::OneHop || kind == WindowKind::TwoHop) ? KernelFamily::OneTwoHop
                                                                    : KernelFamily::AncSibChild;
}

bool WindowSet::all_masked() const {
  return std::none_of(mask.begin(), mask.end(), [](bool m) { return m; });
}

Window extract_window(const ConversationTree& tree, std::string_view target_id, WindowKind kind,
                      std::size_t window_size) {
  if (window_size < 1 || window_size > kMaxWindowSize) {
    throw Error(ErrorCode::InvalidConfig,
                "window size must be in [1, " + std::to_string(kMaxWindowSize) + "], got " +
                    std::to_string(window_size));
  }
  if (!tree.contains(target_id)) {
    throw Error(ErrorCode::UnknownTarget, "target '" + std::string(target_id) +
                                              "' not in conversation '" + tree.conversation_id() +
                                              "'");
  }
  std::vector<std::string> candidates;
  switch (kind) {
    case WindowKind::Ancestor: candidates = tree.ancestors(target_id); break;
    case WindowKind::Sibling: candidates = tree.siblings(target_id); break;
    case WindowKind::Children: candidates = tree.children(target_id); break;
    case WindowKind::OneHop: candidates = tree.k_hop(target_id, 1); break;
    case WindowKind::TwoHop: candidates = tree.k_hop(target_id, 2); break;
  }
  if (candidates.size() > window_size) candidates.resize(window_size);
  return Window{kind, std::move(candidates)};
}

WindowSet extract_windows(const ConversationTree& tree, std::string_view target_id,
                          const KernelShape& shape) {
  if (!tree.contains(target_id)) {
    throw Error(ErrorCode::UnknownTarget, "target '" + std::string(target_id) +
                                              "' not in conversation '" + tree.conversation_id() +
                                              "'");
  }
  WindowSet set;
  set.target_id = std::string(target_id);
  for (auto kind : window_kinds(shape.family)) {
    auto w = extract_window(tree, target_id, kind, shape.window_size);
    set.mask.push_back(!w.empty());
    set.windows.push_back(std::move(w));
  }
  return set;
}

}  // namespace ck
