#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ck/conversation.hpp"

namespace ck {

enum class WindowKind { Ancestor, Sibling, Children, OneHop, TwoHop };

/// Kernel families. `TargetOnly` carves no windows at all; it is the
/// context-free baseline and always takes the fallback path.
enum class KernelFamily { AncSibChild, OneTwoHop, TargetOnly };

std::string_view to_string(WindowKind kind);
std::string_view to_string(KernelFamily family);
/// Accepts "ancestor", "sibling", "children", "one_hop"/"one-hop", "two_hop"/"two-hop".
WindowKind parse_window_kind(std::string_view name);
/// Accepts "anc-sib-child", "one-two-hop", "none" (underscores allowed).
KernelFamily parse_kernel_family(std::string_view name);

/// The window kinds a family produces, in WindowSet order.
std::span<const WindowKind> window_kinds(KernelFamily family);
/// The family a window kind belongs to.
KernelFamily family_of(WindowKind kind);

inline constexpr std::size_t kDefaultWindowSize = 3;
inline constexpr std::size_t kMaxWindowSize = 10;

struct KernelShape {
  KernelFamily family = KernelFamily::AncSibChild;
  std::size_t window_size = kDefaultWindowSize;  // L
};

struct Window {
  WindowKind kind;
  std::vector<std::string> member_ids;

  bool empty() const { return member_ids.empty(); }
};

struct WindowSet {
  std::string target_id;
  std::vector<Window> windows;
  std::vector<bool> mask;  // mask[i] == !windows[i].empty()

  bool all_masked() const;
};

/// Carves the target's neighbourhood into the family's windows, each capped at
/// L members. Errors: UnknownTarget; InvalidConfig for L outside [1, 10].
WindowSet extract_windows(const ConversationTree& tree, std::string_view target_id,
                          const KernelShape& shape);

/// The single window of the given kind (first L members of its traversal).
Window extract_window(const ConversationTree& tree, std::string_view target_id, WindowKind kind,
                      std::size_t window_size);

}  // namespace ck
