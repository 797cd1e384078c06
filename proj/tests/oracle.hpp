#pragma once

// Slow, independent reimplementations used as test oracles. Nothing here
// calls into the library except for plain data types.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ck/conversation.hpp"

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // row-major

inline ck::Comment make_comment(std::string id, std::optional<std::string> parent, std::int64_t ts,
                                std::string text = "", std::string conv = "t0") {
  ck::Comment c;
  c.id = std::move(id);
  c.parent_id = std::move(parent);
  c.conversation_id = std::move(conv);
  c.timestamp = ts;
  c.author = "u";
  c.text = text.empty() ? "comment " + c.id : std::move(text);
  return c;
}

// r(0); a(1,r); b(2,r); c(3,a); d(4,a); e(5,a); f(6,c)
inline std::vector<ck::Comment> t0_comments() {
  return {make_comment("r", std::nullopt, 0, "the root post about compilers"),
          make_comment("a", "r", 1, "I think the optimizer is wrong here"),
          make_comment("b", "r", 2, "Funny, mine works fine"),
          make_comment("c", "a", 3, "Which flags did you pass"),
          make_comment("d", "a", 4, "Same problem with O3"),
          make_comment("e", "a", 5, "Works for me on clang"),
          make_comment("f", "c", 6, "Just O2 and LTO")};
}

// Random tree: node j attaches to a uniform earlier node. Timestamps are
// drawn from a small range so ties are common and ids break them.
inline std::vector<ck::Comment> random_tree(std::mt19937_64& gen, std::size_t n,
                                            const std::string& conv = "rt") {
  std::vector<ck::Comment> out;
  std::uniform_int_distribution<int> ts(0, static_cast<int>(n));
  for (std::size_t j = 0; j < n; ++j) {
    std::optional<std::string> parent;
    if (j > 0) {
      std::uniform_int_distribution<std::size_t> pick(0, j - 1);
      parent = "n" + std::to_string(pick(gen));
    }
    out.push_back(make_comment("n" + std::to_string(j), parent, ts(gen), "", conv));
  }
  std::shuffle(out.begin(), out.end(), gen);
  return out;
}

struct Tree {
  std::map<std::string, ck::Comment> by_id;

  explicit Tree(const std::vector<ck::Comment>& comments) {
    for (const auto& c : comments) by_id[c.id] = c;
  }

  std::vector<std::string> path_to_root(const std::string& id) const {
    std::vector<std::string> path;
    std::string cur = id;
    while (by_id.at(cur).parent_id) {
      cur = *by_id.at(cur).parent_id;
      path.push_back(cur);
    }
    return path;
  }

  // Distance through the lowest common ancestor.
  std::size_t distance(const std::string& u, const std::string& v) const {
    auto pu = path_to_root(u);
    auto pv = path_to_root(v);
    pu.insert(pu.begin(), u);
    pv.insert(pv.begin(), v);
    for (std::size_t i = 0; i < pu.size(); ++i) {
      for (std::size_t j = 0; j < pv.size(); ++j) {
        if (pu[i] == pv[j]) return i + j;
      }
    }
    return static_cast<std::size_t>(-1);
  }

  bool earlier(const std::string& x, const std::string& y) const {
    const auto& a = by_id.at(x);
    const auto& b = by_id.at(y);
    if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
    return a.id < b.id;
  }

  std::vector<std::string> sorted(std::vector<std::string> ids) const {
    std::sort(ids.begin(), ids.end(), [&](const auto& x, const auto& y) { return earlier(x, y); });
    return ids;
  }

  std::vector<std::string> at_distance(const std::string& id, std::size_t k) const {
    std::vector<std::string> out;
    for (const auto& [other, c] : by_id) {
      if (distance(id, other) == k) out.push_back(other);
    }
    return sorted(out);
  }

  std::vector<std::string> children(const std::string& id) const {
    std::vector<std::string> out;
    for (const auto& [other, c] : by_id) {
      if (c.parent_id && *c.parent_id == id) out.push_back(other);
    }
    return sorted(out);
  }

  std::vector<std::string> siblings(const std::string& id) const {
    const auto& p = by_id.at(id).parent_id;
    if (!p) return {};
    std::vector<std::string> out;
    for (const auto& s : children(*p)) {
      if (s != id) out.push_back(s);
    }
    return out;
  }

  // Candidates for a window kind by name, before truncation.
  std::vector<std::string> candidates(const std::string& kind, const std::string& id) const {
    if (kind == "ancestor") return path_to_root(id);
    if (kind == "sibling") return siblings(id);
    if (kind == "children") return children(id);
    if (kind == "one_hop") return at_distance(id, 1);
    if (kind == "two_hop") return at_distance(id, 2);
    return {};
  }

  std::vector<std::string> window(const std::string& kind, const std::string& id,
                                  std::size_t L) const {
    auto c = candidates(kind, id);
    if (c.size() > L) c.resize(L);
    return c;
  }
};

// Hash embedder written out from its definition.
inline std::string lower(std::string s) {
  for (auto& ch : s) {
    if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch + 32);
  }
  return s;
}

inline std::vector<std::string> words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char ch : text) {
    bool keep = std::isalnum(ch) || ch >= 0x80;
    if (keep) {
      cur += static_cast<char>(ch);
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline std::uint64_t feature_hash(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : s) {
    h = (h ^ ch) * 1099511628211ULL;
  }
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
  return h ^ (h >> 31);
}

// Tokens are used as given except that non-marker tokens are lowercased.
inline Vec hash_tokens(const std::vector<std::string>& tokens, std::size_t d) {
  Vec v(d, 0.0);
  std::vector<std::string> t;
  for (const auto& tok : tokens) t.push_back(tok == "[CLS]" || tok == "[SEP]" ? tok : lower(tok));
  std::vector<std::string> features = t;
  for (std::size_t i = 0; i + 1 < t.size(); ++i) features.push_back(t[i] + " " + t[i + 1]);
  for (const auto& f : features) {
    auto h = feature_hash(f);
    v[h % d] += (h >> 63) ? -1.0 : 1.0;
  }
  double n = 0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n > 0) {
    for (double& x : v) x /= n;
  }
  return v;
}

inline Vec hash_text(const std::string& text, std::size_t d) { return hash_tokens(words(text), d); }

// [CLS] target [SEP] m1 [SEP] ... with per-comment and total truncation.
inline std::vector<std::string> joined_tokens(const std::string& target,
                                              const std::vector<std::string>& members,
                                              std::size_t per_comment, std::size_t max_len) {
  std::vector<std::string> out{"[CLS]"};
  auto add = [&](const std::string& text) {
    auto w = words(text);
    if (w.size() > per_comment) w.resize(per_comment);
    out.insert(out.end(), w.begin(), w.end());
    out.push_back("[SEP]");
  };
  add(target);
  for (const auto& m : members) add(m);
  if (out.size() > max_len) out.resize(max_len);
  return out;
}

inline Vec to_vec(const Eigen::VectorXd& v) { return Vec(v.data(), v.data() + v.size()); }

inline Mat to_mat(const Eigen::MatrixXd& m) {
  Mat out(static_cast<std::size_t>(m.rows()), Vec(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  }
  return out;
}

// Dense algebra on nested vectors.
inline Vec matvec(const Mat& m, const Vec& x) {
  Vec y(m.size(), 0.0);
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = 0; j < x.size(); ++j) y[i] += m[i][j] * x[j];
  }
  return y;
}

inline double dot(const Vec& a, const Vec& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline Vec softmax(const Vec& s) {
  double mx = *std::max_element(s.begin(), s.end());
  Vec e(s.size());
  double z = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    e[i] = std::exp(s[i] - mx);
    z += e[i];
  }
  for (double& x : e) x /= z;
  return e;
}

struct Head {
  Mat hidden_w;  // h x d
  Vec hidden_b;
  Mat output_w;  // 2 x h
  Vec output_b;

  double p_positive(const Vec& x) const {
    Vec hid = matvec(hidden_w, x);
    for (std::size_t i = 0; i < hid.size(); ++i) hid[i] = std::max(0.0, hid[i] + hidden_b[i]);
    Vec o = matvec(output_w, hid);
    o[0] += output_b[0];
    o[1] += output_b[1];
    return softmax(o)[1];
  }
};

// Per-class F1 straight from the vectors, no confusion matrix.
inline double class_f1(const std::vector<int>& preds, const std::vector<int>& labels, int cls) {
  double both = 0, predicted = 0, actual = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    both += preds[i] == cls && labels[i] == cls;
    predicted += preds[i] == cls;
    actual += labels[i] == cls;
  }
  if (predicted == 0 && actual == 0) return 1.0;
  double precision = predicted > 0 ? both / predicted : 0.0;
  double recall = actual > 0 ? both / actual : 0.0;
  return precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
}

inline double macro_f1(const std::vector<int>& preds, const std::vector<int>& labels) {
  return (class_f1(preds, labels, 0) + class_f1(preds, labels, 1)) / 2;
}

}  // namespace oracle
