#include "ck/embedding.hpp"

#include <cmath>

#include "ck/error.hpp"

namespace ck {
namespace {

bool is_token_byte(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

bool is_marker(std::string_view token) { return token == kBeginMarker || token == kSepMarker; }

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

void check_vector(const Vector& v, std::size_t expected, const std::string& who) {
  if (static_cast<std::size_t>(v.size()) != expected) {
    throw Error(ErrorCode::DimensionMismatch, who + " returned dimension " +
                                                  std::to_string(v.size()) + ", expected " +
                                                  std::to_string(expected));
  }
  if (!v.allFinite()) {
    throw Error(ErrorCode::DimensionMismatch, who + " returned non-finite entries");
  }
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !is_token_byte(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && is_token_byte(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) tokens.emplace_back(text.substr(start, i - start));
  }
  return tokens;
}

std::string JoinedSequence::render() const {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

JoinedSequence join_texts(std::string_view target_text, std::span<const std::string> window_texts,
                          const JoinOptions& options) {
  JoinedSequence joined;
  auto append_comment = [&](std::string_view text) {
    auto tokens = tokenize(text);
    if (tokens.size() > options.tokens_per_comment) {
      joined.truncated += tokens.size() - options.tokens_per_comment;
      tokens.resize(options.tokens_per_comment);
    }
    for (auto& t : tokens) joined.tokens.push_back(std::move(t));
  };

  joined.tokens.emplace_back(kBeginMarker);
  append_comment(target_text);
  joined.tokens.emplace_back(kSepMarker);
  for (const auto& member : window_texts) {
    append_comment(member);
    joined.tokens.emplace_back(kSepMarker);
  }
  if (joined.tokens.size() > options.max_length) {
    joined.truncated += joined.tokens.size() - options.max_length;
    joined.tokens.resize(options.max_length);
  }
  return joined;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

HashEmbeddingProvider::HashEmbeddingProvider(std::size_t dimension, std::size_t max_length)
    : dimension_(dimension), max_length_(max_length) {
  if (dimension == 0) throw Error(ErrorCode::InvalidConfig, "hash embedder dimension must be positive");
}

std::string HashEmbeddingProvider::name() const {
  return "hash-v1/d=" + std::to_string(dimension_);
}

Vector HashEmbeddingProvider::embed_tokens(std::span<const std::string> tokens) const {
  Vector v = Vector::Zero(static_cast<Eigen::Index>(dimension_));
  if (tokens.empty()) return v;

  std::vector<std::string> norm;
  norm.reserve(tokens.size());
  for (const auto& t : tokens) norm.push_back(is_marker(t) ? t : ascii_lower(t));

  auto add = [&](std::string_view feature) {
    const std::uint64_t h = mix64(fnv1a64(feature));
    const auto bucket = static_cast<Eigen::Index>(h % dimension_);
    v[bucket] += (h >> 63) ? -1.0 : 1.0;
  };
  for (std::size_t i = 0; i < norm.size(); ++i) {
    add(norm[i]);
    if (i + 1 < norm.size()) add(norm[i] + ' ' + norm[i + 1]);
  }
  const double n = v.norm();
  if (n > 0.0) v /= n;
  return v;
}

std::vector<Vector> HashEmbeddingProvider::embed_texts(std::span<const std::string> texts) const {
  std::vector<Vector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_tokens(tokenize(t)));
  return out;
}

std::vector<Vector> HashEmbeddingProvider::embed_joined(std::span<const JoinedSequence> joined) const {
  std::vector<Vector> out;
  out.reserve(joined.size());
  for (const auto& j : joined) out.push_back(embed_tokens(j.tokens));
  return out;
}

CachedProvider::CachedProvider(std::shared_ptr<const EmbeddingProvider> inner)
    : inner_(std::move(inner)) {}

std::vector<Vector> CachedProvider::lookup(std::span<const std::string> contents, bool joined,
                                           std::span<const std::string> texts,
                                           std::span<const JoinedSequence> sequences) const {
  const std::string ns = inner_->name() + (joined ? "\x1fjoined\x1f" : "\x1ftext\x1f");
  std::vector<Vector> out(contents.size());
  std::vector<std::size_t> missing;
  std::vector<std::uint64_t> keys(contents.size());
  {
    std::shared_lock lock(mutex_);
    for (std::size_t i = 0; i < contents.size(); ++i) {
      keys[i] = fnv1a64(ns + contents[i]);
      auto it = entries_.find(keys[i]);
      if (it != entries_.end() && it->second.content == contents[i]) {
        out[i] = it->second.value;
      } else {
        missing.push_back(i);
      }
    }
  }
  if (missing.empty()) {
    std::unique_lock lock(mutex_);
    hits_ += contents.size();
    return out;
  }

  std::vector<Vector> fresh;
  if (joined) {
    std::vector<JoinedSequence> batch;
    for (auto i : missing) batch.push_back(sequences[i]);
    fresh = inner_->embed_joined(batch);
  } else {
    std::vector<std::string> batch;
    for (auto i : missing) batch.push_back(texts[i]);
    fresh = inner_->embed_texts(batch);
  }
  if (fresh.size() != missing.size()) {
    throw Error(ErrorCode::DimensionMismatch, "provider returned " + std::to_string(fresh.size()) +
                                                  " vectors for " + std::to_string(missing.size()) +
                                                  " inputs");
  }

  std::unique_lock lock(mutex_);
  hits_ += contents.size() - missing.size();
  misses_ += missing.size();
  for (std::size_t m = 0; m < missing.size(); ++m) {
    const auto i = missing[m];
    out[i] = fresh[m];
    auto [it, inserted] = entries_.try_emplace(keys[i], Entry{contents[i], fresh[m]});
    // A hash collision leaves the older entry in place; the colliding input is simply not cached.
    (void)it;
    (void)inserted;
  }
  return out;
}

std::vector<Vector> CachedProvider::embed_texts(std::span<const std::string> texts) const {
  return lookup(texts, false, texts, {});
}

std::vector<Vector> CachedProvider::embed_joined(std::span<const JoinedSequence> joined) const {
  std::vector<std::string> contents;
  contents.reserve(joined.size());
  for (const auto& j : joined) contents.push_back(j.render());
  return lookup(contents, true, {}, joined);
}

Vector embed_text(const EmbeddingProvider& provider, std::string_view text) {
  const std::string owned(text);
  auto out = provider.embed_texts(std::span<const std::string>(&owned, 1));
  if (out.size() != 1) {
    throw Error(ErrorCode::DimensionMismatch, provider.name() + " returned no vector");
  }
  check_vector(out.front(), provider.dimension(), provider.name());
  return std::move(out.front());
}

Vector embed_joined(const EmbeddingProvider& provider, const JoinedSequence& joined) {
  auto out = provider.embed_joined(std::span<const JoinedSequence>(&joined, 1));
  if (out.size() != 1) {
    throw Error(ErrorCode::DimensionMismatch, provider.name() + " returned no vector");
  }
  check_vector(out.front(), provider.dimension(), provider.name());
  return std::move(out.front());
}

Vector mean_of(std::span<const Vector> vectors) {
  if (vectors.empty()) throw Error(ErrorCode::EmptyWindow, "cannot pool an empty window");
  Vector sum = vectors.front();
  for (std::size_t i = 1; i < vectors.size(); ++i) {
    if (vectors[i].size() != sum.size()) {
      throw Error(ErrorCode::DimensionMismatch, "window members have different dimensions");
    }
    sum += vectors[i];
  }
  return sum / static_cast<double>(vectors.size());
}

namespace {

void check_projection(const Matrix& w, const EmbeddingProvider& provider, const char* which) {
  if (static_cast<std::size_t>(w.cols()) != provider.dimension()) {
    throw Error(ErrorCode::DimensionMismatch,
                std::string(which) + " projection has " + std::to_string(w.cols()) +
                    " columns, provider dimension is " + std::to_string(provider.dimension()));
  }
}

}  // namespace

Vector embed_comment(const ProjectionParams& params, const EmbeddingProvider& provider,
                     std::string_view text) {
  check_projection(params.comment, provider, "comment");
  return params.comment * embed_text(provider, text);
}

Vector embed_window(const ProjectionParams& params, const EmbeddingProvider& provider,
                    std::span<const std::string> window_texts) {
  if (window_texts.empty()) throw Error(ErrorCode::EmptyWindow, "cannot embed an empty window");
  check_projection(params.window, provider, "window");
  std::vector<Vector> members;
  members.reserve(window_texts.size());
  for (const auto& t : window_texts) members.push_back(embed_text(provider, t));
  return params.window * mean_of(members);
}

}  // namespace ck
