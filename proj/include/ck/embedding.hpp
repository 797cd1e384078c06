#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ck {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr std::string_view kBeginMarker = "[CLS]";
inline constexpr std::string_view kSepMarker = "[SEP]";

/// Splits text into maximal runs of ASCII alphanumerics and non-ASCII bytes
/// (so UTF-8 letters stay inside tokens). Case is preserved.
std::vector<std::string> tokenize(std::string_view text);

/// Target and window comments flattened into one marker-delimited token stream.
struct JoinedSequence {
  std::vector<std::string> tokens;
  std::size_t truncated = 0;  // tokens dropped by the per-comment and total caps

  /// Space-separated rendering with literal "[CLS]"/"[SEP]" markers, as sent
  /// to remote providers.
  std::string render() const;
};

struct JoinOptions {
  std::size_t tokens_per_comment = 64;  // T
  std::size_t max_length = 512;
};

/// [CLS] target [SEP] c1 [SEP] ... cL [SEP], each comment capped at T tokens
/// and the whole sequence tail-truncated to max_length.
JoinedSequence join_texts(std::string_view target_text, std::span<const std::string> window_texts,
                          const JoinOptions& options = {});

/// Frozen text backbone. Implementations must be safe for concurrent calls.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  /// Stable descriptor; stored in checkpoints and used as the cache namespace.
  virtual std::string name() const = 0;
  virtual std::size_t dimension() const = 0;
  virtual bool deterministic() const = 0;
  /// Longest joined sequence the backbone accepts, in tokens.
  virtual std::size_t max_length() const = 0;

  virtual std::vector<Vector> embed_texts(std::span<const std::string> texts) const = 0;
  virtual std::vector<Vector> embed_joined(std::span<const JoinedSequence> joined) const = 0;
};

/// Fewer buckets than this and common words collide with rare ones often
/// enough to blur single-token signals.
inline constexpr std::size_t kDefaultHashDimension = 512;

/// Signed feature hashing over lowercased unigrams and adjacent bigrams,
/// L2-normalised. Empty input maps to the zero vector.
class HashEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HashEmbeddingProvider(std::size_t dimension = kDefaultHashDimension,
                                 std::size_t max_length = 512);

  std::string name() const override;
  std::size_t dimension() const override { return dimension_; }
  bool deterministic() const override { return true; }
  std::size_t max_length() const override { return max_length_; }

  std::vector<Vector> embed_texts(std::span<const std::string> texts) const override;
  std::vector<Vector> embed_joined(std::span<const JoinedSequence> joined) const override;

  /// Embeds an already-tokenised sequence. Markers pass through unchanged,
  /// every other token is lowercased.
  Vector embed_tokens(std::span<const std::string> tokens) const;

 private:
  std::size_t dimension_;
  std::size_t max_length_;
};

/// 64-bit FNV-1a; also the cache key hash.
std::uint64_t fnv1a64(std::string_view bytes);

/// Memoising wrapper. Results are bit-identical to the wrapped provider.
class CachedProvider final : public EmbeddingProvider {
 public:
  explicit CachedProvider(std::shared_ptr<const EmbeddingProvider> inner);

  std::string name() const override { return inner_->name(); }
  std::size_t dimension() const override { return inner_->dimension(); }
  bool deterministic() const override { return inner_->deterministic(); }
  std::size_t max_length() const override { return inner_->max_length(); }

  std::vector<Vector> embed_texts(std::span<const std::string> texts) const override;
  std::vector<Vector> embed_joined(std::span<const JoinedSequence> joined) const override;

  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }

 private:
  struct Entry {
    std::string content;
    Vector value;
  };

  std::vector<Vector> lookup(std::span<const std::string> contents, bool joined,
                             std::span<const std::string> texts,
                             std::span<const JoinedSequence> sequences) const;

  std::shared_ptr<const EmbeddingProvider> inner_;
  mutable std::shared_mutex mutex_;
  mutable std::unordered_map<std::uint64_t, Entry> entries_;
  mutable std::size_t hits_ = 0;
  mutable std::size_t misses_ = 0;
};

/// One vector per text. Errors: DimensionMismatch if the provider returns a
/// vector of the wrong size or with non-finite entries.
Vector embed_text(const EmbeddingProvider& provider, std::string_view text);
Vector embed_joined(const EmbeddingProvider& provider, const JoinedSequence& joined);

/// Trainable projections applied on top of the frozen backbone.
struct ProjectionParams {
  Matrix comment;  // d_model x d_backbone
  Matrix window;   // d_model x d_backbone

  std::size_t model_dim() const { return static_cast<std::size_t>(comment.rows()); }
  std::size_t backbone_dim() const { return static_cast<std::size_t>(comment.cols()); }
};

/// Mean of equally sized vectors, accumulated in input order.
/// Errors: EmptyWindow, DimensionMismatch.
Vector mean_of(std::span<const Vector> vectors);

/// W_comment * backbone(text).
Vector embed_comment(const ProjectionParams& params, const EmbeddingProvider& provider,
                     std::string_view text);
/// W_window * mean(backbone(member) for member in window).
Vector embed_window(const ProjectionParams& params, const EmbeddingProvider& provider,
                    std::span<const std::string> window_texts);

}  // namespace ck
