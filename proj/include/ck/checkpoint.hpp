#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ck/model.hpp"
#include "ck/training.hpp"

namespace ck {

inline constexpr int kCheckpointVersion = 1;

/// Everything needed to rebuild a trained model and audit how it was trained.
///
/// On disk this is a single JSON document:
///
///   {
///     "format": "conversation-kernels-checkpoint",
///     "version": 1,
///     "provider": {"name": str, "dimension": int},
///     "model": {"kernel": str, "window_size": int, "model_dim": int, "hidden": int,
///               "tokens_per_comment": int, "max_join_length": int},
///     "train": {"batch_size", "learning_rate", "epochs", "warmup_fraction", "seed",
///               "beta1", "beta2", "adam_epsilon"},
///     "best_epoch": int,
///     "metadata": {str: str},
///     "tensors": [{"name": str, "rows": int, "cols": int, "values": [row-major floats]}],
///     "history": [{"epoch", "train_loss", "validation_loss", "validation_accuracy",
///                  "validation_macro_f1"}]
///   }
///
/// Doubles are written with round-trip precision, so load(save(x)) is bit-exact.
struct Checkpoint {
  Model model;
  std::string provider_name;
  std::size_t provider_dimension = 0;
  TrainConfig train;
  std::size_t best_epoch = 0;
  std::vector<EpochStats> history;
  std::map<std::string, std::string> metadata;
};

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::string& text);

/// Errors: IoFailure.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
/// Errors: IoFailure, BadCheckpoint.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ck
