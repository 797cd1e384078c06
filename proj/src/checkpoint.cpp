#include "ck/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ck/error.hpp"

namespace ck {
namespace {

using nlohmann::ordered_json;
constexpr const char* kFormat = "conversation-kernels-checkpoint";

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ck) {
  ordered_json doc;
  doc["format"] = kFormat;
  doc["version"] = kCheckpointVersion;
  doc["provider"] = {{"name", ck.provider_name}, {"dimension", ck.provider_dimension}};
  const auto& mc = ck.model.config;
  doc["model"] = {{"kernel", std::string(to_string(mc.shape.family))},
                  {"window_size", mc.shape.window_size},
                  {"model_dim", mc.model_dim},
                  {"hidden", mc.hidden},
                  {"tokens_per_comment", mc.tokens_per_comment},
                  {"max_join_length", mc.max_join_length}};
  const auto& tc = ck.train;
  doc["train"] = {{"batch_size", tc.batch_size},       {"learning_rate", tc.learning_rate},
                  {"epochs", tc.epochs},               {"warmup_fraction", tc.warmup_fraction},
                  {"seed", tc.seed},                   {"beta1", tc.beta1},
                  {"beta2", tc.beta2},                 {"adam_epsilon", tc.adam_epsilon}};
  doc["best_epoch"] = ck.best_epoch;
  doc["metadata"] = ordered_json::object();
  for (const auto& [k, v] : ck.metadata) doc["metadata"][k] = v;

  doc["tensors"] = ordered_json::array();
  ck.model.params.for_each_tensor(
      [&](std::string_view name, std::size_t rows, std::size_t cols, std::span<const double> data) {
        ordered_json values = ordered_json::array();
        // Storage is column-major; the file is row-major.
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) values.push_back(data[c * rows + r]);
        }
        doc["tensors"].push_back({{"name", std::string(name)}, {"rows", rows}, {"cols", cols}, {"values", std::move(values)}});
      });

  doc["history"] = ordered_json::array();
  for (const auto& e : ck.history) {
    doc["history"].push_back({{"epoch", e.epoch},
                              {"train_loss", e.train_loss},
                              {"validation_loss", e.validation_loss},
                              {"validation_accuracy", e.validation_accuracy},
                              {"validation_macro_f1", e.validation_macro_f1}});
  }
  return doc.dump(1) + "\n";
}

Checkpoint deserialize_checkpoint(const std::string& text) {
  Checkpoint ck;
  try {
    const auto doc = ordered_json::parse(text);
    if (doc.at("format").get<std::string>() != kFormat) {
      throw Error(ErrorCode::BadCheckpoint, "not a checkpoint file");
    }
    const int version = doc.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw Error(ErrorCode::BadCheckpoint, "unsupported checkpoint version " + std::to_string(version));
    }
    ck.provider_name = doc.at("provider").at("name").get<std::string>();
    ck.provider_dimension = doc.at("provider").at("dimension").get<std::size_t>();

    const auto& m = doc.at("model");
    auto& mc = ck.model.config;
    mc.shape.family = parse_kernel_family(m.at("kernel").get<std::string>());
    mc.shape.window_size = m.at("window_size").get<std::size_t>();
    mc.model_dim = m.at("model_dim").get<std::size_t>();
    mc.hidden = m.at("hidden").get<std::size_t>();
    mc.tokens_per_comment = m.at("tokens_per_comment").get<std::size_t>();
    mc.max_join_length = m.at("max_join_length").get<std::size_t>();

    const auto& t = doc.at("train");
    auto& tc = ck.train;
    tc.batch_size = t.at("batch_size").get<std::size_t>();
    tc.learning_rate = t.at("learning_rate").get<double>();
    tc.epochs = t.at("epochs").get<std::size_t>();
    tc.warmup_fraction = t.at("warmup_fraction").get<double>();
    tc.seed = t.at("seed").get<std::uint64_t>();
    tc.beta1 = t.at("beta1").get<double>();
    tc.beta2 = t.at("beta2").get<double>();
    tc.adam_epsilon = t.at("adam_epsilon").get<double>();
    ck.best_epoch = doc.at("best_epoch").get<std::size_t>();
    if (doc.contains("metadata")) {
      for (const auto& [k, v] : doc.at("metadata").items()) ck.metadata[k] = v.get<std::string>();
    }

    std::map<std::string, const ordered_json*> tensors;
    for (const auto& tensor : doc.at("tensors")) tensors[tensor.at("name").get<std::string>()] = &tensor;
    auto load = [&](const char* name, std::size_t rows, std::size_t cols) {
      auto it = tensors.find(name);
      if (it == tensors.end()) throw Error(ErrorCode::BadCheckpoint, std::string("missing tensor ") + name);
      const auto& tj = *it->second;
      const auto r = tj.at("rows").get<std::size_t>();
      const auto c = tj.at("cols").get<std::size_t>();
      const auto& values = tj.at("values");
      if ((rows && r != rows) || (cols && c != cols) || values.size() != r * c) {
        throw Error(ErrorCode::BadCheckpoint, std::string("tensor ") + name + " has inconsistent shape");
      }
      Matrix out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
          out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = values[i * c + j].get<double>();
        }
      }
      return out;
    };
    const auto db = ck.provider_dimension;
    auto& p = ck.model.params;
    p.projection.comment = load("w_comment", mc.model_dim, db);
    p.projection.window = load("w_window", mc.model_dim, db);
    p.head.hidden_w = load("head.hidden_w", mc.hidden, db);
    p.head.hidden_b = load("head.hidden_b", mc.hidden, 1).col(0);
    p.head.output_w = load("head.output_w", 2, mc.hidden);
    p.head.output_b = load("head.output_b", 2, 1).col(0);

    for (const auto& e : doc.at("history")) {
      ck.history.push_back({e.at("epoch").get<std::size_t>(), e.at("train_loss").get<double>(),
                            e.at("validation_loss").get<double>(),
                            e.at("validation_accuracy").get<double>(),
                            e.at("validation_macro_f1").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadCheckpoint, e.what());
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write '" + path.string() + "'");
  out << serialize_checkpoint(checkpoint);
  if (!out) throw Error(ErrorCode::IoFailure, "write failed on '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace ck
