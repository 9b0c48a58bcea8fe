#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moler/motifs/motifs.hpp"
#include "moler/nn/model.hpp"

namespace moler::nn {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  std::unique_ptr<Model<float>> model;
  nlohmann::json extra;  // training metadata owned by the caller
};

inline nlohmann::ordered_json checkpoint_json(const Model<float>& model,
                                              const nlohmann::json& extra = nlohmann::json::object()) {
  const auto& alpha = model.alphabet();
  const auto& table = *ElementTable::builtin();
  nlohmann::ordered_json j;
  j["format_version"] = kCheckpointVersion;
  j["config"] = model.config().to_json();
  j["vocab_hash"] = alpha.vocab().hash();
  auto atoms = nlohmann::ordered_json::array();
  for (const auto& c : alpha.atom_classes()) atoms.push_back({table[c.element].symbol, c.charge});
  j["atom_classes"] = atoms;
  j["feature_elements"] = model.features().elements;
  j["vocabulary"] = alpha.vocab().to_json();
  j["extra"] = extra;
  auto blocks = nlohmann::ordered_json::array();
  for (int i = 0; i < model.params.size(); ++i) {
    const auto& v = model.params.value(i);
    std::vector<float> data(v.data(), v.data() + v.size());
    blocks.push_back({{"name", model.params.name(i)},
                      {"rows", v.rows()},
                      {"cols", v.cols()},
                      {"data", data}});
  }
  j["params"] = blocks;
  return j;
}

/// Writes to a temporary file and renames it into place.
inline void save_checkpoint(const Model<float>& model, const std::string& path,
                            const nlohmann::json& extra = nlohmann::json::object()) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError("cannot write " + tmp);
    out << checkpoint_json(model, extra).dump() << "\n";
    if (!out) throw CheckpointError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

/// Rebuilds the model. A non-empty `expected_vocab_hash` must match the
/// stored one.
inline Checkpoint checkpoint_from_json(const nlohmann::json& j,
                                       const std::string& expected_vocab_hash = "") {
  try {
    if (j.at("format_version").get<int>() != kCheckpointVersion)
      throw CheckpointError("unsupported checkpoint version");
    auto vocab = std::make_shared<MotifVocabulary>(MotifVocabulary::from_json(j.at("vocabulary")));
    std::string hash = j.at("vocab_hash");
    if (vocab->hash() != hash) throw CheckpointError("stored vocabulary does not match its hash");
    if (!expected_vocab_hash.empty() && hash != expected_vocab_hash)
      throw CheckpointError("checkpoint was trained with a different vocabulary");
    const auto& table = *ElementTable::builtin();
    std::vector<AtomClass> atoms;
    for (const auto& a : j.at("atom_classes")) {
      auto el = table.find(a.at(0).get<std::string>());
      if (!el) throw CheckpointError("unknown element in checkpoint");
      atoms.push_back({*el, a.at(1).get<int>()});
    }
    Checkpoint ck;
    ck.model = std::make_unique<Model<float>>(ModelConfig::from_json(j.at("config")),
                                              Alphabet(atoms, vocab), 0);
    if (ck.model->features().elements != j.at("feature_elements").get<std::vector<std::string>>())
      throw CheckpointError("feature layout mismatch");
    auto& p = ck.model->params;
    const auto& blocks = j.at("params");
    if (static_cast<int>(blocks.size()) != p.size())
      throw CheckpointError("parameter count mismatch");
    for (const auto& b : blocks) {
      auto id = p.find(b.at("name").get<std::string>());
      if (!id) throw CheckpointError("unknown parameter " + b.at("name").get<std::string>());
      auto& v = p.value(*id);
      auto data = b.at("data").get<std::vector<float>>();
      if (b.at("rows").get<long>() != v.rows() || b.at("cols").get<long>() != v.cols() ||
          static_cast<long>(data.size()) != v.size())
        throw CheckpointError("shape mismatch for " + p.name(*id));
      std::copy(data.begin(), data.end(), v.data());
    }
    ck.extra = j.value("extra", nlohmann::json::object());
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  } catch (const VocabularyError& e) {
    throw CheckpointError(e.what());
  }
}

inline Checkpoint load_checkpoint(const std::string& path,
                                  const std::string& expected_vocab_hash = "") {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot read " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  }
  return checkpoint_from_json(j, expected_vocab_hash);
}

}  // namespace moler::nn
