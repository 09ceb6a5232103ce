// SPDX-License-Identifier: Apache-2.0
//
// Parameter export / import as JSON lines, one {"name": str, "value": [[num]]}
// object per parameter. Import accepts any subset of the registry's names,
// which is how externally exported encoder weights are loaded.
#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <string>

#include "psamf/data_model.hpp"
#include "psamf/nn.hpp"

namespace psamf {

inline std::string weights_to_string(const ParameterStore& store) {
  std::string out;
  for (const auto& e : store.entries()) {
    nlohmann::json j = {{"name", e.name}, {"value", detail::matrix_json(e.var.value())}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline void save_weights(const ParameterStore& store, const std::filesystem::path& path) {
  write_text_atomic(path, weights_to_string(store));
}

// Returns the number of parameters overwritten. Unknown names and shape
// mismatches are errors; parameters absent from the file keep their values.
inline std::size_t load_weights(ParameterStore& store, const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingFileError("weights file not found: " + path.string());
  std::ifstream in(path);
  std::string line;
  std::size_t loaded = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ArchiveFormatError(std::string("weights: ") + e.what());
    }
    const auto name = j.at("name").get<std::string>();
    if (!store.contains(name)) throw InvalidArgument("weights: unknown parameter " + name);
    Matrix value = detail::json_matrix(j.at("value"), "weights " + name);
    Var target = store.get(name);
    if (value.rows() != target.rows() || value.cols() != target.cols()) {
      throw DimensionMismatchError("weights: " + name + " has shape [" + std::to_string(value.rows()) + "x" +
                                   std::to_string(value.cols()) + "], expected [" + std::to_string(target.rows()) +
                                   "x" + std::to_string(target.cols()) + "]");
    }
    if (!value.allFinite()) throw NonFiniteValueError("weights: " + name + " has non-finite values");
    target.mutable_value() = std::move(value);
    ++loaded;
  }
  return loaded;
}

}  // namespace psamf
