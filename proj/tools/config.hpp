#pragma once

#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <type_traits>

#include <nlohmann/json.hpp>

#include "moler/util/smiles_file.hpp"

namespace moler::cli {

/// `key = value` lines; `#` starts a comment. Every key must be consumed by
/// the command, so typos surface as input errors.
class KeyValueConfig {
 public:
  static KeyValueConfig load(const std::string& path) {
    KeyValueConfig c;
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config " + path);
    std::string line;
    for (int n = 1; std::getline(in, line); ++n) {
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      auto trim = [](std::string s) {
        auto b = s.find_first_not_of(" \t\r");
        auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      auto eq = line.find('=');
      if (eq == std::string::npos)
        throw InputError(path + ":" + std::to_string(n) + ": expected key = value");
      std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
      if (key.empty()) throw InputError(path + ":" + std::to_string(n) + ": empty key");
      c.values_[key] = value;
    }
    return c;
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  template <class T>
  void get(const std::string& key, T& out) {
    auto it = values_.find(key);
    if (it == values_.end()) return;
    used_.insert(key);
    try {
      std::size_t pos = 0;
      if constexpr (std::is_same_v<T, double>) {
        out = std::stod(it->second, &pos);
      } else if constexpr (std::is_same_v<T, std::string>) {
        out = it->second;
        pos = it->second.size();
      } else {
        long long v = std::stoll(it->second, &pos);
        out = static_cast<T>(v);
      }
      if (pos != it->second.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw InputError("bad value for config key " + key + ": " + it->second);
    }
  }

  void reject_unused() const {
    for (const auto& [k, v] : values_)
      if (!used_.count(k)) throw InputError("unknown config key " + k);
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : values_) j[k] = v;
    return j;
  }

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> used_;
};

}  // namespace moler::cli
