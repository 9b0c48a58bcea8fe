#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "moler/chem/smiles.hpp"

namespace moler {

class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SmilesRecord {
  int line = 0;
  std::string smiles;
};

/// One molecule per line; the first whitespace-separated field is the SMILES.
/// Blank lines and lines starting with '#' are skipped.
inline std::vector<SmilesRecord> read_smiles_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  std::vector<SmilesRecord> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    auto e = line.find_first_of(" \t\r", b);
    out.push_back({n, line.substr(b, e == std::string::npos ? std::string::npos : e - b)});
  }
  return out;
}

/// Parses every record; a bad line aborts with its line number.
inline std::vector<MolGraph> read_smiles_file(const std::string& path) {
  std::vector<MolGraph> mols;
  for (const auto& r : read_smiles_lines(path)) {
    try {
      mols.push_back(parse_smiles(r.smiles));
    } catch (const SmilesError& e) {
      throw InputError(path + ":" + std::to_string(r.line) + ": " + e.what());
    }
  }
  return mols;
}

}  // namespace moler
