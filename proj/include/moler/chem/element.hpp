#pragma once

#include <algorithm>
#include <fstream>
#include <istream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace moler {

/// Allowed valences of an element at one formal charge, ascending.
struct ValenceRule {
  int charge = 0;
  std::vector<int> valences;
};

struct Element {
  std::string symbol;
  double atomic_mass = 0.0;
  std::vector<ValenceRule> rules;

  const std::vector<int>* valences_for(int charge) const {
    for (const auto& r : rules)
      if (r.charge == charge) return &r.valences;
    return nullptr;
  }

  /// Largest allowed valence at `charge`, or -1 when the charge is not in the
  /// table.
  int max_valence(int charge) const {
    const auto* v = valences_for(charge);
    return v ? v->back() : -1;
  }

  std::vector<int> allowed_valences() const {
    const auto* v = valences_for(0);
    return v ? *v : std::vector<int>{};
  }
};

class ElementTableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Periodic subset with per-charge valence rules.
///
/// Text format, one element per line:
///
///     # symbol  mass     charge=valences ...
///     S         32.067   0=2,4,6  +1=3  -1=1
///
/// Charges must lie in [-2, +2] and valence lists must be non-empty.
class ElementTable {
 public:
  ElementTable() = default;
  explicit ElementTable(std::vector<Element> elements)
      : elements_(std::move(elements)) {
    validate();
  }

  static std::shared_ptr<const ElementTable> builtin() {
    static const auto table = std::make_shared<const ElementTable>(
        parse_text(kBuiltinTable));
    return table;
  }

  static ElementTable parse(std::istream& in) {
    std::vector<Element> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos)
        line.erase(hash);
      std::istringstream ls(line);
      Element e;
      if (!(ls >> e.symbol)) continue;
      if (!(ls >> e.atomic_mass) || e.atomic_mass <= 0)
        throw ElementTableError("line " + std::to_string(lineno) +
                                ": bad atomic mass");
      std::string tok;
      while (ls >> tok) {
        auto eq = tok.find('=');
        if (eq == std::string::npos)
          throw ElementTableError("line " + std::to_string(lineno) +
                                  ": expected charge=valences, got '" + tok +
                                  "'");
        ValenceRule rule;
        try {
          rule.charge = std::stoi(tok.substr(0, eq));
          std::istringstream vs(tok.substr(eq + 1));
          std::string v;
          while (std::getline(vs, v, ','))
            if (!v.empty()) rule.valences.push_back(std::stoi(v));
        } catch (const std::logic_error&) {
          throw ElementTableError("line " + std::to_string(lineno) +
                                  ": malformed rule '" + tok + "'");
        }
        std::sort(rule.valences.begin(), rule.valences.end());
        e.rules.push_back(std::move(rule));
      }
      out.push_back(std::move(e));
    }
    return ElementTable(std::move(out));
  }

  static ElementTable parse_text(std::string_view text) {
    std::istringstream in{std::string(text)};
    return parse(in);
  }

  static ElementTable load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ElementTableError("cannot open valence table " + path);
    return parse(in);
  }

  std::optional<int> find(std::string_view symbol) const {
    for (int i = 0; i < size(); ++i)
      if (elements_[i].symbol == symbol) return i;
    return std::nullopt;
  }

  const Element& operator[](int i) const { return elements_.at(i); }
  int size() const { return static_cast<int>(elements_.size()); }
  const std::vector<Element>& elements() const { return elements_; }

  int hydrogen() const {
    auto h = find("H");
    if (!h) throw ElementTableError("valence table has no hydrogen");
    return *h;
  }

 private:
  void validate() const {
    for (const auto& e : elements_) {
      if (e.rules.empty())
        throw ElementTableError("element " + e.symbol + " has no valences");
      for (const auto& r : e.rules) {
        if (r.valences.empty())
          throw ElementTableError("element " + e.symbol +
                                  " has an empty valence list");
        if (r.charge < -2 || r.charge > 2)
          throw ElementTableError("element " + e.symbol +
                                  ": charge outside [-2, 2]");
      }
    }
  }

  static constexpr std::string_view kBuiltinTable = R"(
H   1.008    0=1  +1=0  -1=0
B   10.812   0=3  -1=4
C   12.011   0=4  +1=3  -1=3
N   14.007   0=3  +1=4  -1=2
O   15.999   0=2  +1=3  -1=1
F   18.998   0=1  -1=0
Si  28.086   0=4
P   30.974   0=3,5  +1=4
S   32.067   0=2,4,6  +1=3  -1=1
Cl  35.453   0=1  -1=0
Se  78.96    0=2,4,6
Br  79.904   0=1  -1=0
I   126.904  0=1  -1=0
)";

  std::vector<Element> elements_;
};

}  // namespace moler
