#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "moler/chem/element.hpp"
#include "moler/chem/labeling.hpp"
#include "moler/chem/molgraph.hpp"

namespace moler {

enum class SmilesErrorKind { Syntax, Kekulization, UnknownElement, Valence };

class SmilesError : public std::runtime_error {
 public:
  SmilesError(SmilesErrorKind kind, std::size_t position, const std::string& what)
      : std::runtime_error(what + " at position " + std::to_string(position)),
        kind_(kind),
        position_(position) {}

  SmilesErrorKind kind() const { return kind_; }
  std::size_t position() const { return position_; }

 private:
  SmilesErrorKind kind_;
  std::size_t position_;
};

namespace detail {

class SmilesParser {
 public:
  SmilesParser(std::string_view text, std::shared_ptr<const ElementTable> table)
      : text_(text), table_(std::move(table)) {}

  MolGraph run() {
    parse_chain();
    if (!branches_.empty())
      fail(SmilesErrorKind::Syntax, text_.size(), "unclosed branch");
    if (!open_rings_.empty())
      fail(SmilesErrorKind::Syntax, open_rings_.begin()->second.position,
           "unclosed ring bond " + std::to_string(open_rings_.begin()->first));
    if (atoms_.empty()) fail(SmilesErrorKind::Syntax, 0, "empty SMILES");
    return build();
  }

 private:
  // 0 encodes an aromatic bond.
  struct RawBond {
    int a, b, code;
  };
  struct RawAtom {
    Atom atom;
    bool aromatic = false;
    std::optional<int> hcount;  // bracket atoms only
    std::size_t position = 0;
  };
  struct OpenRing {
    int atom;
    int code;  // -1: unspecified
    std::size_t position;
  };

  [[noreturn]] static void fail(SmilesErrorKind kind, std::size_t pos,
                                const std::string& what) {
    throw SmilesError(kind, pos, what);
  }

  bool at_end() const { return pos_ >= text_.size(); }
  char peek(std::size_t ahead = 0) const {
    return pos_ + ahead < text_.size() ? text_[pos_ + ahead] : '\0';
  }

  void parse_chain() {
    int pending_bond = -1;
    std::size_t bond_pos = 0;
    while (!at_end()) {
      char c = peek();
      if (c == '(') {
        if (prev_ < 0) fail(SmilesErrorKind::Syntax, pos_, "branch without atom");
        if (pending_bond >= 0)
          fail(SmilesErrorKind::Syntax, pos_, "bond before branch");
        branches_.push_back(prev_);
        ++pos_;
      } else if (c == ')') {
        if (branches_.empty())
          fail(SmilesErrorKind::Syntax, pos_, "unbalanced ')'");
        if (pending_bond >= 0)
          fail(SmilesErrorKind::Syntax, bond_pos, "dangling bond");
        prev_ = branches_.back();
        branches_.pop_back();
        ++pos_;
      } else if (c == '.') {
        if (pending_bond >= 0)
          fail(SmilesErrorKind::Syntax, bond_pos, "dangling bond");
        prev_ = -1;
        ++pos_;
      } else if (int code = bond_code(c); code != -2) {
        if (pending_bond >= 0)
          fail(SmilesErrorKind::Syntax, pos_, "two consecutive bonds");
        if (prev_ < 0) fail(SmilesErrorKind::Syntax, pos_, "bond without atom");
        pending_bond = code;
        bond_pos = pos_;
        ++pos_;
      } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '%') {
        if (prev_ < 0)
          fail(SmilesErrorKind::Syntax, pos_, "ring bond without atom");
        std::size_t start = pos_;
        int digit = ring_number();
        ring_closure(digit, pending_bond, start);
        pending_bond = -1;
      } else {
        std::size_t start = pos_;
        int atom = parse_atom();
        if (prev_ >= 0) add_bond(prev_, atom, pending_bond, start);
        pending_bond = -1;
        prev_ = atom;
      }
    }
    if (pending_bond >= 0)
      fail(SmilesErrorKind::Syntax, bond_pos, "dangling bond");
  }

  // -2: not a bond symbol; -1 is never returned.
  static int bond_code(char c) {
    switch (c) {
      case '-':
      case '/':
      case '\\':
        return 1;
      case '=':
        return 2;
      case '#':
        return 3;
      case ':':
        return 0;
      default:
        return -2;
    }
  }

  int ring_number() {
    if (peek() == '%') {
      ++pos_;
      if (!std::isdigit(static_cast<unsigned char>(peek())) ||
          !std::isdigit(static_cast<unsigned char>(peek(1))))
        fail(SmilesErrorKind::Syntax, pos_, "expected two digits after '%'");
      int v = (peek() - '0') * 10 + (peek(1) - '0');
      pos_ += 2;
      return v;
    }
    return text_[pos_++] - '0';
  }

  void ring_closure(int digit, int code, std::size_t position) {
    auto it = open_rings_.find(digit);
    if (it == open_rings_.end()) {
      open_rings_[digit] = OpenRing{prev_, code, position};
      return;
    }
    OpenRing open = it->second;
    open_rings_.erase(it);
    if (open.atom == prev_)
      fail(SmilesErrorKind::Syntax, position, "ring bond to itself");
    if (open.code >= 0 && code >= 0 && open.code != code)
      fail(SmilesErrorKind::Syntax, position, "conflicting ring bond orders");
    add_bond(open.atom, prev_, code >= 0 ? code : open.code, position);
  }

  void add_bond(int a, int b, int code, std::size_t position) {
    for (const auto& rb : bonds_)
      if ((rb.a == a && rb.b == b) || (rb.a == b && rb.b == a))
        fail(SmilesErrorKind::Syntax, position, "duplicate bond");
    if (code < 0) code = (atoms_[a].aromatic && atoms_[b].aromatic) ? 0 : 1;
    bonds_.push_back(RawBond{a, b, code});
  }

  int element_index(std::string_view sym, std::size_t position) const {
    auto idx = table_->find(sym);
    if (!idx)
      fail(SmilesErrorKind::UnknownElement, position,
           "unknown element '" + std::string(sym) + "'");
    return *idx;
  }

  int push_atom(RawAtom a) {
    atoms_.push_back(a);
    return static_cast<int>(atoms_.size()) - 1;
  }

  int parse_atom() {
    std::size_t start = pos_;
    char c = peek();
    if (c == '[') return parse_bracket_atom();
    RawAtom ra;
    ra.position = start;
    std::string sym;
    if (c == 'C' && peek(1) == 'l') {
      sym = "Cl";
    } else if (c == 'B' && peek(1) == 'r') {
      sym = "Br";
    } else if (std::string_view("BCNOPSFI").find(c) != std::string_view::npos) {
      sym = std::string(1, c);
    } else if (std::string_view("bcnops").find(c) != std::string_view::npos) {
      sym = std::string(1, static_cast<char>(std::toupper(c)));
      ra.aromatic = true;
    } else if (c == '*') {
      fail(SmilesErrorKind::UnknownElement, start, "wildcard atom");
    } else {
      fail(SmilesErrorKind::Syntax, start,
           std::string("unexpected character '") + c + "'");
    }
    pos_ += (sym.size() == 2) ? 2 : 1;
    ra.atom.element = element_index(sym, start);
    return push_atom(ra);
  }

  int read_int() {
    int v = 0;
    while (std::isdigit(static_cast<unsigned char>(peek())))
      v = v * 10 + (text_[pos_++] - '0');
    return v;
  }

  int parse_bracket_atom() {
    RawAtom ra;
    ra.position = pos_;
    ++pos_;  // '['
    if (std::isdigit(static_cast<unsigned char>(peek()))) ra.atom.isotope = read_int();
    std::size_t sym_pos = pos_;
    char c = peek();
    std::string sym;
    if (std::islower(static_cast<unsigned char>(c))) {
      // Aromatic: c n o p s b, plus se / as.
      if ((c == 's' && peek(1) == 'e') || (c == 'a' && peek(1) == 's')) {
        sym = {static_cast<char>(std::toupper(c)), peek(1)};
        pos_ += 2;
      } else if (std::string_view("bcnops").find(c) != std::string_view::npos) {
        sym = std::string(1, static_cast<char>(std::toupper(c)));
        ++pos_;
      } else {
        fail(SmilesErrorKind::UnknownElement, sym_pos, "unknown aromatic symbol");
      }
      ra.aromatic = true;
    } else if (std::isupper(static_cast<unsigned char>(c))) {
      std::string two{c, peek(1)};
      if (std::islower(static_cast<unsigned char>(peek(1))) && table_->find(two)) {
        sym = two;
        pos_ += 2;
      } else {
        sym = std::string(1, c);
        ++pos_;
      }
    } else if (c == '*') {
      fail(SmilesErrorKind::UnknownElement, sym_pos, "wildcard atom");
    } else {
      fail(SmilesErrorKind::Syntax, sym_pos, "expected element symbol");
    }
    ra.atom.element = element_index(sym, sym_pos);
    // Chirality is accepted and dropped.
    if (peek() == '@') {
      while (peek() == '@') ++pos_;
      for (std::string_view tag : {"TH", "AL", "SP", "TB", "OH"})
        if (text_.substr(pos_, 2) == tag) {
          pos_ += 2;
          read_int();
          break;
        }
    }
    if (peek() == 'H') {
      ++pos_;
      ra.hcount = std::isdigit(static_cast<unsigned char>(peek())) ? read_int() : 1;
    } else {
      ra.hcount = 0;
    }
    if (peek() == '+' || peek() == '-') {
      char sign = peek();
      int count = 0;
      while (peek() == sign) {
        ++count;
        ++pos_;
      }
      if (count == 1 && std::isdigit(static_cast<unsigned char>(peek())))
        count = read_int();
      ra.atom.formal_charge = sign == '+' ? count : -count;
    }
    if (peek() == ':') {
      ++pos_;
      read_int();
    }
    if (peek() != ']') fail(SmilesErrorKind::Syntax, pos_, "expected ']'");
    ++pos_;
    if (ra.atom.formal_charge < -2 || ra.atom.formal_charge > 2)
      fail(SmilesErrorKind::Valence, ra.position, "formal charge outside [-2, 2]");
    return push_atom(ra);
  }

  int explicit_sum(int atom) const {
    int s = atoms_[atom].hcount.value_or(0);
    for (const auto& b : bonds_)
      if (b.a == atom || b.b == atom) s += (b.code == 0 ? 1 : b.code);
    return s;
  }

  bool needs_pi(int atom) const {
    const auto& ra = atoms_[atom];
    const auto* vals =
        (*table_)[ra.atom.element].valences_for(ra.atom.formal_charge);
    if (!vals)
      fail(SmilesErrorKind::Valence, ra.position, "no valence rule for charge");
    int sum = explicit_sum(atom);
    for (int v : *vals)
      if (v >= sum) return v - sum >= 1;
    return false;
  }

  MolGraph build() {
    int n = static_cast<int>(atoms_.size());
    std::vector<char> pi(n, 0);
    bool any_aromatic = false;
    for (const auto& b : bonds_) any_aromatic |= (b.code == 0);
    for (int i = 0; i < n; ++i) any_aromatic |= atoms_[i].aromatic;
    std::vector<int> mate(n, -1);
    if (any_aromatic) {
      for (int i = 0; i < n; ++i) pi[i] = atoms_[i].aromatic && needs_pi(i);
      std::vector<std::vector<int>> nbrs(n);
      for (const auto& b : bonds_)
        if (b.code == 0 && pi[b.a] && pi[b.b]) {
          nbrs[b.a].push_back(b.b);
          nbrs[b.b].push_back(b.a);
        }
      LabeledGraph lg;
      lg.adj.resize(n);
      for (const auto& ra : atoms_)
        lg.atom_keys.push_back({ra.atom.element, ra.atom.formal_charge,
                                ra.atom.isotope.value_or(-1), ra.aromatic,
                                ra.hcount.value_or(-1)});
      for (const auto& b : bonds_) lg.add_edge(b.a, b.b, b.code);
      auto lab = canonical_labeling(lg);
      std::vector<int> visit(n);
      for (int i = 0; i < n; ++i) visit[lab[i]] = i;
      for (auto& list : nbrs)
        std::sort(list.begin(), list.end(), [&](int x, int y) { return lab[x] < lab[y]; });
      // Visiting in canonical-label order makes the Kekule structure
      // independent of the input atom order.
      if (!perfect_matching(mate, nbrs, pi, visit)) {
        std::size_t where = 0;
        for (int i = 0; i < n; ++i)
          if (pi[i]) {
            where = atoms_[i].position;
            break;
          }
        fail(SmilesErrorKind::Kekulization, where, "cannot kekulize aromatic system");
      }
    }
    MolGraph mol(table_);
    for (const auto& ra : atoms_) mol.add_atom(ra.atom);
    for (const auto& b : bonds_) {
      int order = b.code;
      if (order == 0) order = (mate[b.a] == b.b) ? 2 : 1;
      mol.add_bond(b.a, b.b, bond_order_from(order));
    }
    for (int i = 0; i < n; ++i) {
      int limit = (*table_)[atoms_[i].atom.element].max_valence(
          atoms_[i].atom.formal_charge);
      if (limit < 0)
        fail(SmilesErrorKind::Valence, atoms_[i].position,
             "no valence rule for charge");
      if (mol.bond_order_sum(i) + atoms_[i].hcount.value_or(0) > limit)
        fail(SmilesErrorKind::Valence, atoms_[i].position, "valence overflow");
    }
    return mol;
  }

  std::string_view text_;
  std::shared_ptr<const ElementTable> table_;
  std::size_t pos_ = 0;
  int prev_ = -1;
  std::vector<int> branches_;
  std::map<int, OpenRing> open_rings_;
  std::vector<RawAtom> atoms_;
  std::vector<RawBond> bonds_;
};

}  // namespace detail

/// Parses the supported SMILES subset into a kekulized graph. Hydrogens in
/// brackets are validated against the valence table but not materialized.
inline MolGraph parse_smiles(
    std::string_view text,
    std::shared_ptr<const ElementTable> table = ElementTable::builtin()) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back())))
    text.remove_suffix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front())))
    text.remove_prefix(1);
  return detail::SmilesParser(text, std::move(table)).run();
}

}  // namespace moler
