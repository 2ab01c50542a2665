#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace madi {

// Dense symbol ids [0, N); blank = N (CTC only, never in transcripts).
struct SymbolTable {
  std::vector<std::string> characters;
  int separator_id = -1;  // word separator, or -1 if absent

  std::size_t num_characters() const { return characters.size(); }
  int blank_id() const { return static_cast<int>(characters.size()); }

  int id_of(const std::string& c) const {
    for (std::size_t i = 0; i < characters.size(); ++i)
      if (characters[i] == c) return static_cast<int>(i);
    throw std::invalid_argument("SymbolTable: unknown character " + c);
  }

  const std::string& name_of(int id) const {
    if (id < 0 || id >= static_cast<int>(characters.size()))
      throw std::out_of_range("SymbolTable: bad id");
    return characters[static_cast<std::size_t>(id)];
  }

  static SymbolTable alphabetic(std::size_t n, bool with_separator) {
    if (n < 2) throw std::invalid_argument("SymbolTable: need N >= 2");
    SymbolTable t;
    for (std::size_t i = 0; i < n; ++i)
      t.characters.push_back(std::string(1, static_cast<char>('a' + i)));
    if (with_separator) {
      t.separator_id = static_cast<int>(t.characters.size());
      t.characters.push_back("_");
    }
    return t;
  }
};

}  // namespace madi
