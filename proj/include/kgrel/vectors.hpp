#pragma once

#include <cstdlib>
#include <istream>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgrel/errors.hpp"

namespace kgrel {

// GloVe-style text table: one "word v1 ... vd" line per word.
// Out-of-table words resolve to the all-zero unk vector.
struct WordVectorTable {
  std::size_t dim = 0;
  std::unordered_map<std::string, std::vector<double>> vectors;
  std::vector<double> unk;

  const std::vector<double>& lookup(const std::string& word) const {
    auto it = vectors.find(word);
    return it == vectors.end() ? unk : it->second;
  }

  bool contains(const std::string& word) const { return vectors.count(word) != 0; }
};

inline WordVectorTable load_word_vectors(std::istream& in, std::size_t expected_dim) {
  if (expected_dim == 0) throw ValidationError("word vector dimension must be positive");
  WordVectorTable table;
  table.dim = expected_dim;
  table.unk.assign(expected_dim, 0.0);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t sp = line.find(' ');
    if (sp == std::string::npos || sp == 0) {
      throw ParseError("word vectors line " + std::to_string(line_no) + ": no values");
    }
    std::string word = line.substr(0, sp);
    std::vector<double> vec;
    vec.reserve(expected_dim);
    const char* p = line.c_str() + sp;
    while (*p) {
      char* end = nullptr;
      double v = std::strtod(p, &end);
      if (end == p) break;
      vec.push_back(v);
      p = end;
    }
    if (vec.size() != expected_dim) {
      throw ParseError("word vectors line " + std::to_string(line_no) + ": expected " +
                       std::to_string(expected_dim) + " values, got " + std::to_string(vec.size()));
    }
    table.vectors[word] = std::move(vec);
  }
  return table;
}

}  // namespace kgrel
