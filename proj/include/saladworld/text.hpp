#pragma once

#include <map>
#include <string>
#include <vector>

namespace saladworld {

// Lowercases and splits into alphanumeric runs; punctuation separates tokens.
std::vector<std::string> tokenize(const std::string& text);

// Closed vocabulary: words get stable ids in sorted order. Encoding a word
// outside the vocabulary is an error, which keeps the observation space of a
// level enumerable by construction.
struct Vocab {
  std::vector<std::string> words;        // id -> word
  std::map<std::string, int> index;      // word -> id

  static Vocab build(const std::vector<std::string>& corpus);

  int size() const { return static_cast<int>(words.size()); }
  bool contains(const std::string& word) const { return index.count(word) > 0; }
  int id(const std::string& word) const;               // throws on unknown word
  std::vector<int> encode(const std::string& text) const;
};

}  // namespace saladworld
