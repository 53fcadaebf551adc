#include "saladworld/text.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <stdexcept>

namespace saladworld {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    unsigned char c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

Vocab Vocab::build(const std::vector<std::string>& corpus) {
  std::set<std::string> seen;
  for (const auto& line : corpus) {
    for (auto& tok : tokenize(line)) seen.insert(tok);
  }
  Vocab v;
  v.words.assign(seen.begin(), seen.end());
  for (int i = 0; i < static_cast<int>(v.words.size()); ++i) v.index[v.words[i]] = i;
  return v;
}

int Vocab::id(const std::string& word) const {
  auto it = index.find(word);
  if (it == index.end()) throw std::runtime_error("word outside vocabulary: " + word);
  return it->second;
}

std::vector<int> Vocab::encode(const std::string& text) const {
  std::vector<int> ids;
  for (auto& tok : tokenize(text)) ids.push_back(id(tok));
  return ids;
}

}  // namespace saladworld
