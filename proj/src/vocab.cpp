#include "vistext/vocab.hpp"

#include <algorithm>

namespace vistext {

Vocabulary::Vocabulary(std::vector<std::string> words) {
  std::erase(words, std::string(kOovToken));
  std::sort(words.begin(), words.end());
  words.erase(std::unique(words.begin(), words.end()), words.end());
  words_.reserve(words.size() + 1);
  words_.emplace_back(kOovToken);
  for (auto& w : words) words_.push_back(std::move(w));
  for (std::size_t i = 0; i < words_.size(); ++i) index_.emplace(words_[i], static_cast<int>(i));
}

std::vector<int> Vocabulary::ids(const std::vector<std::string>& words) const {
  std::vector<int> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(id(w));
  return out;
}

}  // namespace vistext
