#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace vistext {

// Sorted word list; id 0 is the shared out-of-vocabulary bucket.
class Vocabulary {
 public:
  static constexpr int kOov = 0;
  static constexpr const char* kOovToken = "<oov>";

  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}
  explicit Vocabulary(std::vector<std::string> words);

  int id(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? kOov : it->second;
  }
  std::vector<int> ids(const std::vector<std::string>& words) const;
  std::size_t size() const { return words_.size(); }
  // Includes the OOV marker at position 0.
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace vistext
