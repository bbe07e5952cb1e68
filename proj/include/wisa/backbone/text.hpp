#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace wisa::backbone {

// Lowercased alphanumeric runs; everything else separates words.
std::vector<std::string> split_words(std::string_view text);

/// Word-level vocabulary built from a corpus. Ids 0..2 are reserved.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnknown = 1;
  static constexpr std::size_t kSeparator = 2;

  Vocabulary();
  // Words sorted lexicographically after the reserved entries.
  static Vocabulary build(std::span<const std::string> corpus);

  std::size_t id(std::string_view word) const;  // kUnknown when absent
  const std::string& word(std::size_t id) const;
  std::size_t size() const { return words_.size(); }
  std::vector<std::size_t> encode(std::string_view text) const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

  bool operator==(const Vocabulary& other) const { return words_ == other.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct TextCondition {
  std::vector<std::size_t> ids;
  bool truncated = false;
  std::size_t dropped = 0;  // tokens cut beyond the length limit
};

/// caption tokens, separator, description tokens; cut to max_len.
TextCondition concat_conditioning(const Vocabulary& vocab, std::string_view caption, std::string_view description,
                                  std::size_t max_len);

}  // namespace wisa::backbone
