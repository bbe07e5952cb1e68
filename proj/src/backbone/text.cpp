#include "wisa/backbone/text.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "wisa/errors.hpp"

namespace wisa::backbone {

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isalnum(u)) {
      cur.push_back(static_cast<char>(std::tolower(u)));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

Vocabulary::Vocabulary() : words_{"<pad>", "<unk>", "<sep>"} {
  for (std::size_t i = 0; i < words_.size(); ++i) index_.emplace(words_[i], i);
}

Vocabulary Vocabulary::build(std::span<const std::string> corpus) {
  std::set<std::string> unique;
  for (const auto& text : corpus)
    for (auto& w : split_words(text)) unique.insert(std::move(w));
  Vocabulary v;
  for (const auto& w : unique) {
    v.index_.emplace(w, v.words_.size());
    v.words_.push_back(w);
  }
  return v;
}

std::size_t Vocabulary::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnknown : it->second;
}

const std::string& Vocabulary::word(std::size_t id) const {
  if (id >= words_.size()) throw UsageError("vocabulary id " + std::to_string(id) + " out of range");
  return words_[id];
}

std::vector<std::size_t> Vocabulary::encode(std::string_view text) const {
  std::vector<std::size_t> ids;
  for (const auto& w : split_words(text)) ids.push_back(id(w));
  return ids;
}

nlohmann::json Vocabulary::to_json() const {
  return nlohmann::json(std::vector<std::string>(words_.begin() + 3, words_.end()));
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ParseError("$.vocab", "expected an array of words");
  Vocabulary v;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_string()) throw ParseError("$.vocab[" + std::to_string(i) + "]", "expected a string");
    const auto w = j[i].get<std::string>();
    if (!v.index_.emplace(w, v.words_.size()).second)
      throw ParseError("$.vocab[" + std::to_string(i) + "]", "duplicate word '" + w + "'");
    v.words_.push_back(w);
  }
  return v;
}

TextCondition concat_conditioning(const Vocabulary& vocab, std::string_view caption, std::string_view description,
                                  std::size_t max_len) {
  if (max_len == 0) throw UsageError("concat_conditioning: max_len must be positive");
  TextCondition out;
  out.ids = vocab.encode(caption);
  out.ids.push_back(Vocabulary::kSeparator);
  const auto desc = vocab.encode(description);
  out.ids.insert(out.ids.end(), desc.begin(), desc.end());
  if (out.ids.size() > max_len) {
    out.truncated = true;
    out.dropped = out.ids.size() - max_len;
    out.ids.resize(max_len);
  }
  return out;
}

}  // namespace wisa::backbone
