#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace edr {

/// Token <-> id map with four reserved entries at fixed ids:
/// 0 = padding, 1 = sequence start, 2 = sequence end, 3 = unknown.
/// Non-reserved tokens occupy ids >= 4 bijectively.
class Vocabulary {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kBos = 1;
  static constexpr std::int32_t kEos = 2;
  static constexpr std::int32_t kUnk = 3;
  static constexpr const char* kPadToken = "<pad>";
  static constexpr const char* kBosToken = "<s>";
  static constexpr const char* kEosToken = "</s>";
  static constexpr const char* kUnkToken = "<unk>";

  /// Starts with only the four reserved entries.
  Vocabulary();

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Appends a non-reserved token at the next free id.
  /// Throws UsageError if the token is already present (including reserved
  /// literals) or empty.
  std::int32_t add_token(const std::string& token);

  bool contains(const std::string& token) const { return index_.count(token) != 0; }

  /// Id for a token; unknown tokens map to kUnk.
  std::int32_t id_of(const std::string& token) const;

  /// Token string for an id. Throws IndexError when out of range.
  const std::string& token_of(std::int32_t id) const;

  std::vector<std::int32_t> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<std::int32_t>& ids) const;

  /// One token per line; the four reserved literals are the first four lines.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
};

/// Splits a line on runs of whitespace.
std::vector<std::string> split_tokens(const std::string& line);

/// Keeps the (cap - 4) most frequent tokens of the corpus after the four
/// reserved entries; frequency ties break by first occurrence. cap = 4 yields
/// a vocabulary of only reserved ids. Throws UsageError for cap < 4 or an
/// empty corpus.
Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpus, std::size_t cap);

}  // namespace edr
