#include "edr/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "edr/errors.hpp"

namespace edr {

Vocabulary::Vocabulary() {
  tokens_ = {kPadToken, kBosToken, kEosToken, kUnkToken};
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    index_[tokens_[i]] = static_cast<std::int32_t>(i);
  }
}

std::int32_t Vocabulary::add_token(const std::string& token) {
  if (token.empty()) throw UsageError("vocabulary: cannot add an empty token");
  if (index_.count(token)) throw UsageError("vocabulary: duplicate token '" + token + "'");
  const auto id = static_cast<std::int32_t>(tokens_.size());
  tokens_.push_back(token);
  index_[token] = id;
  return id;
}

std::int32_t Vocabulary::id_of(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw IndexError("vocabulary: id " + std::to_string(id) + " out of range for size " +
                     std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::int32_t> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<std::int32_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id_of(t));
  return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<std::int32_t>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (std::int32_t id : ids) out.push_back(token_of(id));
  return out;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot open vocabulary file for writing: " + path);
  for (const auto& t : tokens_) file << t << '\n';
  if (!file) throw DataError("failed writing vocabulary file: " + path);
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot open vocabulary file: " + path);
  Vocabulary v;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(file, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no <= 4) {
      if (line != v.tokens_[line_no - 1]) {
        throw DataError(path + ": line " + std::to_string(line_no) + " must be the reserved token '" +
                        v.tokens_[line_no - 1] + "', got '" + line + "'");
      }
      continue;
    }
    if (line.empty()) throw DataError(path + ": empty token at line " + std::to_string(line_no));
    if (v.index_.count(line)) {
      throw DataError(path + ": duplicate token '" + line + "' at line " + std::to_string(line_no));
    }
    v.add_token(line);
  }
  if (line_no < 4) throw DataError(path + ": missing reserved token lines");
  return v;
}

std::vector<std::string> split_tokens(const std::string& line) {
  std::vector<std::string> tokens;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) tokens.push_back(std::move(tok));
  return tokens;
}

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpus, std::size_t cap) {
  if (corpus.empty()) throw UsageError("build_vocab: empty corpus");
  if (cap < 4) throw UsageError("build_vocab: cap must be at least 4 (the reserved entries)");

  struct Entry {
    std::size_t count = 0;
    std::size_t first = 0;
  };
  std::unordered_map<std::string, Entry> freq;
  std::vector<const std::string*> order;  // tokens in first-occurrence order
  std::size_t position = 0;
  for (const auto& sentence : corpus) {
    for (const auto& tok : sentence) {
      auto [it, inserted] = freq.try_emplace(tok);
      if (inserted) {
        it->second.first = position;
        order.push_back(&it->first);
      }
      ++it->second.count;
      ++position;
    }
  }

  std::vector<const std::string*> ranked = order;
  std::sort(ranked.begin(), ranked.end(), [&](const std::string* a, const std::string* b) {
    const Entry& ea = freq.at(*a);
    const Entry& eb = freq.at(*b);
    if (ea.count != eb.count) return ea.count > eb.count;
    return ea.first < eb.first;
  });

  Vocabulary v;
  const std::size_t keep = cap - 4;
  for (const auto* tok : ranked) {
    if (v.size() - 4 >= keep) break;
    if (v.contains(*tok)) continue;  // corpus token spelled like a reserved literal
    v.add_token(*tok);
  }
  return v;
}

}  // namespace edr
