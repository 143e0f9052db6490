#include "edr/corpus.hpp"

#include <algorithm>
#include <fstream>

#include "edr/errors.hpp"
#include "edr/rng.hpp"

namespace edr {

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(file, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot open file for writing: " + path);
  for (const auto& line : lines) file << line << '\n';
  if (!file) throw DataError("failed writing file: " + path);
}

std::vector<SentencePair> encode_corpus(const std::vector<std::string>& src_lines,
                                        const std::vector<std::string>& tgt_lines,
                                        const Vocabulary& src_vocab, const Vocabulary& tgt_vocab) {
  if (src_lines.size() != tgt_lines.size()) {
    throw DataError("corpus sides are not aligned: " + std::to_string(src_lines.size()) +
                    " source lines vs " + std::to_string(tgt_lines.size()) + " target lines");
  }
  std::vector<SentencePair> pairs;
  pairs.reserve(src_lines.size());
  for (std::size_t i = 0; i < src_lines.size(); ++i) {
    SentencePair p;
    p.source = src_vocab.encode(split_tokens(src_lines[i]));
    p.target = tgt_vocab.encode(split_tokens(tgt_lines[i]));
    if (p.source.empty() || p.target.empty()) continue;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

std::vector<SentencePair> filter_by_length(const std::vector<SentencePair>& pairs,
                                           std::size_t max_len) {
  if (max_len < 1) throw UsageError("filter_by_length: max_len must be at least 1");
  std::vector<SentencePair> kept;
  kept.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.source.size() <= max_len && p.target.size() <= max_len) kept.push_back(p);
  }
  return kept;
}

Batch make_batch(const std::vector<SentencePair>& pairs) {
  if (pairs.empty()) throw UsageError("make_batch: no pairs");
  std::size_t max_src = 0, max_tgt = 0;
  for (const auto& p : pairs) {
    if (p.source.empty() || p.target.empty()) {
      throw UsageError("make_batch: sentence pairs must be non-empty on both sides");
    }
    max_src = std::max(max_src, p.source.size());
    max_tgt = std::max(max_tgt, p.target.size() + 2);  // room for the start/end markers
  }
  Batch b;
  const std::size_t n = pairs.size();
  b.src.assign(n, std::vector<std::int32_t>(max_src, Vocabulary::kPad));
  b.tgt.assign(n, std::vector<std::int32_t>(max_tgt, Vocabulary::kPad));
  b.src_mask.assign(n, std::vector<std::uint8_t>(max_src, 0));
  b.tgt_mask.assign(n, std::vector<std::uint8_t>(max_tgt, 0));
  for (std::size_t r = 0; r < n; ++r) {
    const auto& p = pairs[r];
    for (std::size_t j = 0; j < p.source.size(); ++j) {
      b.src[r][j] = p.source[j];
      b.src_mask[r][j] = 1;
    }
    b.tgt[r][0] = Vocabulary::kBos;
    b.tgt_mask[r][0] = 1;
    for (std::size_t j = 0; j < p.target.size(); ++j) {
      b.tgt[r][j + 1] = p.target[j];
      b.tgt_mask[r][j + 1] = 1;
    }
    b.tgt[r][p.target.size() + 1] = Vocabulary::kEos;
    b.tgt_mask[r][p.target.size() + 1] = 1;
  }
  return b;
}

std::vector<Batch> make_batches(const std::vector<SentencePair>& pairs, std::size_t batch_size,
                                std::uint64_t seed) {
  if (batch_size < 1) throw UsageError("make_batches: batch_size must be at least 1");
  std::vector<SentencePair> shuffled = pairs;
  Rng rng(seed);
  rng.shuffle(shuffled);
  std::stable_sort(shuffled.begin(), shuffled.end(),
                   [](const SentencePair& a, const SentencePair& b) {
                     return a.source.size() < b.source.size();
                   });
  std::vector<Batch> batches;
  for (std::size_t begin = 0; begin < shuffled.size(); begin += batch_size) {
    const std::size_t end = std::min(begin + batch_size, shuffled.size());
    batches.push_back(make_batch(
        std::vector<SentencePair>(shuffled.begin() + static_cast<std::ptrdiff_t>(begin),
                                  shuffled.begin() + static_cast<std::ptrdiff_t>(end))));
  }
  return batches;
}

std::vector<RawPair> generate_synthetic(SyntheticKind kind, std::size_t n_pairs,
                                        std::size_t n_symbols, std::size_t min_len,
                                        std::size_t max_len, std::uint64_t seed) {
  if (n_symbols < 1) throw UsageError("generate_synthetic: need at least one symbol");
  if (min_len < 1 || min_len > max_len) {
    throw UsageError("generate_synthetic: need 1 <= min_len <= max_len");
  }
  std::vector<std::string> alphabet;
  alphabet.reserve(n_symbols);
  for (std::size_t i = 0; i < n_symbols; ++i) alphabet.push_back("s" + std::to_string(i));

  Rng rng(seed);
  std::vector<RawPair> pairs;
  pairs.reserve(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const std::size_t len = min_len + static_cast<std::size_t>(rng.next_bounded(
                                          static_cast<std::uint64_t>(max_len - min_len + 1)));
    RawPair p;
    p.source.reserve(len);
    for (std::size_t j = 0; j < len; ++j) {
      p.source.push_back(alphabet[static_cast<std::size_t>(
          rng.next_bounded(static_cast<std::uint64_t>(n_symbols)))]);
    }
    p.target = p.source;
    if (kind == SyntheticKind::kReversal) std::reverse(p.target.begin(), p.target.end());
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace edr
