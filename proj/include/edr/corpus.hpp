#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "edr/vocab.hpp"

namespace edr {

/// One aligned sentence pair as token ids. Neither side is padded or wrapped;
/// the target gains its start/end markers only at batch time.
struct SentencePair {
  std::vector<std::int32_t> source;
  std::vector<std::int32_t> target;

  bool operator==(const SentencePair& o) const {
    return source == o.source && target == o.target;
  }
};

/// A padded minibatch. Row r of `src` holds the source ids padded with id 0 to
/// the longest source in the batch; `tgt` holds the target wrapped as
/// start-marker, ids, end-marker, then padding. The masks flag real positions.
struct Batch {
  std::vector<std::vector<std::int32_t>> src;
  std::vector<std::vector<std::int32_t>> tgt;
  std::vector<std::vector<std::uint8_t>> src_mask;
  std::vector<std::vector<std::uint8_t>> tgt_mask;

  std::size_t size() const { return src.size(); }
  std::size_t src_len() const { return src.empty() ? 0 : src[0].size(); }
  std::size_t tgt_len() const { return tgt.empty() ? 0 : tgt[0].size(); }
};

/// Reads a text file into lines (strips a trailing '\r' per line).
std::vector<std::string> read_lines(const std::string& path);

/// Writes one line per entry.
void write_lines(const std::string& path, const std::vector<std::string>& lines);

/// Encodes aligned source/target lines. Pairs where either side tokenizes to
/// nothing are dropped (they cannot be trained on). Line-count mismatch is a
/// data error.
std::vector<SentencePair> encode_corpus(const std::vector<std::string>& src_lines,
                                        const std::vector<std::string>& tgt_lines,
                                        const Vocabulary& src_vocab, const Vocabulary& tgt_vocab);

/// Keeps pairs where BOTH sides have at most max_len tokens (before wrapping).
std::vector<SentencePair> filter_by_length(const std::vector<SentencePair>& pairs,
                                           std::size_t max_len);

/// Builds one padded batch from the given pairs, in order.
Batch make_batch(const std::vector<SentencePair>& pairs);

/// Shuffles deterministically by seed, then groups pairs of similar source
/// length (stable sort) to limit padding, and cuts into batches of
/// `batch_size`; the final batch may be short.
std::vector<Batch> make_batches(const std::vector<SentencePair>& pairs, std::size_t batch_size,
                                std::uint64_t seed);

/// Synthetic sequence-to-sequence tasks over a symbol alphabet.
enum class SyntheticKind { kCopy, kReversal };

struct RawPair {
  std::vector<std::string> source;
  std::vector<std::string> target;
};

/// Draws `n_pairs` random sentences of length [min_len, max_len] over
/// `n_symbols` distinct symbols; the target is a copy or the reversal of the
/// source. Deterministic in seed.
std::vector<RawPair> generate_synthetic(SyntheticKind kind, std::size_t n_pairs,
                                        std::size_t n_symbols, std::size_t min_len,
                                        std::size_t max_len, std::uint64_t seed);

}  // namespace edr
