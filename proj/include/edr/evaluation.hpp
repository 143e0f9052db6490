#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace edr {

/// Corpus-level 4-gram BLEU with clipped matches and the standard brevity
/// penalty; any zero n-gram precision makes the score zero (no smoothing).
struct BleuResult {
  double bleu = 0.0;
  std::array<double, 4> precisions{};
  double brevity_penalty = 0.0;
  std::size_t hyp_length = 0;
  std::size_t ref_length = 0;
};

/// Per-sentence sufficient statistics; corpus BLEU is computed from their
/// sums, which is what makes bootstrap resampling cheap.
struct SentenceBleuStats {
  std::array<std::size_t, 4> matches{};
  std::array<std::size_t, 4> totals{};
  std::size_t hyp_length = 0;
  std::size_t ref_length = 0;
};

SentenceBleuStats sentence_bleu_stats(const std::vector<std::string>& hyp,
                                      const std::vector<std::string>& ref);

BleuResult bleu_from_stats(const SentenceBleuStats& total);

/// One reference per hypothesis; sentence counts must match.
BleuResult bleu_corpus(const std::vector<std::vector<std::string>>& hyps,
                       const std::vector<std::vector<std::string>>& refs);

/// Token-level translation-noise counters, summed over sentences. With
/// c_h(w)/c_r(w) the hypothesis/reference counts of token w (the unknown
/// marker excluded from both):
///   over:     sum over w present in the reference of max(0, c_h(w) - c_r(w))
///   spurious: sum over w absent from the reference with c_h(w) > 1 of c_h(w)
///   unknown:  number of unknown-marker tokens in the hypothesis
struct WordStats {
  std::size_t over = 0;
  std::size_t spurious = 0;
  std::size_t unknown = 0;
};

WordStats word_stats(const std::vector<std::vector<std::string>>& hyps,
                     const std::vector<std::vector<std::string>>& refs);

/// Paired bootstrap resampling: draws `samples` resamples of the sentence
/// indices (with replacement) and reports the fraction where system B scores
/// at least as high as system A — the p-value for "A better than B". Each
/// iteration derives its own seed, so the result is identical whether
/// iterations run serially or not.
double bootstrap_significance(const std::vector<std::vector<std::string>>& hyps_a,
                              const std::vector<std::vector<std::string>>& hyps_b,
                              const std::vector<std::vector<std::string>>& refs,
                              std::size_t samples, std::uint64_t seed);

/// Whitespace-tokenizes each line.
std::vector<std::vector<std::string>> tokenize_lines(const std::vector<std::string>& lines);

}  // namespace edr
