#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "edr/model.hpp"
#include "edr/vocab.hpp"

namespace edr {

/// A greedy decode of one sentence: emitted ids (start/end markers stripped),
/// one attention row over the source per emitted token, and the log of each
/// chosen token's probability.
struct Translation {
  std::vector<std::int32_t> ids;
  std::vector<std::vector<double>> attention;
  std::vector<double> log_probs;
};

/// Argmax decoding, ties to the lowest id, stopping at the end marker or at
/// floor(max_len_factor * source length) + 5 tokens. The padding and start
/// ids are barred from the readout (their probability is driven to exactly
/// zero), so emitted ids are always real tokens or the unknown id.
Translation greedy_decode(const ParameterMap& params, const std::vector<std::int32_t>& source,
                          double max_len_factor = 2.0);

/// Decodes every line (empty lines pass through as empty output).
std::vector<std::string> translate_lines(const ParameterMap& params, const Vocabulary& src_vocab,
                                         const Vocabulary& tgt_vocab,
                                         const std::vector<std::string>& lines,
                                         double max_len_factor = 2.0);

/// Attention matrix as TSV: source tokens as the column header, one row per
/// output token, weights with six decimals.
std::string format_attention_tsv(const std::vector<std::vector<double>>& attention,
                                 const std::vector<std::string>& source_tokens,
                                 const std::vector<std::string>& output_tokens);

}  // namespace edr
