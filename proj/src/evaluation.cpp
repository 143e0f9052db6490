#include "edr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "edr/errors.hpp"
#include "edr/rng.hpp"
#include "edr/vocab.hpp"

namespace edr {

namespace {

/// n-gram key: tokens joined on a separator that cannot occur inside a token.
std::string ngram_key(const std::vector<std::string>& tokens, std::size_t start, std::size_t n) {
  std::string key;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) key += '\x1f';
    key += tokens[start + i];
  }
  return key;
}

using Counts = std::unordered_map<std::string, std::size_t>;

Counts ngram_counts(const std::vector<std::string>& tokens, std::size_t n) {
  Counts counts;
  if (tokens.size() >= n) {
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) ++counts[ngram_key(tokens, i, n)];
  }
  return counts;
}

void check_aligned(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw UsageError(std::string(what) + ": sentence counts differ (" + std::to_string(a) +
                     " vs " + std::to_string(b) + ")");
  }
}

}  // namespace

SentenceBleuStats sentence_bleu_stats(const std::vector<std::string>& hyp,
                                      const std::vector<std::string>& ref) {
  SentenceBleuStats s;
  s.hyp_length = hyp.size();
  s.ref_length = ref.size();
  for (std::size_t n = 1; n <= 4; ++n) {
    if (hyp.size() < n) break;
    const Counts ref_counts = ngram_counts(ref, n);
    Counts hyp_counts = ngram_counts(hyp, n);
    std::size_t total = 0, matched = 0;
    for (const auto& [key, count] : hyp_counts) {
      total += count;
      auto it = ref_counts.find(key);
      if (it != ref_counts.end()) matched += std::min(count, it->second);
    }
    s.totals[n - 1] = total;
    s.matches[n - 1] = matched;
  }
  return s;
}

BleuResult bleu_from_stats(const SentenceBleuStats& total) {
  BleuResult r;
  r.hyp_length = total.hyp_length;
  r.ref_length = total.ref_length;
  if (total.hyp_length == 0) return r;  // nothing produced: score and penalty zero
  r.brevity_penalty =
      total.hyp_length <= total.ref_length
          ? std::exp(1.0 - static_cast<double>(total.ref_length) / static_cast<double>(total.hyp_length))
          : 1.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    r.precisions[n] = total.totals[n] == 0
                          ? 0.0
                          : static_cast<double>(total.matches[n]) /
                                static_cast<double>(total.totals[n]);
    if (r.precisions[n] <= 0.0) return r;  // unsmoothed: any zero precision zeroes the score
    log_sum += std::log(r.precisions[n]);
  }
  r.bleu = r.brevity_penalty * std::exp(log_sum / 4.0);
  return r;
}

BleuResult bleu_corpus(const std::vector<std::vector<std::string>>& hyps,
                       const std::vector<std::vector<std::string>>& refs) {
  check_aligned(hyps.size(), refs.size(), "bleu_corpus");
  SentenceBleuStats sum;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const SentenceBleuStats s = sentence_bleu_stats(hyps[i], refs[i]);
    for (std::size_t n = 0; n < 4; ++n) {
      sum.matches[n] += s.matches[n];
      sum.totals[n] += s.totals[n];
    }
    sum.hyp_length += s.hyp_length;
    sum.ref_length += s.ref_length;
  }
  return bleu_from_stats(sum);
}

WordStats word_stats(const std::vector<std::vector<std::string>>& hyps,
                     const std::vector<std::vector<std::string>>& refs) {
  check_aligned(hyps.size(), refs.size(), "word_stats");
  WordStats stats;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    Counts hyp_counts, ref_counts;
    for (const auto& tok : hyps[i]) {
      if (tok == Vocabulary::kUnkToken) {
        ++stats.unknown;
      } else {
        ++hyp_counts[tok];
      }
    }
    for (const auto& tok : refs[i]) {
      if (tok != Vocabulary::kUnkToken) ++ref_counts[tok];
    }
    for (const auto& [tok, count] : hyp_counts) {
      auto it = ref_counts.find(tok);
      if (it != ref_counts.end()) {
        if (count > it->second) stats.over += count - it->second;
      } else if (count > 1) {
        stats.spurious += count;
      }
    }
  }
  return stats;
}

double bootstrap_significance(const std::vector<std::vector<std::string>>& hyps_a,
                              const std::vector<std::vector<std::string>>& hyps_b,
                              const std::vector<std::vector<std::string>>& refs,
                              std::size_t samples, std::uint64_t seed) {
  check_aligned(hyps_a.size(), refs.size(), "bootstrap_significance");
  check_aligned(hyps_b.size(), refs.size(), "bootstrap_significance");
  if (refs.empty()) throw UsageError("bootstrap_significance: empty corpus");
  if (samples < 1) throw UsageError("bootstrap_significance: need at least one sample");

  const std::size_t n = refs.size();
  std::vector<SentenceBleuStats> stats_a(n), stats_b(n);
  for (std::size_t i = 0; i < n; ++i) {
    stats_a[i] = sentence_bleu_stats(hyps_a[i], refs[i]);
    stats_b[i] = sentence_bleu_stats(hyps_b[i], refs[i]);
  }

  std::size_t favorable = 0;
  for (std::size_t k = 0; k < samples; ++k) {
    Rng rng(mix_seed(seed, k));
    SentenceBleuStats sum_a, sum_b;
    for (std::size_t draw = 0; draw < n; ++draw) {
      const std::size_t i = static_cast<std::size_t>(rng.next_bounded(n));
      for (std::size_t g = 0; g < 4; ++g) {
        sum_a.matches[g] += stats_a[i].matches[g];
        sum_a.totals[g] += stats_a[i].totals[g];
        sum_b.matches[g] += stats_b[i].matches[g];
        sum_b.totals[g] += stats_b[i].totals[g];
      }
      sum_a.hyp_length += stats_a[i].hyp_length;
      sum_a.ref_length += stats_a[i].ref_length;
      sum_b.hyp_length += stats_b[i].hyp_length;
      sum_b.ref_length += stats_b[i].ref_length;
    }
    if (bleu_from_stats(sum_b).bleu >= bleu_from_stats(sum_a).bleu) ++favorable;
  }
  return static_cast<double>(favorable) / static_cast<double>(samples);
}

std::vector<std::vector<std::string>> tokenize_lines(const std::vector<std::string>& lines) {
  std::vector<std::vector<std::string>> out;
  out.reserve(lines.size());
  for (const auto& line : lines) out.push_back(split_tokens(line));
  return out;
}

}  // namespace edr
