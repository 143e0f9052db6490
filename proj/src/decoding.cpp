#include "edr/decoding.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "edr/errors.hpp"

namespace edr {

Translation greedy_decode(const ParameterMap& params, const std::vector<std::int32_t>& source,
                          double max_len_factor) {
  if (source.empty()) throw UsageError("greedy_decode: empty source");
  if (max_len_factor < 0.0) throw UsageError("greedy_decode: negative length factor");

  ParameterMap encdec;
  for (const auto& [name, tensor] : params) {
    if (name.rfind(kEncDecPrefix, 0) == 0) encdec[name] = tensor;
  }
  ModelConfig config = config_from_params(encdec);
  validate_params(encdec, config, /*with_recon=*/false);

  Tape tape;
  BoundModel m = bind_params(tape, encdec);

  const std::vector<std::vector<std::int32_t>> rows = {source};
  const std::vector<std::vector<std::uint8_t>> mask = {
      std::vector<std::uint8_t>(source.size(), 1)};
  EncodedSource enc = encode(tape, m, rows, mask);
  std::vector<ValueId> keys(enc.states.size());
  for (std::size_t t = 0; t < enc.states.size(); ++t) {
    keys[t] = tape.matmul(enc.states[t], m.at("encdec/attn_u"));
  }
  const ValueId attn_w = m.at("encdec/attn_w");
  const ValueId attn_v = m.at("encdec/attn_v");

  // Bar the padding and start-marker ids from ever winning the argmax: their
  // shifted exponents underflow to exactly zero probability.
  Tensor offsets({config.tgt_vocab});
  offsets[static_cast<std::size_t>(Vocabulary::kPad)] = -1e9;
  offsets[static_cast<std::size_t>(Vocabulary::kBos)] = -1e9;
  const ValueId logit_offset = tape.constant(std::move(offsets));

  const std::size_t cap =
      static_cast<std::size_t>(max_len_factor * static_cast<double>(source.size())) + 5;

  Translation out;
  ValueId state = init_decoder_state(tape, m, enc);
  std::int32_t prev = Vocabulary::kBos;
  for (std::size_t step = 0; step < cap; ++step) {
    AttendResult att = attend_states(tape, state, enc.states, keys, enc.mask, attn_w, attn_v);
    StepResult sr = decoder_step(tape, m, state, {prev}, att.context, logit_offset);
    const Tensor& dist = tape.value(sr.dist);
    std::size_t best = 0;
    double best_p = dist[0];
    for (std::size_t c = 1; c < dist.size(); ++c) {
      if (dist[c] > best_p) {
        best_p = dist[c];
        best = c;
      }
    }
    if (static_cast<std::int32_t>(best) == Vocabulary::kEos) break;
    out.ids.push_back(static_cast<std::int32_t>(best));
    out.log_probs.push_back(std::log(best_p));
    const Tensor& alpha = tape.value(att.alpha);
    out.attention.emplace_back(alpha.storage());
    state = sr.state;
    prev = static_cast<std::int32_t>(best);
  }
  return out;
}

std::vector<std::string> translate_lines(const ParameterMap& params, const Vocabulary& src_vocab,
                                         const Vocabulary& tgt_vocab,
                                         const std::vector<std::string>& lines,
                                         double max_len_factor) {
  std::vector<std::string> out;
  out.reserve(lines.size());
  for (const auto& line : lines) {
    const std::vector<std::string> tokens = split_tokens(line);
    if (tokens.empty()) {
      out.emplace_back();
      continue;
    }
    const Translation t = greedy_decode(params, src_vocab.encode(tokens), max_len_factor);
    std::ostringstream joined;
    const std::vector<std::string> words = tgt_vocab.decode(t.ids);
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (i) joined << ' ';
      joined << words[i];
    }
    out.push_back(joined.str());
  }
  return out;
}

std::string format_attention_tsv(const std::vector<std::vector<double>>& attention,
                                 const std::vector<std::string>& source_tokens,
                                 const std::vector<std::string>& output_tokens) {
  if (attention.size() != output_tokens.size()) {
    throw UsageError("attention dump: " + std::to_string(attention.size()) + " rows for " +
                     std::to_string(output_tokens.size()) + " output tokens");
  }
  for (const auto& row : attention) {
    if (row.size() != source_tokens.size()) {
      throw UsageError("attention dump: row width " + std::to_string(row.size()) +
                       " does not match " + std::to_string(source_tokens.size()) +
                       " source tokens");
    }
  }
  std::ostringstream out;
  for (const auto& tok : source_tokens) out << '\t' << tok;
  out << '\n';
  char buf[32];
  for (std::size_t r = 0; r < attention.size(); ++r) {
    out << output_tokens[r];
    for (double w : attention[r]) {
      std::snprintf(buf, sizeof(buf), "%.6f", w);
      out << '\t' << buf;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace edr
