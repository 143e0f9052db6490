#include "edr/model.hpp"

#include <algorithm>
#include <cmath>

#include "edr/errors.hpp"
#include "edr/rng.hpp"
#include "edr/vocab.hpp"

namespace edr {

namespace {

/// Additive logit offset that drives a softmax entry to exactly zero: the
/// shifted exponent underflows to 0.0 in double precision, so masked
/// attention weights are bit-exact zeros while every value stays finite.
constexpr double kMaskOffset = -1e9;

struct NamedShape {
  std::string name;
  std::vector<std::size_t> shape;
};

void push_gru_shapes(std::vector<NamedShape>& out, const std::string& prefix, std::size_t in_dim,
                     std::size_t h) {
  out.push_back({prefix + "wz", {in_dim, h}});
  out.push_back({prefix + "uz", {h, h}});
  out.push_back({prefix + "bz", {h}});
  out.push_back({prefix + "wr", {in_dim, h}});
  out.push_back({prefix + "ur", {h, h}});
  out.push_back({prefix + "br", {h}});
  out.push_back({prefix + "wh", {in_dim, h}});
  out.push_back({prefix + "uh", {h, h}});
  out.push_back({prefix + "bh", {h}});
}

std::vector<NamedShape> encdec_shapes(const ModelConfig& c) {
  const std::size_t e = c.embed_dim, h = c.hidden_dim;
  std::vector<NamedShape> out;
  out.push_back({"encdec/src_embed", {c.src_vocab, e}});
  out.push_back({"encdec/tgt_embed", {c.tgt_vocab, e}});
  push_gru_shapes(out, "encdec/enc_fwd_", e, h);
  push_gru_shapes(out, "encdec/enc_bwd_", e, h);
  out.push_back({"encdec/dec_init_w", {h, h}});
  push_gru_shapes(out, "encdec/dec_", e + 2 * h, h);
  out.push_back({"encdec/attn_w", {h, h}});
  out.push_back({"encdec/attn_u", {2 * h, h}});
  out.push_back({"encdec/attn_v", {h, 1}});
  out.push_back({"encdec/out_w", {h + e + 2 * h, c.tgt_vocab}});
  out.push_back({"encdec/out_b", {c.tgt_vocab}});
  return out;
}

std::vector<NamedShape> recon_shapes(const ModelConfig& c) {
  const std::size_t e = c.embed_dim, h = c.hidden_dim;
  std::vector<NamedShape> out;
  push_gru_shapes(out, "recon/cell_", e + h, h);
  out.push_back({"recon/init_w", {h, h}});
  out.push_back({"recon/inv_attn_w", {h, h}});
  out.push_back({"recon/inv_attn_u", {h, h}});
  out.push_back({"recon/inv_attn_v", {h, 1}});
  out.push_back({"recon/out_w", {h + e + h, c.src_vocab}});
  out.push_back({"recon/out_b", {c.src_vocab}});
  return out;
}

void check_config(const ModelConfig& c) {
  if (c.src_vocab < 1 || c.tgt_vocab < 1 || c.embed_dim < 1 || c.hidden_dim < 1) {
    throw UsageError("model config: all dimensions must be at least 1");
  }
}

/// Matrices: uniform(-a, a), a = sqrt(6 / (fan_in + fan_out)), drawn in list
/// order from one generator. Vectors (biases): zero.
ParameterMap draw_params(const std::vector<NamedShape>& shapes, Rng& rng) {
  ParameterMap params;
  for (const auto& ns : shapes) {
    Tensor t(ns.shape);
    if (ns.shape.size() == 2) {
      const double a = std::sqrt(6.0 / static_cast<double>(ns.shape[0] + ns.shape[1]));
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.next_symmetric(a);
    }
    params[ns.name] = std::move(t);
  }
  return params;
}

bool all_true(const std::vector<std::uint8_t>& mask) {
  return std::all_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; });
}

std::vector<std::int32_t> ids_column(const std::vector<std::vector<std::int32_t>>& rows,
                                     std::size_t col) {
  std::vector<std::int32_t> out(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) out[r] = rows[r][col];
  return out;
}

std::vector<std::uint8_t> mask_column(const std::vector<std::vector<std::uint8_t>>& rows,
                                      std::size_t col) {
  std::vector<std::uint8_t> out(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) out[r] = rows[r][col];
  return out;
}

/// Constant column (rows x 1) of 0/1 flags.
ValueId flag_column(Tape& tape, const std::vector<std::uint8_t>& mask) {
  Tensor t({mask.size(), 1});
  for (std::size_t r = 0; r < mask.size(); ++r) t[r] = mask[r] ? 1.0 : 0.0;
  return tape.constant(std::move(t));
}

/// Constant vector of 0/1 flags, matching a per-row loss vector.
ValueId flag_row(Tape& tape, const std::vector<std::uint8_t>& mask) {
  Tensor t({mask.size()});
  for (std::size_t r = 0; r < mask.size(); ++r) t[r] = mask[r] ? 1.0 : 0.0;
  return tape.constant(std::move(t));
}

/// prev + mask * (next - prev): rows with a cleared flag keep their previous
/// state, and no gradient reaches their inputs. Skipped entirely (returning
/// `next` unchanged) when every flag is set, so unpadded batches build the
/// exact same node sequence as single-sentence runs.
ValueId gated_update(Tape& tape, ValueId prev, ValueId next,
                     const std::vector<std::uint8_t>& mask) {
  if (all_true(mask)) return next;
  return tape.add(prev, tape.mul(tape.sub(next, prev), flag_column(tape, mask)));
}

/// One GRU update for the cell with the given parameter prefix.
/// x: rows x in_dim, state: rows x h.
ValueId gru_cell(Tape& tape, const BoundModel& m, const std::string& prefix, ValueId x,
                 ValueId state) {
  const ValueId z = tape.sigmoid(
      tape.add(tape.add(tape.matmul(x, m.at(prefix + "wz")), tape.matmul(state, m.at(prefix + "uz"))),
               m.at(prefix + "bz")));
  const ValueId r = tape.sigmoid(
      tape.add(tape.add(tape.matmul(x, m.at(prefix + "wr")), tape.matmul(state, m.at(prefix + "ur"))),
               m.at(prefix + "br")));
  const ValueId cand = tape.tanh(
      tape.add(tape.add(tape.matmul(x, m.at(prefix + "wh")),
                        tape.matmul(tape.mul(r, state), m.at(prefix + "uh"))),
               m.at(prefix + "bh")));
  // state + z * (cand - state)
  return tape.add(state, tape.mul(z, tape.sub(cand, state)));
}

void check_batch(const Batch& batch) {
  if (batch.size() == 0) throw UsageError("batch is empty");
  const std::size_t L = batch.src_len(), T = batch.tgt_len();
  if (L == 0 || T < 3) throw UsageError("batch rows must hold at least one source token and a wrapped target");
  if (batch.tgt.size() != batch.size() || batch.src_mask.size() != batch.size() ||
      batch.tgt_mask.size() != batch.size()) {
    throw UsageError("batch fields disagree on row count");
  }
  for (std::size_t r = 0; r < batch.size(); ++r) {
    if (batch.src[r].size() != L || batch.src_mask[r].size() != L ||
        batch.tgt[r].size() != T || batch.tgt_mask[r].size() != T) {
      throw UsageError("batch rows disagree on padded width");
    }
  }
}

}  // namespace

ParameterMap init_encdec_params(const ModelConfig& config) {
  check_config(config);
  Rng rng(mix_seed(config.seed, 1));
  return draw_params(encdec_shapes(config), rng);
}

ParameterMap init_recon_params(const ModelConfig& config) {
  check_config(config);
  Rng rng(mix_seed(config.seed, 2));
  return draw_params(recon_shapes(config), rng);
}

ParameterMap init_params(const ModelConfig& config) {
  ParameterMap params = init_encdec_params(config);
  ParameterMap recon = init_recon_params(config);
  params.insert(recon.begin(), recon.end());
  return params;
}

ModelConfig config_from_params(const ParameterMap& params) {
  auto need = [&](const char* name) -> const Tensor& {
    auto it = params.find(name);
    if (it == params.end()) {
      throw UsageError(std::string("parameter map is missing '") + name + "'");
    }
    return it->second;
  };
  ModelConfig c;
  const Tensor& src_embed = need("encdec/src_embed");
  c.src_vocab = src_embed.rows();
  c.embed_dim = src_embed.cols();
  c.tgt_vocab = need("encdec/tgt_embed").rows();
  c.hidden_dim = need("encdec/enc_fwd_uz").rows();
  return c;
}

void validate_params(const ParameterMap& params, const ModelConfig& config, bool with_recon) {
  check_config(config);
  std::vector<NamedShape> expected = encdec_shapes(config);
  if (with_recon) {
    std::vector<NamedShape> recon = recon_shapes(config);
    expected.insert(expected.end(), recon.begin(), recon.end());
  }
  for (const auto& ns : expected) {
    auto it = params.find(ns.name);
    if (it == params.end()) {
      throw UsageError("parameter map is missing '" + ns.name + "'");
    }
    if (it->second.shape() != ns.shape) {
      throw UsageError("parameter '" + ns.name + "' has shape " + it->second.shape_str() +
                       ", expected " + shape_to_string(ns.shape));
    }
  }
}

ValueId BoundModel::at(const std::string& name) const {
  auto it = ids.find(name);
  if (it == ids.end()) throw UsageError("model has no parameter '" + name + "'");
  return it->second;
}

BoundModel bind_params(Tape& tape, const ParameterMap& params) {
  BoundModel m;
  m.tape = &tape;
  for (const auto& [name, tensor] : params) {
    m.ids[name] = tape.param(name, tensor);
  }
  return m;
}

EncodedSource encode(Tape& tape, const BoundModel& m,
                     const std::vector<std::vector<std::int32_t>>& src_rows,
                     const std::vector<std::vector<std::uint8_t>>& src_mask) {
  if (src_rows.empty() || src_rows[0].empty()) throw UsageError("encode: empty input");
  const std::size_t batch = src_rows.size();
  const std::size_t len = src_rows[0].size();
  if (src_mask.size() != batch) throw UsageError("encode: mask row count mismatch");
  for (std::size_t r = 0; r < batch; ++r) {
    if (src_rows[r].size() != len || src_mask[r].size() != len) {
      throw UsageError("encode: ragged rows");
    }
    if (!std::any_of(src_mask[r].begin(), src_mask[r].end(),
                     [](std::uint8_t f) { return f != 0; })) {
      throw UsageError("encode: row " + std::to_string(r) + " is entirely padding");
    }
  }

  const std::size_t h = tape.value(m.at("encdec/enc_fwd_uz")).rows();
  const ValueId src_embed = m.at("encdec/src_embed");

  std::vector<ValueId> embeds(len);
  std::vector<std::vector<std::uint8_t>> cols(len);
  for (std::size_t t = 0; t < len; ++t) {
    embeds[t] = tape.embedding_rows(src_embed, ids_column(src_rows, t));
    cols[t] = mask_column(src_mask, t);
  }

  std::vector<ValueId> fwd(len), bwd(len);
  ValueId state = tape.constant(Tensor({batch, h}));
  for (std::size_t t = 0; t < len; ++t) {
    state = gated_update(tape, state, gru_cell(tape, m, "encdec/enc_fwd_", embeds[t], state),
                         cols[t]);
    fwd[t] = state;
  }
  state = tape.constant(Tensor({batch, h}));
  for (std::size_t t = len; t-- > 0;) {
    state = gated_update(tape, state, gru_cell(tape, m, "encdec/enc_bwd_", embeds[t], state),
                         cols[t]);
    bwd[t] = state;
  }

  EncodedSource enc;
  enc.batch = batch;
  enc.mask = src_mask;
  enc.backward_first = bwd[0];
  enc.states.resize(len);
  for (std::size_t t = 0; t < len; ++t) enc.states[t] = tape.concat({fwd[t], bwd[t]});
  return enc;
}

ValueId init_decoder_state(Tape& tape, const BoundModel& m, const EncodedSource& enc) {
  if (enc.states.empty()) throw UsageError("init_decoder_state: empty encoding");
  return tape.tanh(tape.matmul(enc.backward_first, m.at("encdec/dec_init_w")));
}

AttendResult attend_states(Tape& tape, ValueId query, const std::vector<ValueId>& states,
                           const std::vector<ValueId>& keys,
                           const std::vector<std::vector<std::uint8_t>>& mask, ValueId w,
                           ValueId v) {
  if (states.empty()) throw UsageError("attention: no states");
  if (keys.size() != states.size()) throw UsageError("attention: key/state count mismatch");
  const std::size_t batch = tape.value(query).rows();
  const std::size_t len = states.size();
  if (mask.size() != batch) throw UsageError("attention: mask row count mismatch");
  bool any_masked = false;
  for (std::size_t r = 0; r < batch; ++r) {
    if (mask[r].size() != len) throw UsageError("attention: mask width mismatch");
    bool any = false;
    for (std::uint8_t f : mask[r]) {
      if (f)
        any = true;
      else
        any_masked = true;
    }
    if (!any) throw UsageError("attention: row " + std::to_string(r) + " masks every position");
  }

  const ValueId projected = tape.matmul(query, w);
  std::vector<ValueId> scores(len);
  for (std::size_t t = 0; t < len; ++t) {
    scores[t] = tape.matmul(tape.tanh(tape.add(projected, keys[t])), v);
  }
  ValueId energies = tape.concat(scores);
  if (any_masked) {
    Tensor offsets({batch, len});
    for (std::size_t r = 0; r < batch; ++r) {
      for (std::size_t t = 0; t < len; ++t) {
        if (!mask[r][t]) offsets.at(r, t) = kMaskOffset;
      }
    }
    energies = tape.add(energies, tape.constant(std::move(offsets)));
  }
  AttendResult out;
  out.alpha = tape.softmax(energies);
  ValueId context = kNoValue;
  for (std::size_t t = 0; t < len; ++t) {
    const ValueId weighted = tape.mul(states[t], tape.slice(out.alpha, 1, t, t + 1));
    context = (context == kNoValue) ? weighted : tape.add(context, weighted);
  }
  out.context = context;
  return out;
}

AttendResult attend(Tape& tape, const BoundModel& m, ValueId s_prev, const EncodedSource& enc) {
  std::vector<ValueId> keys(enc.states.size());
  for (std::size_t t = 0; t < enc.states.size(); ++t) {
    keys[t] = tape.matmul(enc.states[t], m.at("encdec/attn_u"));
  }
  return attend_states(tape, s_prev, enc.states, keys, enc.mask, m.at("encdec/attn_w"),
                       m.at("encdec/attn_v"));
}

AttendResult inverse_attend(Tape& tape, const BoundModel& m, ValueId s_prev,
                            const std::vector<ValueId>& decoder_states,
                            const std::vector<std::vector<std::uint8_t>>& state_mask) {
  std::vector<ValueId> keys(decoder_states.size());
  for (std::size_t t = 0; t < decoder_states.size(); ++t) {
    keys[t] = tape.matmul(decoder_states[t], m.at("recon/inv_attn_u"));
  }
  return attend_states(tape, s_prev, decoder_states, keys, state_mask, m.at("recon/inv_attn_w"),
                       m.at("recon/inv_attn_v"));
}

StepResult decoder_step(Tape& tape, const BoundModel& m, ValueId s_prev,
                        const std::vector<std::int32_t>& y_prev_ids, ValueId context,
                        ValueId logit_offset) {
  const ValueId emb = tape.embedding_rows(m.at("encdec/tgt_embed"), y_prev_ids);
  const ValueId x = tape.concat({emb, context});
  StepResult out;
  out.state = gru_cell(tape, m, "encdec/dec_", x, s_prev);
  const ValueId readout = tape.concat({out.state, emb, context});
  ValueId logits = tape.add(tape.matmul(readout, m.at("encdec/out_w")), m.at("encdec/out_b"));
  if (logit_offset != kNoValue) logits = tape.add(logits, logit_offset);
  out.dist = tape.softmax(logits);
  return out;
}

DecoderTrace forward_pass(Tape& tape, const BoundModel& m, const Batch& batch) {
  check_batch(batch);
  EncodedSource enc = encode(tape, m, batch.src, batch.src_mask);
  std::vector<ValueId> keys(enc.states.size());
  for (std::size_t t = 0; t < enc.states.size(); ++t) {
    keys[t] = tape.matmul(enc.states[t], m.at("encdec/attn_u"));
  }
  const ValueId attn_w = m.at("encdec/attn_w");
  const ValueId attn_v = m.at("encdec/attn_v");

  DecoderTrace trace;
  trace.tape = &tape;
  trace.batch = batch.size();

  ValueId state = init_decoder_state(tape, m, enc);
  ValueId total = kNoValue;
  const std::size_t T = batch.tgt_len();
  for (std::size_t i = 1; i < T; ++i) {
    const std::vector<std::int32_t> prev_ids = ids_column(batch.tgt, i - 1);
    const std::vector<std::int32_t> targets = ids_column(batch.tgt, i);
    const std::vector<std::uint8_t> step = mask_column(batch.tgt_mask, i);

    AttendResult att = attend_states(tape, state, enc.states, keys, enc.mask, attn_w, attn_v);
    StepResult step_out = decoder_step(tape, m, state, prev_ids, att.context);
    state = gated_update(tape, state, step_out.state, step);

    ValueId ce = tape.cross_entropy_rows(step_out.dist, targets);
    if (!all_true(step)) ce = tape.mul(ce, flag_row(tape, step));
    total = (total == kNoValue) ? ce : tape.add(total, ce);

    trace.states.push_back(state);
    trace.dists.push_back(step_out.dist);
    trace.alphas.push_back(att.alpha);
    trace.step_mask.push_back(step);
    trace.step_targets.push_back(targets);
  }
  trace.loss = tape.mean(total);
  return trace;
}

ReconTrace reconstruct_pass(Tape& tape, const BoundModel& m, const DecoderTrace& trace,
                            const Batch& batch) {
  if (trace.tape != &tape) throw UsageError("reconstruct_pass: trace comes from a different record");
  if (trace.batch != batch.size() || trace.states.empty()) {
    throw UsageError("reconstruct_pass: trace does not match the batch");
  }
  check_batch(batch);

  const std::size_t B = batch.size();
  const std::size_t L = batch.src_len();
  const std::size_t R = L + 1;  // every row predicts its tokens plus an end marker

  // Reconstruction rows: inputs start with the start marker, targets end with
  // the end marker at each row's own length.
  std::vector<std::vector<std::int32_t>> input(B, std::vector<std::int32_t>(R, Vocabulary::kPad));
  std::vector<std::vector<std::int32_t>> target(B, std::vector<std::int32_t>(R, Vocabulary::kPad));
  std::vector<std::vector<std::uint8_t>> mask(B, std::vector<std::uint8_t>(R, 0));
  for (std::size_t r = 0; r < B; ++r) {
    std::size_t len = 0;
    for (std::uint8_t f : batch.src_mask[r]) len += f ? 1 : 0;
    input[r][0] = Vocabulary::kBos;
    for (std::size_t j = 0; j < len; ++j) {
      input[r][j + 1] = batch.src[r][j];
      target[r][j] = batch.src[r][j];
      mask[r][j] = 1;
    }
    target[r][len] = Vocabulary::kEos;
    mask[r][len] = 1;
  }

  // Valid decoder states per row, as the attention expects them.
  const std::size_t steps = trace.states.size();
  std::vector<std::vector<std::uint8_t>> state_mask(B, std::vector<std::uint8_t>(steps, 0));
  bool fully_unmasked = true;
  for (std::size_t j = 0; j < steps; ++j) {
    for (std::size_t r = 0; r < B; ++r) {
      state_mask[r][j] = trace.step_mask[j][r];
      if (!state_mask[r][j]) fully_unmasked = false;
    }
  }

  // Initial state: tanh(projection of the mean of each row's valid states).
  ValueId acc = kNoValue;
  for (std::size_t j = 0; j < steps; ++j) {
    ValueId term = fully_unmasked
                       ? trace.states[j]
                       : tape.mul(trace.states[j], flag_column(tape, trace.step_mask[j]));
    acc = (acc == kNoValue) ? term : tape.add(acc, term);
  }
  ValueId mean_state;
  if (fully_unmasked) {
    mean_state = tape.mul(acc, tape.constant(Tensor::scalar(1.0 / static_cast<double>(steps))));
  } else {
    Tensor inv_counts({B, 1});
    for (std::size_t r = 0; r < B; ++r) {
      std::size_t count = 0;
      for (std::size_t j = 0; j < steps; ++j) count += state_mask[r][j] ? 1 : 0;
      if (count == 0) {
        throw UsageError("reconstruct_pass: row " + std::to_string(r) + " has no valid decoder states");
      }
      inv_counts[r] = 1.0 / static_cast<double>(count);
    }
    mean_state = tape.mul(acc, tape.constant(std::move(inv_counts)));
  }
  ValueId state = tape.tanh(tape.matmul(mean_state, m.at("recon/init_w")));

  std::vector<ValueId> keys(steps);
  for (std::size_t j = 0; j < steps; ++j) {
    keys[j] = tape.matmul(trace.states[j], m.at("recon/inv_attn_u"));
  }
  const ValueId inv_w = m.at("recon/inv_attn_w");
  const ValueId inv_v = m.at("recon/inv_attn_v");
  const ValueId src_embed = m.at("encdec/src_embed");

  ReconTrace recon;
  ValueId total = kNoValue;
  for (std::size_t i = 0; i < R; ++i) {
    const std::vector<std::int32_t> prev_ids = ids_column(input, i);
    const std::vector<std::int32_t> targets = ids_column(target, i);
    const std::vector<std::uint8_t> step = mask_column(mask, i);

    AttendResult att = attend_states(tape, state, trace.states, keys, state_mask, inv_w, inv_v);
    const ValueId emb = tape.embedding_rows(src_embed, prev_ids);
    const ValueId x = tape.concat({emb, att.context});
    const ValueId cand = gru_cell(tape, m, "recon/cell_", x, state);
    state = gated_update(tape, state, cand, step);
    const ValueId readout = tape.concat({state, emb, att.context});
    const ValueId logits =
        tape.add(tape.matmul(readout, m.at("recon/out_w")), m.at("recon/out_b"));
    const ValueId dist = tape.softmax(logits);

    ValueId ce = tape.cross_entropy_rows(dist, targets);
    if (!all_true(step)) ce = tape.mul(ce, flag_row(tape, step));
    total = (total == kNoValue) ? ce : tape.add(total, ce);

    recon.dists.push_back(dist);
    recon.alphas.push_back(att.alpha);
    recon.step_mask.push_back(step);
    recon.step_targets.push_back(targets);
  }
  recon.loss = tape.mean(total);
  return recon;
}

double loss_joint(double loss_forward, double loss_backward, double lambda) {
  return loss_forward + lambda * loss_backward;
}

double token_accuracy(const Tape& tape, const std::vector<ValueId>& dists,
                      const std::vector<std::vector<std::int32_t>>& step_targets,
                      const std::vector<std::vector<std::uint8_t>>& step_mask) {
  if (dists.size() != step_targets.size() || dists.size() != step_mask.size()) {
    throw UsageError("token_accuracy: trace fields disagree on step count");
  }
  std::size_t correct = 0, total = 0;
  for (std::size_t i = 0; i < dists.size(); ++i) {
    const Tensor& dist = tape.value(dists[i]);
    for (std::size_t r = 0; r < dist.rows(); ++r) {
      if (!step_mask[i][r]) continue;
      std::size_t best = 0;
      double best_p = dist.at(r, 0);
      for (std::size_t c = 1; c < dist.cols(); ++c) {
        if (dist.at(r, c) > best_p) {
          best_p = dist.at(r, c);
          best = c;
        }
      }
      if (static_cast<std::int32_t>(best) == step_targets[i][r]) ++correct;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace edr
