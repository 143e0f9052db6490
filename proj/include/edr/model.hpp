#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "edr/corpus.hpp"
#include "edr/tape.hpp"

namespace edr {

/// Dimensions and the init seed. hidden_dim is the size of one RNN direction;
/// encoder states are twice that after concatenating the two directions.
struct ModelConfig {
  std::size_t src_vocab = 0;
  std::size_t tgt_vocab = 0;
  std::size_t embed_dim = 0;
  std::size_t hidden_dim = 0;
  std::uint64_t seed = 0;
};

/// Name prefixes separating the translator parameters from the reconstructor
/// parameters inside a ParameterMap / checkpoint.
inline constexpr const char* kEncDecPrefix = "encdec/";
inline constexpr const char* kReconPrefix = "recon/";

/// Translator parameters: embeddings, the two encoder GRU directions, the
/// decoder GRU, attention, decoder-state init, and the output projection.
/// Matrices are drawn uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out));
/// biases start at zero. Deterministic in config.seed.
ParameterMap init_encdec_params(const ModelConfig& config);

/// Reconstructor parameters: its GRU, inverse attention, state init, and the
/// source-side output projection. The reconstructor reads the translator's
/// source embedding table; it owns no embedding of its own.
ParameterMap init_recon_params(const ModelConfig& config);

/// Union of both parameter groups.
ParameterMap init_params(const ModelConfig& config);

/// Recovers the dimensions from a parameter map (e.g. a loaded checkpoint).
ModelConfig config_from_params(const ParameterMap& params);

/// Throws UsageError unless `params` holds every tensor the given prefix
/// group requires, with shapes consistent with `config`.
void validate_params(const ParameterMap& params, const ModelConfig& config, bool with_recon);

/// Parameters registered as named leaves on a tape.
struct BoundModel {
  Tape* tape = nullptr;
  std::map<std::string, ValueId> ids;

  ValueId at(const std::string& name) const;
  bool has(const std::string& name) const { return ids.count(name) != 0; }
};

/// Registers every parameter in `params` on the tape. Gradients from
/// Tape::backward then cover exactly these names.
BoundModel bind_params(Tape& tape, const ParameterMap& params);

/// Encoder output: one value per source position holding the concatenated
/// forward/backward states for the whole batch (rows x 2*hidden), plus the
/// first backward state used to initialize the decoder.
struct EncodedSource {
  std::vector<ValueId> states;
  ValueId backward_first = 0;
  std::vector<std::vector<std::uint8_t>> mask;
  std::size_t batch = 0;
};

/// Runs both RNN directions over the batch. Padded positions leave the
/// running state untouched, so states and loss are independent of padding
/// content. Throws UsageError on an empty batch or an all-padding row.
EncodedSource encode(Tape& tape, const BoundModel& m,
                     const std::vector<std::vector<std::int32_t>>& src_rows,
                     const std::vector<std::vector<std::uint8_t>>& src_mask);

/// s_0 = tanh(first backward encoder state * W_init).
ValueId init_decoder_state(Tape& tape, const BoundModel& m, const EncodedSource& enc);

/// One attention read: energies tanh(query*W + key_j)*v over position keys,
/// masked positions forced to probability exactly zero, softmax-normalized,
/// then the weighted sum of the states. Returns (weights, context).
struct AttendResult {
  ValueId alpha = 0;
  ValueId context = 0;
};

/// keys[j] must be states[j] * U (precomputed once per pass).
AttendResult attend_states(Tape& tape, ValueId query, const std::vector<ValueId>& states,
                           const std::vector<ValueId>& keys,
                           const std::vector<std::vector<std::uint8_t>>& mask, ValueId w,
                           ValueId v);

/// Attention over encoder states with the translator's weights.
AttendResult attend(Tape& tape, const BoundModel& m, ValueId s_prev, const EncodedSource& enc);

/// Attention over decoder states with the reconstructor's weights.
AttendResult inverse_attend(Tape& tape, const BoundModel& m, ValueId s_prev,
                            const std::vector<ValueId>& decoder_states,
                            const std::vector<std::vector<std::uint8_t>>& state_mask);

/// Sentinel for "no value passed".
inline constexpr ValueId kNoValue = static_cast<ValueId>(-1);

/// One decoder update: GRU over [embed(y_prev); context], then a softmax
/// readout of [state; embed(y_prev); context]. `logit_offset` (optional)
/// is added to the readout logits before the softmax (used at decode time to
/// bar the padding/start ids). Returns (new state, distribution).
struct StepResult {
  ValueId state = 0;
  ValueId dist = 0;
};

StepResult decoder_step(Tape& tape, const BoundModel& m, ValueId s_prev,
                        const std::vector<std::int32_t>& y_prev_ids, ValueId context,
                        ValueId logit_offset = kNoValue);

/// Everything the forward pass leaves behind for reuse: the per-step decoder
/// states and distributions, attention rows, the per-step target mask, and
/// the scalar loss (mean over rows of the summed token cross-entropies).
struct DecoderTrace {
  Tape* tape = nullptr;
  std::vector<ValueId> states;
  std::vector<ValueId> dists;
  std::vector<ValueId> alphas;
  std::vector<std::vector<std::uint8_t>> step_mask;
  std::vector<std::vector<std::int32_t>> step_targets;
  ValueId loss = 0;
  std::size_t batch = 0;
};

/// Teacher-forced decoder over the wrapped gold target.
DecoderTrace forward_pass(Tape& tape, const BoundModel& m, const Batch& batch);

/// Teacher-forced reconstructor over the gold source (plus a terminating
/// end marker), attending over the decoder states of `trace`. The trace must
/// come from the same tape and batch. Gradients flow through the decoder
/// states back into the translator parameters.
struct ReconTrace {
  std::vector<ValueId> dists;
  std::vector<ValueId> alphas;
  std::vector<std::vector<std::uint8_t>> step_mask;
  std::vector<std::vector<std::int32_t>> step_targets;
  ValueId loss = 0;
};

ReconTrace reconstruct_pass(Tape& tape, const BoundModel& m, const DecoderTrace& trace,
                            const Batch& batch);

/// Combined objective value: forward + lambda * backward.
double loss_joint(double loss_forward, double loss_backward, double lambda);

/// Fraction of unmasked steps whose distribution argmax (ties to the lowest
/// id) equals the gold id. Works for both decoder and reconstructor traces.
double token_accuracy(const Tape& tape, const std::vector<ValueId>& dists,
                      const std::vector<std::vector<std::int32_t>>& step_targets,
                      const std::vector<std::vector<std::uint8_t>>& step_mask);

}  // namespace edr
