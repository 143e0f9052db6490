#include "edr/gradcheck.hpp"

#include "edr/errors.hpp"
#include "edr/rng.hpp"

namespace edr {

GradCheckSetup make_gradcheck_setup(std::size_t vocab, std::size_t embed_dim,
                                    std::size_t hidden_dim, std::uint64_t seed) {
  if (vocab < 5) throw UsageError("gradient check needs a vocabulary beyond the reserved ids");
  GradCheckSetup setup;
  setup.config.src_vocab = vocab;
  setup.config.tgt_vocab = vocab;
  setup.config.embed_dim = embed_dim;
  setup.config.hidden_dim = hidden_dim;
  setup.config.seed = seed;

  Rng rng(mix_seed(seed, 7));
  auto draw_sentence = [&]() {
    const std::size_t len = 3 + static_cast<std::size_t>(rng.next_bounded(4));
    std::vector<std::int32_t> ids(len);
    for (auto& id : ids) {
      id = 4 + static_cast<std::int32_t>(rng.next_bounded(static_cast<std::uint64_t>(vocab - 4)));
    }
    return ids;
  };
  std::vector<SentencePair> pairs(3);
  for (auto& p : pairs) {
    p.source = draw_sentence();
    p.target = draw_sentence();
  }
  setup.batch = make_batch(pairs);
  return setup;
}

LossProgram forward_loss_program(Batch batch) {
  return [batch = std::move(batch)](Tape& tape, const ParameterMap& params) {
    BoundModel m = bind_params(tape, params);
    return forward_pass(tape, m, batch).loss;
  };
}

LossProgram joint_loss_program(Batch batch, double lambda) {
  return [batch = std::move(batch), lambda](Tape& tape, const ParameterMap& params) {
    BoundModel m = bind_params(tape, params);
    const DecoderTrace trace = forward_pass(tape, m, batch);
    const ReconTrace recon = reconstruct_pass(tape, m, trace, batch);
    return tape.add(trace.loss, tape.mul(tape.constant(Tensor::scalar(lambda)), recon.loss));
  };
}

}  // namespace edr
