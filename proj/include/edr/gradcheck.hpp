#pragma once

#include <cstdint>

#include "edr/corpus.hpp"
#include "edr/model.hpp"
#include "edr/tape.hpp"

namespace edr {

/// A tiny seeded model configuration plus a mixed-length batch for comparing
/// analytic gradients against finite differences.
struct GradCheckSetup {
  ModelConfig config;
  Batch batch;
};

/// vocab >= 5 so real (non-reserved) token ids exist; sentence lengths are
/// drawn in [3, 6].
GradCheckSetup make_gradcheck_setup(std::size_t vocab, std::size_t embed_dim,
                                    std::size_t hidden_dim, std::uint64_t seed);

/// Loss programs over a fixed batch, for finite_diff_check. The forward
/// program touches only translator parameters; the joint program adds
/// lambda times the reconstruction loss and touches both groups.
LossProgram forward_loss_program(Batch batch);
LossProgram joint_loss_program(Batch batch, double lambda);

}  // namespace edr
