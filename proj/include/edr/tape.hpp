#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "edr/tensor.hpp"

namespace edr {

/// Index of a value on a Tape. Ids are assigned in creation order, so the
/// sequence of nodes is topologically ordered by construction.
using ValueId = std::size_t;

/// Named tensors. Used both for model parameters and for gradients, whose
/// keys and shapes mirror the parameter collection exactly.
using ParameterMap = std::map<std::string, Tensor>;
using GradientMap = ParameterMap;

/// The closed primitive set. Everything differentiable is built from these.
enum class OpKind {
  kLeaf,
  kMatMul,
  kAdd,
  kMul,
  kTanh,
  kSigmoid,
  kSoftmax,
  kConcat,
  kSlice,
  kEmbedding,
  kCrossEntropy,
  kMean,
};

/// Records one forward computation as an ordered sequence of primitive
/// applications and replays it in reverse to accumulate gradients.
///
/// Values are immutable once created. Repeated use of a value sums its
/// gradient contributions. A fresh tape is built per forward pass; tapes
/// share no mutable state, so independent tapes may live on distinct
/// threads.
class Tape {
 public:
  /// Probability floor applied inside cross_entropy before the log.
  static constexpr double kProbFloor = 1e-12;

  /// Unnamed leaf (input data, masks, constants). Not differentiated against.
  ValueId constant(Tensor value);
  /// Named leaf. backward() reports a gradient entry for every named leaf.
  /// Each name may be registered once per tape (UsageError otherwise);
  /// share a tensor by reusing the returned value id.
  ValueId param(const std::string& name, Tensor value);

  ValueId matmul(ValueId a, ValueId b);
  /// Elementwise add. Also accepts a rank-1 row of matching width
  /// (broadcast over rows) or a scalar on either side.
  ValueId add(ValueId a, ValueId b);
  /// a - b, composed as add(a, mul(-1, b)).
  ValueId sub(ValueId a, ValueId b);
  /// Elementwise multiply. Also accepts a scalar on either side, or an
  /// m-by-1 column against an m-by-n matrix (broadcast across columns).
  ValueId mul(ValueId a, ValueId b);
  ValueId tanh(ValueId x);
  ValueId sigmoid(ValueId x);
  /// Row-wise softmax over the last dimension, with max-subtraction.
  ValueId softmax(ValueId x);
  /// Concatenation along the last dimension.
  ValueId concat(const std::vector<ValueId>& parts);
  /// Contiguous sub-range along dim 0 (rows) or dim 1 (columns).
  ValueId slice(ValueId x, int dim, std::size_t begin, std::size_t end);
  /// Row id of an embedding table; gradient accumulates into that row only.
  ValueId embedding_lookup(ValueId table, std::int32_t id);
  /// One table row per id, stacked into an n-by-d matrix.
  ValueId embedding_rows(ValueId table, std::vector<std::int32_t> ids);
  /// -log(dist[target]) with the probability floored at kProbFloor.
  /// dist must be a distribution (sums to 1 within 1e-6).
  ValueId cross_entropy(ValueId dist, std::int32_t target_id);
  /// Row-wise cross-entropy: one target id per row, one scalar per row.
  ValueId cross_entropy_rows(ValueId dists, std::vector<std::int32_t> target_ids);
  /// Mean of all elements.
  ValueId mean(ValueId x);

  const Tensor& value(ValueId id) const;
  std::size_t size() const { return nodes_.size(); }

  /// Reverse-topological gradient accumulation from a scalar loss.
  /// Returns one entry per named leaf; leaves the loss does not reach get
  /// exact zero tensors.
  GradientMap backward(ValueId loss) const;

  /// Gradients for every node on the tape (empty tensor = unreachable).
  /// Test hook for probing non-parameter leaves.
  std::vector<Tensor> backward_all(ValueId loss) const;

 private:
  struct Node {
    OpKind kind = OpKind::kLeaf;
    std::vector<ValueId> inputs;
    Tensor value;
    std::vector<std::int32_t> ids;  // embedding / cross-entropy targets
    int dim = -1;                   // slice axis
    std::size_t begin = 0, end = 0; // slice range
    int name_idx = -1;              // index into named_, -1 if unnamed
  };

  ValueId push(Node node);
  const Node& node(ValueId id) const;
  void check_id(ValueId id, const char* who) const;

  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, ValueId>> named_;
};

/// A deterministic differentiable program: builds a scalar loss on the
/// tape from the given parameters.
using LossProgram = std::function<ValueId(Tape&, const ParameterMap&)>;

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t coords_checked = 0;
};

/// Compares the analytic gradient of `program` against central finite
/// differences (f(p+eps) - f(p-eps)) / (2 eps), sampling up to `max_coords`
/// coordinates spread over every parameter tensor (at most 200 per tensor).
/// Relative error uses denominator max(|analytic|, |numeric|, 1e-8).
/// Throws DeterminismError if two evaluations at the same point differ.
FiniteDiffReport finite_diff_check(const LossProgram& program, const ParameterMap& params,
                                   double epsilon, std::uint64_t seed,
                                   std::size_t max_coords = 400);

}  // namespace edr
