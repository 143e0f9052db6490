#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "edr/corpus.hpp"
#include "edr/model.hpp"
#include "edr/tape.hpp"

namespace edr {

/// How the parameters are trained:
///   kBaseline — translator alone, forward loss only.
///   kFinetune — load a pretrained translator, add a fresh reconstructor,
///               update both against forward + lambda * reconstruction loss.
///   kJoint    — both networks from scratch against the combined loss.
enum class Regime { kBaseline, kFinetune, kJoint };

struct TrainingConfig {
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 64;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  std::size_t max_len = 40;
  std::size_t patience = 3;  // epochs without dev improvement before stopping
  double lambda = 1.0;
  double learning_rate = 0.01;
  double grad_clip = 0.0;       // global-norm clip; 0 disables
  double stop_bleu = 0.0;       // stop once dev BLEU reaches this; 0 disables
  double max_len_factor = 2.0;  // decode length cap factor for dev BLEU
  std::uint64_t seed = 1;
  Regime regime = Regime::kBaseline;
  std::string model_selection = "loss";  // "loss" | "bleu"
  std::string src_vocab, tgt_vocab;
  std::string train_src, train_tgt;
  std::string dev_src, dev_tgt;
  std::string pretrained;  // checkpoint path, finetune only
  std::string out_dir;
};

/// Parses `key = value` lines ('#' starts a comment). Unknown keys, malformed
/// values, and inconsistent combinations are config errors. `origin` names
/// the source in error messages.
TrainingConfig parse_training_config(const std::string& text, const std::string& origin);
TrainingConfig load_training_config(const std::string& path);

/// Per-parameter sums of squared gradients.
struct AdagradState {
  std::map<std::string, Tensor> accum;
};

/// accumulator += g^2; param -= lr * g / (sqrt(accumulator) + 1e-8).
/// Updates exactly the parameters named in `grads`; a name absent from
/// `params` or a shape mismatch is a usage error.
void adagrad_step(ParameterMap& params, const GradientMap& grads, AdagradState& state,
                  double learning_rate);

/// Scales all gradients by clip/norm when their global L2 norm exceeds clip.
void clip_gradients(GradientMap& grads, double clip);

/// Seed for one epoch's batch shuffle.
std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch);

struct EpochRecord {
  std::size_t epoch = 0;
  double forward_loss = 0.0;
  double backward_loss = 0.0;
  bool has_backward = false;
  double dev_metric = 0.0;
  bool has_dev = false;
  double seconds = 0.0;
  std::string checkpoint_path;
};

struct TrainResult {
  ParameterMap params;  // the selected (best) parameters
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;
  double best_metric = 0.0;
  std::string best_path;
  std::string log_path;
};

/// Full training run: loads vocabularies and corpora, builds or loads the
/// parameters per the regime, and runs shuffled minibatch epochs with
/// per-epoch checkpoints, dev-based model selection, and early stopping.
TrainResult train(const TrainingConfig& config);

/// Losses and token accuracies of fixed batches under fixed parameters
/// (no updates). Reconstruction fields are zero when with_recon is false.
struct EvalScores {
  double forward_loss = 0.0;
  double recon_loss = 0.0;
  double forward_accuracy = 0.0;
  double recon_accuracy = 0.0;
};

EvalScores evaluate_batches(const ParameterMap& params, const std::vector<Batch>& batches,
                            bool with_recon);

/// Greedy-decodes every pair's source and scores 4-gram BLEU against the
/// target side (over ids, which is equivalent to scoring over tokens).
double dev_bleu(const ParameterMap& params, const std::vector<SentencePair>& pairs,
                double max_len_factor);

}  // namespace edr
