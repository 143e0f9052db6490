#include "edr/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "edr/checkpoint.hpp"
#include "edr/decoding.hpp"
#include "edr/errors.hpp"
#include "edr/evaluation.hpp"
#include "edr/rng.hpp"

namespace edr {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::size_t parse_count(const std::string& value, const std::string& key,
                        const std::string& origin) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(value, &pos);
    if (pos != value.size() || v < 0) throw std::invalid_argument("");
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError(origin + ": key '" + key + "' needs a nonnegative integer, got '" + value +
                      "'");
  }
}

double parse_real(const std::string& value, const std::string& key, const std::string& origin) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size() || !std::isfinite(v)) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(origin + ": key '" + key + "' needs a finite number, got '" + value + "'");
  }
}

std::string format_real(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

/// Batches a corpus in order, without shuffling (for fixed dev evaluation).
std::vector<Batch> sequential_batches(const std::vector<SentencePair>& pairs,
                                      std::size_t batch_size) {
  std::vector<Batch> batches;
  for (std::size_t begin = 0; begin < pairs.size(); begin += batch_size) {
    const std::size_t end = std::min(begin + batch_size, pairs.size());
    batches.push_back(make_batch(std::vector<SentencePair>(
        pairs.begin() + static_cast<std::ptrdiff_t>(begin),
        pairs.begin() + static_cast<std::ptrdiff_t>(end))));
  }
  return batches;
}

std::size_t batch_tokens(const std::vector<std::vector<std::uint8_t>>& mask) {
  std::size_t n = 0;
  for (const auto& row : mask) {
    for (std::uint8_t f : row) n += f ? 1 : 0;
  }
  return n;
}

}  // namespace

TrainingConfig parse_training_config(const std::string& text, const std::string& origin) {
  TrainingConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool saw_dev_src = false, saw_dev_tgt = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ": line " + std::to_string(line_no) + " is not 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw ConfigError(origin + ": line " + std::to_string(line_no) + " is missing a key or value");
    }

    if (key == "embed_dim") {
      c.embed_dim = parse_count(value, key, origin);
    } else if (key == "hidden_dim") {
      c.hidden_dim = parse_count(value, key, origin);
    } else if (key == "epochs") {
      c.epochs = parse_count(value, key, origin);
    } else if (key == "batch_size") {
      c.batch_size = parse_count(value, key, origin);
    } else if (key == "max_len") {
      c.max_len = parse_count(value, key, origin);
    } else if (key == "patience") {
      c.patience = parse_count(value, key, origin);
    } else if (key == "lambda") {
      c.lambda = parse_real(value, key, origin);
    } else if (key == "learning_rate") {
      c.learning_rate = parse_real(value, key, origin);
    } else if (key == "grad_clip") {
      c.grad_clip = parse_real(value, key, origin);
    } else if (key == "stop_bleu") {
      c.stop_bleu = parse_real(value, key, origin);
    } else if (key == "max_len_factor") {
      c.max_len_factor = parse_real(value, key, origin);
    } else if (key == "seed") {
      c.seed = static_cast<std::uint64_t>(parse_count(value, key, origin));
    } else if (key == "regime") {
      if (value == "baseline") {
        c.regime = Regime::kBaseline;
      } else if (value == "finetune") {
        c.regime = Regime::kFinetune;
      } else if (value == "joint") {
        c.regime = Regime::kJoint;
      } else {
        throw ConfigError(origin + ": regime must be baseline, finetune, or joint; got '" +
                          value + "'");
      }
    } else if (key == "model_selection") {
      if (value != "loss" && value != "bleu") {
        throw ConfigError(origin + ": model_selection must be loss or bleu; got '" + value + "'");
      }
      c.model_selection = value;
    } else if (key == "src_vocab") {
      c.src_vocab = value;
    } else if (key == "tgt_vocab") {
      c.tgt_vocab = value;
    } else if (key == "train_src") {
      c.train_src = value;
    } else if (key == "train_tgt") {
      c.train_tgt = value;
    } else if (key == "dev_src") {
      c.dev_src = value;
      saw_dev_src = true;
    } else if (key == "dev_tgt") {
      c.dev_tgt = value;
      saw_dev_tgt = true;
    } else if (key == "pretrained") {
      c.pretrained = value;
    } else if (key == "out_dir") {
      c.out_dir = value;
    } else {
      throw ConfigError(origin + ": unknown key '" + key + "' at line " + std::to_string(line_no));
    }
  }

  if (c.embed_dim < 1 || c.hidden_dim < 1) throw ConfigError(origin + ": dimensions must be at least 1");
  if (c.epochs < 1) throw ConfigError(origin + ": epochs must be at least 1");
  if (c.batch_size < 1) throw ConfigError(origin + ": batch_size must be at least 1");
  if (c.max_len < 1) throw ConfigError(origin + ": max_len must be at least 1");
  if (c.patience < 1) throw ConfigError(origin + ": patience must be at least 1");
  if (c.lambda < 0.0) throw ConfigError(origin + ": lambda must be nonnegative");
  if (c.learning_rate <= 0.0) throw ConfigError(origin + ": learning_rate must be positive");
  if (c.grad_clip < 0.0) throw ConfigError(origin + ": grad_clip must be nonnegative");
  if (c.stop_bleu < 0.0 || c.stop_bleu > 1.0) throw ConfigError(origin + ": stop_bleu must be in [0, 1]");
  if (c.max_len_factor < 0.0) throw ConfigError(origin + ": max_len_factor must be nonnegative");
  for (const auto& [name, value] :
       std::initializer_list<std::pair<const char*, const std::string*>>{
           {"src_vocab", &c.src_vocab},
           {"tgt_vocab", &c.tgt_vocab},
           {"train_src", &c.train_src},
           {"train_tgt", &c.train_tgt},
           {"out_dir", &c.out_dir}}) {
    if (value->empty()) throw ConfigError(origin + ": required key '" + std::string(name) + "' is missing");
  }
  if (saw_dev_src != saw_dev_tgt) {
    throw ConfigError(origin + ": dev_src and dev_tgt must be given together");
  }
  if (c.regime == Regime::kFinetune && c.pretrained.empty()) {
    throw ConfigError(origin + ": regime finetune needs a 'pretrained' checkpoint path");
  }
  if (c.model_selection == "bleu" && c.dev_src.empty()) {
    throw ConfigError(origin + ": model_selection bleu needs a dev set");
  }
  if (c.stop_bleu > 0.0 && c.model_selection != "bleu") {
    throw ConfigError(origin + ": stop_bleu needs model_selection = bleu");
  }
  return c;
}

TrainingConfig load_training_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_training_config(text.str(), path);
}

void adagrad_step(ParameterMap& params, const GradientMap& grads, AdagradState& state,
                  double learning_rate) {
  for (const auto& [name, grad] : grads) {
    auto pit = params.find(name);
    if (pit == params.end()) throw UsageError("adagrad_step: no parameter named '" + name + "'");
    Tensor& param = pit->second;
    if (!param.same_shape(grad)) {
      throw UsageError("adagrad_step: gradient shape " + grad.shape_str() +
                       " does not match parameter '" + name + "' " + param.shape_str());
    }
    auto [ait, inserted] = state.accum.try_emplace(name, Tensor::zeros_like(param));
    Tensor& accum = ait->second;
    if (!inserted && !accum.same_shape(param)) {
      throw UsageError("adagrad_step: stale accumulator shape for '" + name + "'");
    }
    for (std::size_t i = 0; i < param.size(); ++i) {
      const double g = grad[i];
      accum[i] += g * g;
      param[i] -= learning_rate * g / (std::sqrt(accum[i]) + 1e-8);
    }
  }
}

void clip_gradients(GradientMap& grads, double clip) {
  if (clip <= 0.0) return;
  double sq = 0.0;
  for (const auto& [name, grad] : grads) {
    for (std::size_t i = 0; i < grad.size(); ++i) sq += grad[i] * grad[i];
  }
  const double norm = std::sqrt(sq);
  if (norm <= clip) return;
  const double scale = clip / norm;
  for (auto& [name, grad] : grads) {
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= scale;
  }
}

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) {
  return mix_seed(seed, 0x45504f43ULL + epoch);  // distinct stream per epoch
}

EvalScores evaluate_batches(const ParameterMap& params, const std::vector<Batch>& batches,
                            bool with_recon) {
  EvalScores scores;
  std::size_t pairs = 0;
  double fwd_correct_weight = 0.0, recon_correct_weight = 0.0;
  std::size_t fwd_tokens = 0, recon_tokens = 0;
  for (const Batch& batch : batches) {
    Tape tape;
    BoundModel m = bind_params(tape, params);
    DecoderTrace trace = forward_pass(tape, m, batch);
    const std::size_t B = batch.size();
    scores.forward_loss += tape.value(trace.loss)[0] * static_cast<double>(B);
    const std::size_t ft = batch_tokens(trace.step_mask);
    fwd_correct_weight +=
        token_accuracy(tape, trace.dists, trace.step_targets, trace.step_mask) *
        static_cast<double>(ft);
    fwd_tokens += ft;
    if (with_recon) {
      ReconTrace recon = reconstruct_pass(tape, m, trace, batch);
      scores.recon_loss += tape.value(recon.loss)[0] * static_cast<double>(B);
      const std::size_t rt = batch_tokens(recon.step_mask);
      recon_correct_weight +=
          token_accuracy(tape, recon.dists, recon.step_targets, recon.step_mask) *
          static_cast<double>(rt);
      recon_tokens += rt;
    }
    pairs += B;
  }
  if (pairs == 0) throw UsageError("evaluate_batches: no batches");
  scores.forward_loss /= static_cast<double>(pairs);
  scores.recon_loss = with_recon ? scores.recon_loss / static_cast<double>(pairs) : 0.0;
  scores.forward_accuracy = fwd_tokens ? fwd_correct_weight / static_cast<double>(fwd_tokens) : 0.0;
  scores.recon_accuracy =
      recon_tokens ? recon_correct_weight / static_cast<double>(recon_tokens) : 0.0;
  return scores;
}

double dev_bleu(const ParameterMap& params, const std::vector<SentencePair>& pairs,
                double max_len_factor) {
  if (pairs.empty()) throw UsageError("dev_bleu: no pairs");
  std::vector<std::vector<std::string>> hyps, refs;
  hyps.reserve(pairs.size());
  refs.reserve(pairs.size());
  for (const auto& p : pairs) {
    const Translation t = greedy_decode(params, p.source, max_len_factor);
    std::vector<std::string> hyp, ref;
    for (std::int32_t id : t.ids) hyp.push_back(std::to_string(id));
    for (std::int32_t id : p.target) ref.push_back(std::to_string(id));
    hyps.push_back(std::move(hyp));
    refs.push_back(std::move(ref));
  }
  return bleu_corpus(hyps, refs).bleu;
}

TrainResult train(const TrainingConfig& config) {
  const Vocabulary src_vocab = Vocabulary::load(config.src_vocab);
  const Vocabulary tgt_vocab = Vocabulary::load(config.tgt_vocab);

  std::vector<SentencePair> train_pairs = filter_by_length(
      encode_corpus(read_lines(config.train_src), read_lines(config.train_tgt), src_vocab,
                    tgt_vocab),
      config.max_len);
  if (train_pairs.empty()) {
    throw UsageError("training corpus is empty after length filtering");
  }

  const bool has_dev = !config.dev_src.empty();
  std::vector<SentencePair> dev_pairs;
  std::vector<Batch> dev_batches;
  if (has_dev) {
    dev_pairs = filter_by_length(
        encode_corpus(read_lines(config.dev_src), read_lines(config.dev_tgt), src_vocab,
                      tgt_vocab),
        config.max_len);
    if (dev_pairs.empty()) throw UsageError("dev corpus is empty after length filtering");
    dev_batches = sequential_batches(dev_pairs, config.batch_size);
  }

  ModelConfig mc;
  mc.src_vocab = src_vocab.size();
  mc.tgt_vocab = tgt_vocab.size();
  mc.embed_dim = config.embed_dim;
  mc.hidden_dim = config.hidden_dim;
  mc.seed = config.seed;

  const bool with_recon = config.regime != Regime::kBaseline;
  ParameterMap params;
  switch (config.regime) {
    case Regime::kBaseline:
      params = init_encdec_params(mc);
      break;
    case Regime::kJoint:
      params = init_params(mc);
      break;
    case Regime::kFinetune: {
      const ParameterMap loaded = load_checkpoint(config.pretrained);
      for (const auto& [name, tensor] : loaded) {
        if (name.rfind(kEncDecPrefix, 0) == 0) params[name] = tensor;
      }
      try {
        validate_params(params, mc, /*with_recon=*/false);
      } catch (const UsageError& e) {
        throw CheckpointError(config.pretrained + ": incompatible with this config: " + e.what());
      }
      ParameterMap recon = init_recon_params(mc);
      params.insert(recon.begin(), recon.end());
      break;
    }
  }

  std::filesystem::create_directories(config.out_dir);

  const bool select_by_bleu = config.model_selection == "bleu";
  AdagradState opt;
  TrainResult result;
  ParameterMap best_params = params;
  bool have_best = false;
  std::size_t stale_epochs = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const std::vector<Batch> batches =
        make_batches(train_pairs, config.batch_size, epoch_seed(config.seed, epoch));

    double fwd_sum = 0.0, bwd_sum = 0.0;
    std::size_t seen = 0;
    for (const Batch& batch : batches) {
      Tape tape;
      BoundModel m = bind_params(tape, params);
      const DecoderTrace trace = forward_pass(tape, m, batch);
      ValueId loss = trace.loss;
      double bwd_value = 0.0;
      if (with_recon) {
        const ReconTrace recon = reconstruct_pass(tape, m, trace, batch);
        bwd_value = tape.value(recon.loss)[0];
        loss = tape.add(trace.loss,
                        tape.mul(tape.constant(Tensor::scalar(config.lambda)), recon.loss));
      }
      const std::size_t B = batch.size();
      fwd_sum += tape.value(trace.loss)[0] * static_cast<double>(B);
      bwd_sum += bwd_value * static_cast<double>(B);
      seen += B;

      GradientMap grads = tape.backward(loss);
      clip_gradients(grads, config.grad_clip);
      adagrad_step(params, grads, opt, config.learning_rate);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.forward_loss = fwd_sum / static_cast<double>(seen);
    rec.backward_loss = bwd_sum / static_cast<double>(seen);
    rec.has_backward = with_recon;

    // Selection metric: dev BLEU, dev loss, or (without a dev set) train loss.
    double metric;
    if (has_dev) {
      if (select_by_bleu) {
        metric = dev_bleu(params, dev_pairs, config.max_len_factor);
      } else {
        const EvalScores dev = evaluate_batches(params, dev_batches, with_recon);
        metric = dev.forward_loss + (with_recon ? config.lambda * dev.recon_loss : 0.0);
      }
      rec.dev_metric = metric;
      rec.has_dev = true;
    } else {
      metric = rec.forward_loss + (with_recon ? config.lambda * rec.backward_loss : 0.0);
    }

    char name[32];
    std::snprintf(name, sizeof(name), "epoch_%04zu.ckpt", epoch);
    rec.checkpoint_path = config.out_dir + "/" + name;
    save_checkpoint(rec.checkpoint_path, params);

    const bool improved =
        !have_best || (select_by_bleu ? metric > result.best_metric : metric < result.best_metric);
    if (improved) {
      result.best_metric = metric;
      result.best_epoch = epoch;
      best_params = params;
      have_best = true;
      stale_epochs = 0;
    } else {
      ++stale_epochs;
    }

    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(rec);

    if (config.stop_bleu > 0.0 && select_by_bleu && metric >= config.stop_bleu) break;
    if (stale_epochs >= config.patience) break;
  }

  result.params = std::move(best_params);
  result.best_path = config.out_dir + "/best.ckpt";
  save_checkpoint(result.best_path, result.params);

  result.log_path = config.out_dir + "/train_log.tsv";
  std::ofstream log(result.log_path, std::ios::binary);
  if (!log) throw DataError("cannot open log for writing: " + result.log_path);
  log << "epoch\tforward_loss\tbackward_loss\tdev_metric\tseconds\n";
  for (const auto& rec : result.log) {
    log << rec.epoch << '\t' << format_real(rec.forward_loss) << '\t'
        << (rec.has_backward ? format_real(rec.backward_loss) : "-") << '\t'
        << (rec.has_dev ? format_real(rec.dev_metric) : "-") << '\t';
    char sec[32];
    std::snprintf(sec, sizeof(sec), "%.3f", rec.seconds);
    log << sec << '\n';
  }
  return result;
}

}  // namespace edr
