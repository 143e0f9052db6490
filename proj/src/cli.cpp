#include "edr/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "edr/checkpoint.hpp"
#include "edr/corpus.hpp"
#include "edr/decoding.hpp"
#include "edr/errors.hpp"
#include "edr/evaluation.hpp"
#include "edr/gradcheck.hpp"
#include "edr/model.hpp"
#include "edr/rng.hpp"
#include "edr/training.hpp"
#include "edr/vocab.hpp"

namespace edr {

namespace {

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::ostringstream os;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) os << ' ';
    os << tokens[i];
  }
  return os.str();
}

struct MakeDataArgs {
  std::string out;
  std::string task = "copy";
  std::size_t symbols = 20;
  std::size_t min_len = 3;
  std::size_t max_len = 10;
  std::size_t train = 5000;
  std::size_t dev = 500;
  std::size_t test = 0;
  std::size_t vocab_cap = 30000;
  std::uint64_t seed = 1;
};

void write_split(const std::string& dir, const std::string& name,
                 const std::vector<RawPair>& pairs) {
  std::vector<std::string> src, tgt;
  src.reserve(pairs.size());
  tgt.reserve(pairs.size());
  for (const auto& p : pairs) {
    src.push_back(join_tokens(p.source));
    tgt.push_back(join_tokens(p.target));
  }
  write_lines(dir + "/" + name + ".src", src);
  write_lines(dir + "/" + name + ".tgt", tgt);
}

int cmd_make_data(const MakeDataArgs& a) {
  const SyntheticKind kind = a.task == "copy" ? SyntheticKind::kCopy : SyntheticKind::kReversal;
  std::filesystem::create_directories(a.out);

  const std::vector<RawPair> train =
      generate_synthetic(kind, a.train, a.symbols, a.min_len, a.max_len, mix_seed(a.seed, 1));
  const std::vector<RawPair> dev =
      generate_synthetic(kind, a.dev, a.symbols, a.min_len, a.max_len, mix_seed(a.seed, 2));
  write_split(a.out, "train", train);
  write_split(a.out, "dev", dev);
  if (a.test > 0) {
    write_split(a.out, "test",
                generate_synthetic(kind, a.test, a.symbols, a.min_len, a.max_len,
                                   mix_seed(a.seed, 3)));
  }

  std::vector<std::vector<std::string>> src_corpus, tgt_corpus;
  src_corpus.reserve(train.size());
  tgt_corpus.reserve(train.size());
  for (const auto& p : train) {
    src_corpus.push_back(p.source);
    tgt_corpus.push_back(p.target);
  }
  build_vocab(src_corpus, a.vocab_cap).save(a.out + "/vocab.src");
  build_vocab(tgt_corpus, a.vocab_cap).save(a.out + "/vocab.tgt");

  std::cout << "wrote " << train.size() << " train / " << dev.size() << " dev";
  if (a.test > 0) std::cout << " / " << a.test << " test";
  std::cout << " pairs and vocabularies under " << a.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string config;
  std::int64_t seed = -1;  // <0: keep the config's seed
};

int cmd_train(const TrainArgs& a) {
  TrainingConfig cfg = load_training_config(a.config);
  if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
  const TrainResult r = train(cfg);
  std::cout << "trained " << r.log.size() << " epoch(s)\n";
  char metric[64];
  std::snprintf(metric, sizeof(metric), "%.6f", r.best_metric);
  std::cout << "best epoch " << r.best_epoch << " (" << cfg.model_selection << " " << metric
            << ")\n";
  std::cout << "checkpoint " << r.best_path << "\n";
  std::cout << "log " << r.log_path << "\n";
  return 0;
}

struct TranslateArgs {
  std::string config;
  std::string checkpoint;
  std::string src;
  std::string out;
  double max_len_factor = -1.0;  // <0: keep the config's factor
};

int cmd_translate(const TranslateArgs& a) {
  const TrainingConfig cfg = load_training_config(a.config);
  const std::string ckpt_path = a.checkpoint.empty() ? cfg.out_dir + "/best.ckpt" : a.checkpoint;
  const ParameterMap params = load_checkpoint(ckpt_path);
  const Vocabulary src_vocab = Vocabulary::load(cfg.src_vocab);
  const Vocabulary tgt_vocab = Vocabulary::load(cfg.tgt_vocab);
  const double factor = a.max_len_factor >= 0.0 ? a.max_len_factor : cfg.max_len_factor;
  const std::vector<std::string> lines = read_lines(a.src);
  const std::vector<std::string> outputs =
      translate_lines(params, src_vocab, tgt_vocab, lines, factor);
  if (a.out.empty()) {
    for (const auto& line : outputs) std::cout << line << "\n";
  } else {
    std::filesystem::create_directories(a.out);
    write_lines(a.out + "/translations.txt", outputs);
    std::cout << "wrote " << outputs.size() << " translations to " << a.out
              << "/translations.txt\n";
  }
  return 0;
}

int cmd_dump_attention(const TranslateArgs& a) {
  const TrainingConfig cfg = load_training_config(a.config);
  const std::string ckpt_path = a.checkpoint.empty() ? cfg.out_dir + "/best.ckpt" : a.checkpoint;
  const ParameterMap params = load_checkpoint(ckpt_path);
  const Vocabulary src_vocab = Vocabulary::load(cfg.src_vocab);
  const Vocabulary tgt_vocab = Vocabulary::load(cfg.tgt_vocab);
  const double factor = a.max_len_factor >= 0.0 ? a.max_len_factor : cfg.max_len_factor;
  const std::vector<std::string> lines = read_lines(a.src);
  std::filesystem::create_directories(a.out);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::vector<std::string> tokens = split_tokens(lines[i]);
    std::string tsv;
    if (tokens.empty()) {
      tsv = format_attention_tsv({}, {}, {});
    } else {
      const Translation t = greedy_decode(params, src_vocab.encode(tokens), factor);
      tsv = format_attention_tsv(t.attention, tokens, tgt_vocab.decode(t.ids));
    }
    char name[32];
    std::snprintf(name, sizeof(name), "attn_%06zu.tsv", i + 1);
    const std::string path = a.out + "/" + name;
    std::ofstream file(path, std::ios::binary);
    if (!file) throw DataError("cannot open file for writing: " + path);
    file << tsv;
  }
  std::cout << "wrote " << lines.size() << " attention tables to " << a.out << "\n";
  return 0;
}

struct EvaluateArgs {
  std::string hyp;
  std::string ref;
  std::string hyp_b;
  std::string out;
  std::size_t samples = 1000;
  std::uint64_t seed = 1;
};

std::string eval_row(const std::string& model, const BleuResult& bleu, const WordStats& stats,
                     double p_value, bool has_p) {
  char buf[64];
  std::ostringstream row;
  row << model << '\t';
  std::snprintf(buf, sizeof(buf), "%.6f", bleu.bleu);
  row << buf << '\t';
  if (has_p) {
    std::snprintf(buf, sizeof(buf), "%.6f", p_value);
    row << buf;
  } else {
    row << '-';
  }
  row << '\t' << stats.over << '\t' << stats.spurious << '\t' << stats.unknown << '\n';
  return row.str();
}

int cmd_evaluate(const EvaluateArgs& a) {
  const auto refs = tokenize_lines(read_lines(a.ref));
  const auto hyps = tokenize_lines(read_lines(a.hyp));
  std::ostringstream report;
  report << "model\tBLEU\tp-value\t(i)\t(ii)\t(iii)\n";
  if (a.hyp_b.empty()) {
    report << eval_row(a.hyp, bleu_corpus(hyps, refs), word_stats(hyps, refs), 0.0, false);
  } else {
    const auto hyps_b = tokenize_lines(read_lines(a.hyp_b));
    const double p = bootstrap_significance(hyps, hyps_b, refs, a.samples, a.seed);
    report << eval_row(a.hyp, bleu_corpus(hyps, refs), word_stats(hyps, refs), p, true);
    report << eval_row(a.hyp_b, bleu_corpus(hyps_b, refs), word_stats(hyps_b, refs), 0.0, false);
  }
  if (a.out.empty()) {
    std::cout << report.str();
  } else {
    std::ofstream file(a.out, std::ios::binary);
    if (!file) throw DataError("cannot open file for writing: " + a.out);
    file << report.str();
    std::cout << "wrote report to " << a.out << "\n";
  }
  return 0;
}

struct GradcheckArgs {
  std::size_t vocab = 20;
  std::size_t embed = 8;
  std::size_t hidden = 8;
  std::size_t max_coords = 400;
  double epsilon = 1e-4;
  double tolerance = 1e-4;
  double lambda = 1.0;
  std::uint64_t seed = 1;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  const GradCheckSetup setup = make_gradcheck_setup(a.vocab, a.embed, a.hidden, a.seed);
  const ParameterMap params = init_params(setup.config);
  const FiniteDiffReport report = finite_diff_check(joint_loss_program(setup.batch, a.lambda),
                                                    params, a.epsilon, a.seed, a.max_coords);
  char err[64];
  std::snprintf(err, sizeof(err), "%.3e", report.max_rel_error);
  std::cout << "checked " << report.coords_checked << " coordinates over " << params.size()
            << " tensors: max relative error " << err << " (worst " << report.worst_param << "["
            << report.worst_index << "])\n";
  if (report.max_rel_error >= a.tolerance) {
    std::cerr << "gradient check FAILED: tolerance " << a.tolerance << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"attention encoder-decoder translator with a source reconstructor"};
  app.require_subcommand(1);

  MakeDataArgs md;
  CLI::App* make_data = app.add_subcommand("make-data", "generate a synthetic parallel corpus and vocabularies");
  make_data->add_option("--out", md.out, "output directory")->required();
  make_data->add_option("--task", md.task, "copy | reversal")
      ->check(CLI::IsMember({"copy", "reversal"}));
  make_data->add_option("--symbols", md.symbols, "alphabet size");
  make_data->add_option("--min-len", md.min_len, "shortest sentence");
  make_data->add_option("--max-len", md.max_len, "longest sentence");
  make_data->add_option("--train", md.train, "training pairs");
  make_data->add_option("--dev", md.dev, "dev pairs");
  make_data->add_option("--test", md.test, "test pairs (0 = none)");
  make_data->add_option("--vocab-cap", md.vocab_cap, "vocabulary size cap");
  make_data->add_option("--seed", md.seed, "generator seed");

  TrainArgs tr;
  CLI::App* train_cmd = app.add_subcommand("train", "train per the config's regime");
  train_cmd->add_option("--config", tr.config, "training config file")->required();
  train_cmd->add_option("--seed", tr.seed, "override the config's seed");

  TranslateArgs ts;
  CLI::App* translate_cmd = app.add_subcommand("translate", "greedy-decode a source file");
  translate_cmd->add_option("--config", ts.config, "training config file (for vocab paths)")
      ->required();
  translate_cmd->add_option("--checkpoint", ts.checkpoint,
                            "checkpoint (default: the config's best.ckpt)");
  translate_cmd->add_option("--src", ts.src, "source file")->required();
  translate_cmd->add_option("--out", ts.out, "output directory (default: stdout)");
  translate_cmd->add_option("--max-len-factor", ts.max_len_factor, "output length cap factor");

  TranslateArgs da;
  CLI::App* dump_cmd = app.add_subcommand("dump-attention", "write per-sentence attention TSVs");
  dump_cmd->add_option("--config", da.config, "training config file (for vocab paths)")->required();
  dump_cmd->add_option("--checkpoint", da.checkpoint, "checkpoint (default: the config's best.ckpt)");
  dump_cmd->add_option("--src", da.src, "source file")->required();
  dump_cmd->add_option("--out", da.out, "output directory")->required();
  dump_cmd->add_option("--max-len-factor", da.max_len_factor, "output length cap factor");

  EvaluateArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("evaluate", "score hypotheses against references");
  eval_cmd->add_option("--hyp", ev.hyp, "hypothesis file")->required();
  eval_cmd->add_option("--ref", ev.ref, "reference file")->required();
  eval_cmd->add_option("--hyp-b", ev.hyp_b, "comparison hypotheses for the significance test");
  eval_cmd->add_option("--samples", ev.samples, "bootstrap resamples");
  eval_cmd->add_option("--seed", ev.seed, "bootstrap seed");
  eval_cmd->add_option("--out", ev.out, "report file (default: stdout)");

  GradcheckArgs gc;
  CLI::App* grad_cmd = app.add_subcommand("gradcheck", "compare analytic gradients to finite differences");
  grad_cmd->add_option("--vocab", gc.vocab, "vocabulary size");
  grad_cmd->add_option("--embed", gc.embed, "embedding size");
  grad_cmd->add_option("--hidden", gc.hidden, "hidden size");
  grad_cmd->add_option("--max-coords", gc.max_coords, "coordinates to sample");
  grad_cmd->add_option("--epsilon", gc.epsilon, "finite-difference step");
  grad_cmd->add_option("--tolerance", gc.tolerance, "max relative error allowed");
  grad_cmd->add_option("--lambda", gc.lambda, "reconstruction loss weight");
  grad_cmd->add_option("--seed", gc.seed, "model and sampling seed");

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("edrnmt");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }

  try {
    if (make_data->parsed()) return cmd_make_data(md);
    if (train_cmd->parsed()) return cmd_train(tr);
    if (translate_cmd->parsed()) return cmd_translate(ts);
    if (dump_cmd->parsed()) return cmd_dump_attention(da);
    if (eval_cmd->parsed()) return cmd_evaluate(ev);
    if (grad_cmd->parsed()) return cmd_gradcheck(gc);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;  // unreachable: require_subcommand guarantees a parsed command
}

}  // namespace edr
