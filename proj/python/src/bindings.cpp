#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "edr/checkpoint.hpp"
#include "edr/cli.hpp"
#include "edr/corpus.hpp"
#include "edr/decoding.hpp"
#include "edr/evaluation.hpp"
#include "edr/gradcheck.hpp"
#include "edr/model.hpp"
#include "edr/tape.hpp"
#include "edr/training.hpp"
#include "edr/vocab.hpp"

namespace py = pybind11;

namespace {

/// Translate one whitespace-tokenized line using a saved checkpoint.
std::string translate_line(const std::string& checkpoint, const std::string& src_vocab_path,
                           const std::string& tgt_vocab_path, const std::string& line,
                           double max_len_factor) {
  const edr::ParameterMap params = edr::load_checkpoint(checkpoint);
  const edr::Vocabulary src_vocab = edr::Vocabulary::load(src_vocab_path);
  const edr::Vocabulary tgt_vocab = edr::Vocabulary::load(tgt_vocab_path);
  return edr::translate_lines(params, src_vocab, tgt_vocab, {line}, max_len_factor)[0];
}

double gradcheck_max_error(std::size_t vocab, std::size_t embed, std::size_t hidden,
                           std::uint64_t seed, std::size_t max_coords, double epsilon,
                           double lambda) {
  const edr::GradCheckSetup setup = edr::make_gradcheck_setup(vocab, embed, hidden, seed);
  const edr::ParameterMap params = edr::init_params(setup.config);
  return edr::finite_diff_check(edr::joint_loss_program(setup.batch, lambda), params, epsilon,
                                seed, max_coords)
      .max_rel_error;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "attention encoder-decoder translator with a source reconstructor";

  py::class_<edr::Vocabulary>(m, "Vocabulary")
      .def(py::init<>())
      .def_static("load", &edr::Vocabulary::load, py::arg("path"))
      .def("save", &edr::Vocabulary::save, py::arg("path"))
      .def("add_token", &edr::Vocabulary::add_token, py::arg("token"))
      .def("encode", &edr::Vocabulary::encode, py::arg("tokens"))
      .def("decode", &edr::Vocabulary::decode, py::arg("ids"))
      .def("id_of", &edr::Vocabulary::id_of, py::arg("token"))
      .def("token_of", &edr::Vocabulary::token_of, py::arg("id"))
      .def("__len__", &edr::Vocabulary::size)
      .def_property_readonly("tokens", &edr::Vocabulary::tokens);

  m.def(
      "build_vocab",
      [](const std::vector<std::vector<std::string>>& corpus, std::size_t cap) {
        return edr::build_vocab(corpus, cap);
      },
      py::arg("corpus"), py::arg("cap"));

  py::class_<edr::BleuResult>(m, "BleuResult")
      .def_readonly("bleu", &edr::BleuResult::bleu)
      .def_readonly("precisions", &edr::BleuResult::precisions)
      .def_readonly("brevity_penalty", &edr::BleuResult::brevity_penalty)
      .def_readonly("hyp_length", &edr::BleuResult::hyp_length)
      .def_readonly("ref_length", &edr::BleuResult::ref_length);

  py::class_<edr::WordStats>(m, "WordStats")
      .def_readonly("over", &edr::WordStats::over)
      .def_readonly("spurious", &edr::WordStats::spurious)
      .def_readonly("unknown", &edr::WordStats::unknown);

  m.def("bleu_corpus", &edr::bleu_corpus, py::arg("hypotheses"), py::arg("references"),
        "corpus-level 4-gram BLEU with brevity penalty");
  m.def("word_stats", &edr::word_stats, py::arg("hypotheses"), py::arg("references"),
        "over-translation / spurious-repetition / unknown-token counters");
  m.def("bootstrap_significance", &edr::bootstrap_significance, py::arg("hyps_a"),
        py::arg("hyps_b"), py::arg("references"), py::arg("samples") = 1000, py::arg("seed") = 1,
        "p-value for 'A better than B' by paired bootstrap resampling");

  m.def("translate_line", &translate_line, py::arg("checkpoint"), py::arg("src_vocab"),
        py::arg("tgt_vocab"), py::arg("line"), py::arg("max_len_factor") = 2.0,
        "greedy-decode one whitespace-tokenized line");

  m.def("gradcheck_max_error", &gradcheck_max_error, py::arg("vocab") = 20, py::arg("embed") = 8,
        py::arg("hidden") = 8, py::arg("seed") = 1, py::arg("max_coords") = 400,
        py::arg("epsilon") = 1e-4, py::arg("lambda_") = 1.0,
        "max relative error between analytic and finite-difference gradients");

  m.def("run_cli", &edr::run_cli, py::arg("args"),
        "run a CLI subcommand; returns the exit status");
}
