#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "vqg/analysis.hpp"
#include "vqg/cli.hpp"
#include "vqg/grnn.hpp"
#include "vqg/metrics.hpp"
#include "vqg/retrieval.hpp"
#include "vqg/synth.hpp"

namespace py = pybind11;
using namespace vqg;

namespace {

py::dict bleu_dict(const BleuReport& r) {
  py::dict d;
  d["score"] = r.score;
  d["precision"] = std::vector<double>(r.precision.begin(), r.precision.end());
  d["brevity_penalty"] = r.brevity_penalty;
  d["hyp_len"] = r.hyp_len;
  d["ref_len"] = r.ref_len;
  return d;
}

std::vector<WeightedReferenceSet> weighted(const std::vector<std::vector<TokenSequence>>& refs,
                                           const std::vector<std::vector<double>>& weights) {
  if (refs.size() != weights.size()) throw UsageError("refs and weights differ in length");
  std::vector<WeightedReferenceSet> out(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (refs[i].size() != weights[i].size()) throw UsageError("item " + std::to_string(i) + ": weight count mismatch");
    for (std::size_t j = 0; j < refs[i].size(); ++j) out[i].push_back({refs[i][j], weights[i][j]});
  }
  return out;
}

py::dict pool_dict(const RetrievalResult& r) {
  py::list members;
  for (const auto& m : r.pool.members) members.append(py::make_tuple(m.image_id, m.distance));
  py::dict d;
  d["question"] = r.question;
  d["members"] = members;
  d["selected"] = r.selected;
  d["shortcut"] = r.pool.shortcut_hit;
  d["fallback"] = r.pool.fallback_used;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Visual question generation core";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);

  m.def("tokenize", &tokenize, py::arg("text"));

  m.def(
      "corpus_bleu",
      [](const std::vector<TokenSequence>& hyps, const std::vector<std::vector<TokenSequence>>& refs) {
        return bleu_dict(corpus_bleu(hyps, refs));
      },
      py::arg("hyps"), py::arg("refs"));
  m.def(
      "sentence_bleu_smoothed",
      [](const TokenSequence& hyp, const std::vector<TokenSequence>& refs) { return sentence_bleu_smoothed(hyp, refs); },
      py::arg("hyp"), py::arg("refs"));
  m.def(
      "delta_bleu",
      [](const std::vector<TokenSequence>& hyps, const std::vector<std::vector<TokenSequence>>& refs,
         const std::vector<std::vector<double>>& weights) {
        const auto w = weighted(refs, weights);
        return bleu_dict(delta_bleu(hyps, w));
      },
      py::arg("hyps"), py::arg("refs"), py::arg("weights"));
  m.def(
      "meteor_exact",
      [](const TokenSequence& hyp, const std::vector<TokenSequence>& refs) { return meteor_exact(hyp, refs); },
      py::arg("hyp"), py::arg("refs"));

  py::class_<Correlation>(m, "Correlation")
      .def_readonly("coefficient", &Correlation::coefficient)
      .def_readonly("p_value", &Correlation::p_value)
      .def("__repr__", [](const Correlation& c) {
        std::ostringstream s;
        s << "Correlation(coefficient=" << c.coefficient << ", p_value=" << c.p_value << ")";
        return s.str();
      });
  using CorrFn = Correlation (*)(std::span<const double>, std::span<const double>);
  auto wrap = [](CorrFn f) {
    return [f](const std::vector<double>& x, const std::vector<double>& y) { return f(x, y); };
  };
  m.def("pearson", wrap(&pearson), py::arg("x"), py::arg("y"));
  m.def("spearman", wrap(&spearman), py::arg("x"), py::arg("y"));
  m.def("kendall_tau_b", wrap(&kendall_tau_b), py::arg("x"), py::arg("y"));
  m.def(
      "correlate",
      [](const std::vector<double>& x, const std::vector<double>& y) {
        const auto r = correlate(x, y);
        py::dict d;
        d["pearson_r"] = r.pearson_r;
        d["spearman_rho"] = r.spearman_rho;
        d["kendall_tau_b"] = r.kendall_tau_b;
        d["p_pearson"] = r.p_pearson;
        d["p_spearman"] = r.p_spearman;
        d["p_kendall"] = r.p_kendall;
        d["n"] = r.n;
        return d;
      },
      py::arg("x"), py::arg("y"));

  m.def(
      "cosine_distance", [](const FeatureVector& a, const FeatureVector& b) { return cosine_distance(a, b); },
      py::arg("a"), py::arg("b"));
  m.def(
      "one_best", [](const std::vector<TokenSequence>& refs) { return one_best(refs); }, py::arg("refs"));
  m.def(
      "consensus_index",
      [](const std::vector<TokenSequence>& questions) {
        return consensus_index(questions, SelectionMetric::smoothed_bleu, nullptr);
      },
      py::arg("questions"));
  m.def(
      "query_pool",
      [](const std::vector<std::tuple<std::string, FeatureVector, std::vector<TokenSequence>>>& entries,
         const FeatureVector& query, std::size_t k, double max_distance, double min_distance) {
        std::vector<IndexEntry> index_entries;
        for (const auto& [id, features, refs] : entries) {
          IndexEntry e;
          e.image_id = id;
          e.features = features;
          e.norm = features.norm();
          e.one_best = one_best(refs);
          e.refs = refs;
          index_entries.push_back(std::move(e));
        }
        PoolConfig cfg;
        cfg.k = k;
        cfg.max_distance = max_distance;
        cfg.min_distance = min_distance;
        return pool_dict(retrieve_question(RetrievalIndex(std::move(index_entries)), query, cfg));
      },
      py::arg("entries"), py::arg("query"), py::arg("k") = 30, py::arg("max_distance") = 0.35,
      py::arg("min_distance") = 0.1,
      "Dynamic-K pool over (image_id, features, questions) entries plus the consensus question.");

  m.def(
      "beam_decode",
      [](const std::string& checkpoint, const FeatureVector& features, int beam_size, int max_len) {
        auto ck = grnn::load_checkpoint(checkpoint);
        if (beam_size > 0) ck.config.beam_size = beam_size;
        if (max_len > 0) ck.config.max_decode_len = max_len;
        const auto r = grnn::beam_decode(ck.params, features, ck.config);
        py::dict d;
        d["tokens"] = r.tokens;
        d["ids"] = r.ids;
        d["log_prob"] = r.log_prob;
        d["truncated"] = r.truncated;
        return d;
      },
      py::arg("checkpoint"), py::arg("features"), py::arg("beam_size") = 0, py::arg("max_len") = 0);

  m.def(
      "synth_dataset",
      [](std::size_t n_images, std::size_t n_clusters, int feature_dim, double sigma, std::uint64_t seed) {
        SynthConfig cfg;
        cfg.n_images = n_images;
        cfg.n_clusters = n_clusters;
        cfg.feature_dim = feature_dim;
        cfg.sigma = sigma;
        cfg.seed = seed;
        py::list out;
        for (const auto& r : synth_dataset(cfg)) {
          py::dict d;
          d["image_id"] = r.image_id;
          d["features"] = r.features;
          d["questions"] = r.questions();
          out.append(d);
        }
        return out;
      },
      py::arg("n_images") = 1000, py::arg("n_clusters") = 20, py::arg("feature_dim") = 64, py::arg("sigma") = 0.05,
      py::arg("seed") = 0);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = cli::run(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs one vqg subcommand; returns (exit_code, stdout, stderr).");
}
