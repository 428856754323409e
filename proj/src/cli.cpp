#include "vqg/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "vqg/analysis.hpp"
#include "vqg/corpus.hpp"
#include "vqg/grnn.hpp"
#include "vqg/metrics.hpp"
#include "vqg/report.hpp"
#include "vqg/retrieval.hpp"
#include "vqg/synth.hpp"

namespace vqg::cli {

using json = nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Option registry: remembers every option of a subcommand so the resolved
// configuration can be echoed next to the outputs and replayed later.

class Registry {
 public:
  explicit Registry(CLI::App* app) : app_(app) {}

  template <class T>
  CLI::Option* add(const std::string& flags, T& value, const std::string& description) {
    CLI::Option* opt = app_->add_option(flags, value, description)->capture_default_str();
    getters_.emplace_back(opt->get_name(), [&value] { return stringify(value); });
    return opt;
  }

  json resolved() const {
    json obj = json::object();
    for (const auto& [name, get] : getters_) obj[name] = get();
    return obj;
  }

  CLI::App* app() const { return app_; }

 private:
  template <class T>
  static std::string stringify(const T& v) {
    if constexpr (std::is_same_v<T, std::string>) {
      return v;
    } else if constexpr (std::is_same_v<T, bool>) {
      return v ? "true" : "false";
    } else if constexpr (std::is_floating_point_v<T>) {
      std::ostringstream s;
      s << std::setprecision(17) << v;
      return s.str();
    } else {
      return std::to_string(v);
    }
  }

  CLI::App* app_;
  std::vector<std::pair<std::string, std::function<std::string()>>> getters_;
};

void write_config_echo(const std::string& out_path, const Registry& reg) {
  if (out_path.empty()) return;
  json echo;
  echo["subcommand"] = reg.app()->get_name();
  echo["options"] = reg.resolved();
  write_text_file(out_path + ".config.json", echo.dump(2) + "\n");
}

std::optional<Split> parse_split_filter(const std::string& name) {
  if (name == "all") return std::nullopt;
  const Split s = parse_split(name);
  if (s == Split::unassigned) throw UsageError("use 'all' to select every record");
  return s;
}

std::vector<ImageRecord> filter_split(std::span<const ImageRecord> records,
                                      const std::optional<Split>& split) {
  if (!split) return {records.begin(), records.end()};
  return select_split(records, *split);
}

LoadOptions load_options(const std::string& features_path) {
  LoadOptions opts;
  if (!features_path.empty()) opts.features_path = features_path;
  return opts;
}

std::optional<EmbeddingTable> maybe_embeddings(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return load_embedding_table(path);
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

// ---------------------------------------------------------------------------
// Predictions, rating and score files

struct Prediction {
  std::string image_id;
  TokenSequence tokens;
};

void write_prediction(std::ostream& out, const std::string& id, const TokenSequence& tokens,
                      const json& extra = json::object()) {
  json obj;
  obj["image_id"] = id;
  obj["tokens"] = tokens;
  for (auto it = extra.begin(); it != extra.end(); ++it) obj[it.key()] = it.value();
  out << obj.dump() << '\n';
}

std::vector<Prediction> load_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions " + path);
  std::vector<Prediction> out;
  std::set<std::string> seen;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(line) + ": ";
    auto obj = json::parse(text, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) throw DataError(where + "malformed prediction");
    Prediction p;
    try {
      p.image_id = obj.at("image_id").get<std::string>();
      if (obj.contains("tokens")) {
        p.tokens = obj["tokens"].get<TokenSequence>();
      } else if (obj.contains("question")) {
        const auto q = obj["question"].get<std::string>();
        if (q.find_first_not_of(" \t") != std::string::npos) p.tokens = tokenize(q);
      } else {
        throw DataError(where + "prediction needs 'tokens' or 'question'");
      }
    } catch (const json::exception& e) {
      throw DataError(where + e.what());
    }
    if (!seen.insert(p.image_id).second) throw DataError(where + "duplicate image_id");
    out.push_back(std::move(p));
  }
  return out;
}

void apply_rating_file(const std::string& path, std::vector<ImageRecord>& records) {
  std::map<std::string, ImageRecord*> by_id;
  for (auto& r : records) by_id[r.image_id] = &r;
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ratings " + path);
  const RatingWeights weights;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(line) + ": ";
    auto obj = json::parse(text, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) throw DataError(where + "malformed rating record");
    try {
      auto it = by_id.find(obj.at("image_id").get<std::string>());
      if (it == by_id.end()) continue;
      auto& refs = it->second->references;
      const auto ratings = obj.at("ratings").get<std::vector<std::vector<int>>>();
      if (ratings.size() != refs.size()) throw DataError(where + "one ratings entry per reference expected");
      for (std::size_t i = 0; i < refs.size(); ++i) {
        if (ratings[i].empty()) continue;
        if (ratings[i].size() != 3) throw DataError(where + "each ratings entry holds 3 integers");
        refs[i].raw_ratings = ratings[i];
        refs[i].majority_rating = majority_rating(ratings[i]);
        refs[i].weight = weights(*refs[i].majority_rating);
      }
    } catch (const json::exception& e) {
      throw DataError(where + e.what());
    }
  }
}

struct ScoreFile {
  std::vector<std::string> columns;  // excluding the id column
  std::map<std::string, std::vector<double>> rows;
};

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',' || c == '\t' || c == ' ' || c == '\r') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::optional<double> to_number(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

// Delimited text: first column id, remaining columns numeric. An optional
// header row names the columns.
ScoreFile load_score_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open score file " + path);
  ScoreFile file;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty() || text[0] == '#') continue;
    auto fields = split_fields(text);
    if (fields.empty()) continue;
    if (fields.size() < 2) throw DataError(path + ":" + std::to_string(line) + ": need id and value");
    if (file.columns.empty() && file.rows.empty() && !to_number(fields[1])) {
      file.columns.assign(fields.begin() + 1, fields.end());
      continue;
    }
    std::vector<double> values;
    for (std::size_t i = 1; i < fields.size(); ++i) {
      auto v = to_number(fields[i]);
      if (!v) throw DataError(path + ":" + std::to_string(line) + ": non-numeric '" + fields[i] + "'");
      values.push_back(*v);
    }
    if (!file.rows.emplace(fields[0], std::move(values)).second) {
      throw DataError(path + ":" + std::to_string(line) + ": duplicate id '" + fields[0] + "'");
    }
  }
  if (file.rows.empty()) throw DataError("score file " + path + " has no rows");
  return file;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------------------
// Subcommands

struct SynthArgs {
  std::string out;
  std::size_t n_images = 1000;
  std::size_t n_clusters = 20;
  int dim = 64;
  double sigma = 0.05;
  double outlier_prob = 0.5;
  double slot_variation = 0.25;
  std::uint64_t seed = 0;
};

int do_synth(const SynthArgs& a, const Registry& reg, std::ostream& out) {
  SynthConfig cfg;
  cfg.n_images = a.n_images;
  cfg.n_clusters = a.n_clusters;
  cfg.feature_dim = a.dim;
  cfg.sigma = a.sigma;
  cfg.outlier_prob = a.outlier_prob;
  cfg.slot_variation = a.slot_variation;
  cfg.seed = a.seed;
  const auto records = synth_dataset(cfg);
  save_dataset(a.out, records);
  write_config_echo(a.out, reg);
  out << "wrote " << records.size() << " records to " << a.out << '\n';
  return kExitOk;
}

struct SplitArgs {
  std::string input, out, features;
  std::uint64_t seed = 0;
};

int do_split(const SplitArgs& a, const Registry& reg, std::ostream& out) {
  const auto records = load_dataset(a.input, load_options(a.features));
  const auto split = split_dataset(records, a.seed);
  save_dataset(a.out, split);
  write_config_echo(a.out, reg);
  std::size_t n[3] = {0, 0, 0};
  for (const auto& r : split) ++n[static_cast<int>(r.split)];
  out << "train=" << n[0] << " val=" << n[1] << " test=" << n[2] << '\n';
  return kExitOk;
}

struct StatsArgs {
  std::string input, features, lexicon, function_words, out, format = "text", split = "all";
  std::size_t top_k = 40;
};

int do_stats(const StatsArgs& a, const Registry& reg, std::ostream& out) {
  const auto format = parse_report_format(a.format);
  const auto records = filter_split(load_dataset(a.input, load_options(a.features)),
                                    parse_split_filter(a.split));
  const Lexicon abstract_terms = load_lexicon(a.lexicon);
  const Lexicon function_words =
      a.function_words.empty() ? Lexicon{} : load_lexicon(a.function_words);
  const auto stats = dataset_statistics(records, abstract_terms, function_words, a.top_k);
  const std::string summary = stats_summary_table(stats).render(format);
  if (a.out.empty()) {
    out << summary << '\n'
        << length_histogram_table(stats).render(format) << '\n'
        << top_words_table(stats).render(format);
    return kExitOk;
  }
  write_text_file(a.out, summary);
  write_text_file(a.out + ".lengths", length_histogram_table(stats).render(format));
  write_text_file(a.out + ".words", top_words_table(stats).render(format));
  write_text_file(a.out + ".tree", ngram_tree_table(stats).render(format));
  write_config_echo(a.out, reg);
  out << summary;
  return kExitOk;
}

struct TrainArgs {
  std::string input, features, out, history;
  std::uint64_t seed = 0;
  int hidden_dim = 500, embed_dim = 500, threshold = 3, beam_size = 8, max_len = 30;
  int patience = 3, max_epochs = 50, batch_size = 1;
  double learning_rate = 0.1, lr_decay = 0.5, clip = 5.0;
  bool length_normalize = false;
};

int do_train(const TrainArgs& a, const Registry& reg, std::ostream& out) {
  const auto records = load_dataset(a.input, load_options(a.features));
  const auto train_records = select_split(records, Split::train);
  const auto val_records = select_split(records, Split::val);
  if (train_records.empty() || val_records.empty()) {
    throw DataError("training needs train and val records; run 'split' first");
  }
  grnn::GrnnConfig cfg;
  cfg.feature_dim = static_cast<int>(train_records.front().features.size());
  cfg.hidden_dim = a.hidden_dim;
  cfg.embed_dim = a.embed_dim;
  cfg.vocab = build_vocabulary(train_records, a.threshold);
  cfg.beam_size = a.beam_size;
  cfg.max_decode_len = a.max_len;
  cfg.length_normalize = a.length_normalize;
  cfg.learning_rate = a.learning_rate;
  cfg.lr_decay = a.lr_decay;
  cfg.patience = a.patience;
  cfg.grad_clip_norm = a.clip;
  cfg.max_epochs = a.max_epochs;
  cfg.batch_size = a.batch_size;
  cfg.seed = derive_seed(a.seed, "grnn");

  const auto train_set = grnn::make_examples(train_records, cfg.vocab);
  const auto val_set = grnn::make_examples(val_records, cfg.vocab);
  const auto result = grnn::train(cfg, train_set, val_set, [&](const grnn::TrainState& s) {
    out << "epoch " << s.epoch << " train_nll " << format_number(s.train_nll.back())
        << " val_nll " << format_number(s.val_nll.back()) << " lr "
        << format_number(s.learning_rate.back()) << '\n';
  });
  grnn::save_checkpoint(a.out, cfg, result.params);

  Table history{{"epoch", "train_nll", "val_nll", "best_val_nll", "learning_rate"}, {}};
  const auto& st = result.state;
  for (std::size_t i = 0; i < st.train_nll.size(); ++i) {
    history.rows.push_back({std::to_string(i + 1), format_number(st.train_nll[i]),
                            format_number(st.val_nll[i]), format_number(st.best_val_history[i]),
                            format_number(st.learning_rate[i])});
  }
  write_text_file(a.history.empty() ? a.out + ".history.csv" : a.history, history.to_csv());
  write_config_echo(a.out, reg);
  out << "vocabulary " << cfg.vocab.size() << " tokens; best epoch " << st.best_epoch
      << " val_nll " << format_number(st.best_val_nll) << '\n';
  return kExitOk;
}

struct GenerateArgs {
  std::string input, features, model, out, split = "test";
  int beam_size = 0, max_len = 0;
};

int do_generate(const GenerateArgs& a, const Registry& reg, std::ostream& out) {
  auto ck = grnn::load_checkpoint(a.model);
  if (a.beam_size > 0) ck.config.beam_size = a.beam_size;
  if (a.max_len > 0) ck.config.max_decode_len = a.max_len;
  const auto records = filter_split(load_dataset(a.input, load_options(a.features)),
                                    parse_split_filter(a.split));
  auto file = open_output(a.out);
  std::size_t truncated = 0;
  for (const auto& rec : records) {
    const auto decoded = grnn::beam_decode(ck.params, rec.features, ck.config);
    json extra = json::object();
    if (decoded.truncated) {
      extra["truncated"] = true;
      ++truncated;
    }
    write_prediction(file, rec.image_id, decoded.tokens, extra);
  }
  write_config_echo(a.out, reg);
  out << "generated " << records.size() << " questions (" << truncated << " truncated)\n";
  return kExitOk;
}

struct RetrieveArgs {
  std::string input, features, out, diagnostics, embeddings, split = "test",
      metric = "smoothed_bleu", index_out;
  std::size_t k = 30;
  double max_distance = 0.35, min_distance = 0.1;
};

int do_retrieve(const RetrieveArgs& a, const Registry& reg, std::ostream& out) {
  PoolConfig cfg;
  cfg.k = a.k;
  cfg.max_distance = a.max_distance;
  cfg.min_distance = a.min_distance;
  cfg.selection_metric = parse_selection_metric(a.metric);
  cfg.validate();
  const auto table = maybe_embeddings(a.embeddings);
  if (cfg.selection_metric == SelectionMetric::avg_embedding && !table) {
    throw UsageError("--selection-metric avg_embedding requires --embeddings");
  }
  const auto records = load_dataset(a.input, load_options(a.features));
  const auto index = build_index(select_split(records, Split::train));
  if (!a.index_out.empty()) save_index(a.index_out, index);
  const auto queries = filter_split(records, parse_split_filter(a.split));

  auto file = open_output(a.out);
  Table diag{{"image_id", "pool_size", "shortcut_hit", "fallback_used", "nearest_distance",
              "selected_image"},
             {}};
  std::size_t shortcuts = 0, fallbacks = 0, pooled = 0;
  for (const auto& q : queries) {
    const auto r = retrieve_question(index, q.features, cfg, table ? &*table : nullptr);
    shortcuts += r.pool.shortcut_hit;
    fallbacks += r.pool.fallback_used;
    pooled += r.pool.members.size();
    json extra;
    extra["pool_size"] = r.pool.members.size();
    extra["source_image"] = r.pool.members[r.selected].image_id;
    write_prediction(file, q.image_id, r.question, extra);
    diag.rows.push_back({q.image_id, std::to_string(r.pool.members.size()),
                         r.pool.shortcut_hit ? "1" : "0", r.pool.fallback_used ? "1" : "0",
                         format_number(r.pool.members.front().distance),
                         r.pool.members[r.selected].image_id});
  }
  const std::string diag_path = a.diagnostics.empty() ? a.out + ".pools.csv" : a.diagnostics;
  write_text_file(diag_path, diag.to_csv());
  write_config_echo(a.out, reg);
  const double n = queries.empty() ? 1.0 : static_cast<double>(queries.size());
  out << "queries " << queries.size() << " shortcut_rate " << format_number(shortcuts / n)
      << " fallback_rate " << format_number(fallbacks / n) << " mean_pool_size "
      << format_number(pooled / n) << '\n';
  return kExitOk;
}

struct EvalArgs {
  std::string input, features, predictions, ratings, embeddings, out, item_scores,
      format = "text", system;
};

int do_eval(const EvalArgs& a, const Registry& reg, std::ostream& out) {
  const auto format = parse_report_format(a.format);
  auto records = load_dataset(a.input, load_options(a.features));
  if (!a.ratings.empty()) apply_rating_file(a.ratings, records);
  const auto table = maybe_embeddings(a.embeddings);
  std::map<std::string_view, const ImageRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.image_id, &r);

  const auto preds = load_predictions(a.predictions);
  if (preds.empty()) throw DataError("predictions file " + a.predictions + " is empty");
  std::vector<TokenSequence> hyps;
  std::vector<std::vector<TokenSequence>> refsets;
  std::vector<const ImageRecord*> recs;
  for (const auto& p : preds) {
    auto it = by_id.find(p.image_id);
    if (it == by_id.end()) throw DataError("prediction for unknown image '" + p.image_id + "'");
    hyps.push_back(p.tokens);
    refsets.push_back(it->second->questions());
    recs.push_back(it->second);
  }

  SystemScores scores;
  scores.system = a.system.empty() ? std::filesystem::path(a.predictions).stem().string() : a.system;
  scores.items = hyps.size();
  scores.bleu = corpus_bleu(hyps, refsets);

  Table items{{"image_id", "bleu", "smoothed_bleu", "meteor_exact"}, {}};
  const bool rated = std::all_of(recs.begin(), recs.end(),
                                 [](const ImageRecord* r) { return r->fully_rated(); });
  if (rated) items.columns.push_back("delta_bleu");
  if (table) items.columns.push_back("avg_embedding");

  std::vector<TokenSequence> weighted_hyps;
  std::vector<WeightedReferenceSet> weighted;
  std::size_t delta_skipped = 0;
  double smoothed_sum = 0.0, meteor_sum = 0.0, embed_sum = 0.0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const double smoothed = sentence_bleu_smoothed(hyps[i], refsets[i]);
    const double meteor = meteor_exact(hyps[i], refsets[i]);
    smoothed_sum += smoothed;
    meteor_sum += meteor;
    std::vector<std::string> row{preds[i].image_id,
                                 format_number(corpus_bleu(std::span(&hyps[i], 1),
                                                           std::span(&refsets[i], 1))
                                                   .score),
                                 format_number(smoothed), format_number(meteor)};
    if (rated) {
      WeightedReferenceSet w;
      double max_weight = -1.0;
      for (const auto& ref : recs[i]->references) {
        w.push_back({ref.question, *ref.weight});
        max_weight = std::max(max_weight, *ref.weight);
      }
      if (max_weight > 0.0) {
        row.push_back(format_number(delta_bleu(std::span(&hyps[i], 1), std::span(&w, 1)).score));
        weighted_hyps.push_back(hyps[i]);
        weighted.push_back(std::move(w));
      } else {
        row.push_back("NA");
        ++delta_skipped;
      }
    }
    if (table) {
      double s = 0.0;
      for (const auto& r : refsets[i]) s += embedding_similarity(hyps[i], r, *table);
      s /= static_cast<double>(refsets[i].size());
      embed_sum += s;
      row.push_back(format_number(s));
    }
    items.rows.push_back(std::move(row));
  }
  const double n = static_cast<double>(hyps.size());
  scores.smoothed_bleu = smoothed_sum / n;
  scores.meteor_exact = meteor_sum / n;
  if (table) scores.embedding = embed_sum / n;
  if (rated && !weighted.empty()) scores.delta_bleu = delta_bleu(weighted_hyps, weighted);

  const std::string report = system_scores_table({scores}).render(format);
  if (a.out.empty()) {
    out << report;
  } else {
    write_text_file(a.out, report);
    write_config_echo(a.out, reg);
    out << report;
  }
  if (!a.item_scores.empty()) write_text_file(a.item_scores, items.to_csv());
  if (delta_skipped) out << delta_skipped << " items without a positive reference weight skipped for delta_bleu\n";
  return kExitOk;
}

struct CorrelateArgs {
  std::string metric_scores, human_scores, metric_column, out, format = "text";
};

int do_correlate(const CorrelateArgs& a, const Registry& reg, std::ostream& out) {
  const auto format = parse_report_format(a.format);
  const auto metric = load_score_file(a.metric_scores);
  const auto human = load_score_file(a.human_scores);
  std::size_t column = 0;
  if (!a.metric_column.empty()) {
    auto it = std::find(metric.columns.begin(), metric.columns.end(), a.metric_column);
    if (it == metric.columns.end()) throw UsageError("no column '" + a.metric_column + "' in " + a.metric_scores);
    column = static_cast<std::size_t>(it - metric.columns.begin());
  }
  std::vector<double> x, y;
  for (const auto& [id, values] : metric.rows) {
    auto it = human.rows.find(id);
    if (it == human.rows.end()) continue;
    if (column >= values.size()) throw DataError("row '" + id + "' lacks the metric column");
    x.push_back(values[column]);
    // Three rater columns collapse to their median.
    y.push_back(it->second.size() == 1 ? it->second[0] : median(it->second));
  }
  const auto report = correlate(x, y);
  const std::string text = correlation_table(report).render(format);
  if (!a.out.empty()) {
    write_text_file(a.out, text);
    write_config_echo(a.out, reg);
  }
  out << text;
  out << "n " << report.n << '\n';
  return kExitOk;
}

struct BaselinesArgs {
  std::string input, features, embeddings, out, format = "text", split = "test";
  std::uint64_t seed = 0;
};

int do_baselines(const BaselinesArgs& a, const Registry& reg, std::ostream& out) {
  const auto format = parse_report_format(a.format);
  const auto records = filter_split(load_dataset(a.input, load_options(a.features)),
                                    parse_split_filter(a.split));
  const auto table = maybe_embeddings(a.embeddings);
  const auto report = human_baselines(records, table ? &*table : nullptr, a.seed);
  const std::string text = baseline_table(report).render(format);
  if (!a.out.empty()) {
    write_text_file(a.out, text);
    write_config_echo(a.out, reg);
  }
  out << text;
  if (report.skipped) out << report.skipped << " single-reference records skipped\n";
  return kExitOk;
}

std::vector<std::string> replay_arguments(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path);
  json echo = json::parse(in, nullptr, false);
  if (echo.is_discarded() || !echo.contains("subcommand") || !echo.contains("options")) {
    throw DataError(path + " is not a configuration echo");
  }
  std::vector<std::string> args{echo["subcommand"].get<std::string>()};
  for (auto it = echo["options"].begin(); it != echo["options"].end(); ++it) {
    const auto value = it.value().get<std::string>();
    if (value.empty()) continue;
    args.push_back(it.key());
    args.push_back(value);
  }
  return args;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Visual question generation toolkit: data, retrieval and GRU models, metrics"};
  app.name("vqg");
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a clustered synthetic dataset");
  Registry synth_reg(synth_cmd);
  synth_reg.add("--out", synth.out, "Output dataset path")->required();
  synth_reg.add("--n-images", synth.n_images, "Number of images");
  synth_reg.add("--n-clusters", synth.n_clusters, "Number of feature/question clusters");
  synth_reg.add("--dim,--feature-dim", synth.dim, "Feature dimension");
  synth_reg.add("--sigma", synth.sigma, "Per-coordinate feature noise");
  synth_reg.add("--outlier-prob", synth.outlier_prob, "Probability of an outlier fifth reference");
  synth_reg.add("--slot-variation", synth.slot_variation, "Chance of an alternative slot filler");
  synth_reg.add("--seed", synth.seed, "Random seed");

  SplitArgs split;
  auto* split_cmd = app.add_subcommand("split", "Assign train/val/test splits (50/25/25)");
  Registry split_reg(split_cmd);
  split_reg.add("--input", split.input, "Dataset path")->required();
  split_reg.add("--out", split.out, "Output dataset path")->required();
  split_reg.add("--features", split.features, "Companion feature file");
  split_reg.add("--seed", split.seed, "Random seed");

  StatsArgs stats;
  auto* stats_cmd = app.add_subcommand("stats", "Corpus statistics");
  Registry stats_reg(stats_cmd);
  stats_reg.add("--input", stats.input, "Dataset path")->required();
  stats_reg.add("--features", stats.features, "Companion feature file");
  stats_reg.add("--lexicon", stats.lexicon, "Abstract-term lexicon, one token per line")->required();
  stats_reg.add("--function-words", stats.function_words, "Function-word lexicon");
  stats_reg.add("--split", stats.split, "train, val, test or all");
  stats_reg.add("--top-k", stats.top_k, "Number of most frequent words to list");
  stats_reg.add("--format", stats.format, "text or csv");
  stats_reg.add("--out", stats.out, "Report path (side tables get .lengths/.words/.tree)");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train the GRU question generator");
  Registry train_reg(train_cmd);
  train_reg.add("--input", train.input, "Split dataset path")->required();
  train_reg.add("--features", train.features, "Companion feature file");
  train_reg.add("--out", train.out, "Checkpoint path")->required();
  train_reg.add("--history", train.history, "Loss history CSV (default <out>.history.csv)");
  train_reg.add("--seed", train.seed, "Random seed");
  train_reg.add("--hidden-dim", train.hidden_dim, "Recurrent state size");
  train_reg.add("--embed-dim", train.embed_dim, "Word embedding size");
  train_reg.add("--threshold", train.threshold, "Minimum training count for a vocabulary word");
  train_reg.add("--beam-size", train.beam_size, "Beam width stored in the checkpoint");
  train_reg.add("--max-len", train.max_len, "Maximum decoded length");
  train_reg.add("--length-normalize", train.length_normalize, "Length-normalise beam scores");
  train_reg.add("--learning-rate", train.learning_rate, "Initial SGD step size");
  train_reg.add("--lr-decay", train.lr_decay, "Step size factor after a non-improving epoch");
  train_reg.add("--patience", train.patience, "Non-improving epochs before stopping");
  train_reg.add("--clip", train.clip, "Gradient norm clip (0 disables)");
  train_reg.add("--max-epochs", train.max_epochs, "Epoch limit");
  train_reg.add("--batch-size", train.batch_size, "Examples per SGD step");

  GenerateArgs gen;
  auto* gen_cmd = app.add_subcommand("generate", "Decode questions with a trained model");
  Registry gen_reg(gen_cmd);
  gen_reg.add("--input", gen.input, "Dataset path")->required();
  gen_reg.add("--features", gen.features, "Companion feature file");
  gen_reg.add("--model", gen.model, "Checkpoint path")->required();
  gen_reg.add("--out", gen.out, "Predictions path")->required();
  gen_reg.add("--split", gen.split, "train, val, test or all");
  gen_reg.add("--beam-size", gen.beam_size, "Beam width (0 keeps the checkpoint value)");
  gen_reg.add("--max-len", gen.max_len, "Maximum length (0 keeps the checkpoint value)");

  RetrieveArgs ret;
  auto* ret_cmd = app.add_subcommand("retrieve", "Nearest-neighbour question retrieval");
  Registry ret_reg(ret_cmd);
  ret_reg.add("--input", ret.input, "Split dataset path")->required();
  ret_reg.add("--features", ret.features, "Companion feature file");
  ret_reg.add("--out", ret.out, "Predictions path")->required();
  ret_reg.add("--diagnostics", ret.diagnostics, "Pool diagnostics CSV (default <out>.pools.csv)");
  ret_reg.add("--index-out", ret.index_out, "Also persist the retrieval index");
  ret_reg.add("--split", ret.split, "Query split: train, val, test or all");
  ret_reg.add("--k", ret.k, "Maximum pool size");
  ret_reg.add("--max-distance", ret.max_distance, "Largest neighbour distance admitted to the pool");
  ret_reg.add("--min-distance", ret.min_distance, "Nearest-neighbour shortcut distance");
  ret_reg.add("--selection-metric", ret.metric, "smoothed_bleu or avg_embedding");
  ret_reg.add("--embeddings", ret.embeddings, "Word embedding file");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score a predictions file against references");
  Registry eval_reg(eval_cmd);
  eval_reg.add("--input", ev.input, "Dataset with references")->required();
  eval_reg.add("--features", ev.features, "Companion feature file");
  eval_reg.add("--predictions", ev.predictions, "Predictions path")->required();
  eval_reg.add("--ratings", ev.ratings, "Reference rating file (enables delta_bleu)");
  eval_reg.add("--embeddings", ev.embeddings, "Word embedding file");
  eval_reg.add("--system", ev.system, "System name in the report");
  eval_reg.add("--item-scores", ev.item_scores, "Per-item sentence-level scores CSV");
  eval_reg.add("--format", ev.format, "text or csv");
  eval_reg.add("--out", ev.out, "Report path");

  CorrelateArgs cor;
  auto* cor_cmd = app.add_subcommand("correlate", "Correlate metric scores with human scores");
  Registry cor_reg(cor_cmd);
  cor_reg.add("--metric-scores", cor.metric_scores, "Per-item metric scores")->required();
  cor_reg.add("--human-scores", cor.human_scores, "Per-item human scores (1 or 3 columns)")->required();
  cor_reg.add("--metric-column", cor.metric_column, "Metric column name (default: first)");
  cor_reg.add("--format", cor.format, "text or csv");
  cor_reg.add("--out", cor.out, "Report path");

  BaselinesArgs base;
  auto* base_cmd = app.add_subcommand("baselines", "Human consensus and random baselines");
  Registry base_reg(base_cmd);
  base_reg.add("--input", base.input, "Dataset path")->required();
  base_reg.add("--features", base.features, "Companion feature file");
  base_reg.add("--split", base.split, "train, val, test or all");
  base_reg.add("--embeddings", base.embeddings, "Word embedding file");
  base_reg.add("--seed", base.seed, "Random seed for Human_random");
  base_reg.add("--format", base.format, "text or csv");
  base_reg.add("--out", base.out, "Report path");

  std::string replay_path;
  auto* replay_cmd = app.add_subcommand("replay", "Re-run a command from its .config.json echo");
  replay_cmd->add_option("config", replay_path, "Configuration echo")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth_cmd) return do_synth(synth, synth_reg, out);
    if (*split_cmd) return do_split(split, split_reg, out);
    if (*stats_cmd) return do_stats(stats, stats_reg, out);
    if (*train_cmd) return do_train(train, train_reg, out);
    if (*gen_cmd) return do_generate(gen, gen_reg, out);
    if (*ret_cmd) return do_retrieve(ret, ret_reg, out);
    if (*eval_cmd) return do_eval(ev, eval_reg, out);
    if (*cor_cmd) return do_correlate(cor, cor_reg, out);
    if (*base_cmd) return do_baselines(base, base_reg, out);
    if (*replay_cmd) {
      const auto replay = replay_arguments(replay_path);
      if (!replay.empty() && replay.front() == "replay") throw UsageError("cannot replay a replay");
      return run(replay, out, err);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  err << app.help();
  return kExitUsage;
}

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace vqg::cli
