#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nmt/adapt.hpp"
#include "nmt/corpus.hpp"
#include "nmt/metrics.hpp"
#include "nmt/model.hpp"
#include "nmt/offsets.hpp"
#include "nmt/serialize.hpp"

using namespace nmt;

namespace {

// ===== small I/O helpers =====

std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(10) << x;
  return os.str();
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cli: cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cli: cannot write " + path);
  for (const auto& line : lines) out << line << "\n";
  if (!out) throw DataError("cli: short write to " + path);
}

std::vector<std::string> split_words(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> words;
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

std::string join_tokens(const std::vector<std::size_t>& ids, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out += ' ';
    out += vocab.token_of(ids[i]);
  }
  return out;
}

ParallelCorpus load_corpus(const std::string& src, const std::string& tgt,
                           const Vocabulary& src_vocab, const Vocabulary& tgt_vocab) {
  return load_parallel(src, tgt, src_vocab, tgt_vocab);
}

// Loads a checkpoint and optionally applies an offset file, refusing offsets
// recorded against a different baseline.
struct ComposedModel {
  LoadedCheckpoint base;
  ParameterSet params;  // composed view (baseline buffers where offsets are zero)
};

ComposedModel load_composed(const std::string& model_path, const std::string& offsets_path) {
  ComposedModel m{load_checkpoint(model_path), {}};
  if (offsets_path.empty()) {
    m.params = compose(m.base.params, {});
  } else {
    LoadedOffsets off = load_offsets(offsets_path);
    require_matching_baseline(off, m.base.checksum);
    validate_offsets(off.offsets, m.base.params);
    m.params = compose(m.base.params, off.offsets);
  }
  return m;
}

// ===== gen-data =====

struct GenDataOpts {
  std::string out_dir;
  SyntheticTaskConfig cfg;
};

void save_split(const ParallelCorpus& corpus, const std::string& stem, const SyntheticTask& task) {
  save_parallel(corpus, stem + ".src", stem + ".tgt", *task.src_vocab, *task.tgt_vocab);
}

int run_gen_data(const GenDataOpts& o) {
  SyntheticTask task = generate_synthetic(o.cfg);
  std::filesystem::create_directories(o.out_dir);
  const std::string d = o.out_dir + "/";
  task.src_vocab->save(d + "src.vocab");
  task.tgt_vocab->save(d + "tgt.vocab");
  save_split(task.baseline_train, d + "baseline_train", task);
  save_split(task.heldout, d + "heldout", task);
  save_split(task.adapt, d + "adapt", task);
  save_split(task.test, d + "test", task);

  std::size_t shifted = 0;
  for (std::size_t i = 0; i < task.base_mapping.size(); ++i)
    if (task.base_mapping[i] != task.shifted_mapping[i]) ++shifted;

  std::cout << "out_dir=" << o.out_dir << "\n"
            << "vocab=" << o.cfg.vocab_size << "\n"
            << "baseline_train=" << task.baseline_train.size() << "\n"
            << "heldout=" << task.heldout.size() << "\n"
            << "adapt=" << task.adapt.size() << "\n"
            << "test=" << task.test.size() << "\n"
            << "shifted_tokens=" << shifted << "\n"
            << "seed=" << o.cfg.seed << "\n";
  std::cout << "\n  split            segments\n"
            << "  baseline-train   " << task.baseline_train.size() << "\n"
            << "  heldout          " << task.heldout.size() << "\n"
            << "  adapt            " << task.adapt.size() << "\n"
            << "  test             " << task.test.size() << "\n";
  return 0;
}

// ===== train-baseline =====

struct TrainOpts {
  std::string train_src, train_tgt, heldout_src, heldout_tgt;
  std::string src_vocab, tgt_vocab;
  std::string out;
  ModelConfig model;
  BaselineTrainConfig train;
};

int run_train_baseline(const TrainOpts& o) {
  Vocabulary sv = Vocabulary::load(o.src_vocab);
  Vocabulary tv = Vocabulary::load(o.tgt_vocab);
  ParallelCorpus train = load_corpus(o.train_src, o.train_tgt, sv, tv);
  ParallelCorpus heldout;
  if (!o.heldout_src.empty())
    heldout = load_corpus(o.heldout_src, o.heldout_tgt, sv, tv);

  ModelConfig cfg = o.model;
  cfg.src_vocab = sv.size();
  cfg.tgt_vocab = tv.size();
  cfg.validate();

  RandomSource rng(o.train.seed);
  ParameterSet params = init_parameters(cfg, rng);
  std::vector<EpochStats> stats = train_baseline(params, train, heldout, o.train);
  for (const auto& s : stats) {
    std::cout << "epoch=" << s.epoch << " train_loss=" << fmt(s.train_loss);
    if (s.heldout_ppl > 0.0) std::cout << " heldout_ppl=" << fmt(s.heldout_ppl);
    std::cout << "\n";
  }
  const std::uint32_t sum = save_checkpoint(o.out, params);
  std::cout << "parameters=" << param_count(cfg).total << "\n"
            << "checkpoint=" << o.out << "\n"
            << "checksum=" << sum << "\n";
  return 0;
}

// ===== adapt =====

struct AdaptOpts {
  std::string model, src, tgt, stream_src, stream_tgt;
  std::string src_vocab, tgt_vocab;
  std::string out, hyp_out, initial_offsets;
  std::string mode = "batch";
  std::string method = "full";
  double lambda = 1e-6;
  double theta = 1e-4;
  std::string fixed_from;
  double fixed_threshold = 0.002;
  double inc_lr = 0.01;
  // Overrides; negative/zero sentinels mean "keep the mode default".
  double lr = -1.0, dropout = -1.0, label_smoothing = -1.0, ppl_stop = -1.0;
  double clip_norm = -1.0;
  std::size_t epochs = 0, batch_tokens = 0, max_updates = 0;
  std::uint64_t seed = 1;
  bool have_lambda = false, have_theta = false;
};

// Applies the method choice to an adaptation config: which tensors may move,
// whether vocabulary tensors stay sparse, and any group-lasso settings.
void apply_method(const AdaptOpts& o, AdaptationConfig& cfg) {
  if (o.method == "full") {
    if (!o.fixed_from.empty())
      throw ConfigError("cli: --fixed-from needs --method fixed");
    return;  // every region trainable, dense export
  }
  if (o.method == "lasso") {
    cfg.region_mask = {Region::outer_layers, Region::inner_layers, Region::output_projection};
    cfg.sparse_vocab = true;
    GroupLassoConfig lasso;
    lasso.lambda = o.lambda;
    lasso.theta = o.theta;
    cfg.lasso = lasso;
    return;
  }
  if (o.method == "fixed") {
    if (o.fixed_from.empty())
      throw ConfigError("cli: --method fixed needs --fixed-from offsets to select tensors");
    LoadedOffsets from = load_offsets(o.fixed_from);
    std::set<std::string> keep = select_fixed_tensors(from.offsets, o.fixed_threshold);
    keep.insert("out_proj");
    cfg.tensor_mask = std::move(keep);
    cfg.sparse_vocab = true;
    return;
  }
  if (o.method.rfind("region:", 0) == 0) {
    const std::string name = o.method.substr(7);
    std::optional<Region> region = region_from_name(name);
    if (!region) throw ConfigError("cli: unknown region " + name);
    cfg.region_mask = {*region};
    return;
  }
  throw ConfigError("cli: unknown method " + o.method + " (full, region:<name>, fixed, lasso)");
}

AdaptationConfig make_batch_config(const AdaptOpts& o) {
  AdaptationConfig cfg = AdaptationConfig::batch_defaults();
  cfg.seed = o.seed;
  if (o.lr >= 0.0) cfg.lr = o.lr;
  if (o.epochs > 0) cfg.epochs = o.epochs;
  if (o.batch_tokens > 0) cfg.batch_tokens = o.batch_tokens;
  if (o.dropout >= 0.0) cfg.dropout = o.dropout;
  if (o.label_smoothing >= 0.0) cfg.label_smoothing = o.label_smoothing;
  if (o.clip_norm >= 0.0) cfg.clip_norm = o.clip_norm;
  apply_method(o, cfg);
  cfg.validate();
  return cfg;
}

AdaptationConfig make_incremental_config(const AdaptOpts& o, bool combined) {
  AdaptationConfig cfg = AdaptationConfig::incremental_defaults();
  cfg.seed = o.seed;
  // In combined mode --lr steers the batch phase and --inc-lr this one.
  if (combined) {
    cfg.lr = o.inc_lr;
  } else if (o.lr >= 0.0) {
    cfg.lr = o.lr;
  }
  if (!combined && o.dropout >= 0.0) cfg.dropout = o.dropout;
  if (!combined && o.label_smoothing >= 0.0) cfg.label_smoothing = o.label_smoothing;
  if (o.clip_norm >= 0.0) cfg.clip_norm = o.clip_norm;
  if (o.max_updates > 0) cfg.max_updates_per_segment = o.max_updates;
  if (o.ppl_stop >= 0.0) cfg.ppl_stop = o.ppl_stop;
  apply_method(o, cfg);
  cfg.validate();
  return cfg;
}

void print_epochs(const std::vector<EpochStats>& stats) {
  for (const auto& s : stats)
    std::cout << "epoch=" << s.epoch << " train_loss=" << fmt(s.train_loss) << "\n";
}

void print_steps(const std::vector<IncrementalStepStats>& steps) {
  for (const auto& s : steps)
    std::cout << "segment=" << s.segment << " updates=" << s.updates
              << " ppl=" << fmt(s.final_ppl) << "\n";
}

void write_hypotheses(const std::string& path, const std::vector<IncrementalStepStats>& steps,
                      const Vocabulary& tgt_vocab) {
  if (path.empty()) return;
  std::vector<std::string> lines;
  lines.reserve(steps.size());
  for (const auto& s : steps) lines.push_back(join_tokens(s.hypothesis, tgt_vocab));
  write_lines(path, lines);
  std::cout << "hypotheses=" << path << "\n";
}

void report_offsets(const OffsetSet& offsets, const ModelConfig& config) {
  OffsetParamReport r = offset_param_count(offsets, config);
  std::cout << "stored_params=" << r.total << "\n"
            << "nonzero_tensors=" << r.nonzero_tensors << "\n";
  for (const auto& [region, n] : r.per_region)
    std::cout << "region_params." << region_name(region) << "=" << n << "\n";
}

int run_adapt(const AdaptOpts& o) {
  if ((o.have_lambda || o.have_theta) && o.method != "lasso")
    throw ConfigError("cli: --lambda and --theta need --method lasso");

  LoadedCheckpoint base = load_checkpoint(o.model);
  Vocabulary sv = Vocabulary::load(o.src_vocab);
  Vocabulary tv = Vocabulary::load(o.tgt_vocab);

  std::optional<LoadedOffsets> initial;
  if (!o.initial_offsets.empty()) {
    initial = load_offsets(o.initial_offsets);
    require_matching_baseline(*initial, base.checksum);
    validate_offsets(initial->offsets, base.params);
  }

  OffsetSet result;
  if (o.mode == "batch") {
    if (initial) throw ConfigError("cli: batch mode does not take --offsets; use --mode combined");
    ParallelCorpus corpus = load_corpus(o.src, o.tgt, sv, tv);
    AdaptationConfig cfg = make_batch_config(o);
    AdaptationResult res = batch_adapt(base.params, corpus, cfg);
    print_epochs(res.epochs);
    result = std::move(res.offsets);
  } else if (o.mode == "incremental") {
    ParallelCorpus stream = load_corpus(o.src, o.tgt, sv, tv);
    AdaptationConfig cfg = make_incremental_config(o, false);
    IncrementalResult res =
        incremental_adapt(base.params, stream, cfg, initial ? &initial->offsets : nullptr);
    print_steps(res.steps);
    write_hypotheses(o.hyp_out, res.steps, tv);
    result = std::move(res.offsets);
  } else if (o.mode == "combined") {
    if (o.stream_src.empty() || o.stream_tgt.empty())
      throw ConfigError("cli: combined mode needs --stream-src and --stream-tgt");
    if (initial) throw ConfigError("cli: combined mode starts from its own batch phase");
    ParallelCorpus corpus = load_corpus(o.src, o.tgt, sv, tv);
    ParallelCorpus stream = load_corpus(o.stream_src, o.stream_tgt, sv, tv);
    AdaptationConfig bcfg = make_batch_config(o);
    AdaptationResult bres = batch_adapt(base.params, corpus, bcfg);
    print_epochs(bres.epochs);
    AdaptationConfig icfg = make_incremental_config(o, true);
    IncrementalResult ires = incremental_adapt(base.params, stream, icfg, &bres.offsets);
    print_steps(ires.steps);
    write_hypotheses(o.hyp_out, ires.steps, tv);
    result = std::move(ires.offsets);
  } else {
    throw ConfigError("cli: unknown mode " + o.mode + " (batch, incremental, combined)");
  }

  save_offsets(o.out, result, base.checksum);
  std::cout << "mode=" << o.mode << "\n"
            << "method=" << o.method << "\n";
  report_offsets(result, base.params.config);
  std::cout << "offsets=" << o.out << "\n";
  return 0;
}

// ===== translate =====

struct TranslateOpts {
  std::string model, offsets, src_vocab, tgt_vocab, in, out;
};

int run_translate(const TranslateOpts& o) {
  ComposedModel m = load_composed(o.model, o.offsets);
  Vocabulary sv = Vocabulary::load(o.src_vocab);
  Vocabulary tv = Vocabulary::load(o.tgt_vocab);
  std::vector<std::string> lines = read_lines(o.in);
  std::vector<std::string> hyps;
  hyps.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::vector<std::size_t> source = tokenize(lines[i], sv);
    if (source.empty())
      throw DataError("cli: empty source line " + std::to_string(i + 1) + " in " + o.in);
    hyps.push_back(join_tokens(greedy_decode(source, m.params, m.params.config.max_len), tv));
  }
  write_lines(o.out, hyps);
  std::cout << "segments=" << hyps.size() << "\n"
            << "hyp=" << o.out << "\n";
  return 0;
}

// ===== evaluate =====

struct EvaluateOpts {
  std::string metric = "bleu";
  std::string hyp, ref, text;
  std::string model, offsets, src_vocab, tgt_vocab, src, tgt;
  std::size_t window = 1000;
};

int run_evaluate(const EvaluateOpts& o) {
  if (o.metric == "bleu") {
    if (o.hyp.empty() || o.ref.empty()) throw ConfigError("cli: bleu needs --hyp and --ref");
    std::vector<std::vector<std::string>> hyps, refs;
    for (const auto& line : read_lines(o.hyp)) hyps.push_back(split_words(line));
    for (const auto& line : read_lines(o.ref)) refs.push_back(split_words(line));
    BleuReport r = bleu(hyps, refs);
    std::cout << "bleu=" << fmt(r.score) << "\n";
    for (int n = 0; n < 4; ++n)
      std::cout << "p" << (n + 1) << "=" << fmt(r.precisions[n]) << " matched=" << r.matched[n]
                << " total=" << r.total[n] << "\n";
    std::cout << "brevity_penalty=" << fmt(r.brevity_penalty) << "\n"
              << "hyp_length=" << r.hyp_length << "\n"
              << "ref_length=" << r.ref_length << "\n";
    std::cout << "\n  BLEU " << std::fixed << std::setprecision(2) << r.score << "  (BP "
              << r.brevity_penalty << ", " << r.hyp_length << "/" << r.ref_length << " words)\n";
    return 0;
  }
  if (o.metric == "rr") {
    if (o.text.empty()) throw ConfigError("cli: rr needs --text");
    std::vector<std::string> words;
    for (const auto& line : read_lines(o.text)) {
      std::vector<std::string> w = split_words(line);
      words.insert(words.end(), w.begin(), w.end());
    }
    RepetitionRateReport r = repetition_rate(words, o.window);
    std::cout << "repetition_rate=" << fmt(r.rate) << "\n";
    for (int n = 0; n < 4; ++n) std::cout << "r" << (n + 1) << "=" << fmt(r.ratios[n]) << "\n";
    std::cout << "windows=" << r.windows << "\n"
              << "window_size=" << r.window_size << "\n";
    std::cout << "\n  repetition rate " << std::fixed << std::setprecision(2) << r.rate << " over "
              << r.windows << " windows\n";
    return 0;
  }
  if (o.metric == "ppl") {
    if (o.model.empty() || o.src.empty() || o.tgt.empty() || o.src_vocab.empty() ||
        o.tgt_vocab.empty())
      throw ConfigError("cli: ppl needs --model, --src, --tgt and both vocabularies");
    ComposedModel m = load_composed(o.model, o.offsets);
    Vocabulary sv = Vocabulary::load(o.src_vocab);
    Vocabulary tv = Vocabulary::load(o.tgt_vocab);
    ParallelCorpus corpus = load_corpus(o.src, o.tgt, sv, tv);
    const double ppl = corpus_perplexity(corpus, m.params);
    std::cout << "ppl=" << fmt(ppl) << "\n";
    std::cout << "\n  perplexity " << std::fixed << std::setprecision(3) << ppl << " over "
              << corpus.size() << " segments\n";
    return 0;
  }
  throw ConfigError("cli: unknown metric " + o.metric + " (bleu, rr, ppl)");
}

// ===== report-params =====

struct ReportOpts {
  std::string model;
  std::vector<std::string> offsets;
  std::vector<std::string> labels;
  std::vector<std::string> hyps;
  std::string ref;
};

int run_report_params(const ReportOpts& o) {
  if (o.offsets.empty()) throw ConfigError("cli: report-params needs at least one --offsets");
  if (!o.labels.empty() && o.labels.size() != o.offsets.size())
    throw ConfigError("cli: --label count must match --offsets count");
  if (!o.hyps.empty() && (o.hyps.size() != o.offsets.size() || o.ref.empty()))
    throw ConfigError("cli: --hyp count must match --offsets count and needs --ref");

  LoadedCheckpoint base = load_checkpoint(o.model);
  const std::size_t model_total = param_count(base.params.config).total;
  std::cout << "model_params=" << model_total << "\n";

  std::vector<std::vector<std::string>> refs;
  if (!o.hyps.empty())
    for (const auto& line : read_lines(o.ref)) refs.push_back(split_words(line));

  struct Row {
    std::string label;
    std::size_t stored = 0;
    double percent = 0.0;
    double bleu_score = -1.0;  // negative = not evaluated
  };
  std::vector<Row> rows;
  for (std::size_t i = 0; i < o.offsets.size(); ++i) {
    LoadedOffsets off = load_offsets(o.offsets[i]);
    require_matching_baseline(off, base.checksum);
    validate_offsets(off.offsets, base.params);
    Row row;
    row.label = i < o.labels.size() ? o.labels[i] : o.offsets[i];
    row.stored = offset_param_count(off.offsets, base.params.config).total;
    row.percent = 100.0 * static_cast<double>(row.stored) / static_cast<double>(model_total);
    if (!o.hyps.empty()) {
      std::vector<std::vector<std::string>> hyps;
      for (const auto& line : read_lines(o.hyps[i])) hyps.push_back(split_words(line));
      row.bleu_score = bleu(hyps, refs).score;
    }
    std::cout << "method=" << row.label << " stored_params=" << row.stored
              << " percent_of_model=" << fmt(row.percent);
    if (row.bleu_score >= 0.0) std::cout << " bleu=" << fmt(row.bleu_score);
    std::cout << "\n";
    rows.push_back(std::move(row));
  }

  std::size_t width = 8;
  for (const auto& r : rows) width = std::max(width, r.label.size());
  std::cout << "\n  " << std::left << std::setw(static_cast<int>(width)) << "method"
            << std::right << std::setw(14) << "stored" << std::setw(10) << "% model"
            << std::setw(8) << "BLEU" << "\n";
  for (const auto& r : rows) {
    std::cout << "  " << std::left << std::setw(static_cast<int>(width)) << r.label << std::right
              << std::setw(14) << r.stored << std::setw(10) << std::fixed << std::setprecision(2)
              << r.percent << std::setw(8);
    if (r.bleu_score >= 0.0)
      std::cout << std::fixed << std::setprecision(2) << r.bleu_score;
    else
      std::cout << "-";
    std::cout << "\n";
  }
  return 0;
}

}  // namespace

// ===== argument wiring =====

int main(int argc, char** argv) {
  CLI::App app{"Personalized offset adaptation for a small translation model"};
  app.require_subcommand(1);

  GenDataOpts gen;
  CLI::App* g = app.add_subcommand("gen-data", "Generate the synthetic domain-shift task");
  g->add_option("--out-dir", gen.out_dir, "Output directory")->required();
  g->add_option("--vocab", gen.cfg.vocab_size, "Vocabulary size incl. reserved ids");
  g->add_option("--min-len", gen.cfg.min_len, "Minimum source length");
  g->add_option("--max-len", gen.cfg.max_len, "Maximum source length");
  g->add_option("--baseline-train", gen.cfg.baseline_train, "Baseline training segments");
  g->add_option("--heldout", gen.cfg.heldout, "Baseline held-out segments");
  g->add_option("--adapt", gen.cfg.adapt, "User-domain adaptation segments");
  g->add_option("--test", gen.cfg.test, "User-domain test segments");
  g->add_option("--shift", gen.cfg.shift_fraction, "Fraction of vocab remapped in the user domain");
  g->add_option("--repeat", gen.cfg.repeat_fraction, "Fraction of test segments duplicated");
  g->add_option("--seed", gen.cfg.seed, "Generator seed");

  TrainOpts tr;
  tr.model.d_model = 64;
  tr.model.enc_layers = 2;
  tr.model.dec_layers = 1;
  tr.model.enc_filter = 128;
  tr.model.heads = 4;
  tr.model.max_len = 64;
  CLI::App* t = app.add_subcommand("train-baseline", "Train the shared baseline model");
  t->add_option("--train-src", tr.train_src, "Training source file")->required();
  t->add_option("--train-tgt", tr.train_tgt, "Training target file")->required();
  t->add_option("--heldout-src", tr.heldout_src, "Held-out source file");
  t->add_option("--heldout-tgt", tr.heldout_tgt, "Held-out target file");
  t->add_option("--src-vocab", tr.src_vocab, "Source vocabulary")->required();
  t->add_option("--tgt-vocab", tr.tgt_vocab, "Target vocabulary")->required();
  t->add_option("--out", tr.out, "Checkpoint path")->required();
  t->add_option("--d-model", tr.model.d_model, "Model width");
  t->add_option("--enc-layers", tr.model.enc_layers, "Encoder layers");
  t->add_option("--dec-layers", tr.model.dec_layers, "Decoder layers");
  t->add_option("--filter", tr.model.enc_filter, "Encoder filter width");
  t->add_option("--heads", tr.model.heads, "Attention heads");
  t->add_option("--max-len", tr.model.max_len, "Maximum sequence length");
  t->add_option("--epochs", tr.train.epochs, "Training epochs");
  t->add_option("--lr", tr.train.lr, "Adam learning rate");
  t->add_option("--dropout", tr.train.dropout, "Dropout rate");
  t->add_option("--label-smoothing", tr.train.label_smoothing, "Label smoothing weight");
  t->add_option("--word-dropout", tr.train.word_dropout,
                "Rate of replacing decoder input tokens with random tokens during training");
  t->add_option("--batch-tokens", tr.train.batch_tokens, "Token budget per minibatch");
  t->add_option("--seed", tr.train.seed, "Training seed");

  AdaptOpts ad;
  CLI::App* a = app.add_subcommand("adapt", "Adapt the baseline to user data");
  a->add_option("--model", ad.model, "Baseline checkpoint")->required();
  a->add_option("--src", ad.src, "Adaptation source file")->required();
  a->add_option("--tgt", ad.tgt, "Adaptation target file")->required();
  a->add_option("--stream-src", ad.stream_src, "Incremental stream source (combined mode)");
  a->add_option("--stream-tgt", ad.stream_tgt, "Incremental stream target (combined mode)");
  a->add_option("--src-vocab", ad.src_vocab, "Source vocabulary")->required();
  a->add_option("--tgt-vocab", ad.tgt_vocab, "Target vocabulary")->required();
  a->add_option("--out", ad.out, "Offset file to write")->required();
  a->add_option("--hyp-out", ad.hyp_out, "Write incremental hypotheses here");
  a->add_option("--offsets", ad.initial_offsets, "Start incremental mode from these offsets");
  a->add_option("--mode", ad.mode, "batch, incremental or combined");
  a->add_option("--method", ad.method, "full, region:<name>, fixed or lasso");
  CLI::Option* lam = a->add_option("--lambda", ad.lambda, "Group-lasso weight (lasso method)");
  CLI::Option* the = a->add_option("--theta", ad.theta, "Clipping threshold (lasso method)");
  a->add_option("--fixed-from", ad.fixed_from, "Offsets that pick the fixed tensor subset");
  a->add_option("--fixed-threshold", ad.fixed_threshold, "Mean-offset cutoff for the subset");
  a->add_option("--lr", ad.lr, "Learning rate");
  a->add_option("--inc-lr", ad.inc_lr, "Incremental learning rate (combined mode)");
  a->add_option("--epochs", ad.epochs, "Batch epochs");
  a->add_option("--batch-tokens", ad.batch_tokens, "Token budget per minibatch");
  a->add_option("--dropout", ad.dropout, "Dropout rate");
  a->add_option("--label-smoothing", ad.label_smoothing, "Label smoothing weight");
  a->add_option("--clip-norm", ad.clip_norm, "Global gradient-norm cap (0 disables)");
  a->add_option("--max-updates", ad.max_updates, "Updates per segment (incremental)");
  a->add_option("--ppl-stop", ad.ppl_stop, "Perplexity stop threshold (incremental)");
  a->add_option("--seed", ad.seed, "Adaptation seed");

  TranslateOpts tl;
  CLI::App* l = app.add_subcommand("translate", "Greedy-decode a source file");
  l->add_option("--model", tl.model, "Baseline checkpoint")->required();
  l->add_option("--offsets", tl.offsets, "Offset file to compose");
  l->add_option("--src-vocab", tl.src_vocab, "Source vocabulary")->required();
  l->add_option("--tgt-vocab", tl.tgt_vocab, "Target vocabulary")->required();
  l->add_option("--in", tl.in, "Source text file")->required();
  l->add_option("--out", tl.out, "Hypothesis file to write")->required();

  EvaluateOpts ev;
  CLI::App* e = app.add_subcommand("evaluate", "Score hypotheses or data");
  e->add_option("--metric", ev.metric, "bleu, rr or ppl");
  e->add_option("--hyp", ev.hyp, "Hypothesis file (bleu)");
  e->add_option("--ref", ev.ref, "Reference file (bleu)");
  e->add_option("--text", ev.text, "Text file (rr)");
  e->add_option("--window", ev.window, "Repetition-rate window size");
  e->add_option("--model", ev.model, "Checkpoint (ppl)");
  e->add_option("--offsets", ev.offsets, "Offset file (ppl)");
  e->add_option("--src-vocab", ev.src_vocab, "Source vocabulary (ppl)");
  e->add_option("--tgt-vocab", ev.tgt_vocab, "Target vocabulary (ppl)");
  e->add_option("--src", ev.src, "Source file (ppl)");
  e->add_option("--tgt", ev.tgt, "Target file (ppl)");

  ReportOpts rp;
  CLI::App* r = app.add_subcommand("report-params", "Stored-parameter and BLEU table");
  r->add_option("--model", rp.model, "Baseline checkpoint")->required();
  r->add_option("--offsets", rp.offsets, "Offset file (repeatable)")->required();
  r->add_option("--label", rp.labels, "Row label for each offset file");
  r->add_option("--hyp", rp.hyps, "Hypothesis file per offset file");
  r->add_option("--ref", rp.ref, "Shared reference file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*g) return run_gen_data(gen);
    if (*t) return run_train_baseline(tr);
    if (*a) {
      ad.have_lambda = lam->count() > 0;
      ad.have_theta = the->count() > 0;
      return run_adapt(ad);
    }
    if (*l) return run_translate(tl);
    if (*e) return run_evaluate(ev);
    if (*r) return run_report_params(rp);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
