#include "nmt/adapt.hpp"

#include <algorithm>
#include <cmath>

#include "nmt/errors.hpp"
#include "nmt/ops.hpp"
#include "nmt/optim.hpp"

namespace nmt {

namespace {

// ===== shared validation =====

void check_rate(double value, const char* what) {
  if (value < 0.0 || value >= 1.0)
    throw ConfigError(std::string("adapt: ") + what + " must lie in [0, 1)");
}

// ===== minibatching =====

std::size_t segment_tokens(const Segment& s) { return s.source.size() + s.target.size(); }

// Seeded shuffle, then greedy fill: a batch takes segments until adding the
// next one would push it past the token budget. Every batch holds at least
// one segment, so over-budget single segments still train.
std::vector<std::vector<std::size_t>> make_batches(const ParallelCorpus& corpus,
                                                   std::size_t batch_tokens, RandomSource& rng) {
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> current;
  std::size_t used = 0;
  for (std::size_t idx : order) {
    const std::size_t cost = segment_tokens(corpus.segments[idx]);
    if (!current.empty() && used + cost > batch_tokens) {
      batches.push_back(std::move(current));
      current.clear();
      used = 0;
    }
    current.push_back(idx);
    used += cost;
  }
  if (!current.empty()) batches.push_back(std::move(current));
  return batches;
}

// Loss positions for one segment: every target token plus the EOS.
std::size_t loss_tokens(const Segment& s) { return s.target.size() + 1; }

// Accumulates gradients for one batch. Each segment contributes its mean loss
// scaled by its share of the batch's loss positions, so the batch objective is
// the token-weighted mean. Returns the summed (unscaled) loss mass.
double batch_backward(const std::vector<std::size_t>& batch, const ParallelCorpus& corpus,
                      const ParameterSet& params, double eps_ls, bool train, RandomSource* rng,
                      double word_dropout = 0.0) {
  std::size_t total = 0;
  for (std::size_t idx : batch) total += loss_tokens(corpus.segments[idx]);
  double loss_mass = 0.0;
  for (std::size_t idx : batch) {
    const Segment& seg = corpus.segments[idx];
    Tensor enc = encode(seg.source, params, train, rng);
    DecodeResult dr = decode_train(seg, enc, params, eps_ls, train, rng, word_dropout);
    const double n = static_cast<double>(loss_tokens(seg));
    loss_mass += n * dr.loss.scalar();
    backward(scale(dr.loss, n / static_cast<double>(total)));
  }
  return loss_mass;
}

// ===== adaptation plumbing =====

std::set<std::string> trainable_names(const ModelConfig& config, const AdaptationConfig& cfg) {
  const auto shapes = tensor_shapes(config);
  std::set<std::string> out;
  if (cfg.tensor_mask) {
    for (const std::string& name : *cfg.tensor_mask) {
      if (shapes.find(name) == shapes.end())
        throw LookupError("adapt: unknown tensor in mask: " + name);
      out.insert(name);
    }
    return out;
  }
  for (const auto& [name, shape] : shapes) {
    if (cfg.region_mask.empty() || cfg.region_mask.count(region_of(name, config)) != 0)
      out.insert(name);
  }
  return out;
}

// Working copy for an adaptation run: trainable tensors get private buffers
// (seeded from baseline + initial offset) and grads; frozen tensors share the
// baseline buffers unless an initial offset shifts them.
ParameterSet working_params(const ParameterSet& baseline, const std::set<std::string>& trainable,
                            const OffsetSet* initial, double dropout) {
  static const OffsetSet kNoOffsets;
  ParameterSet eff = compose(baseline, initial ? *initial : kNoOffsets);
  eff.config.dropout = dropout;
  for (const std::string& name : trainable) {
    Tensor& t = eff.at(name);
    if (t.data == baseline.at(name).data) t = baseline.at(name).deep_copy();
    t.make_trainable();
  }
  return eff;
}

// Zeroes gradient rows whose id is not in the sorted allowed list.
void mask_grad_rows(Tensor& t, const std::vector<std::size_t>& allowed) {
  if (t.shape.size() != 2) throw DimensionError("adapt: row mask needs a 2-D tensor");
  if (!t.grad) throw StateError("adapt: row mask needs a gradient buffer");
  const std::size_t rows = t.shape[0], cols = t.shape[1];
  double* g = t.grad->data();
  for (std::size_t r = 0; r < rows; ++r) {
    if (!std::binary_search(allowed.begin(), allowed.end(), r))
      std::fill(g + r * cols, g + (r + 1) * cols, 0.0);
  }
}

struct VocabRowMasks {
  std::vector<std::size_t> source;  // sorted ids for src_embed
  std::vector<std::size_t> target;  // sorted ids for tgt_embed and out_proj
};

void apply_row_masks(ParameterSet& eff, const std::set<std::string>& trainable,
                     const VocabRowMasks& masks) {
  if (trainable.count("src_embed")) mask_grad_rows(eff.at("src_embed"), masks.source);
  if (trainable.count("tgt_embed")) mask_grad_rows(eff.at("tgt_embed"), masks.target);
  if (trainable.count("out_proj")) mask_grad_rows(eff.at("out_proj"), masks.target);
}

// Adds lambda * sqrt(|T|) * ||W_eff - W_base|| for every trainable tensor to
// the accumulated gradients via the tape.
void lasso_backward(ParameterSet& eff, const ParameterSet& baseline,
                    const std::set<std::string>& trainable, const GroupLassoConfig& lasso) {
  if (lasso.lambda == 0.0) return;
  std::vector<Tensor> deltas;
  deltas.reserve(trainable.size());
  for (const std::string& name : trainable) deltas.push_back(sub(eff.at(name), baseline.at(name)));
  backward(scale(group_lasso_term(deltas, lasso.norm_floor), lasso.lambda));
}

// Rescales every trainable gradient so the global L2 norm does not exceed
// max_norm. A non-positive max_norm disables clipping.
void clip_gradients(ParameterSet& eff, const std::set<std::string>& trainable, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (const std::string& name : trainable) {
    const Tensor& t = eff.at(name);
    if (!t.grad) continue;
    for (double g : *t.grad) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double scale = max_norm / norm;
  for (const std::string& name : trainable) {
    Tensor& t = eff.at(name);
    if (!t.grad) continue;
    for (double& g : *t.grad) g *= scale;
  }
}

void step_all(ParameterSet& eff, const std::set<std::string>& trainable, double lr) {
  for (const std::string& name : trainable) sgd_step(eff.at(name), lr);
}

// ===== offset export =====

bool all_zero(const std::vector<double>& v) {
  for (double x : v) {
    if (x != 0.0) return false;
  }
  return true;
}

std::vector<double> tensor_delta(const Tensor& eff, const Tensor& base) {
  std::vector<double> d(eff.numel());
  const double* a = eff.data->data();
  const double* b = base.data->data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = a[i] - b[i];
  return d;
}

OffsetEntry sparse_entry_from_delta(const std::vector<double>& delta,
                                    const std::vector<std::size_t>& shape,
                                    const std::set<std::size_t>& allowed_rows) {
  const std::size_t cols = shape[1];
  // Every row that actually moved must be stored; the allowed set adds the
  // mandated coverage rows even when their delta is zero.
  std::set<std::size_t> ids = allowed_rows;
  for (std::size_t r = 0; r < shape[0]; ++r) {
    if (!all_zero(std::vector<double>(delta.begin() + r * cols, delta.begin() + (r + 1) * cols)))
      ids.insert(r);
  }
  std::vector<std::size_t> id_list(ids.begin(), ids.end());
  Tensor rows = Tensor::zeros({id_list.size(), cols});
  for (std::size_t k = 0; k < id_list.size(); ++k) {
    for (std::size_t c = 0; c < cols; ++c) rows.at(k, c) = delta[id_list[k] * cols + c];
  }
  return OffsetEntry::sparse_rows(std::move(id_list), std::move(rows),
                                  std::vector<std::size_t>(shape));
}

// Difference between the worked parameters and the baseline, as offsets.
// Embedding tables always export as sparse rows; the output projection does
// when the run confined it to observed vocabulary rows. Tensors that never
// moved export as zero entries.
OffsetSet export_offsets(const ParameterSet& baseline, const ParameterSet& eff,
                         const AdaptationConfig& cfg, const std::set<std::size_t>& src_rows,
                         const std::set<std::size_t>& tgt_rows) {
  OffsetSet out;
  for (const auto& [name, base] : baseline.tensors) {
    const Tensor& worked = eff.at(name);
    if (worked.data == base.data) {
      out.emplace(name, OffsetEntry::zero());
      continue;
    }
    std::vector<double> delta = tensor_delta(worked, base);
    if (all_zero(delta)) {
      out.emplace(name, OffsetEntry::zero());
      continue;
    }
    if (name == "src_embed") {
      out.emplace(name, sparse_entry_from_delta(delta, base.shape, src_rows));
    } else if (name == "tgt_embed" || (name == "out_proj" && cfg.sparse_vocab)) {
      out.emplace(name, sparse_entry_from_delta(delta, base.shape, tgt_rows));
    } else {
      Tensor t = Tensor::zeros(base.shape);
      *t.data = std::move(delta);
      out.emplace(name, OffsetEntry::dense(std::move(t)));
    }
  }
  if (cfg.lasso) out = clip_offsets(out, *cfg.lasso);
  return out;
}

std::set<std::size_t> id_set(const std::vector<std::size_t>& ids) {
  return std::set<std::size_t>(ids.begin(), ids.end());
}

void add_segment_ids(std::set<std::size_t>& out, const std::vector<std::size_t>& ids) {
  out.insert(ids.begin(), ids.end());
}

// Rows already stored by an initial offset entry must stay in the export.
void add_initial_rows(std::set<std::size_t>& out, const OffsetSet* initial, const char* name) {
  if (!initial) return;
  auto it = initial->find(name);
  if (it != initial->end() && it->second.kind == OffsetEntry::Kind::sparse_rows)
    out.insert(it->second.row_ids.begin(), it->second.row_ids.end());
}

}  // namespace

// ===== baseline training =====

void BaselineTrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("adapt: baseline training needs at least one epoch");
  if (lr <= 0.0) throw ConfigError("adapt: baseline learning rate must be positive");
  if (batch_tokens == 0) throw ConfigError("adapt: batch token budget must be positive");
  check_rate(dropout, "dropout");
  check_rate(label_smoothing, "label smoothing");
  check_rate(word_dropout, "word dropout");
  check_rate(beta1, "beta1");
  check_rate(beta2, "beta2");
  if (adam_eps <= 0.0) throw ConfigError("adapt: adam epsilon must be positive");
}

double corpus_perplexity(const ParallelCorpus& corpus, const ParameterSet& params) {
  if (corpus.empty()) throw DataError("adapt: perplexity of an empty corpus");
  NoGradGuard guard;
  double nll_mass = 0.0;
  std::size_t tokens = 0;
  for (const Segment& seg : corpus.segments) {
    Tensor enc = encode(seg.source, params, false, nullptr);
    DecodeResult dr = decode_train(seg, enc, params, 0.0, false, nullptr);
    const std::size_t n = loss_tokens(seg);
    nll_mass += dr.loss.scalar() * static_cast<double>(n);
    tokens += n;
  }
  return std::exp(nll_mass / static_cast<double>(tokens));
}

std::vector<EpochStats> train_baseline(ParameterSet& params, const ParallelCorpus& train,
                                       const ParallelCorpus& heldout,
                                       const BaselineTrainConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw DataError("adapt: baseline training corpus is empty");
  params.config.dropout = cfg.dropout;
  params.make_all_trainable();

  const AdamConfig adam{cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps};
  std::map<std::string, AdamState> states;
  for (const auto& [name, t] : params.tensors) states.emplace(name, AdamState::for_param(t));

  RandomSource rng(cfg.seed);
  std::vector<EpochStats> stats;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double loss_mass = 0.0;
    std::size_t tokens = 0;
    for (const auto& batch : make_batches(train, cfg.batch_tokens, rng)) {
      loss_mass += batch_backward(batch, train, params, cfg.label_smoothing, true, &rng,
                                  cfg.word_dropout);
      for (std::size_t idx : batch) tokens += loss_tokens(train.segments[idx]);
      for (auto& [name, t] : params.tensors) adam_step(t, states.at(name), adam);
    }
    EpochStats s;
    s.epoch = epoch;
    s.train_loss = loss_mass / static_cast<double>(tokens);
    s.heldout_ppl = heldout.empty() ? 0.0 : corpus_perplexity(heldout, params);
    stats.push_back(s);
  }
  return stats;
}

// ===== adaptation =====

AdaptationConfig AdaptationConfig::batch_defaults() {
  AdaptationConfig cfg;
  cfg.mode = AdaptMode::batch;
  cfg.lr = 0.1;
  cfg.epochs = 10;
  cfg.batch_tokens = 7000;
  cfg.dropout = 0.1;
  cfg.label_smoothing = 0.1;
  return cfg;
}

AdaptationConfig AdaptationConfig::incremental_defaults() {
  AdaptationConfig cfg;
  cfg.mode = AdaptMode::incremental;
  cfg.lr = 0.01;
  cfg.dropout = 0.0;
  cfg.label_smoothing = 0.0;
  cfg.max_updates_per_segment = 3;
  cfg.ppl_stop = 1.5;
  return cfg;
}

void AdaptationConfig::validate() const {
  if (lr < 0.0) throw ConfigError("adapt: negative learning rate");
  if (clip_norm < 0.0) throw ConfigError("adapt: negative gradient clip norm");
  check_rate(dropout, "dropout");
  check_rate(label_smoothing, "label smoothing");
  if (mode == AdaptMode::batch) {
    if (epochs == 0) throw ConfigError("adapt: batch mode needs at least one epoch");
    if (batch_tokens == 0) throw ConfigError("adapt: batch token budget must be positive");
  } else {
    if (max_updates_per_segment == 0)
      throw ConfigError("adapt: incremental mode needs at least one update per segment");
  }
  if (lasso) {
    if (lasso->lambda < 0.0) throw ConfigError("adapt: negative group-lasso weight");
    if (lasso->theta < 0.0) throw ConfigError("adapt: negative clipping threshold");
    if (lasso->norm_floor <= 0.0) throw ConfigError("adapt: norm floor must be positive");
  }
}

AdaptationResult batch_adapt(const ParameterSet& baseline, const ParallelCorpus& corpus,
                             const AdaptationConfig& cfg) {
  cfg.validate();
  if (cfg.mode != AdaptMode::batch) throw ConfigError("adapt: batch_adapt needs batch mode");
  if (corpus.empty()) throw DataError("adapt: adaptation corpus is empty");
  baseline.config.validate();

  const std::set<std::string> trainable = trainable_names(baseline.config, cfg);
  ParameterSet eff = working_params(baseline, trainable, nullptr, cfg.dropout);

  VocabRowMasks masks{observed_source_ids(corpus), observed_target_ids(corpus)};
  RandomSource rng(cfg.seed);
  std::vector<EpochStats> stats;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double loss_mass = 0.0;
    std::size_t tokens = 0;
    for (const auto& batch : make_batches(corpus, cfg.batch_tokens, rng)) {
      loss_mass += batch_backward(batch, corpus, eff, cfg.label_smoothing, true, &rng);
      for (std::size_t idx : batch) tokens += loss_tokens(corpus.segments[idx]);
      if (cfg.lasso) lasso_backward(eff, baseline, trainable, *cfg.lasso);
      if (cfg.sparse_vocab) apply_row_masks(eff, trainable, masks);
      clip_gradients(eff, trainable, cfg.clip_norm);
      step_all(eff, trainable, cfg.lr);
    }
    EpochStats s;
    s.epoch = epoch;
    s.train_loss = loss_mass / static_cast<double>(tokens);
    stats.push_back(s);
  }

  AdaptationResult result;
  result.offsets =
      export_offsets(baseline, eff, cfg, id_set(masks.source), id_set(masks.target));
  result.epochs = std::move(stats);
  return result;
}

IncrementalResult incremental_adapt(const ParameterSet& baseline, const ParallelCorpus& stream,
                                    const AdaptationConfig& cfg, const OffsetSet* initial) {
  cfg.validate();
  if (cfg.mode != AdaptMode::incremental)
    throw ConfigError("adapt: incremental_adapt needs incremental mode");
  if (stream.empty()) throw DataError("adapt: adaptation stream is empty");
  baseline.config.validate();
  if (initial) validate_offsets(*initial, baseline);

  const std::set<std::string> trainable = trainable_names(baseline.config, cfg);
  ParameterSet eff = working_params(baseline, trainable, initial, cfg.dropout);

  // Cumulative row coverage for the exported vocabulary tensors.
  std::set<std::size_t> src_rows = {kBosId, kEosId};
  std::set<std::size_t> tgt_rows = {kBosId, kEosId};
  add_initial_rows(src_rows, initial, "src_embed");
  add_initial_rows(tgt_rows, initial, "tgt_embed");
  add_initial_rows(tgt_rows, initial, "out_proj");

  RandomSource rng(cfg.seed);
  RandomSource* rng_ptr = cfg.dropout > 0.0 ? &rng : nullptr;
  const bool train_flag = cfg.dropout > 0.0;

  IncrementalResult result;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const Segment& seg = stream.segments[i];

    IncrementalStepStats step;
    step.segment = i;
    step.hypothesis = greedy_decode(seg.source, eff, eff.config.max_len);

    // Per-segment row masks: the ids this segment touches, plus BOS/EOS.
    ParallelCorpus one;
    one.segments.push_back(seg);
    VocabRowMasks masks{observed_source_ids(one), observed_target_ids(one)};

    double ppl = 0.0;
    std::size_t updates = 0;
    do {
      Tensor enc = encode(seg.source, eff, train_flag, rng_ptr);
      DecodeResult dr = decode_train(seg, enc, eff, cfg.label_smoothing, train_flag, rng_ptr);
      backward(dr.loss);
      if (cfg.lasso) lasso_backward(eff, baseline, trainable, *cfg.lasso);
      if (cfg.sparse_vocab) apply_row_masks(eff, trainable, masks);
      clip_gradients(eff, trainable, cfg.clip_norm);
      step_all(eff, trainable, cfg.lr);
      ++updates;
      ppl = perplexity(seg, eff);
    } while (updates < cfg.max_updates_per_segment && ppl > cfg.ppl_stop);

    step.updates = updates;
    step.final_ppl = ppl;
    result.steps.push_back(std::move(step));

    add_segment_ids(src_rows, masks.source);
    add_segment_ids(tgt_rows, masks.target);
  }

  result.offsets = export_offsets(baseline, eff, cfg, src_rows, tgt_rows);
  return result;
}

}  // namespace nmt
