#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "nmt/corpus.hpp"
#include "nmt/model.hpp"
#include "nmt/offsets.hpp"

namespace nmt {

// ===== baseline training =====

struct BaselineTrainConfig {
  std::size_t epochs = 30;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double dropout = 0.1;          // overrides the model config during training
  double label_smoothing = 0.1;
  // Rate at which teacher-forced decoder input tokens are replaced with a
  // random vocabulary token during training. Pushes the decoder to condition
  // on the encoder states rather than on its own input stream, which later
  // lets adaptation express lexical change almost entirely in the output
  // projection rows.
  double word_dropout = 0.0;
  std::size_t batch_tokens = 7000;  // source + target tokens per minibatch
  std::uint64_t seed = 1;

  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;     // 1-based
  double train_loss = 0.0;   // token-weighted mean training loss
  double heldout_ppl = 0.0;  // 0 when no held-out data was given
};

// Trains the parameter set in place with Adam and returns per-epoch stats.
// `heldout` may be empty, in which case no perplexity is evaluated.
std::vector<EpochStats> train_baseline(ParameterSet& params, const ParallelCorpus& train,
                                       const ParallelCorpus& heldout,
                                       const BaselineTrainConfig& cfg);

// Token-weighted corpus perplexity (label smoothing off, dropout off).
double corpus_perplexity(const ParallelCorpus& corpus, const ParameterSet& params);

// ===== adaptation =====

enum class AdaptMode { batch, incremental };

// Which tensors an adaptation run may change, and how. When `tensor_mask` is
// set it wins outright; otherwise an empty `region_mask` means every region.
// `sparse_vocab` confines vocabulary-tensor updates to rows for ids observed
// in the adaptation data (plus BOS/EOS) and exports those tensors as
// sparse-rows entries. A `lasso` config adds the group-lasso term to the
// training objective and clips near-zero tensors out of the exported offsets.
struct AdaptationConfig {
  AdaptMode mode = AdaptMode::batch;
  double lr = 0.1;
  std::size_t epochs = 10;          // batch mode
  std::size_t batch_tokens = 7000;  // batch mode
  double dropout = 0.1;
  double label_smoothing = 0.1;
  // Global gradient-norm cap applied across all trainable tensors before each
  // SGD step; 0 disables. The cap sits well above typical gradient norms so it
  // never slows healthy training, but it stops the runaway feedback loop that
  // plain SGD at adaptation learning rates can otherwise enter on small models.
  double clip_norm = 10.0;
  std::size_t max_updates_per_segment = 3;  // incremental mode
  double ppl_stop = 1.5;                    // incremental mode
  RegionMask region_mask;                   // empty = all regions
  std::optional<std::set<std::string>> tensor_mask;
  bool sparse_vocab = false;
  std::optional<GroupLassoConfig> lasso;
  std::uint64_t seed = 1;

  static AdaptationConfig batch_defaults();
  static AdaptationConfig incremental_defaults();
  void validate() const;
};

struct AdaptationResult {
  OffsetSet offsets;              // one entry per baseline tensor
  std::vector<EpochStats> epochs;
};

// Offline adaptation: minibatch SGD over the corpus for a fixed number of
// epochs, starting from the frozen baseline. The baseline is not modified.
AdaptationResult batch_adapt(const ParameterSet& baseline, const ParallelCorpus& corpus,
                             const AdaptationConfig& cfg);

struct IncrementalStepStats {
  std::size_t segment = 0;  // index into the stream
  std::size_t updates = 0;  // gradient steps taken on this segment
  double final_ppl = 0.0;   // segment perplexity after the last update
  std::vector<std::size_t> hypothesis;  // translation produced before learning
};

struct IncrementalResult {
  OffsetSet offsets;
  std::vector<IncrementalStepStats> steps;
};

// Online adaptation: for each segment in order, first translate it with the
// current parameters, then take 1..max_updates_per_segment gradient steps on
// its reference, stopping early once the segment perplexity reaches ppl_stop.
// `initial` (e.g. the result of a batch run) seeds the offsets when present.
IncrementalResult incremental_adapt(const ParameterSet& baseline, const ParallelCorpus& stream,
                                    const AdaptationConfig& cfg,
                                    const OffsetSet* initial = nullptr);

}  // namespace nmt
