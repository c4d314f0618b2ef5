#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "nmt/corpus.hpp"
#include "nmt/model.hpp"
#include "nmt/tensor.hpp"

namespace nmt {

// Additive offset for one baseline tensor. Zero entries carry nothing;
// dense entries carry a full-shape delta; sparse-rows entries carry a strictly
// increasing row-id list plus one delta row per id, with the underlying
// tensor shape kept alongside.
struct OffsetEntry {
  enum class Kind : std::uint8_t { zero = 0, dense = 1, sparse_rows = 2 };

  Kind kind = Kind::zero;
  Tensor values;                        // dense: full shape; sparse_rows: [ids, width]
  std::vector<std::size_t> row_ids;     // sparse_rows only
  std::vector<std::size_t> full_shape;  // sparse_rows only

  static OffsetEntry zero();
  static OffsetEntry dense(Tensor delta);
  static OffsetEntry sparse_rows(std::vector<std::size_t> ids, Tensor rows,
                                 std::vector<std::size_t> shape);

  bool is_zero() const { return kind == Kind::zero; }
  std::size_t stored_params() const;  // parameters physically stored
  std::size_t full_numel() const;     // size of the underlying tensor (0 for zero entries)
};

// Offsets keyed by tensor name. A name absent from the map means a Zero
// offset; adaptation returns entries for every baseline tensor.
using OffsetSet = std::map<std::string, OffsetEntry>;

struct GroupLassoConfig {
  double lambda = 1e-6;      // regularizer weight
  double theta = 1e-4;       // clipping threshold on mean absolute offset
  double norm_floor = 1e-12; // subgradient denominator guard
  std::set<std::string> clip_exempt = {"src_embed", "tgt_embed", "out_proj"};
};

// Checks names, shapes and row ids against the baseline; throws on mismatch.
void validate_offsets(const OffsetSet& offsets, const ParameterSet& baseline);

// W = W_b + W_u for every tensor. Tensors with Zero offsets share the
// baseline buffers, so their composed values are bit-identical to the
// baseline; the baseline itself is never mutated.
ParameterSet compose(const ParameterSet& baseline, const OffsetSet& offsets);

// Group-lasso penalty sum over tensors: sqrt(|T|) * ||delta_T||_2, with |T|
// the full tensor size and the Euclidean norm taken over the stored offsets.
double group_lasso_penalty(const OffsetSet& offsets);

// Per-entry subgradient of lambda * penalty, structured like the input.
// A tensor with zero offset norm contributes zeros.
OffsetSet group_lasso_subgradient(const OffsetSet& offsets, const GroupLassoConfig& cfg);

// Replaces every non-exempt entry whose mean absolute offset (over the full
// tensor size) is below theta with a Zero entry. Idempotent.
OffsetSet clip_offsets(const OffsetSet& offsets, const GroupLassoConfig& cfg);

// Names of tensors whose mean absolute offset exceeds the threshold. Meant to
// be computed once on a development domain and then frozen as a selection.
std::set<std::string> select_fixed_tensors(const OffsetSet& offsets, double threshold);

// Converts the vocabulary tensors (src_embed source-side; tgt_embed and
// out_proj target-side) to sparse-rows entries holding exactly the ids
// observed in the corpus plus BOS/EOS. Other entries pass through.
OffsetSet restrict_to_observed_vocab(const OffsetSet& offsets, const ParallelCorpus& corpus);

struct OffsetParamReport {
  std::map<std::string, std::size_t> per_tensor;  // stored params, non-zero entries only
  std::map<Region, std::size_t> per_region;
  std::size_t total = 0;
  std::size_t nonzero_tensors = 0;
};
OffsetParamReport offset_param_count(const OffsetSet& offsets, const ModelConfig& config);

}  // namespace nmt
