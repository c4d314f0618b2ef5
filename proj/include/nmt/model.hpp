#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "nmt/tensor.hpp"

namespace nmt {

// Reserved token ids shared by every vocabulary.
inline constexpr std::size_t kPadId = 0;
inline constexpr std::size_t kBosId = 1;
inline constexpr std::size_t kEosId = 2;
inline constexpr std::size_t kUnkId = 3;

// Additive attention-mask value for disallowed positions: large enough that
// exp() underflows to exactly zero after max subtraction, while keeping all
// tensor values finite.
inline constexpr double kMaskedScore = -1e30;

struct ModelConfig {
  std::size_t src_vocab = 0;
  std::size_t tgt_vocab = 0;
  std::size_t d_model = 256;
  std::size_t enc_layers = 6;
  std::size_t dec_layers = 3;
  std::size_t enc_filter = 512;  // hidden width of the encoder filter
  std::size_t heads = 4;
  std::size_t max_len = 256;
  double dropout = 0.1;

  void validate() const;  // ConfigError on nonsense
  bool operator==(const ModelConfig&) const = default;
};

// One source/target id pair. Both sides are plain token ids; BOS/EOS
// bracketing of the target happens inside the training/decoding paths.
struct Segment {
  std::vector<std::size_t> source;
  std::vector<std::size_t> target;
};

// Named model tensors plus the config they were built for. Iteration order
// (lexicographic by name) is the canonical tensor order for persistence.
struct ParameterSet {
  ModelConfig config;
  std::map<std::string, Tensor> tensors;

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const { return tensors.count(name) != 0; }
  std::vector<std::string> names() const;
  void make_all_trainable();
  void zero_grads();
  ParameterSet deep_copy() const;
};

// Canonical tensor names for a config, e.g. "enc.0.att.wq", "dec.1.filter.w",
// "src_embed". The set of names is a pure function of the config.
std::vector<std::string> tensor_names(const ModelConfig& config);

// Shape of every named tensor; the single source of truth for the scheme.
std::map<std::string, std::vector<std::size_t>> tensor_shapes(const ModelConfig& config);

// Fan-based uniform init for matrices, zeros for biases, ones/zeros for
// layer-norm gain/bias. Deterministic given the seed stream.
ParameterSet init_parameters(const ModelConfig& config, RandomSource& rng);

// ===== regions =====

enum class Region { outer_layers, inner_layers, encoder_embedding, decoder_embedding, output_projection };

std::string_view region_name(Region r);
std::optional<Region> region_from_name(std::string_view name);
using RegionMask = std::set<Region>;
RegionMask all_regions();

// Maps a tensor name to its region: first/last encoder and decoder layers are
// outer, remaining layers inner, plus the three vocabulary tensors. Unknown
// names raise LookupError.
Region region_of(const std::string& tensor_name, const ModelConfig& config);

struct ParamCountReport {
  std::map<std::string, std::size_t> per_tensor;
  std::map<Region, std::size_t> per_region;
  std::size_t total = 0;
};
ParamCountReport param_count(const ModelConfig& config);

// ===== forward paths =====

struct AttentionParams {
  Tensor wq, wk, wv, wo;
};

// Optional tap for tests: per-head attention weight matrices [len_q, len_k].
struct AttentionProbe {
  std::vector<Tensor> head_weights;
};

// Additive causal mask: position j may attend to positions <= j.
Tensor causal_mask(std::size_t n);

Tensor multi_head_attention(const Tensor& queries, const Tensor& keys, const Tensor& values,
                            const Tensor* mask, const AttentionParams& p, std::size_t heads,
                            AttentionProbe* probe = nullptr);

// Two-linear relu filter: max(0, x W1 + b1) W2 + b2.
Tensor encoder_filter(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
                      const Tensor& b2);
// Single linear map without activation: x W + b.
Tensor decoder_filter(const Tensor& x, const Tensor& w, const Tensor& b);

// Encodes a source id sequence to per-position states [len, d_model].
// rng is only consulted when train is true and dropout is active.
Tensor encode(const std::vector<std::size_t>& source, const ParameterSet& params, bool train,
              RandomSource* rng);

struct DecodeResult {
  Tensor loss;    // scalar: mean label-smoothed CE over target positions (incl. EOS)
  Tensor logits;  // [target_len + 1, tgt_vocab]
};

// Teacher-forced decoder pass: input is the BOS-prefixed target, the loss is
// scored against the EOS-suffixed target. When training, word_dropout replaces
// each decoder input token (never BOS) with a random vocabulary token at the
// given rate, which weans the decoder off copying its input and onto the
// source states; the loss labels are never corrupted.
DecodeResult decode_train(const Segment& segment, const Tensor& enc_states,
                          const ParameterSet& params, double eps_ls, bool train,
                          RandomSource* rng, double word_dropout = 0.0);

// Greedy argmax decoding; ties resolve to the lowest token id. Stops at EOS
// or after max_steps tokens, whichever comes first.
std::vector<std::size_t> greedy_decode(const std::vector<std::size_t>& source,
                                       const ParameterSet& params, std::size_t max_steps);

// exp(mean per-token NLL) of the reference under the model, with label
// smoothing off and dropout off.
double perplexity(const Segment& segment, const ParameterSet& params);

}  // namespace nmt
