#include "nmt/model.hpp"

#include <cmath>

#include "nmt/ops.hpp"

namespace nmt {

namespace {

constexpr double kLayerNormEps = 1e-6;

std::string layer_prefix(const char* side, std::size_t layer) {
  return std::string(side) + "." + std::to_string(layer) + ".";
}

}  // namespace

// Shapes of every named tensor for a config; also the single source of truth
// for which names exist.
std::map<std::string, std::vector<std::size_t>> tensor_shapes(const ModelConfig& c) {
  std::map<std::string, std::vector<std::size_t>> shapes;
  const std::size_t d = c.d_model;
  shapes["src_embed"] = {c.src_vocab, d};
  shapes["tgt_embed"] = {c.tgt_vocab, d};
  shapes["out_proj"] = {c.tgt_vocab, d};
  for (std::size_t i = 0; i < c.enc_layers; ++i) {
    const std::string p = layer_prefix("enc", i);
    for (const char* w : {"att.wq", "att.wk", "att.wv", "att.wo"}) shapes[p + w] = {d, d};
    shapes[p + "att_norm.gain"] = {d};
    shapes[p + "att_norm.bias"] = {d};
    shapes[p + "filter.w1"] = {d, c.enc_filter};
    shapes[p + "filter.b1"] = {c.enc_filter};
    shapes[p + "filter.w2"] = {c.enc_filter, d};
    shapes[p + "filter.b2"] = {d};
    shapes[p + "filter_norm.gain"] = {d};
    shapes[p + "filter_norm.bias"] = {d};
  }
  for (std::size_t i = 0; i < c.dec_layers; ++i) {
    const std::string p = layer_prefix("dec", i);
    for (const char* w : {"self_att.wq", "self_att.wk", "self_att.wv", "self_att.wo",
                          "enc_att.wq", "enc_att.wk", "enc_att.wv", "enc_att.wo"})
      shapes[p + w] = {d, d};
    shapes[p + "filter.w"] = {d, d};
    shapes[p + "filter.b"] = {d};
    shapes[p + "norm.gain"] = {d};
    shapes[p + "norm.bias"] = {d};
  }
  return shapes;
}

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Sinusoidal position table for the first len positions.
Tensor positional_encoding(std::size_t len, std::size_t d) {
  Tensor pe = Tensor::zeros({len, d});
  for (std::size_t pos = 0; pos < len; ++pos) {
    for (std::size_t i = 0; 2 * i < d; ++i) {
      const double rate = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(d));
      const double angle = static_cast<double>(pos) * rate;
      pe.at(pos, 2 * i) = std::sin(angle);
      if (2 * i + 1 < d) pe.at(pos, 2 * i + 1) = std::cos(angle);
    }
  }
  return pe;
}

AttentionParams attention_params(const ParameterSet& params, const std::string& prefix) {
  return {params.at(prefix + ".wq"), params.at(prefix + ".wk"), params.at(prefix + ".wv"),
          params.at(prefix + ".wo")};
}

Tensor maybe_dropout(const Tensor& x, const ModelConfig& c, bool train, RandomSource* rng) {
  if (!train || c.dropout == 0.0) return x;
  if (!rng) throw StateError("model: training forward needs a random source for dropout");
  return dropout(x, c.dropout, *rng, true);
}

// Embedding + position signal shared by encoder and decoder inputs.
Tensor embed_sequence(const std::vector<std::size_t>& ids, const Tensor& table,
                      const ModelConfig& c, bool train, RandomSource* rng) {
  Tensor x = scale(embedding(ids, table), std::sqrt(static_cast<double>(c.d_model)));
  x = add(x, positional_encoding(ids.size(), c.d_model));
  return maybe_dropout(x, c, train, rng);
}

// Full decoder stack over a BOS-prefixed input sequence.
Tensor decoder_states(const std::vector<std::size_t>& tgt_in, const Tensor& enc_states,
                      const ParameterSet& params, bool train, RandomSource* rng) {
  const ModelConfig& c = params.config;
  Tensor y = embed_sequence(tgt_in, params.at("tgt_embed"), c, train, rng);
  const Tensor mask = causal_mask(tgt_in.size());
  for (std::size_t i = 0; i < c.dec_layers; ++i) {
    const std::string p = layer_prefix("dec", i);
    Tensor self = multi_head_attention(y, y, y, &mask, attention_params(params, p + "self_att"),
                                       c.heads);
    y = add(y, maybe_dropout(self, c, train, rng));
    Tensor cross = multi_head_attention(y, enc_states, enc_states, nullptr,
                                        attention_params(params, p + "enc_att"), c.heads);
    y = add(y, maybe_dropout(cross, c, train, rng));
    Tensor f = decoder_filter(y, params.at(p + "filter.w"), params.at(p + "filter.b"));
    y = add(y, maybe_dropout(f, c, train, rng));
    y = layer_norm(y, params.at(p + "norm.gain"), params.at(p + "norm.bias"), kLayerNormEps);
  }
  return y;
}

}  // namespace

void ModelConfig::validate() const {
  if (src_vocab == 0 || tgt_vocab == 0) throw ConfigError("config: vocabulary sizes must be positive");
  if (tgt_vocab <= kEosId) throw ConfigError("config: target vocabulary too small for BOS/EOS");
  if (d_model == 0 || enc_layers == 0 || dec_layers == 0 || enc_filter == 0 || heads == 0)
    throw ConfigError("config: zero-sized model dimension");
  if (d_model % heads != 0) throw ConfigError("config: heads must divide d_model");
  if (max_len < 2) throw ConfigError("config: max_len too small");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("config: dropout outside [0, 1)");
}

Tensor& ParameterSet::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw LookupError("parameters: unknown tensor " + name);
  return it->second;
}

const Tensor& ParameterSet::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw LookupError("parameters: unknown tensor " + name);
  return it->second;
}

std::vector<std::string> ParameterSet::names() const {
  std::vector<std::string> out;
  out.reserve(tensors.size());
  for (const auto& [name, t] : tensors) out.push_back(name);
  return out;
}

void ParameterSet::make_all_trainable() {
  for (auto& [name, t] : tensors) t.make_trainable();
}

void ParameterSet::zero_grads() {
  for (auto& [name, t] : tensors) t.zero_grad();
}

ParameterSet ParameterSet::deep_copy() const {
  ParameterSet out;
  out.config = config;
  for (const auto& [name, t] : tensors) out.tensors[name] = t.deep_copy();
  return out;
}

std::vector<std::string> tensor_names(const ModelConfig& config) {
  std::vector<std::string> out;
  for (const auto& [name, shape] : tensor_shapes(config)) out.push_back(name);
  return out;
}

ParameterSet init_parameters(const ModelConfig& config, RandomSource& rng) {
  config.validate();
  ParameterSet params;
  params.config = config;
  for (const auto& [name, shape] : tensor_shapes(config)) {
    Tensor t = Tensor::zeros(shape);
    if (shape.size() == 2) {
      const double limit =
          std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
      for (std::size_t i = 0; i < t.numel(); ++i) t.at(i) = rng.uniform(-limit, limit);
    } else if (ends_with(name, ".gain")) {
      for (std::size_t i = 0; i < t.numel(); ++i) t.at(i) = 1.0;
    }
    params.tensors[name] = std::move(t);
  }
  return params;
}

std::string_view region_name(Region r) {
  switch (r) {
    case Region::outer_layers: return "outer-layers";
    case Region::inner_layers: return "inner-layers";
    case Region::encoder_embedding: return "encoder-embedding";
    case Region::decoder_embedding: return "decoder-embedding";
    case Region::output_projection: return "output-projection";
  }
  throw LookupError("region: unknown enum value");
}

std::optional<Region> region_from_name(std::string_view name) {
  for (Region r : {Region::outer_layers, Region::inner_layers, Region::encoder_embedding,
                   Region::decoder_embedding, Region::output_projection})
    if (region_name(r) == name) return r;
  return std::nullopt;
}

RegionMask all_regions() {
  return {Region::outer_layers, Region::inner_layers, Region::encoder_embedding,
          Region::decoder_embedding, Region::output_projection};
}

Region region_of(const std::string& tensor_name, const ModelConfig& config) {
  if (tensor_name == "src_embed") return Region::encoder_embedding;
  if (tensor_name == "tgt_embed") return Region::decoder_embedding;
  if (tensor_name == "out_proj") return Region::output_projection;
  const bool enc = tensor_name.rfind("enc.", 0) == 0;
  const bool dec = tensor_name.rfind("dec.", 0) == 0;
  if (enc || dec) {
    const std::size_t dot = tensor_name.find('.', 4);
    if (dot != std::string::npos) {
      std::size_t layer = 0;
      const std::string digits = tensor_name.substr(4, dot - 4);
      if (!digits.empty() && digits.find_first_not_of("0123456789") == std::string::npos) {
        layer = std::stoul(digits);
        const std::size_t count = enc ? config.enc_layers : config.dec_layers;
        if (layer < count) {
          return (layer == 0 || layer + 1 == count) ? Region::outer_layers : Region::inner_layers;
        }
      }
    }
  }
  throw LookupError("region: tensor name not in naming scheme: " + tensor_name);
}

ParamCountReport param_count(const ModelConfig& config) {
  config.validate();
  ParamCountReport report;
  for (const auto& [name, shape] : tensor_shapes(config)) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    report.per_tensor[name] = n;
    report.per_region[region_of(name, config)] += n;
    report.total += n;
  }
  return report;
}

Tensor causal_mask(std::size_t n) {
  if (n == 0) throw DimensionError("causal_mask: zero length");
  Tensor m = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) m.at(i, j) = kMaskedScore;
  return m;
}

Tensor multi_head_attention(const Tensor& queries, const Tensor& keys, const Tensor& values,
                            const Tensor* mask, const AttentionParams& p, std::size_t heads,
                            AttentionProbe* probe) {
  const std::size_t d = queries.cols();
  if (keys.cols() != d || values.cols() != d)
    throw DimensionError("attention: query/key/value widths disagree");
  if (keys.rows() != values.rows())
    throw DimensionError("attention: key/value lengths disagree");
  for (const Tensor* w : {&p.wq, &p.wk, &p.wv, &p.wo})
    if (w->rank() != 2 || w->rows() != d || w->cols() != d)
      throw DimensionError("attention: projection shape mismatch");
  if (heads == 0 || d % heads != 0) throw ConfigError("attention: heads must divide width");
  if (mask && (mask->rows() != queries.rows() || mask->cols() != keys.rows()))
    throw DimensionError("attention: mask shape does not match query/key lengths");

  const std::size_t dh = d / heads;
  Tensor q = matmul(queries, p.wq);
  Tensor k = matmul(keys, p.wk);
  Tensor v = matmul(values, p.wv);
  std::vector<Tensor> ctx;
  ctx.reserve(heads);
  const double scl = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, dh);
    Tensor kh = slice_cols(k, h * dh, dh);
    Tensor vh = slice_cols(v, h * dh, dh);
    Tensor scores = scale(matmul_nt(qh, kh), scl);
    if (mask) scores = add(scores, *mask);
    Tensor weights = softmax(scores);
    if (probe)
      probe->head_weights.push_back(
          Tensor::from(weights.shape, std::vector<double>(weights.data->begin(), weights.data->end())));
    ctx.push_back(matmul(weights, vh));
  }
  return matmul(concat_cols(ctx), p.wo);
}

Tensor encoder_filter(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
                      const Tensor& b2) {
  return add_row(matmul(relu(add_row(matmul(x, w1), b1)), w2), b2);
}

Tensor decoder_filter(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_row(matmul(x, w), b);
}

Tensor encode(const std::vector<std::size_t>& source, const ParameterSet& params, bool train,
              RandomSource* rng) {
  const ModelConfig& c = params.config;
  if (source.empty()) throw LengthError("encode: empty source");
  if (source.size() > c.max_len) throw LengthError("encode: source longer than max_len");
  Tensor x = embed_sequence(source, params.at("src_embed"), c, train, rng);
  for (std::size_t i = 0; i < c.enc_layers; ++i) {
    const std::string p = layer_prefix("enc", i);
    Tensor att = multi_head_attention(x, x, x, nullptr, attention_params(params, p + "att"),
                                      c.heads);
    x = layer_norm(add(x, maybe_dropout(att, c, train, rng)), params.at(p + "att_norm.gain"),
                   params.at(p + "att_norm.bias"), kLayerNormEps);
    Tensor f = encoder_filter(x, params.at(p + "filter.w1"), params.at(p + "filter.b1"),
                              params.at(p + "filter.w2"), params.at(p + "filter.b2"));
    x = layer_norm(add(x, maybe_dropout(f, c, train, rng)), params.at(p + "filter_norm.gain"),
                   params.at(p + "filter_norm.bias"), kLayerNormEps);
  }
  return x;
}

DecodeResult decode_train(const Segment& segment, const Tensor& enc_states,
                          const ParameterSet& params, double eps_ls, bool train,
                          RandomSource* rng, double word_dropout) {
  const ModelConfig& c = params.config;
  if (segment.target.empty()) throw LengthError("decode: empty target");
  if (segment.target.size() + 1 > c.max_len)
    throw LengthError("decode: target longer than max_len");
  if (enc_states.rank() != 2 || enc_states.cols() != c.d_model)
    throw DimensionError("decode: encoder states have wrong width");

  std::vector<std::size_t> tgt_in;
  tgt_in.reserve(segment.target.size() + 1);
  tgt_in.push_back(kBosId);
  tgt_in.insert(tgt_in.end(), segment.target.begin(), segment.target.end());
  if (train && rng && word_dropout > 0.0) {
    const std::size_t vocab = params.at("tgt_embed").rows();
    for (std::size_t i = 1; i < tgt_in.size(); ++i) {
      if (!rng->bernoulli(word_dropout)) continue;
      // Substitute a random non-special token so corrupted inputs stay inside
      // the distribution the decoder sees at inference time; fall back to UNK
      // for vocabularies that are all specials.
      tgt_in[i] = vocab > kUnkId + 1
                      ? kUnkId + 1 + static_cast<std::size_t>(
                                         rng->uniform_int(vocab - (kUnkId + 1)))
                      : kUnkId;
    }
  }
  std::vector<std::size_t> tgt_out(segment.target);
  tgt_out.push_back(kEosId);

  Tensor y = decoder_states(tgt_in, enc_states, params, train, rng);
  Tensor logits = matmul_nt(y, params.at("out_proj"));
  Tensor loss = cross_entropy_label_smoothed(logits, tgt_out, eps_ls);
  return {loss, logits};
}

std::vector<std::size_t> greedy_decode(const std::vector<std::size_t>& source,
                                       const ParameterSet& params, std::size_t max_steps) {
  NoGradGuard no_grad;
  const ModelConfig& c = params.config;
  Tensor enc = encode(source, params, false, nullptr);
  std::vector<std::size_t> emitted;
  std::vector<std::size_t> tgt_in{kBosId};
  while (emitted.size() < max_steps && tgt_in.size() < c.max_len) {
    Tensor y = decoder_states(tgt_in, enc, params, false, nullptr);
    Tensor logits = matmul_nt(y, params.at("out_proj"));
    const std::size_t last = logits.rows() - 1;
    std::size_t best = 0;
    double best_v = logits.at(last, 0);
    for (std::size_t cix = 1; cix < logits.cols(); ++cix) {
      if (logits.at(last, cix) > best_v) {
        best_v = logits.at(last, cix);
        best = cix;
      }
    }
    if (best == kEosId) break;
    emitted.push_back(best);
    tgt_in.push_back(best);
  }
  return emitted;
}

double perplexity(const Segment& segment, const ParameterSet& params) {
  NoGradGuard no_grad;
  Tensor enc = encode(segment.source, params, false, nullptr);
  DecodeResult r = decode_train(segment, enc, params, 0.0, false, nullptr);
  return std::exp(r.loss.scalar());
}

}  // namespace nmt
