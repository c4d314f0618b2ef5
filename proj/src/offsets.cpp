#include "nmt/offsets.hpp"

#include <algorithm>
#include <cmath>

namespace nmt {

OffsetEntry OffsetEntry::zero() { return {}; }

OffsetEntry OffsetEntry::dense(Tensor delta) {
  if (!delta.defined() || delta.numel() == 0) throw DimensionError("offset: empty dense delta");
  OffsetEntry e;
  e.kind = Kind::dense;
  e.values = std::move(delta);
  return e;
}

OffsetEntry OffsetEntry::sparse_rows(std::vector<std::size_t> ids, Tensor rows,
                                     std::vector<std::size_t> shape) {
  if (shape.size() != 2) throw DimensionError("offset: sparse rows need a 2-D base shape");
  if (!rows.defined() || rows.rank() != 2 || rows.rows() != ids.size() || rows.cols() != shape[1])
    throw DimensionError("offset: sparse row payload shape mismatch");
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= shape[0]) throw IndexError("offset: sparse row id out of range");
    if (i > 0 && ids[i] <= ids[i - 1])
      throw IndexError("offset: sparse row ids must be strictly increasing");
  }
  OffsetEntry e;
  e.kind = Kind::sparse_rows;
  e.values = std::move(rows);
  e.row_ids = std::move(ids);
  e.full_shape = std::move(shape);
  return e;
}

std::size_t OffsetEntry::stored_params() const {
  return kind == Kind::zero ? 0 : values.numel();
}

std::size_t OffsetEntry::full_numel() const {
  switch (kind) {
    case Kind::zero: return 0;
    case Kind::dense: return values.numel();
    case Kind::sparse_rows: return full_shape[0] * full_shape[1];
  }
  return 0;
}

void validate_offsets(const OffsetSet& offsets, const ParameterSet& baseline) {
  for (const auto& [name, entry] : offsets) {
    if (!baseline.has(name))
      throw CompatibilityError("offsets: tensor " + name + " not in baseline");
    const Tensor& base = baseline.at(name);
    switch (entry.kind) {
      case OffsetEntry::Kind::zero:
        break;
      case OffsetEntry::Kind::dense:
        if (!entry.values.same_shape(base))
          throw DimensionError("offsets: dense shape mismatch for " + name);
        break;
      case OffsetEntry::Kind::sparse_rows:
        if (entry.full_shape != base.shape)
          throw DimensionError("offsets: sparse base shape mismatch for " + name);
        break;
    }
  }
}

ParameterSet compose(const ParameterSet& baseline, const OffsetSet& offsets) {
  validate_offsets(offsets, baseline);
  ParameterSet out;
  out.config = baseline.config;
  for (const auto& [name, base] : baseline.tensors) {
    auto it = offsets.find(name);
    if (it == offsets.end() || it->second.is_zero()) {
      out.tensors[name] = base;  // shares the baseline buffer
      continue;
    }
    const OffsetEntry& entry = it->second;
    Tensor composed = base.deep_copy();
    composed.requires_grad = false;
    composed.grad.reset();
    if (entry.kind == OffsetEntry::Kind::dense) {
      const double* d = entry.values.ptr();
      double* p = composed.ptr();
      for (std::size_t i = 0; i < composed.numel(); ++i) p[i] += d[i];
    } else {
      const std::size_t width = entry.full_shape[1];
      double* p = composed.ptr();
      const double* rows = entry.values.ptr();
      for (std::size_t r = 0; r < entry.row_ids.size(); ++r) {
        double* dst = p + entry.row_ids[r] * width;
        const double* src = rows + r * width;
        for (std::size_t c = 0; c < width; ++c) dst[c] += src[c];
      }
    }
    out.tensors[name] = std::move(composed);
  }
  return out;
}

namespace {

double entry_l2_norm(const OffsetEntry& entry) {
  if (entry.is_zero()) return 0.0;
  double sq = 0.0;
  const double* v = entry.values.ptr();
  for (std::size_t i = 0; i < entry.values.numel(); ++i) sq += v[i] * v[i];
  return std::sqrt(sq);
}

double entry_mean_abs(const OffsetEntry& entry) {
  if (entry.is_zero()) return 0.0;
  double sum = 0.0;
  const double* v = entry.values.ptr();
  for (std::size_t i = 0; i < entry.values.numel(); ++i) sum += std::abs(v[i]);
  return sum / static_cast<double>(entry.full_numel());
}

}  // namespace

double group_lasso_penalty(const OffsetSet& offsets) {
  double total = 0.0;
  for (const auto& [name, entry] : offsets) {
    if (entry.is_zero()) continue;
    total += std::sqrt(static_cast<double>(entry.full_numel())) * entry_l2_norm(entry);
  }
  return total;
}

OffsetSet group_lasso_subgradient(const OffsetSet& offsets, const GroupLassoConfig& cfg) {
  if (cfg.norm_floor <= 0.0) throw ConfigError("group_lasso: norm floor must be positive");
  OffsetSet grads;
  for (const auto& [name, entry] : offsets) {
    if (entry.is_zero()) {
      grads[name] = OffsetEntry::zero();
      continue;
    }
    const double norm = entry_l2_norm(entry);
    const double coef = cfg.lambda * std::sqrt(static_cast<double>(entry.full_numel())) /
                        std::max(norm, cfg.norm_floor);
    Tensor g = Tensor::zeros(entry.values.shape);
    const double* v = entry.values.ptr();
    double* p = g.ptr();
    for (std::size_t i = 0; i < g.numel(); ++i) p[i] = coef * v[i];
    OffsetEntry out = entry;
    out.values = std::move(g);
    grads[name] = std::move(out);
  }
  return grads;
}

OffsetSet clip_offsets(const OffsetSet& offsets, const GroupLassoConfig& cfg) {
  OffsetSet out;
  for (const auto& [name, entry] : offsets) {
    if (!entry.is_zero() && cfg.clip_exempt.count(name) == 0 && entry_mean_abs(entry) < cfg.theta) {
      out[name] = OffsetEntry::zero();
    } else {
      out[name] = entry;
    }
  }
  return out;
}

std::set<std::string> select_fixed_tensors(const OffsetSet& offsets, double threshold) {
  std::set<std::string> selected;
  for (const auto& [name, entry] : offsets)
    if (entry_mean_abs(entry) > threshold) selected.insert(name);
  return selected;
}

OffsetSet restrict_to_observed_vocab(const OffsetSet& offsets, const ParallelCorpus& corpus) {
  if (corpus.empty()) throw DataError("restrict: empty corpus");
  const std::vector<std::size_t> src_ids = observed_source_ids(corpus);
  const std::vector<std::size_t> tgt_ids = observed_target_ids(corpus);

  OffsetSet out;
  for (const auto& [name, entry] : offsets) {
    const bool src_side = name == "src_embed";
    const bool tgt_side = name == "tgt_embed" || name == "out_proj";
    if ((!src_side && !tgt_side) || entry.is_zero()) {
      out[name] = entry;
      continue;
    }
    const std::vector<std::size_t>& allowed = src_side ? src_ids : tgt_ids;
    std::vector<std::size_t> shape =
        entry.kind == OffsetEntry::Kind::dense ? entry.values.shape : entry.full_shape;
    std::vector<std::size_t> ids;
    for (std::size_t id : allowed)
      if (id < shape[0]) ids.push_back(id);
    Tensor rows = Tensor::zeros({ids.size(), shape[1]});
    for (std::size_t r = 0; r < ids.size(); ++r) {
      for (std::size_t c = 0; c < shape[1]; ++c) {
        double v = 0.0;
        if (entry.kind == OffsetEntry::Kind::dense) {
          v = entry.values.at(ids[r], c);
        } else {
          auto it = std::lower_bound(entry.row_ids.begin(), entry.row_ids.end(), ids[r]);
          if (it != entry.row_ids.end() && *it == ids[r])
            v = entry.values.at(static_cast<std::size_t>(it - entry.row_ids.begin()), c);
        }
        rows.at(r, c) = v;
      }
    }
    out[name] = OffsetEntry::sparse_rows(std::move(ids), std::move(rows), std::move(shape));
  }
  return out;
}

OffsetParamReport offset_param_count(const OffsetSet& offsets, const ModelConfig& config) {
  OffsetParamReport report;
  for (const auto& [name, entry] : offsets) {
    const std::size_t stored = entry.stored_params();
    if (stored == 0) continue;
    report.per_tensor[name] = stored;
    report.per_region[region_of(name, config)] += stored;
    report.total += stored;
    report.nonzero_tensors += 1;
  }
  return report;
}

}  // namespace nmt
