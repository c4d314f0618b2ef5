#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nmt/model.hpp"
#include "nmt/offsets.hpp"

using namespace nmt;

namespace {

ModelConfig fixture_config() {
  ModelConfig c;
  c.src_vocab = 8;
  c.tgt_vocab = 8;
  c.d_model = 2;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.enc_filter = 4;
  c.heads = 1;
  c.max_len = 16;
  c.dropout = 0.0;
  return c;
}

ParameterSet fixture_baseline(std::uint64_t seed = 5) {
  RandomSource rng(seed);
  return init_parameters(fixture_config(), rng);
}

// Full-shape materialization of an offset entry, for oracle comparisons.
Tensor materialize(const OffsetEntry& entry, const std::vector<std::size_t>& shape) {
  Tensor full = Tensor::zeros(shape);
  if (entry.kind == OffsetEntry::Kind::dense) {
    for (std::size_t i = 0; i < full.numel(); ++i) full.at(i) = entry.values.at(i);
  } else if (entry.kind == OffsetEntry::Kind::sparse_rows) {
    for (std::size_t r = 0; r < entry.row_ids.size(); ++r)
      for (std::size_t c = 0; c < shape[1]; ++c)
        full.at(entry.row_ids[r], c) = entry.values.at(r, c);
  }
  return full;
}

}  // namespace

// ===== entry construction =====

TEST_CASE("offset entry factories validate their payloads") {
  CHECK(OffsetEntry::zero().is_zero());
  CHECK(OffsetEntry::zero().stored_params() == 0);
  CHECK(OffsetEntry::zero().full_numel() == 0);

  OffsetEntry d = OffsetEntry::dense(Tensor::full({2, 3}, 1.0));
  CHECK(d.stored_params() == 6);
  CHECK(d.full_numel() == 6);
  CHECK_THROWS_AS(OffsetEntry::dense(Tensor{}), DimensionError);

  OffsetEntry s = OffsetEntry::sparse_rows({1, 3}, Tensor::zeros({2, 4}), {6, 4});
  CHECK(s.stored_params() == 8);
  CHECK(s.full_numel() == 24);
  CHECK_THROWS_AS(OffsetEntry::sparse_rows({3, 1}, Tensor::zeros({2, 4}), {6, 4}), IndexError);
  CHECK_THROWS_AS(OffsetEntry::sparse_rows({1, 1}, Tensor::zeros({2, 4}), {6, 4}), IndexError);
  CHECK_THROWS_AS(OffsetEntry::sparse_rows({1, 6}, Tensor::zeros({2, 4}), {6, 4}), IndexError);
  CHECK_THROWS_AS(OffsetEntry::sparse_rows({1}, Tensor::zeros({2, 4}), {6, 4}), DimensionError);
  CHECK_THROWS_AS(OffsetEntry::sparse_rows({1, 3}, Tensor::zeros({2, 3}), {6, 4}), DimensionError);
  CHECK_THROWS_AS(OffsetEntry::sparse_rows({0}, Tensor::zeros({1, 4}), {6}), DimensionError);
}

// ===== validation against a baseline =====

TEST_CASE("offset validation checks names and shapes") {
  ParameterSet base = fixture_baseline();
  OffsetSet ok;
  ok["src_embed"] = OffsetEntry::dense(Tensor::zeros({8, 2}));
  ok["enc.0.att.wq"] = OffsetEntry::zero();
  ok["out_proj"] = OffsetEntry::sparse_rows({1, 2}, Tensor::zeros({2, 2}), {8, 2});
  CHECK_NOTHROW(validate_offsets(ok, base));

  OffsetSet unknown;
  unknown["nonsense"] = OffsetEntry::zero();
  CHECK_THROWS_AS(validate_offsets(unknown, base), CompatibilityError);

  OffsetSet bad_dense;
  bad_dense["src_embed"] = OffsetEntry::dense(Tensor::zeros({7, 2}));
  CHECK_THROWS_AS(validate_offsets(bad_dense, base), DimensionError);

  OffsetSet bad_sparse;
  bad_sparse["out_proj"] = OffsetEntry::sparse_rows({1}, Tensor::zeros({1, 2}), {9, 2});
  CHECK_THROWS_AS(validate_offsets(bad_sparse, base), DimensionError);
}

// ===== composition =====

TEST_CASE("zero offsets share the baseline buffers bit for bit") {
  ParameterSet base = fixture_baseline();
  OffsetSet offsets;
  for (const auto& name : base.names()) offsets[name] = OffsetEntry::zero();
  ParameterSet composed = compose(base, offsets);
  for (const auto& name : base.names()) {
    CHECK(composed.at(name).data == base.at(name).data);  // the same storage
  }
  // An entirely absent offset map behaves the same way.
  ParameterSet composed2 = compose(base, {});
  CHECK(composed2.at("out_proj").data == base.at("out_proj").data);
}

TEST_CASE("dense and sparse offsets add onto the baseline without mutating it") {
  ParameterSet base = fixture_baseline();
  const double before = base.at("src_embed").at(0, 0);

  OffsetSet offsets;
  offsets["src_embed"] = OffsetEntry::dense(Tensor::full({8, 2}, 0.25));
  Tensor rows = Tensor::from({2, 2}, {1.0, 2.0, 3.0, 4.0});
  offsets["out_proj"] = OffsetEntry::sparse_rows({2, 5}, rows, {8, 2});

  ParameterSet composed = compose(base, offsets);
  CHECK(composed.at("src_embed").at(0, 0) == doctest::Approx(before + 0.25));
  CHECK(base.at("src_embed").at(0, 0) == before);  // untouched

  for (std::size_t r = 0; r < 8; ++r) {
    for (std::size_t c = 0; c < 2; ++c) {
      double expect = base.at("out_proj").at(r, c);
      if (r == 2) expect += rows.at(0, c);
      if (r == 5) expect += rows.at(1, c);
      CHECK(composed.at("out_proj").at(r, c) == doctest::Approx(expect));
    }
  }
  // Untouched tensors still share storage.
  CHECK(composed.at("tgt_embed").data == base.at("tgt_embed").data);
}

TEST_CASE("compose minus baseline reproduces the materialized offsets") {
  ParameterSet base = fixture_baseline();
  RandomSource rng(33);
  OffsetSet offsets;
  offsets["enc.0.att.wq"] = OffsetEntry::dense([&] {
    Tensor t = Tensor::zeros({2, 2});
    for (std::size_t i = 0; i < 4; ++i) t.at(i) = rng.uniform(-1.0, 1.0);
    return t;
  }());
  offsets["tgt_embed"] = OffsetEntry::sparse_rows({0, 4, 7}, [&] {
    Tensor t = Tensor::zeros({3, 2});
    for (std::size_t i = 0; i < 6; ++i) t.at(i) = rng.uniform(-1.0, 1.0);
    return t;
  }(), {8, 2});
  offsets["dec.0.norm.gain"] = OffsetEntry::zero();

  ParameterSet composed = compose(base, offsets);
  for (const auto& [name, entry] : offsets) {
    Tensor expect = materialize(entry, base.at(name).shape);
    const Tensor& b = base.at(name);
    const Tensor& c = composed.at(name);
    for (std::size_t i = 0; i < b.numel(); ++i)
      CHECK(c.at(i) - b.at(i) == doctest::Approx(expect.at(i)).epsilon(1e-12));
  }
}

// ===== group lasso =====

TEST_CASE("penalty is sqrt(size) times the offset norm, summed") {
  OffsetSet offsets;
  offsets["a"] = OffsetEntry::dense(Tensor::full({2, 2}, 0.5));  // sqrt(4)*1 = 2
  CHECK(group_lasso_penalty(offsets) == doctest::Approx(2.0).epsilon(1e-12));

  // A sparse entry uses the full tensor size but the stored norm:
  // sqrt(8) * sqrt(2 * 0.25) = 2.
  offsets["b"] = OffsetEntry::sparse_rows({3}, Tensor::full({1, 2}, 0.5), {4, 2});
  CHECK(group_lasso_penalty(offsets) == doctest::Approx(4.0).epsilon(1e-12));

  offsets["c"] = OffsetEntry::zero();
  CHECK(group_lasso_penalty(offsets) == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("subgradient scales the offset by lambda sqrt(size) over the norm") {
  GroupLassoConfig cfg;
  cfg.lambda = 2.0;
  OffsetSet offsets;
  offsets["a"] = OffsetEntry::dense(Tensor::full({2, 2}, 0.5));  // norm 1
  OffsetSet grads = group_lasso_subgradient(offsets, cfg);
  // coefficient = 2 * sqrt(4) / 1 = 4, each entry 4 * 0.5 = 2.
  for (std::size_t i = 0; i < 4; ++i) CHECK(grads.at("a").values.at(i) == doctest::Approx(2.0));
}

TEST_CASE("subgradient of a vanishing offset stays finite via the norm floor") {
  GroupLassoConfig cfg;
  cfg.lambda = 1.0;
  cfg.norm_floor = 1e-12;
  OffsetSet offsets;
  offsets["a"] = OffsetEntry::dense(Tensor::full({2, 2}, 0.0));
  OffsetSet grads = group_lasso_subgradient(offsets, cfg);
  CHECK(grads.at("a").values.all_finite());
  for (std::size_t i = 0; i < 4; ++i) CHECK(grads.at("a").values.at(i) == 0.0);

  offsets["b"] = OffsetEntry::zero();
  grads = group_lasso_subgradient(offsets, cfg);
  CHECK(grads.at("b").is_zero());
}

TEST_CASE("subgradient agrees with numeric differentiation of the penalty") {
  RandomSource rng(41);
  OffsetSet offsets;
  Tensor d = Tensor::zeros({3, 2});
  for (std::size_t i = 0; i < 6; ++i) d.at(i) = rng.uniform(0.2, 1.0);
  offsets["w"] = OffsetEntry::dense(d);
  GroupLassoConfig cfg;
  cfg.lambda = 0.7;
  OffsetSet grads = group_lasso_subgradient(offsets, cfg);

  const double h = 1e-7;
  for (std::size_t i = 0; i < 6; ++i) {
    OffsetSet plus = offsets, minus = offsets;
    Tensor dp = d.deep_copy(), dm = d.deep_copy();
    dp.at(i) += h;
    dm.at(i) -= h;
    plus["w"] = OffsetEntry::dense(dp);
    minus["w"] = OffsetEntry::dense(dm);
    const double numeric =
        cfg.lambda * (group_lasso_penalty(plus) - group_lasso_penalty(minus)) / (2.0 * h);
    CHECK(grads.at("w").values.at(i) == doctest::Approx(numeric).epsilon(1e-5));
  }
}

// ===== clipping and selection =====

TEST_CASE("clipping zeroes small non-exempt tensors and spares exempt ones") {
  GroupLassoConfig cfg;
  cfg.theta = 1e-4;
  OffsetSet offsets;
  offsets["enc.0.att.wq"] = OffsetEntry::dense(Tensor::full({2, 2}, 1e-5));  // mean 1e-5
  offsets["enc.0.att.wk"] = OffsetEntry::dense(Tensor::full({2, 2}, 1e-3));  // mean 1e-3
  offsets["src_embed"] = OffsetEntry::dense(Tensor::full({8, 2}, 1e-9));     // exempt
  OffsetSet clipped = clip_offsets(offsets, cfg);
  CHECK(clipped.at("enc.0.att.wq").is_zero());
  CHECK_FALSE(clipped.at("enc.0.att.wk").is_zero());
  CHECK_FALSE(clipped.at("src_embed").is_zero());

  // Idempotent.
  OffsetSet twice = clip_offsets(clipped, cfg);
  CHECK(twice.at("enc.0.att.wq").is_zero());
  CHECK_FALSE(twice.at("enc.0.att.wk").is_zero());
}

TEST_CASE("clipping judges sparse entries by the mean over the full tensor") {
  GroupLassoConfig cfg;
  cfg.theta = 1e-4;
  // One stored row of 0.001s in a 100-row tensor: mean over the full tensor
  // is 1e-5, below the threshold.
  OffsetSet offsets;
  offsets["dec.0.filter.w"] =
      OffsetEntry::sparse_rows({7}, Tensor::full({1, 2}, 1e-3), {100, 2});
  CHECK(clip_offsets(offsets, cfg).at("dec.0.filter.w").is_zero());
}

TEST_CASE("clipping keeps a tensor sitting exactly at the threshold") {
  GroupLassoConfig cfg;
  cfg.theta = 1e-4;
  OffsetSet offsets;
  offsets["enc.0.att.wq"] = OffsetEntry::dense(Tensor::full({2, 2}, 1e-4));
  CHECK_FALSE(clip_offsets(offsets, cfg).at("enc.0.att.wq").is_zero());
}

TEST_CASE("fixed-tensor selection takes strictly-above-threshold tensors") {
  OffsetSet offsets;
  offsets["a"] = OffsetEntry::dense(Tensor::full({2}, 0.01));
  offsets["b"] = OffsetEntry::dense(Tensor::full({2}, 0.001));
  offsets["c"] = OffsetEntry::zero();
  std::set<std::string> sel = select_fixed_tensors(offsets, 0.002);
  CHECK(sel == std::set<std::string>{"a"});
  CHECK(select_fixed_tensors(offsets, 0.01).empty());
}

// ===== vocabulary restriction =====

TEST_CASE("restriction keeps exactly the observed ids plus BOS and EOS") {
  ParallelCorpus corpus;
  corpus.segments.push_back({{5}, {3, 7}});

  OffsetSet offsets;
  offsets["out_proj"] = OffsetEntry::dense(Tensor::full({8, 2}, 1.0));
  offsets["src_embed"] = OffsetEntry::dense(Tensor::full({8, 2}, 2.0));
  offsets["enc.0.att.wq"] = OffsetEntry::dense(Tensor::full({2, 2}, 3.0));

  OffsetSet restricted = restrict_to_observed_vocab(offsets, corpus);
  const OffsetEntry& op = restricted.at("out_proj");
  REQUIRE(op.kind == OffsetEntry::Kind::sparse_rows);
  CHECK(op.row_ids == std::vector<std::size_t>{1, 2, 3, 7});
  CHECK(op.stored_params() == 8);
  const OffsetEntry& se = restricted.at("src_embed");
  CHECK(se.row_ids == std::vector<std::size_t>{1, 2, 5});

  // Values survive for kept rows.
  for (std::size_t r = 0; r < op.row_ids.size(); ++r)
    for (std::size_t c = 0; c < 2; ++c) CHECK(op.values.at(r, c) == 1.0);

  // Non-vocabulary tensors pass through untouched.
  CHECK(restricted.at("enc.0.att.wq").kind == OffsetEntry::Kind::dense);

  CHECK_THROWS_AS(restrict_to_observed_vocab(offsets, ParallelCorpus{}), DataError);
}

TEST_CASE("restricting an already-sparse entry re-reads its stored rows") {
  ParallelCorpus corpus;
  corpus.segments.push_back({{4}, {3}});
  OffsetSet offsets;
  offsets["tgt_embed"] =
      OffsetEntry::sparse_rows({3, 6}, Tensor::from({2, 2}, {1, 2, 3, 4}), {8, 2});
  OffsetSet restricted = restrict_to_observed_vocab(offsets, corpus);
  const OffsetEntry& e = restricted.at("tgt_embed");
  CHECK(e.row_ids == std::vector<std::size_t>{1, 2, 3});
  // Row 3 keeps its stored values; rows 1 and 2 were absent and stay zero.
  CHECK(e.values.at(0, 0) == 0.0);
  CHECK(e.values.at(1, 1) == 0.0);
  CHECK(e.values.at(2, 0) == 1.0);
  CHECK(e.values.at(2, 1) == 2.0);
}

// ===== parameter accounting =====

TEST_CASE("offset parameter counts cover only stored entries") {
  const ModelConfig c = fixture_config();
  OffsetSet offsets;
  offsets["src_embed"] = OffsetEntry::sparse_rows({1, 2}, Tensor::zeros({2, 2}), {8, 2});
  offsets["enc.0.att.wq"] = OffsetEntry::dense(Tensor::zeros({2, 2}));
  offsets["out_proj"] = OffsetEntry::zero();
  OffsetParamReport r = offset_param_count(offsets, c);
  CHECK(r.total == 8);
  CHECK(r.nonzero_tensors == 2);
  CHECK(r.per_tensor.at("src_embed") == 4);
  CHECK(r.per_tensor.at("enc.0.att.wq") == 4);
  CHECK(r.per_tensor.count("out_proj") == 0);
  CHECK(r.per_region.at(Region::encoder_embedding) == 4);
  CHECK(r.per_region.at(Region::outer_layers) == 4);
}
