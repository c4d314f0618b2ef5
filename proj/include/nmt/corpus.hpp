#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "nmt/model.hpp"

namespace nmt {

// Token table with the four reserved entries (<pad>, <bos>, <eos>, <unk>) at
// fixed ids 0..3. Vocabulary files store only the regular tokens, one per
// line; a token's id is its line index plus the reserved count.
struct Vocabulary {
  std::vector<std::string> id_to_token;  // index == id, reserved entries included
  std::unordered_map<std::string, std::size_t> token_to_id;

  static Vocabulary from_regular_tokens(const std::vector<std::string>& tokens);
  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  std::size_t size() const { return id_to_token.size(); }
  std::size_t id_of(const std::string& token) const;  // kUnkId when absent
  const std::string& token_of(std::size_t id) const;  // IndexError when out of range
};

// Whitespace tokenization to ids; unknown tokens map to <unk>.
std::vector<std::size_t> tokenize(const std::string& line, const Vocabulary& vocab);

struct ParallelCorpus {
  std::vector<Segment> segments;

  std::size_t size() const { return segments.size(); }
  bool empty() const { return segments.empty(); }
};

// Reads aligned source/target text files. Line counts must match and no line
// may be empty.
ParallelCorpus load_parallel(const std::string& src_path, const std::string& tgt_path,
                             const Vocabulary& src_vocab, const Vocabulary& tgt_vocab);
void save_parallel(const ParallelCorpus& corpus, const std::string& src_path,
                   const std::string& tgt_path, const Vocabulary& src_vocab,
                   const Vocabulary& tgt_vocab);

// Synthetic domain-shift translation task. The baseline domain translates by
// a fixed token bijection plus a deterministic adjacent-pair reordering; the
// user domain uses a mapping that differs on round(shift_fraction * vocab)
// tokens. The reordering rule is common to both domains.
struct SyntheticTaskConfig {
  std::size_t vocab_size = 120;  // includes the four reserved ids
  std::size_t min_len = 4;
  std::size_t max_len = 12;
  std::size_t baseline_train = 20000;
  std::size_t heldout = 200;  // baseline-domain held-out segments
  std::size_t adapt = 2000;
  std::size_t test = 500;
  double shift_fraction = 0.5;
  double repeat_fraction = 0.3;  // fraction of test segments that duplicate others
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticTask {
  std::shared_ptr<Vocabulary> src_vocab;
  std::shared_ptr<Vocabulary> tgt_vocab;
  ParallelCorpus baseline_train;  // baseline-domain training data
  ParallelCorpus heldout;         // baseline-domain held-out data
  ParallelCorpus adapt;           // user-domain adaptation data
  ParallelCorpus test;            // user-domain test data (with repeats)
  std::vector<std::size_t> base_mapping;     // id -> id, baseline domain
  std::vector<std::size_t> shifted_mapping;  // id -> id, user domain
};

// Deterministic for a fixed config. The baseline mapping and baseline/heldout
// corpora depend only on the sizes and seed, not on the shift or repeat
// fractions.
SyntheticTask generate_synthetic(const SyntheticTaskConfig& config);

// Convenience views used by sparse-vocabulary adaptation: all ids observed on
// one side of the corpus, plus BOS and EOS.
std::vector<std::size_t> observed_source_ids(const ParallelCorpus& corpus);
std::vector<std::size_t> observed_target_ids(const ParallelCorpus& corpus);

}  // namespace nmt
