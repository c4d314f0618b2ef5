#include "nmt/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace nmt {

namespace {

const std::vector<std::string> kReservedTokens = {"<pad>", "<bos>", "<eos>", "<unk>"};

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("corpus: cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

}  // namespace

Vocabulary Vocabulary::from_regular_tokens(const std::vector<std::string>& tokens) {
  Vocabulary v;
  v.id_to_token = kReservedTokens;
  for (const std::string& t : tokens) {
    if (t.empty()) throw DataError("vocabulary: empty token");
    v.id_to_token.push_back(t);
  }
  for (std::size_t i = 0; i < v.id_to_token.size(); ++i) {
    if (!v.token_to_id.emplace(v.id_to_token[i], i).second)
      throw DataError("vocabulary: duplicate token " + v.id_to_token[i]);
  }
  return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::vector<std::string> tokens;
  for (const std::string& line : read_lines(path)) {
    if (line.empty()) throw DataError("vocabulary: empty line in " + path);
    tokens.push_back(line);
  }
  return from_regular_tokens(tokens);
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("vocabulary: cannot write " + path);
  for (std::size_t i = kReservedTokens.size(); i < id_to_token.size(); ++i)
    out << id_to_token[i] << "\n";
}

std::size_t Vocabulary::id_of(const std::string& token) const {
  auto it = token_to_id.find(token);
  return it == token_to_id.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token_of(std::size_t id) const {
  if (id >= id_to_token.size()) throw IndexError("vocabulary: id out of range");
  return id_to_token[id];
}

std::vector<std::size_t> tokenize(const std::string& line, const Vocabulary& vocab) {
  std::vector<std::size_t> ids;
  for (const std::string& tok : split_ws(line)) ids.push_back(vocab.id_of(tok));
  return ids;
}

ParallelCorpus load_parallel(const std::string& src_path, const std::string& tgt_path,
                             const Vocabulary& src_vocab, const Vocabulary& tgt_vocab) {
  const std::vector<std::string> src_lines = read_lines(src_path);
  const std::vector<std::string> tgt_lines = read_lines(tgt_path);
  if (src_lines.size() != tgt_lines.size())
    throw DataError("corpus: source/target line counts differ");
  ParallelCorpus corpus;
  for (std::size_t i = 0; i < src_lines.size(); ++i) {
    Segment seg;
    seg.source = tokenize(src_lines[i], src_vocab);
    seg.target = tokenize(tgt_lines[i], tgt_vocab);
    if (seg.source.empty() || seg.target.empty())
      throw DataError("corpus: empty segment at line " + std::to_string(i + 1));
    corpus.segments.push_back(std::move(seg));
  }
  return corpus;
}

void save_parallel(const ParallelCorpus& corpus, const std::string& src_path,
                   const std::string& tgt_path, const Vocabulary& src_vocab,
                   const Vocabulary& tgt_vocab) {
  std::ofstream src_out(src_path), tgt_out(tgt_path);
  if (!src_out || !tgt_out) throw DataError("corpus: cannot write output files");
  for (const Segment& seg : corpus.segments) {
    for (std::size_t i = 0; i < seg.source.size(); ++i)
      src_out << (i ? " " : "") << src_vocab.token_of(seg.source[i]);
    src_out << "\n";
    for (std::size_t i = 0; i < seg.target.size(); ++i)
      tgt_out << (i ? " " : "") << tgt_vocab.token_of(seg.target[i]);
    tgt_out << "\n";
  }
}

void SyntheticTaskConfig::validate() const {
  const std::size_t reserved = kReservedTokens.size();
  if (vocab_size <= reserved + 1)
    throw ConfigError("synthetic task: vocabulary too small");
  if (min_len == 0 || min_len > max_len) throw ConfigError("synthetic task: bad length range");
  if (shift_fraction < 0.0 || shift_fraction > 1.0)
    throw ConfigError("synthetic task: shift fraction outside [0, 1]");
  if (repeat_fraction < 0.0 || repeat_fraction >= 1.0)
    throw ConfigError("synthetic task: repeat fraction outside [0, 1)");
  const auto shifted = static_cast<std::size_t>(std::llround(
      shift_fraction * static_cast<double>(vocab_size)));
  if (shifted > vocab_size - reserved)
    throw ConfigError("synthetic task: shift fraction covers more than the regular vocabulary");
  if (shifted == 1)
    throw ConfigError("synthetic task: cannot remap exactly one token bijectively");
}

namespace {

// Target side of a segment: map every token, then swap adjacent pairs.
std::vector<std::size_t> translate_ids(const std::vector<std::size_t>& source,
                                       const std::vector<std::size_t>& mapping) {
  std::vector<std::size_t> out;
  out.reserve(source.size());
  for (std::size_t id : source) out.push_back(mapping[id]);
  for (std::size_t i = 0; i + 1 < out.size(); i += 2) std::swap(out[i], out[i + 1]);
  return out;
}

std::vector<std::size_t> random_sentence(RandomSource& rng, const SyntheticTaskConfig& c) {
  const std::size_t reserved = kReservedTokens.size();
  const std::size_t len = c.min_len + static_cast<std::size_t>(rng.uniform_int(c.max_len - c.min_len + 1));
  std::vector<std::size_t> ids(len);
  for (std::size_t& id : ids)
    id = reserved + static_cast<std::size_t>(rng.uniform_int(c.vocab_size - reserved));
  return ids;
}

ParallelCorpus sample_corpus(RandomSource& rng, const SyntheticTaskConfig& c, std::size_t count,
                             const std::vector<std::size_t>& mapping) {
  ParallelCorpus corpus;
  corpus.segments.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Segment seg;
    seg.source = random_sentence(rng, c);
    seg.target = translate_ids(seg.source, mapping);
    corpus.segments.push_back(std::move(seg));
  }
  return corpus;
}

}  // namespace

SyntheticTask generate_synthetic(const SyntheticTaskConfig& config) {
  config.validate();
  const std::size_t reserved = kReservedTokens.size();
  const std::size_t regular = config.vocab_size - reserved;
  RandomSource rng(config.seed);

  SyntheticTask task;
  std::vector<std::string> src_tokens, tgt_tokens;
  for (std::size_t i = 0; i < regular; ++i) {
    src_tokens.push_back("s" + std::to_string(reserved + i));
    tgt_tokens.push_back("t" + std::to_string(reserved + i));
  }
  task.src_vocab = std::make_shared<Vocabulary>(Vocabulary::from_regular_tokens(src_tokens));
  task.tgt_vocab = std::make_shared<Vocabulary>(Vocabulary::from_regular_tokens(tgt_tokens));

  // Baseline mapping: seeded permutation of the regular ids. Reserved ids map
  // to themselves (they never occur in sentences).
  std::vector<std::size_t> images(regular);
  for (std::size_t i = 0; i < regular; ++i) images[i] = reserved + i;
  rng.shuffle(images);
  task.base_mapping.resize(config.vocab_size);
  for (std::size_t i = 0; i < reserved; ++i) task.base_mapping[i] = i;
  for (std::size_t i = 0; i < regular; ++i) task.base_mapping[reserved + i] = images[i];

  // Baseline-domain corpora come before anything shift-dependent so that they
  // are identical across shift fractions at a fixed seed.
  task.baseline_train = sample_corpus(rng, config, config.baseline_train, task.base_mapping);
  task.heldout = sample_corpus(rng, config, config.heldout, task.base_mapping);

  // User-domain mapping: rotate the images of a sampled id subset so exactly
  // that many tokens translate differently.
  const auto shifted_count = static_cast<std::size_t>(std::llround(
      config.shift_fraction * static_cast<double>(config.vocab_size)));
  task.shifted_mapping = task.base_mapping;
  if (shifted_count >= 2) {
    std::vector<std::size_t> regular_ids(regular);
    for (std::size_t i = 0; i < regular; ++i) regular_ids[i] = reserved + i;
    rng.shuffle(regular_ids);
    regular_ids.resize(shifted_count);
    std::sort(regular_ids.begin(), regular_ids.end());
    for (std::size_t i = 0; i < shifted_count; ++i) {
      const std::size_t from = regular_ids[i];
      const std::size_t to = regular_ids[(i + 1) % shifted_count];
      task.shifted_mapping[from] = task.base_mapping[to];
    }
  }

  task.adapt = sample_corpus(rng, config, config.adapt, task.shifted_mapping);

  // Test corpus: unique segments plus duplicated ones, shuffled together.
  const auto repeats = static_cast<std::size_t>(std::llround(
      config.repeat_fraction * static_cast<double>(config.test)));
  const std::size_t unique = config.test - repeats;
  task.test = sample_corpus(rng, config, unique, task.shifted_mapping);
  for (std::size_t i = 0; i < repeats && unique > 0; ++i) {
    const std::size_t pick = static_cast<std::size_t>(rng.uniform_int(task.test.segments.size()));
    task.test.segments.push_back(task.test.segments[pick]);
  }
  rng.shuffle(task.test.segments);
  return task;
}

namespace {
std::vector<std::size_t> with_specials(std::set<std::size_t> ids) {
  ids.insert(kBosId);
  ids.insert(kEosId);
  return {ids.begin(), ids.end()};
}
}  // namespace

std::vector<std::size_t> observed_source_ids(const ParallelCorpus& corpus) {
  std::set<std::size_t> ids;
  for (const Segment& seg : corpus.segments) ids.insert(seg.source.begin(), seg.source.end());
  return with_specials(std::move(ids));
}

std::vector<std::size_t> observed_target_ids(const ParallelCorpus& corpus) {
  std::set<std::size_t> ids;
  for (const Segment& seg : corpus.segments) ids.insert(seg.target.begin(), seg.target.end());
  return with_specials(std::move(ids));
}

}  // namespace nmt
