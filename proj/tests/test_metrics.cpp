#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "nmt/metrics.hpp"
#include "nmt/tensor.hpp"

using namespace nmt;

namespace {

using Words = std::vector<std::string>;

Words words(std::initializer_list<const char*> ws) {
  Words out;
  for (const char* w : ws) out.emplace_back(w);
  return out;
}

// Independent BLEU implementation used as an oracle: map-keyed n-gram counts,
// no string joining, written without reference to the library code path.
double oracle_bleu(const std::vector<Words>& hyps, const std::vector<Words>& refs) {
  std::array<long long, 4> matched{}, total{};
  long long h_len = 0, r_len = 0;
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    h_len += static_cast<long long>(hyps[s].size());
    r_len += static_cast<long long>(refs[s].size());
    for (int n = 1; n <= 4; ++n) {
      std::map<Words, long long> hc, rc;
      for (std::size_t i = 0; i + n <= hyps[s].size(); ++i)
        hc[Words(hyps[s].begin() + i, hyps[s].begin() + i + n)]++;
      for (std::size_t i = 0; i + n <= refs[s].size(); ++i)
        rc[Words(refs[s].begin() + i, refs[s].begin() + i + n)]++;
      for (const auto& [gram, count] : hc) {
        total[n - 1] += count;
        auto it = rc.find(gram);
        if (it != rc.end()) matched[n - 1] += std::min(count, it->second);
      }
    }
  }
  if (h_len == 0) return 0.0;
  double log_sum = 0.0;
  int orders = 0;
  for (int n = 0; n < 4; ++n) {
    if (total[n] == 0) continue;  // order absent from the corpus entirely
    if (matched[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matched[n]) / static_cast<double>(total[n]));
    ++orders;
  }
  if (orders == 0) return 0.0;
  const double bp =
      h_len < r_len ? std::exp(1.0 - static_cast<double>(r_len) / static_cast<double>(h_len)) : 1.0;
  return 100.0 * bp * std::exp(log_sum / orders);
}

// Independent repetition-rate implementation.
double oracle_rr(const Words& text, std::size_t window) {
  std::vector<std::pair<std::size_t, std::size_t>> spans;  // [first, last) word windows
  if (text.size() <= window) {
    spans.emplace_back(0, text.size());
  } else {
    for (std::size_t i = 0; i + window <= text.size(); ++i) spans.emplace_back(i, i + window);
  }
  double log_sum = 0.0;
  int orders = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    double ratio_sum = 0.0;
    std::size_t defined = 0;
    for (const auto& [lo, hi] : spans) {
      if (hi - lo < n) continue;
      std::map<Words, std::size_t> counts;
      for (std::size_t i = lo; i + n <= hi; ++i)
        counts[Words(text.begin() + i, text.begin() + i + n)]++;
      std::size_t non_singleton = 0;
      for (const auto& [gram, cnt] : counts)
        if (cnt > 1) ++non_singleton;
      ratio_sum += static_cast<double>(non_singleton) / static_cast<double>(counts.size());
      ++defined;
    }
    if (defined == 0) continue;
    const double ratio = ratio_sum / static_cast<double>(defined);
    if (ratio == 0.0) return 0.0;
    log_sum += std::log(ratio);
    ++orders;
  }
  if (orders == 0) return 0.0;
  return 100.0 * std::exp(log_sum / static_cast<double>(orders));
}

}  // namespace

// ===== BLEU frozen cases =====

TEST_CASE("identical corpora score 100") {
  std::vector<Words> h = {words({"the", "cat", "sat"}), words({"on", "the", "mat", "today"})};
  BleuReport r = bleu(h, h);
  CHECK(r.score == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(r.brevity_penalty == doctest::Approx(1.0));
}

TEST_CASE("short hypotheses pay the brevity penalty with absent orders skipped") {
  // 3 unigrams, 2 bigrams, 1 trigram all match; no 4-grams exist, so the mean
  // runs over three orders and the score is 100 * exp(1 - 4/3).
  std::vector<Words> h = {words({"the", "cat", "sat"})};
  std::vector<Words> r = {words({"the", "cat", "sat", "down"})};
  BleuReport b = bleu(h, r);
  CHECK(b.precisions[0] == doctest::Approx(1.0));
  CHECK(b.precisions[1] == doctest::Approx(1.0));
  CHECK(b.precisions[2] == doctest::Approx(1.0));
  CHECK(b.total[3] == 0);
  CHECK(b.hyp_length == 3);
  CHECK(b.ref_length == 4);
  CHECK(b.brevity_penalty == doctest::Approx(std::exp(1.0 - 4.0 / 3.0)).epsilon(1e-12));
  CHECK(b.score == doctest::Approx(100.0 * std::exp(1.0 - 4.0 / 3.0)).epsilon(1e-12));
}

TEST_CASE("a matched order with zero hits zeroes the whole score") {
  std::vector<Words> h = {words({"a", "b", "c", "d"})};
  std::vector<Words> r = {words({"w", "x", "y", "z"})};
  CHECK(bleu(h, r).score == 0.0);

  // Unigrams match but no bigram does: still zero, no smoothing.
  std::vector<Words> h2 = {words({"a", "c", "b", "d"})};
  std::vector<Words> r2 = {words({"a", "b", "c", "d"})};
  BleuReport b2 = bleu(h2, r2);
  CHECK(b2.matched[0] == 4);
  CHECK(b2.matched[1] == 0);
  CHECK(b2.total[1] == 3);
  CHECK(b2.score == 0.0);
}

TEST_CASE("repeated hypothesis words are clipped by the reference count") {
  std::vector<Words> h = {words({"the", "the", "the", "the"})};
  std::vector<Words> r = {words({"the", "cat"})};
  BleuReport b = bleu(h, r);
  CHECK(b.matched[0] == 1);
  CHECK(b.total[0] == 4);
  CHECK(b.precisions[0] == doctest::Approx(0.25));
}

TEST_CASE("counts pool over the corpus rather than averaging per segment") {
  std::vector<Words> h = {words({"a", "b"}), words({"c", "c", "c", "c", "c", "c"})};
  std::vector<Words> r = {words({"a", "b"}), words({"c", "x", "y", "z", "w", "v"})};
  BleuReport b = bleu(h, r);
  // Unigrams: segment one contributes 2/2, segment two 1/6 -> pooled 3/8.
  CHECK(b.matched[0] == 3);
  CHECK(b.total[0] == 8);
  CHECK(b.precisions[0] == doctest::Approx(3.0 / 8.0));
}

TEST_CASE("empty hypothesis corpus-wide gives score zero") {
  std::vector<Words> h = {Words{}};
  std::vector<Words> r = {words({"a"})};
  BleuReport b = bleu(h, r);
  CHECK(b.score == 0.0);
  CHECK(b.hyp_length == 0);
}

TEST_CASE("bleu input validation") {
  std::vector<Words> one = {words({"a"})};
  std::vector<Words> two = {words({"a"}), words({"b"})};
  CHECK_THROWS_AS(bleu({}, {}), DataError);
  CHECK_THROWS_AS(bleu(one, two), DataError);
  std::vector<Words> empty_ref = {Words{}};
  CHECK_THROWS_AS(bleu(one, empty_ref), DataError);
}

// ===== BLEU against the oracle =====

TEST_CASE("bleu matches an independent implementation on random corpora") {
  RandomSource rng(301);
  const std::vector<std::string> alphabet = {"a", "b", "c", "d"};
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t segments = 1 + rng.uniform_int(4);
    std::vector<Words> h(segments), r(segments);
    for (std::size_t s = 0; s < segments; ++s) {
      const std::size_t hl = rng.uniform_int(9);       // may be empty
      const std::size_t rl = 1 + rng.uniform_int(8);   // references are nonempty
      for (std::size_t i = 0; i < hl; ++i) h[s].push_back(alphabet[rng.uniform_int(4)]);
      for (std::size_t i = 0; i < rl; ++i) r[s].push_back(alphabet[rng.uniform_int(4)]);
    }
    const double expect = oracle_bleu(h, r);
    const double got = bleu(h, r).score;
    CHECK(got == doctest::Approx(expect).epsilon(1e-9));
  }
}

// ===== repetition rate frozen cases =====

TEST_CASE("a single repeated word has a singleton 4-gram and rate zero") {
  RepetitionRateReport r = repetition_rate(words({"a", "a", "a", "a"}), 1000);
  CHECK(r.ratios[0] == doctest::Approx(1.0));
  CHECK(r.ratios[1] == doctest::Approx(1.0));
  CHECK(r.ratios[2] == doctest::Approx(1.0));
  CHECK(r.ratios[3] == doctest::Approx(0.0));
  CHECK(r.rate == 0.0);
  CHECK(r.windows == 1);
}

TEST_CASE("a perfectly periodic text has rate 100") {
  RepetitionRateReport r =
      repetition_rate(words({"a", "b", "a", "b", "a", "b", "a", "b"}), 1000);
  for (int n = 0; n < 4; ++n) CHECK(r.ratios[n] == doctest::Approx(1.0));
  CHECK(r.rate == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("an all-distinct text has rate zero") {
  CHECK(repetition_rate(words({"a", "b", "c", "d", "e"}), 1000).rate == 0.0);
}

TEST_CASE("half-repeated text scores fifty") {
  // x a b a b a b a b y: each order has exactly half its types non-singleton.
  RepetitionRateReport r =
      repetition_rate(words({"x", "a", "b", "a", "b", "a", "b", "a", "b", "y"}), 1000);
  for (int n = 0; n < 4; ++n) CHECK(r.ratios[n] == doctest::Approx(0.5));
  CHECK(r.rate == doctest::Approx(50.0).epsilon(1e-12));
}

TEST_CASE("short texts drop the undefined long orders") {
  // Two tokens: only orders 1 and 2 exist. "a a" repeats its unigram but its
  // single bigram is a singleton.
  RepetitionRateReport r = repetition_rate(words({"a", "a"}), 1000);
  CHECK(r.ratios[0] == doctest::Approx(1.0));
  CHECK(r.ratios[1] == doctest::Approx(0.0));
  CHECK(r.rate == 0.0);
}

TEST_CASE("window slicing averages ratios over sliding windows") {
  RepetitionRateReport r =
      repetition_rate(words({"a", "a", "a", "a", "b", "c", "d", "e"}), 4);
  CHECK(r.windows == 5);
  CHECK(r.window_size == 4);
  // Per-window unigram ratios: 1, 1/2, 1/3, 0, 0.
  CHECK(r.ratios[0] == doctest::Approx((1.0 + 0.5 + 1.0 / 3.0) / 5.0).epsilon(1e-12));
}

TEST_CASE("repetition rate input validation") {
  CHECK_THROWS_AS(repetition_rate({}, 1000), DataError);
  CHECK_THROWS_AS(repetition_rate(words({"a"}), 0), ConfigError);
}

// ===== repetition rate against the oracle =====

TEST_CASE("repetition rate matches an independent implementation") {
  RandomSource rng(302);
  const std::vector<std::string> alphabet = {"a", "b", "c"};
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t len = 1 + rng.uniform_int(40);
    Words text;
    for (std::size_t i = 0; i < len; ++i) text.push_back(alphabet[rng.uniform_int(3)]);
    const double expect = oracle_rr(text, 7);
    const double got = repetition_rate(text, 7).rate;
    CHECK(got == doctest::Approx(expect).epsilon(1e-9));
  }
}
