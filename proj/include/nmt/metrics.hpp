#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "nmt/errors.hpp"

namespace nmt {

struct BleuReport {
  double score = 0.0;  // 0..100
  std::array<double, 4> precisions{};      // modified n-gram precisions p1..p4
  std::array<std::size_t, 4> matched{};    // clipped n-gram matches
  std::array<std::size_t, 4> total{};      // hypothesis n-gram counts
  double brevity_penalty = 1.0;
  std::size_t hyp_length = 0;
  std::size_t ref_length = 0;
};

// Corpus-level case-sensitive BLEU with modified n-gram precisions up to
// order 4, geometric mean, and brevity penalty exp(1 - r/h) when h < r.
// No smoothing: any order with hypothesis n-grams but zero matches makes the
// score 0. Orders with no hypothesis n-grams at all (corpus shorter than the
// order) are left out of the geometric mean.
BleuReport bleu(const std::vector<std::vector<std::string>>& hypotheses,
                const std::vector<std::vector<std::string>>& references);

struct RepetitionRateReport {
  double rate = 0.0;                  // 0..100
  std::array<double, 4> ratios{};     // per-order non-singleton type ratios, window-averaged
  std::size_t windows = 0;
  std::size_t window_size = 0;
};

// Rate of non-singleton n-gram types (orders 1..4) averaged over sliding
// windows of `window` words (stride one; a text no longer than the window is
// a single window), reported as 100 times the geometric mean over orders.
// Orders longer than the text are left out of the mean.
RepetitionRateReport repetition_rate(const std::vector<std::string>& text,
                                     std::size_t window = 1000);

}  // namespace nmt
