#include "nmt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace nmt {

namespace {

constexpr std::size_t kMaxOrder = 4;

// Joins a token window into a single map key; '\x1f' cannot occur inside a
// whitespace-delimited token.
std::string gram_key(const std::vector<std::string>& tokens, std::size_t first, std::size_t n) {
  std::string key;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) key.push_back('\x1f');
    key += tokens[first + i];
  }
  return key;
}

void count_grams(const std::vector<std::string>& tokens, std::size_t first, std::size_t last,
                 std::size_t n, std::unordered_map<std::string, std::size_t>& counts) {
  if (last - first < n) return;
  for (std::size_t i = first; i + n <= last; ++i) counts[gram_key(tokens, i, n)] += 1;
}

}  // namespace

BleuReport bleu(const std::vector<std::vector<std::string>>& hypotheses,
                const std::vector<std::vector<std::string>>& references) {
  if (hypotheses.empty()) throw DataError("bleu: empty hypothesis set");
  if (hypotheses.size() != references.size())
    throw DataError("bleu: hypothesis/reference counts differ");

  BleuReport report;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const auto& hyp = hypotheses[i];
    const auto& ref = references[i];
    if (ref.empty()) throw DataError("bleu: empty reference sentence");
    report.hyp_length += hyp.size();
    report.ref_length += ref.size();
    for (std::size_t n = 1; n <= kMaxOrder; ++n) {
      if (hyp.size() < n) continue;
      std::unordered_map<std::string, std::size_t> hyp_counts, ref_counts;
      count_grams(hyp, 0, hyp.size(), n, hyp_counts);
      count_grams(ref, 0, ref.size(), n, ref_counts);
      for (const auto& [gram, count] : hyp_counts) {
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) report.matched[n - 1] += std::min(count, it->second);
      }
      report.total[n - 1] += hyp.size() - n + 1;
    }
  }

  if (report.hyp_length == 0) {
    report.brevity_penalty = 0.0;
    return report;  // score stays 0
  }
  report.brevity_penalty =
      report.hyp_length < report.ref_length
          ? std::exp(1.0 - static_cast<double>(report.ref_length) /
                               static_cast<double>(report.hyp_length))
          : 1.0;

  double log_sum = 0.0;
  std::size_t orders = 0;
  bool zero_precision = false;
  for (std::size_t n = 0; n < kMaxOrder; ++n) {
    if (report.total[n] == 0) continue;  // corpus has no n-grams of this order
    report.precisions[n] =
        static_cast<double>(report.matched[n]) / static_cast<double>(report.total[n]);
    if (report.matched[n] == 0) {
      zero_precision = true;
    } else {
      log_sum += std::log(report.precisions[n]);
    }
    orders += 1;
  }
  if (orders == 0 || zero_precision) return report;  // score 0, no smoothing
  report.score = 100.0 * report.brevity_penalty *
                 std::exp(log_sum / static_cast<double>(orders));
  return report;
}

RepetitionRateReport repetition_rate(const std::vector<std::string>& text, std::size_t window) {
  if (text.empty()) throw DataError("repetition rate: empty text");
  if (window == 0) throw ConfigError("repetition rate: window must be positive");

  RepetitionRateReport report;
  report.window_size = window;
  std::array<double, kMaxOrder> ratio_sums{};
  std::array<std::size_t, kMaxOrder> ratio_windows{};

  const std::size_t last_start = text.size() > window ? text.size() - window : 0;
  for (std::size_t start = 0; start <= last_start; ++start) {
    const std::size_t end = std::min(start + window, text.size());
    report.windows += 1;
    for (std::size_t n = 1; n <= kMaxOrder; ++n) {
      if (end - start < n) continue;
      std::unordered_map<std::string, std::size_t> counts;
      count_grams(text, start, end, n, counts);
      std::size_t repeated = 0;
      for (const auto& [gram, count] : counts)
        if (count > 1) repeated += 1;
      ratio_sums[n - 1] += static_cast<double>(repeated) / static_cast<double>(counts.size());
      ratio_windows[n - 1] += 1;
    }
  }

  double log_sum = 0.0;
  std::size_t orders = 0;
  bool zero_ratio = false;
  for (std::size_t n = 0; n < kMaxOrder; ++n) {
    if (ratio_windows[n] == 0) continue;  // text shorter than this order
    report.ratios[n] = ratio_sums[n] / static_cast<double>(ratio_windows[n]);
    if (report.ratios[n] == 0.0) zero_ratio = true;
    orders += 1;
  }
  if (orders == 0 || zero_ratio) return report;  // geometric mean is zero
  for (std::size_t n = 0; n < kMaxOrder; ++n)
    if (ratio_windows[n] != 0) log_sum += std::log(report.ratios[n]);
  report.rate = 100.0 * std::exp(log_sum / static_cast<double>(orders));
  return report;
}

}  // namespace nmt
