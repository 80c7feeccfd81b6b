#pragma once

// Corpus BLEU, computed to the classic definition: clipped modified n-gram
// precisions (n = 1..4), geometric mean, brevity penalty on total lengths,
// and zero if any precision is zero (no smoothing). Sentence-level BLEU adds
// add-1 smoothing on the n > 1 precisions; it exists only to feed the sign
// test, where unsmoothed sentence scores are degenerate.

#include <array>
#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

namespace seqlab {

struct BleuError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BleuReport {
  double bleu = 0.0;  // in [0,1]
  std::array<double, 4> precisions{};
  std::array<long long, 4> matched{};
  std::array<long long, 4> total{};
  double brevity_penalty = 1.0;
  long long hyp_len = 0;
  long long ref_len = 0;
};

namespace detail {

inline std::map<std::vector<int>, long long> ngram_counts(const std::vector<int>& toks,
                                                          int n) {
  std::map<std::vector<int>, long long> counts;
  if (static_cast<int>(toks.size()) < n) return counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= toks.size(); ++i)
    counts[std::vector<int>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                            toks.begin() + static_cast<std::ptrdiff_t>(i) + n)]++;
  return counts;
}

}  // namespace detail

inline BleuReport bleu(const std::vector<std::vector<int>>& hyps,
                       const std::vector<std::vector<int>>& refs, int max_n = 4) {
  if (hyps.empty()) throw BleuError("empty corpus");
  if (hyps.size() != refs.size()) throw BleuError("hypothesis/reference count mismatch");
  if (max_n < 1 || max_n > 4) throw BleuError("max_n must be in 1..4");

  BleuReport r;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    r.hyp_len += static_cast<long long>(hyps[i].size());
    r.ref_len += static_cast<long long>(refs[i].size());
    for (int n = 1; n <= max_n; ++n) {
      auto hc = detail::ngram_counts(hyps[i], n);
      auto rc = detail::ngram_counts(refs[i], n);
      for (const auto& [gram, cnt] : hc) {
        r.total[static_cast<std::size_t>(n - 1)] += cnt;
        auto it = rc.find(gram);
        if (it != rc.end())
          r.matched[static_cast<std::size_t>(n - 1)] += std::min(cnt, it->second);
      }
    }
  }

  r.brevity_penalty =
      (r.hyp_len == 0 || r.hyp_len < r.ref_len)
          ? (r.hyp_len == 0 ? 0.0
                            : std::exp(1.0 - static_cast<double>(r.ref_len) /
                                                 static_cast<double>(r.hyp_len)))
          : 1.0;

  double log_sum = 0.0;
  bool any_zero = false;
  for (int n = 1; n <= max_n; ++n) {
    const auto i = static_cast<std::size_t>(n - 1);
    r.precisions[i] = r.total[i] > 0
                          ? static_cast<double>(r.matched[i]) / static_cast<double>(r.total[i])
                          : 0.0;
    if (r.precisions[i] <= 0.0)
      any_zero = true;
    else
      log_sum += std::log(r.precisions[i]);
  }
  r.bleu = any_zero ? 0.0 : r.brevity_penalty * std::exp(log_sum / max_n);
  return r;
}

// Per-sentence score for paired significance tests: add-1 smoothing on the
// n > 1 precisions, unsmoothed unigrams, sentence-level brevity penalty.
inline double sentence_bleu_smoothed(const std::vector<int>& hyp,
                                     const std::vector<int>& ref, int max_n = 4) {
  if (hyp.empty()) return 0.0;
  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    auto hc = detail::ngram_counts(hyp, n);
    auto rc = detail::ngram_counts(ref, n);
    long long total = 0, matched = 0;
    for (const auto& [gram, cnt] : hc) {
      total += cnt;
      auto it = rc.find(gram);
      if (it != rc.end()) matched += std::min(cnt, it->second);
    }
    double p;
    if (n == 1)
      p = total > 0 ? static_cast<double>(matched) / static_cast<double>(total) : 0.0;
    else
      p = static_cast<double>(matched + 1) / static_cast<double>(total + 1);
    if (p <= 0.0) return 0.0;
    log_sum += std::log(p);
  }
  const double bp = hyp.size() < ref.size()
                        ? std::exp(1.0 - static_cast<double>(ref.size()) /
                                             static_cast<double>(hyp.size()))
                        : 1.0;
  return bp * std::exp(log_sum / max_n);
}

}  // namespace seqlab
