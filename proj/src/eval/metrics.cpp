#include "lorekt/eval/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "lorekt/common/error.hpp"

namespace lorekt::eval {

namespace {

void check_inputs(std::span<const double> probs, std::span<const std::uint8_t> labels) {
  if (probs.size() != labels.size()) {
    throw DataError("metric inputs differ in length: " + std::to_string(probs.size()) + " predictions, " +
                    std::to_string(labels.size()) + " labels");
  }
  if (probs.empty()) throw DataError("metric inputs are empty");
  for (auto l : labels) {
    if (l > 1) throw DataError("labels must be 0 or 1");
  }
}

}  // namespace

double auc(std::span<const double> probs, std::span<const std::uint8_t> labels) {
  check_inputs(probs, labels);
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] < probs[b]; });

  // twice the U statistic, exact in integers
  unsigned __int128 twice_u = 0;
  std::uint64_t neg_below = 0, n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos = 0, neg = 0;
    while (j < order.size() && probs[order[j]] == probs[order[i]]) {
      (labels[order[j]] ? pos : neg) += 1;
      ++j;
    }
    twice_u += static_cast<unsigned __int128>(2 * pos) * neg_below + static_cast<unsigned __int128>(pos) * neg;
    neg_below += neg;
    n_pos += pos;
    n_neg += neg;
    i = j;
  }
  if (n_pos == 0) throw DataError("AUC is undefined: no positive (label 1) examples");
  if (n_neg == 0) throw DataError("AUC is undefined: no negative (label 0) examples");
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double accuracy(std::span<const double> probs, std::span<const std::uint8_t> labels, double threshold) {
  check_inputs(probs, labels);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) hits += static_cast<std::uint8_t>(probs[i] >= threshold) == labels[i];
  return static_cast<double>(hits) / static_cast<double>(probs.size());
}

}  // namespace lorekt::eval
