#pragma once

#include <cstdint>
#include <span>

namespace lorekt::eval {

// Mann-Whitney AUC with ties counted as one half. O(n log n). Throws DataError
// when a class is missing or the inputs differ in length.
double auc(std::span<const double> probs, std::span<const std::uint8_t> labels);

// Fraction of predictions with (prob >= threshold) == label.
double accuracy(std::span<const double> probs, std::span<const std::uint8_t> labels, double threshold = 0.5);

}  // namespace lorekt::eval
