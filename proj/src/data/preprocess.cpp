#include "lorekt/data/preprocess.hpp"

#include <cmath>
#include <unordered_map>

#include "lorekt/common/error.hpp"
#include "lorekt/common/random.hpp"

namespace lorekt::data {

std::vector<StudentSequence> filter_and_segment(std::span<const StudentSequence> sequences,
                                                const PreprocessOptions& options) {
  if (options.min_length == 0 || options.max_length < options.min_length) {
    throw DataError("preprocess: invalid length bounds");
  }
  std::vector<StudentSequence> out;
  for (const auto& seq : sequences) {
    for (std::size_t start = 0; start < seq.size(); start += options.max_length) {
      const std::size_t end = std::min(seq.size(), start + options.max_length);
      if (end - start < options.min_length) continue;
      StudentSequence segment;
      segment.student_id = seq.student_id;
      segment.interactions.assign(seq.interactions.begin() + static_cast<std::ptrdiff_t>(start),
                                  seq.interactions.begin() + static_cast<std::ptrdiff_t>(end));
      out.push_back(std::move(segment));
    }
  }
  return out;
}

namespace {

std::size_t portion(std::size_t n, double fraction) {
  auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  // Keep both sides non-empty whenever there are at least two students.
  if (n >= 2) k = std::clamp<std::size_t>(k, 1, n - 1);
  return std::min(k, n);
}

}  // namespace

Splits split_by_student(std::span<const StudentSequence> segments, std::uint64_t seed,
                        const PreprocessOptions& options) {
  std::vector<std::string> students;
  std::unordered_map<std::string, std::size_t> order;
  for (const auto& s : segments) {
    if (order.emplace(s.student_id, students.size()).second) students.push_back(s.student_id);
  }

  Rng rng(seed);
  std::vector<std::size_t> perm(students.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  shuffle(perm, rng);

  const std::size_t n_trainval = portion(students.size(), options.trainval_fraction);
  const std::size_t n_train = portion(n_trainval, options.train_fraction);

  enum class Part { kTrain, kValid, kTest };
  std::vector<Part> part(students.size());
  for (std::size_t rank = 0; rank < perm.size(); ++rank) {
    part[perm[rank]] = rank < n_train ? Part::kTrain : rank < n_trainval ? Part::kValid : Part::kTest;
  }

  Splits splits;
  for (const auto& s : segments) {
    switch (part[order.at(s.student_id)]) {
      case Part::kTrain: splits.train.push_back(s); break;
      case Part::kValid: splits.valid.push_back(s); break;
      case Part::kTest: splits.test.push_back(s); break;
    }
  }
  return splits;
}

Splits preprocess(std::span<const StudentSequence> sequences, std::uint64_t seed, const PreprocessOptions& options) {
  if (sequences.empty()) throw DataError("preprocess: no input sequences");
  const auto segments = filter_and_segment(sequences, options);
  if (segments.empty()) throw DataError("preprocess: no sequence survives the length filter");
  return split_by_student(segments, seed, options);
}

}  // namespace lorekt::data
