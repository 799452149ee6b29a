#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lorekt/data/types.hpp"

namespace lorekt::data {

struct PreprocessOptions {
  std::size_t min_length = 3;
  std::size_t max_length = 200;
  double trainval_fraction = 0.8;  // of students; the rest is test
  double train_fraction = 0.9;     // of the train+valid students
};

// Drops sequences shorter than min_length and cuts longer ones into
// consecutive max_length segments (a trailing segment below min_length is
// dropped). Segments keep their student id. Idempotent.
std::vector<StudentSequence> filter_and_segment(std::span<const StudentSequence> sequences,
                                                const PreprocessOptions& options = {});

// Student-level shuffle split; all segments of one student land in one split.
Splits split_by_student(std::span<const StudentSequence> segments, std::uint64_t seed,
                        const PreprocessOptions& options = {});

// filter_and_segment followed by split_by_student. Throws DataError when no
// segment survives.
Splits preprocess(std::span<const StudentSequence> sequences, std::uint64_t seed,
                  const PreprocessOptions& options = {});

}  // namespace lorekt::data
