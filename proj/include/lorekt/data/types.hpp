#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lorekt::data {

// One attempt: question, its knowledge components, correctness and time.
struct Interaction {
  std::uint32_t question_id = 0;
  std::vector<std::uint32_t> kc_ids;  // non-empty, no duplicates
  std::uint8_t response = 0;          // 1 correct, 0 incorrect
  std::uint64_t timestamp = 0;        // milliseconds; preserved, never modelled

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

// A student's attempts in chronological order.
struct StudentSequence {
  std::string student_id;
  std::vector<Interaction> interactions;

  std::size_t size() const { return interactions.size(); }
  friend bool operator==(const StudentSequence&, const StudentSequence&) = default;
};

struct DatasetSpec {
  std::string name;
  std::uint32_t dataset_index = 0;  // row of the dataset-embedding table
  std::string path;

  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

// Local ID extents of one dataset (max ID + 1).
struct VocabSize {
  std::size_t n_questions = 0;
  std::size_t n_kcs = 0;

  friend bool operator==(const VocabSize&, const VocabSize&) = default;
};

struct Splits {
  std::vector<StudentSequence> train;
  std::vector<StudentSequence> valid;
  std::vector<StudentSequence> test;
};

}  // namespace lorekt::data
