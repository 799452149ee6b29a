#pragma once

#include <cstdint>
#include <json.hpp>
#include <vector>

#include "lorekt/data/types.hpp"

namespace lorekt::data {

// Item-response simulator with a per-exposure learning effect:
//   P(correct) = sigmoid(ability - difficulty + learning_rate_per_exposure * exposure)
// where exposure is the mean, over the question's KCs, of the student's prior
// attempts that involved that KC.
struct SyntheticConfig {
  std::size_t n_students = 200;
  std::size_t n_questions = 100;
  std::size_t n_kcs = 20;
  double ability_mean = 0.0;
  double ability_spread = 1.0;
  double difficulty_spread = 1.0;
  double learning_rate_per_exposure = 0.05;
  double mean_seq_len = 50.0;
  std::uint64_t seed = 7;

  void validate() const;
  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys are rejected.
  static SyntheticConfig from_json(const nlohmann::json& j);
};

struct GroundTruth {
  std::vector<double> ability;                       // per student
  std::vector<double> difficulty;                    // per question
  std::vector<std::vector<std::uint32_t>> question_kcs;
  std::vector<std::vector<double>> probabilities;    // per student, per step
};

struct SyntheticDataset {
  std::vector<StudentSequence> sequences;
  GroundTruth truth;
};

SyntheticDataset generate_synthetic(const SyntheticConfig& config);

// Sidecar document: config, abilities keyed by student id, difficulties and KC map.
nlohmann::json ground_truth_json(const SyntheticConfig& config, const SyntheticDataset& dataset);

}  // namespace lorekt::data
