#include "lorekt/data/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "lorekt/common/error.hpp"
#include "lorekt/common/random.hpp"

namespace lorekt::data {

void SyntheticConfig::validate() const {
  if (n_students == 0 || n_questions == 0 || n_kcs == 0) {
    throw ConfigError("synthetic: n_students, n_questions and n_kcs must be positive");
  }
  if (!(ability_spread > 0) || !(difficulty_spread > 0)) {
    throw ConfigError("synthetic: ability_spread and difficulty_spread must be positive");
  }
  if (!(learning_rate_per_exposure >= 0)) throw ConfigError("synthetic: learning_rate_per_exposure must be >= 0");
  if (!(mean_seq_len >= 3)) throw ConfigError("synthetic: mean_seq_len must be at least 3");
  if (!std::isfinite(ability_mean)) throw ConfigError("synthetic: ability_mean must be finite");
}

nlohmann::json SyntheticConfig::to_json() const {
  return {{"n_students", n_students},
          {"n_questions", n_questions},
          {"n_kcs", n_kcs},
          {"ability_mean", ability_mean},
          {"ability_spread", ability_spread},
          {"difficulty_spread", difficulty_spread},
          {"learning_rate_per_exposure", learning_rate_per_exposure},
          {"mean_seq_len", mean_seq_len},
          {"seed", seed}};
}

SyntheticConfig SyntheticConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("synthetic: expected an object");
  SyntheticConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "n_students") c.n_students = value.get<std::size_t>();
      else if (key == "n_questions") c.n_questions = value.get<std::size_t>();
      else if (key == "n_kcs") c.n_kcs = value.get<std::size_t>();
      else if (key == "ability_mean") c.ability_mean = value.get<double>();
      else if (key == "ability_spread") c.ability_spread = value.get<double>();
      else if (key == "difficulty_spread") c.difficulty_spread = value.get<double>();
      else if (key == "learning_rate_per_exposure") c.learning_rate_per_exposure = value.get<double>();
      else if (key == "mean_seq_len") c.mean_seq_len = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else throw ConfigError("synthetic: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("synthetic: bad value for '" + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

SyntheticDataset generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  Rng rng(config.seed);
  SyntheticDataset out;
  GroundTruth& truth = out.truth;

  truth.difficulty.resize(config.n_questions);
  truth.question_kcs.resize(config.n_questions);
  for (std::size_t q = 0; q < config.n_questions; ++q) {
    truth.difficulty[q] = normal(rng, 0.0, config.difficulty_spread);
    const std::size_t n_kc = std::min<std::size_t>(config.n_kcs, 1 + uniform_index(rng, 2));
    auto& kcs = truth.question_kcs[q];
    while (kcs.size() < n_kc) {
      const auto kc = static_cast<std::uint32_t>(uniform_index(rng, config.n_kcs));
      if (std::find(kcs.begin(), kcs.end(), kc) == kcs.end()) kcs.push_back(kc);
    }
  }

  const double stop_p = 1.0 / (config.mean_seq_len - 2.0);
  std::vector<double> exposure(config.n_kcs);
  for (std::size_t s = 0; s < config.n_students; ++s) {
    const double ability = normal(rng, config.ability_mean, config.ability_spread);
    truth.ability.push_back(ability);
    // Length 3 + Geometric gives mean_seq_len on average and never drops below 3.
    const std::size_t length = 3 + geometric(rng, stop_p);
    std::fill(exposure.begin(), exposure.end(), 0.0);

    StudentSequence seq;
    seq.student_id = "s" + std::to_string(s);
    std::vector<double> probs;
    std::uint64_t t = uniform_index(rng, 1'000'000'000ULL);
    for (std::size_t j = 0; j < length; ++j) {
      const auto q = static_cast<std::uint32_t>(uniform_index(rng, config.n_questions));
      const auto& kcs = truth.question_kcs[q];
      double exp_mean = 0.0;
      for (auto kc : kcs) exp_mean += exposure[kc];
      exp_mean /= static_cast<double>(kcs.size());
      const double logit = ability - truth.difficulty[q] + config.learning_rate_per_exposure * exp_mean;
      const double p = 1.0 / (1.0 + std::exp(-logit));
      const auto response = static_cast<std::uint8_t>(uniform01(rng) < p ? 1 : 0);
      for (auto kc : kcs) exposure[kc] += 1.0;

      t += 1000 + uniform_index(rng, 60'000);
      seq.interactions.push_back({q, kcs, response, t});
      probs.push_back(p);
    }
    truth.probabilities.push_back(std::move(probs));
    out.sequences.push_back(std::move(seq));
  }
  return out;
}

nlohmann::json ground_truth_json(const SyntheticConfig& config, const SyntheticDataset& dataset) {
  nlohmann::json ability = nlohmann::json::object();
  for (std::size_t s = 0; s < dataset.sequences.size(); ++s) {
    ability[dataset.sequences[s].student_id] = dataset.truth.ability[s];
  }
  return {{"config", config.to_json()},
          {"ability", ability},
          {"difficulty", dataset.truth.difficulty},
          {"question_kcs", dataset.truth.question_kcs}};
}

}  // namespace lorekt::data
