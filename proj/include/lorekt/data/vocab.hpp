#pragma once

#include <cstdint>
#include <json.hpp>
#include <optional>
#include <vector>

#include "lorekt/data/types.hpp"

namespace lorekt::data {

struct VocabEntry {
  std::uint32_t dataset_index = 0;
  std::string name;
  std::size_t question_offset = 0;
  std::size_t n_questions = 0;
  std::size_t kc_offset = 0;
  std::size_t n_kcs = 0;

  friend bool operator==(const VocabEntry&, const VocabEntry&) = default;
};

struct GlobalId {
  std::uint32_t dataset_index;
  std::uint32_t local_id;

  friend bool operator==(const GlobalId&, const GlobalId&) = default;
};

// Union of per-dataset question and KC id spaces. Each dataset owns a
// contiguous range of global ids, assigned in dataset_index order. Embedding
// tables carry one extra UNK row per dataset after all known ids.
class GlobalVocab {
 public:
  GlobalVocab() = default;

  static GlobalVocab build(const std::vector<DatasetSpec>& specs, const std::vector<VocabSize>& sizes);
  // Appends a dataset whose index exceeds every existing one.
  GlobalVocab extend(const DatasetSpec& spec, VocabSize size) const;

  const std::vector<VocabEntry>& entries() const { return entries_; }
  bool contains(std::uint32_t dataset_index) const;
  const VocabEntry& entry(std::uint32_t dataset_index) const;

  std::size_t total_questions() const { return total_questions_; }
  std::size_t total_kcs() const { return total_kcs_; }
  std::size_t question_table_rows() const { return total_questions_ + entries_.size(); }
  std::size_t kc_table_rows() const { return total_kcs_ + entries_.size(); }
  // One dataset-embedding row per index in [0, max dataset_index].
  std::size_t dataset_table_rows() const;

  // Local -> global; ids outside the dataset's range map to its UNK row.
  std::uint32_t question_row(std::uint32_t dataset_index, std::uint32_t local_id) const;
  std::uint32_t kc_row(std::uint32_t dataset_index, std::uint32_t local_id) const;
  std::uint32_t question_unk_row(std::uint32_t dataset_index) const;
  std::uint32_t kc_unk_row(std::uint32_t dataset_index) const;

  // Global -> local; nullopt for UNK rows and out-of-range ids.
  std::optional<GlobalId> locate_question(std::uint32_t global_id) const;
  std::optional<GlobalId> locate_kc(std::uint32_t global_id) const;

  nlohmann::json to_json() const;
  static GlobalVocab from_json(const nlohmann::json& j);

  friend bool operator==(const GlobalVocab&, const GlobalVocab&) = default;

 private:
  std::size_t position(std::uint32_t dataset_index) const;

  std::vector<VocabEntry> entries_;
  std::size_t total_questions_ = 0;
  std::size_t total_kcs_ = 0;
};

}  // namespace lorekt::data
