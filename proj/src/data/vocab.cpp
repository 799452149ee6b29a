#include "lorekt/data/vocab.hpp"

#include <algorithm>
#include <numeric>

#include "lorekt/common/error.hpp"

namespace lorekt::data {

GlobalVocab GlobalVocab::build(const std::vector<DatasetSpec>& specs, const std::vector<VocabSize>& sizes) {
  if (specs.empty()) throw DataError("build_vocab: at least one dataset is required");
  if (specs.size() != sizes.size()) throw DataError("build_vocab: one size entry per dataset is required");

  std::vector<std::size_t> order(specs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return specs[a].dataset_index < specs[b].dataset_index; });

  GlobalVocab vocab;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& spec = specs[order[i]];
    if (i > 0 && spec.dataset_index == specs[order[i - 1]].dataset_index) {
      throw DataError("build_vocab: datasets '" + specs[order[i - 1]].name + "' and '" + spec.name +
                      "' share dataset_index " + std::to_string(spec.dataset_index));
    }
    const VocabSize size = sizes[order[i]];
    vocab.entries_.push_back(
        {spec.dataset_index, spec.name, vocab.total_questions_, size.n_questions, vocab.total_kcs_, size.n_kcs});
    vocab.total_questions_ += size.n_questions;
    vocab.total_kcs_ += size.n_kcs;
  }
  return vocab;
}

GlobalVocab GlobalVocab::extend(const DatasetSpec& spec, VocabSize size) const {
  if (!entries_.empty() && spec.dataset_index <= entries_.back().dataset_index) {
    throw DataError("extend_vocab: dataset_index " + std::to_string(spec.dataset_index) +
                    " must exceed every existing index");
  }
  GlobalVocab out = *this;
  out.entries_.push_back({spec.dataset_index, spec.name, total_questions_, size.n_questions, total_kcs_, size.n_kcs});
  out.total_questions_ += size.n_questions;
  out.total_kcs_ += size.n_kcs;
  return out;
}

std::size_t GlobalVocab::position(std::uint32_t dataset_index) const {
  for (std::size_t p = 0; p < entries_.size(); ++p) {
    if (entries_[p].dataset_index == dataset_index) return p;
  }
  throw DataError("vocabulary has no dataset with index " + std::to_string(dataset_index));
}

bool GlobalVocab::contains(std::uint32_t dataset_index) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const VocabEntry& e) { return e.dataset_index == dataset_index; });
}

const VocabEntry& GlobalVocab::entry(std::uint32_t dataset_index) const { return entries_[position(dataset_index)]; }

std::size_t GlobalVocab::dataset_table_rows() const {
  return entries_.empty() ? 0 : entries_.back().dataset_index + 1;
}

std::uint32_t GlobalVocab::question_unk_row(std::uint32_t dataset_index) const {
  return static_cast<std::uint32_t>(total_questions_ + position(dataset_index));
}

std::uint32_t GlobalVocab::kc_unk_row(std::uint32_t dataset_index) const {
  return static_cast<std::uint32_t>(total_kcs_ + position(dataset_index));
}

std::uint32_t GlobalVocab::question_row(std::uint32_t dataset_index, std::uint32_t local_id) const {
  const std::size_t p = position(dataset_index);
  const auto& e = entries_[p];
  if (local_id >= e.n_questions) return static_cast<std::uint32_t>(total_questions_ + p);
  return static_cast<std::uint32_t>(e.question_offset + local_id);
}

std::uint32_t GlobalVocab::kc_row(std::uint32_t dataset_index, std::uint32_t local_id) const {
  const std::size_t p = position(dataset_index);
  const auto& e = entries_[p];
  if (local_id >= e.n_kcs) return static_cast<std::uint32_t>(total_kcs_ + p);
  return static_cast<std::uint32_t>(e.kc_offset + local_id);
}

std::optional<GlobalId> GlobalVocab::locate_question(std::uint32_t global_id) const {
  for (const auto& e : entries_) {
    if (global_id >= e.question_offset && global_id < e.question_offset + e.n_questions) {
      return GlobalId{e.dataset_index, static_cast<std::uint32_t>(global_id - e.question_offset)};
    }
  }
  return std::nullopt;
}

std::optional<GlobalId> GlobalVocab::locate_kc(std::uint32_t global_id) const {
  for (const auto& e : entries_) {
    if (global_id >= e.kc_offset && global_id < e.kc_offset + e.n_kcs) {
      return GlobalId{e.dataset_index, static_cast<std::uint32_t>(global_id - e.kc_offset)};
    }
  }
  return std::nullopt;
}

nlohmann::json GlobalVocab::to_json() const {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : entries_) {
    entries.push_back({{"dataset_index", e.dataset_index},
                       {"name", e.name},
                       {"question_offset", e.question_offset},
                       {"n_questions", e.n_questions},
                       {"kc_offset", e.kc_offset},
                       {"n_kcs", e.n_kcs}});
  }
  return {{"entries", entries}, {"total_questions", total_questions_}, {"total_kcs", total_kcs_}};
}

GlobalVocab GlobalVocab::from_json(const nlohmann::json& j) {
  GlobalVocab v;
  for (const auto& e : j.at("entries")) {
    v.entries_.push_back({e.at("dataset_index").get<std::uint32_t>(), e.at("name").get<std::string>(),
                          e.at("question_offset").get<std::size_t>(), e.at("n_questions").get<std::size_t>(),
                          e.at("kc_offset").get<std::size_t>(), e.at("n_kcs").get<std::size_t>()});
  }
  v.total_questions_ = j.at("total_questions").get<std::size_t>();
  v.total_kcs_ = j.at("total_kcs").get<std::size_t>();
  std::size_t q = 0, k = 0;
  for (std::size_t i = 0; i < v.entries_.size(); ++i) {
    const auto& e = v.entries_[i];
    if (e.question_offset != q || e.kc_offset != k ||
        (i > 0 && e.dataset_index <= v.entries_[i - 1].dataset_index)) {
      throw DataError("vocabulary ranges are not contiguous and ordered");
    }
    q += e.n_questions;
    k += e.n_kcs;
  }
  if (q != v.total_questions_ || k != v.total_kcs_) throw DataError("vocabulary totals do not match its ranges");
  return v;
}

}  // namespace lorekt::data
