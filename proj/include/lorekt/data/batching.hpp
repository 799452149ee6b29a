#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lorekt/autograd/ops.hpp"
#include "lorekt/data/types.hpp"
#include "lorekt/data/vocab.hpp"

namespace lorekt::data {

// Right-padded batch of segments from a single dataset, already translated to
// global embedding rows. Row r = b * seq_len + j.
struct Batch {
  std::size_t batch_size = 0;
  std::size_t seq_len = 0;
  std::uint32_t dataset_index = 0;
  std::vector<std::uint32_t> question_rows;
  ag::EmbeddingIndex kc_rows;            // padded steps have no KCs
  std::vector<std::uint8_t> responses;
  std::vector<std::uint8_t> valid;       // 1 for real steps
  std::vector<std::size_t> lengths;

  std::size_t rows() const { return batch_size * seq_len; }
};

Batch make_batch(std::span<const StudentSequence> segments, const GlobalVocab& vocab, std::uint32_t dataset_index);
Batch make_batch(const std::vector<StudentSequence>& pool, std::span<const std::size_t> indices,
                 const GlobalVocab& vocab, std::uint32_t dataset_index);

struct BatchRef {
  std::size_t dataset = 0;            // position in the list of datasets
  std::vector<std::size_t> segments;  // indices into that dataset's training segments

  friend bool operator==(const BatchRef&, const BatchRef&) = default;
};

// One epoch of batches over several datasets. Each batch comes from a single
// dataset; the dataset is drawn with probability proportional to its
// remaining segments, so every segment is visited exactly once.
std::vector<BatchRef> mix_batches(std::span<const std::size_t> segment_counts, std::size_t batch_size,
                                  std::uint64_t seed);

// Same stream contract. With bucket_batches > 0, each run of
// batch_size * bucket_batches shuffled segments is sorted by length before
// chunking and the resulting batches are shuffled again, which cuts padding.
std::vector<BatchRef> mix_batches(std::span<const std::vector<std::size_t>> segment_lengths, std::size_t batch_size,
                                  std::uint64_t seed, std::size_t bucket_batches);

}  // namespace lorekt::data
