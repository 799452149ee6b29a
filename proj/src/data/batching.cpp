#include "lorekt/data/batching.hpp"

#include <algorithm>
#include <numeric>

#include "lorekt/common/error.hpp"
#include "lorekt/common/random.hpp"

namespace lorekt::data {

namespace {

template <typename Get>
Batch build(std::size_t count, Get&& get, const GlobalVocab& vocab, std::uint32_t dataset_index) {
  if (count == 0) throw DataError("make_batch: empty batch");
  Batch batch;
  batch.batch_size = count;
  batch.dataset_index = dataset_index;
  for (std::size_t b = 0; b < count; ++b) {
    batch.lengths.push_back(get(b).size());
    batch.seq_len = std::max(batch.seq_len, get(b).size());
  }
  if (batch.seq_len == 0) throw DataError("make_batch: all segments are empty");

  const std::size_t rows = batch.rows();
  batch.question_rows.assign(rows, 0);
  batch.responses.assign(rows, 0);
  batch.valid.assign(rows, 0);
  std::vector<std::uint32_t> kcs;
  for (std::size_t b = 0; b < count; ++b) {
    const StudentSequence& seq = get(b);
    for (std::size_t j = 0; j < batch.seq_len; ++j) {
      const std::size_t r = b * batch.seq_len + j;
      kcs.clear();
      if (j < seq.size()) {
        const Interaction& it = seq.interactions[j];
        batch.question_rows[r] = vocab.question_row(dataset_index, it.question_id);
        for (auto kc : it.kc_ids) kcs.push_back(vocab.kc_row(dataset_index, kc));
        batch.responses[r] = it.response;
        batch.valid[r] = 1;
      }
      batch.kc_rows.push(kcs.begin(), kcs.end());
    }
  }
  return batch;
}

}  // namespace

Batch make_batch(std::span<const StudentSequence> segments, const GlobalVocab& vocab, std::uint32_t dataset_index) {
  return build(
      segments.size(), [&](std::size_t b) -> const StudentSequence& { return segments[b]; }, vocab, dataset_index);
}

Batch make_batch(const std::vector<StudentSequence>& pool, std::span<const std::size_t> indices,
                 const GlobalVocab& vocab, std::uint32_t dataset_index) {
  return build(
      indices.size(), [&](std::size_t b) -> const StudentSequence& { return pool.at(indices[b]); }, vocab,
      dataset_index);
}

std::vector<BatchRef> mix_batches(std::span<const std::size_t> segment_counts, std::size_t batch_size,
                                  std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> lengths;
  for (auto n : segment_counts) lengths.emplace_back(n, 0);
  return mix_batches(lengths, batch_size, seed, 0);
}

std::vector<BatchRef> mix_batches(std::span<const std::vector<std::size_t>> segment_lengths, std::size_t batch_size,
                                  std::uint64_t seed, std::size_t bucket_batches) {
  if (batch_size < 1) throw DataError("mix_batches: batch_size must be at least 1");
  Rng rng(seed);

  std::vector<std::vector<BatchRef>> queues(segment_lengths.size());
  std::vector<std::size_t> remaining;
  for (std::size_t d = 0; d < segment_lengths.size(); ++d) {
    const auto& lengths = segment_lengths[d];
    remaining.push_back(lengths.size());
    std::vector<std::size_t> perm(lengths.size());
    std::iota(perm.begin(), perm.end(), 0);
    shuffle(perm, rng);
    if (bucket_batches > 0) {
      const std::size_t pool = batch_size * bucket_batches;
      for (std::size_t start = 0; start < perm.size(); start += pool) {
        const auto first = perm.begin() + static_cast<std::ptrdiff_t>(start);
        const auto last = perm.begin() + static_cast<std::ptrdiff_t>(std::min(perm.size(), start + pool));
        std::stable_sort(first, last, [&](std::size_t a, std::size_t b) { return lengths[a] < lengths[b]; });
      }
    }
    for (std::size_t start = 0; start < perm.size(); start += batch_size) {
      const std::size_t end = std::min(perm.size(), start + batch_size);
      queues[d].push_back({d, std::vector<std::size_t>(perm.begin() + static_cast<std::ptrdiff_t>(start),
                                                       perm.begin() + static_cast<std::ptrdiff_t>(end))});
    }
    if (bucket_batches > 0) shuffle(queues[d], rng);
    std::reverse(queues[d].begin(), queues[d].end());
  }

  std::vector<BatchRef> out;
  std::size_t total = std::accumulate(remaining.begin(), remaining.end(), std::size_t{0});
  while (total > 0) {
    std::uint64_t pick = uniform_index(rng, total);
    std::size_t d = 0;
    while (pick >= remaining[d]) pick -= remaining[d++];
    BatchRef ref = std::move(queues[d].back());
    queues[d].pop_back();
    remaining[d] -= ref.segments.size();
    total -= ref.segments.size();
    out.push_back(std::move(ref));
  }
  return out;
}

}  // namespace lorekt::data
