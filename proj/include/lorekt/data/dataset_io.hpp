#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "lorekt/data/types.hpp"

namespace lorekt::data {

// Five-line-per-student text format:
//   student_id,length
//   question ids           (comma separated)
//   KC sets                (comma separated, '_' joins the KCs of one question)
//   responses (0/1)
//   timestamps (ms)
// Blocks are separated by a blank line.
std::vector<StudentSequence> parse_dataset(std::istream& in);
std::vector<StudentSequence> ingest(const std::filesystem::path& path, const DatasetSpec& spec);

void emit(std::ostream& out, std::span<const StudentSequence> sequences);
void write_dataset(const std::filesystem::path& path, std::span<const StudentSequence> sequences);

// Largest local question / KC id plus one.
VocabSize id_extent(std::span<const StudentSequence> sequences);

}  // namespace lorekt::data
