#include "lorekt/data/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <string_view>

#include "lorekt/common/error.hpp"

namespace lorekt::data {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename Int>
Int parse_int(std::string_view field, std::size_t line, const char* what) {
  Int value{};
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (field.empty() || ec != std::errc() || ptr != field.data() + field.size()) {
    throw ParseError(line, std::string("invalid ") + what + " '" + std::string(field) + "'");
  }
  return value;
}

struct LineReader {
  std::istream& in;
  std::size_t line_no = 0;

  bool next(std::string& line) {
    if (!std::getline(in, line)) return false;
    ++line_no;
    return true;
  }
};

}  // namespace

std::vector<StudentSequence> parse_dataset(std::istream& in) {
  std::vector<StudentSequence> out;
  LineReader reader{in};
  std::string line;
  while (reader.next(line)) {
    if (trim(line).empty()) continue;

    const std::size_t header_line = reader.line_no;
    const auto header = split(trim(line), ',');
    if (header.size() != 2 || header[0].empty()) {
      throw ParseError(header_line, "expected 'student_id,length' header");
    }
    StudentSequence seq;
    seq.student_id = std::string(header[0]);
    const auto length = parse_int<std::size_t>(header[1], header_line, "sequence length");
    if (length == 0) throw ParseError(header_line, "sequence length must be positive");

    std::vector<std::string_view> fields[4];
    std::string rows[4];
    static constexpr const char* kRowNames[4] = {"question", "KC", "response", "timestamp"};
    for (int r = 0; r < 4; ++r) {
      if (!reader.next(rows[r]) || trim(rows[r]).empty()) {
        throw ParseError(reader.line_no, std::string("block truncated: missing ") + kRowNames[r] + " line");
      }
      fields[r] = split(trim(rows[r]), ',');
      if (fields[r].size() != length) {
        throw ParseError(reader.line_no, std::string(kRowNames[r]) + " line has " + std::to_string(fields[r].size()) +
                                             " fields, header declares " + std::to_string(length));
      }
    }
    const std::size_t q_line = header_line + 1, kc_line = header_line + 2, r_line = header_line + 3,
                      t_line = header_line + 4;

    seq.interactions.resize(length);
    for (std::size_t j = 0; j < length; ++j) {
      Interaction& it = seq.interactions[j];
      it.question_id = parse_int<std::uint32_t>(fields[0][j], q_line, "question id");
      for (auto kc : split(fields[1][j], '_')) {
        const auto id = parse_int<std::uint32_t>(kc, kc_line, "KC id");
        if (std::find(it.kc_ids.begin(), it.kc_ids.end(), id) == it.kc_ids.end()) it.kc_ids.push_back(id);
      }
      const auto response = parse_int<unsigned>(fields[2][j], r_line, "response");
      if (response > 1) throw ParseError(r_line, "response must be 0 or 1, got " + std::to_string(response));
      it.response = static_cast<std::uint8_t>(response);
      it.timestamp = parse_int<std::uint64_t>(fields[3][j], t_line, "timestamp");
      if (j > 0 && it.timestamp < seq.interactions[j - 1].timestamp) {
        throw ParseError(t_line, "timestamps must be non-decreasing");
      }
    }
    out.push_back(std::move(seq));
  }
  return out;
}

std::vector<StudentSequence> ingest(const std::filesystem::path& path, const DatasetSpec& spec) {
  std::ifstream in(path);
  if (!in) throw DataError("dataset '" + spec.name + "': cannot open " + path.string());
  try {
    return parse_dataset(in);
  } catch (const ParseError& e) {
    const std::string detail = e.what();
    const std::string prefix = "line " + std::to_string(e.line()) + ": ";
    throw ParseError(e.line(), "dataset '" + spec.name + "' (" + path.string() + "): " +
                                   (detail.starts_with(prefix) ? detail.substr(prefix.size()) : detail));
  }
}

void emit(std::ostream& out, std::span<const StudentSequence> sequences) {
  bool first = true;
  for (const auto& seq : sequences) {
    if (!first) out << '\n';
    first = false;
    out << seq.student_id << ',' << seq.size() << '\n';
    auto join = [&](auto&& field) {
      for (std::size_t j = 0; j < seq.size(); ++j) {
        if (j) out << ',';
        field(seq.interactions[j]);
      }
      out << '\n';
    };
    join([&](const Interaction& it) { out << it.question_id; });
    join([&](const Interaction& it) {
      for (std::size_t k = 0; k < it.kc_ids.size(); ++k) out << (k ? "_" : "") << it.kc_ids[k];
    });
    join([&](const Interaction& it) { out << static_cast<unsigned>(it.response); });
    join([&](const Interaction& it) { out << it.timestamp; });
  }
}

void write_dataset(const std::filesystem::path& path, std::span<const StudentSequence> sequences) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset file " + path.string());
  emit(out, sequences);
  if (!out) throw DataError("failed writing dataset file " + path.string());
}

VocabSize id_extent(std::span<const StudentSequence> sequences) {
  VocabSize size;
  for (const auto& seq : sequences) {
    for (const auto& it : seq.interactions) {
      size.n_questions = std::max<std::size_t>(size.n_questions, it.question_id + 1);
      for (auto kc : it.kc_ids) size.n_kcs = std::max<std::size_t>(size.n_kcs, kc + 1);
    }
  }
  return size;
}

}  // namespace lorekt::data
