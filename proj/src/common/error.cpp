#include "lorekt/common/error.hpp"

namespace lorekt {

ParseError::ParseError(std::size_t line, const std::string& what)
    : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}

VersionMismatchError::VersionMismatchError(std::uint32_t found, std::uint32_t expected)
    : CheckpointError("checkpoint version mismatch: file has version " + std::to_string(found) +
                      ", this build reads version " + std::to_string(expected)),
      found_(found),
      expected_(expected) {}

}  // namespace lorekt
