#include "nes/error.hpp"

#include <fmt/format.h>

namespace nes {

ParseError::ParseError(const std::string& source, std::size_t line, const std::string& what)
    : Error(line > 0 ? fmt::format("{}:{}: {}", source, line, what)
                     : fmt::format("{}: {}", source, what)),
      source_(source),
      line_(line) {}

EncodingError::EncodingError(const std::string& source, std::size_t byte_offset)
    : Error(fmt::format("{}: invalid UTF-8 at byte offset {}", source, byte_offset)),
      byte_offset_(byte_offset) {}

}  // namespace nes
