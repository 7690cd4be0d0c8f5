#pragma once

// Minimal CSV helpers shared by the log and archive readers. Fields never
// contain commas or quotes in any of the formats this toolkit writes.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace synchro::csv {

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

std::vector<std::string_view> split(std::string_view line, char sep = ',');

double to_double(std::string_view field, std::size_t line);
std::int64_t to_int(std::string_view field, std::size_t line);
std::uint64_t to_uint(std::string_view field, std::size_t line);

/// Shortest representation that parses back to the same double.
std::string format(double v);

/// Strips a trailing '\r' so files written on Windows parse the same.
std::string_view chomp(std::string_view line);

}  // namespace synchro::csv
